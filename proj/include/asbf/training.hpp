#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asbf/autodiff/adam.hpp"
#include "asbf/nets.hpp"

namespace asbf {

struct TrainConfig {
  int n1 = 30;
  int n2 = 15;
  int n3 = 15;
  double mu1 = 1e-4;
  double mu2 = 1e-4;
  double mu3 = 5e-5;
  int batch_size = 512;
  double lambda1 = 1e-2;
  double lambda2 = 1e-3;
  double lambda3 = 1e-3;
  double tau_init = 1.0;
  double tau_final = 0.1;
  double alpha = 0.01;
  std::uint64_t seed = 1;

  /// Epoch counts >= 0, rates, batch size, alpha and temperatures > 0,
  /// penalty weights >= 0 and tau_final <= tau_init.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// JSON object with keys named exactly like the fields. Missing keys keep
/// their defaults; unknown keys are rejected.
std::string to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
TrainConfig read_train_config(const std::string& path);

struct LossBreakdown {
  double rate = 0.0;
  double pen1 = 0.0;
  double pen2 = 0.0;
  double pen3 = 0.0;
  double total = 0.0;
};

/// -mean(rate) over the batch.
ad::Tensor loss_rate(const ad::Tensor& rate);
/// lambda1 * sum_{j != k} (a_j^T a_k)^2 for a selection (N_T, N_TS), or its
/// batch mean for (B, N_T, N_TS).
ad::Tensor loss_pen1(const ad::Tensor& a_hat, double lambda1);
/// -lambda2 * sum_{j,k} p_jk log2 p_jk with p = softmax of each logit row;
/// batch mean for (B, N_TS, N_T).
ad::Tensor loss_pen2(const ad::Tensor& logits, double lambda2);
/// lambda3 * sum of squares of the given tensors.
ad::Tensor loss_pen3(const std::vector<ad::Tensor>& params, double lambda3);

/// Temperature at phase-2 epoch e: geometric from tau_init (e = 0) to
/// tau_final (e = N_2 - 1).
double temperature(int epoch, const TrainConfig& cfg);

/// Phase 1 trains "bf.", phase 2 "as.", phase 3 everything.
bool trainable_in_phase(int phase, const std::string& name);

/// Everything random that enters one batch loss.
struct BatchInputs {
  std::vector<ChannelMatrix> channels;
  /// Phase 1: the random column selections.
  std::vector<SelectionMatrix> selections;
  /// Phases 2 and 3: Gumbel noise per sample (N_TS x N_T); empty for none.
  std::vector<Eigen::MatrixXd> gumbel;
  double tau = 1.0;
};

struct BatchLoss {
  ad::Tensor total;
  LossBreakdown parts;
};

/// Batch loss of a training phase: mean over samples of the negated rate
/// (plus pen1 and pen2 outside phase 1) and pen3 over the phase's trainable
/// parameters, added once.
BatchLoss batch_loss(int phase, const BatchInputs& in, BoundParams& p, const JointModel& m,
                     const TrainConfig& cfg, const NormContext& norm);

struct EpochRecord {
  int epoch = 0;  // 1-based over all phases
  int phase = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double tau = 0.0;
};

struct TrainOptions {
  /// Called after every epoch; may be empty.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Three-phase training. The last batch of an epoch keeps its actual size,
/// except that a single leftover sample joins the previous batch (batch
/// normalization needs two samples). Adam moments restart at each phase.
/// Throws NumericalError with phase, epoch and batch context on a
/// non-finite loss or gradient.
std::vector<EpochRecord> phased_train(JointModel& model, const Dataset& train, const Dataset& test,
                                      const TrainConfig& cfg, const TrainOptions& opt = {});

/// Extra joint (phase-3) epochs at rate mu3 and temperature tau_final.
std::vector<EpochRecord> fine_tune(JointModel& model, const Dataset& train, const Dataset& test,
                                   const TrainConfig& cfg, int epochs, const TrainOptions& opt = {});

/// Held-out loss: noise off, batch-norm running statistics, phase-matched
/// terms. Phase 1 uses selections drawn from `seed`.
double evaluate_loss(int phase, const JointModel& model, const Dataset& data, const TrainConfig& cfg,
                     double tau, std::uint64_t seed);

/// CSV with header epoch,phase,train_loss,test_loss,tau.
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace asbf
