#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asbf/autodiff/params.hpp"
#include "asbf/mimo.hpp"

namespace asbf {

/// ResNet feature extractor sizes: d filters of size h x h, feature length n.
struct FeatureExtractorConfig {
  int filters = 16;
  int kernel = 3;
  int features = 64;

  static FeatureExtractorConfig full_size() { return {64, 3, 500}; }
  void validate() const;
  bool operator==(const FeatureExtractorConfig&) const = default;
};

/// Parameters and batch-norm statistics of the joint ASNet + BFNet model.
///
/// Parameter names are prefixed "as." (selection network) and "bf."
/// (beamforming network).
struct JointModel {
  SystemConfig system;
  FeatureExtractorConfig features;
  ad::ParameterSet params;
  std::map<std::string, ad::BatchNormState> norm_stats;

  bool operator==(const JointModel& o) const;
};

/// He-normal weights (variance 2 / fan_in), zero biases, unit BN scale.
JointModel init_model(const SystemConfig& sys, const FeatureExtractorConfig& fe, std::uint64_t seed);

/// Names of the parameters under a network prefix ("as." or "bf.").
std::vector<std::string> parameter_names(const JointModel& m, const std::string& prefix);

/// Model parameters placed on one tape. Names accepted by `trainable` become
/// differentiable leaves; the rest are constants.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ad::ParameterSet& params,
              std::function<bool(const std::string&)> trainable = {});
  ad::Tensor operator[](const std::string& name);
  ad::Tape& tape() const { return tape_; }
  /// Differentiable leaves bound so far.
  const std::vector<ad::Tensor>& trainable_leaves() const { return leaves_; }

 private:
  ad::Tape& tape_;
  const ad::ParameterSet& params_;
  std::function<bool(const std::string&)> trainable_;
  std::map<std::string, ad::Tensor> bound_;
  std::vector<ad::Tensor> leaves_;
};

/// How batch normalization behaves during a forward pass. In train mode the
/// running statistics are updated only when `stats` is non-null.
struct NormContext {
  ad::NormMode mode = ad::NormMode::Train;
  std::map<std::string, ad::BatchNormState>* stats = nullptr;
};

/// (B, rows, cols) complex channel to (B, rows, cols, 3): Re, Im, |.|.
ad::Tensor build_input_tensor(const ad::ComplexPair& h);

/// Conv block, residual block, conv block, flatten, FC + ReLU: (B, n).
ad::Tensor extract_features(const ad::Tensor& x, BoundParams& p, const std::string& prefix,
                            const NormContext& norm);

struct AsnetOutput {
  ad::Tensor logits;     // (B, N_TS, N_T)
  ad::Tensor selection;  // relaxed (B, N_T, N_TS); invalid when no temperature given
};

/// Selection logits and, when `tau` > 0, the relaxed selection with the given
/// Gumbel noise (invalid tensor for none).
AsnetOutput asnet_forward(const ad::ComplexPair& h, BoundParams& p, const JointModel& m,
                          const NormContext& norm, double tau = 0.0,
                          const ad::Tensor& gumbel = {});

struct BfnetOutput {
  ad::Tensor phases;  // (B, N_TS, N_RF), in (0, 2pi)
  ad::ComplexPair t_rf;
  ad::ComplexPair t_bb_raw;  // digital head output before normalization
  ad::ComplexPair t_bb;  // left empty under the hard quantizer
};

/// Phases from a 2pi-scaled sigmoid head, analog matrix through the given
/// quantizer, digital matrix from linear Re/Im heads normalized against it.
/// With the hard quantizer the caller normalizes per sample.
BfnetOutput bfnet_forward(const ad::ComplexPair& h_s, BoundParams& p, const JointModel& m,
                          const NormContext& norm, const PhaseQuantizerConfig& q);

struct TrainForward {
  AsnetOutput as;
  BfnetOutput bf;
  ad::Tensor rate;  // (B)
};

/// Relaxed joint network: A_hat from ASNet, BFNet fed with H A_hat, soft
/// quantizer with scale alpha.
TrainForward joint_forward_train(const ad::ComplexPair& h, BoundParams& p, const JointModel& m,
                                 const NormContext& norm, double tau, const ad::Tensor& gumbel,
                                 double alpha);

/// BFNet on an externally chosen (hard) selection; used while ASNet is
/// replaced by random selection.
TrainForward bfnet_forward_train(const std::vector<ChannelMatrix>& hs,
                                 const std::vector<SelectionMatrix>& sel, BoundParams& p,
                                 const JointModel& m, const NormContext& norm, double alpha);

/// One train-mode forward pass (temperature 1, no noise) over `hs` that
/// folds the batch statistics into m.norm_stats. Needs two or more channels.
void calibrate_norm_stats(JointModel& m, const std::vector<ChannelMatrix>& hs);

struct JointDecision {
  SelectionMatrix selection;
  HybridBeamformer beamformer;
  Eigen::MatrixXd logits;
  double rate = 0.0;
  // Set when T_RF T_BB from the network was zero and the optimal digital
  // beamformer for the chosen T_RF replaced it.
  bool digital_fallback = false;
};

struct InferenceOptions {
  bool gumbel_noise = false;
  std::uint64_t seed = 0;
};

/// Deployment path: batch-norm running statistics, hard sequential selection,
/// 1-bit quantized analog matrix and exactly normalized digital matrix.
/// Gumbel noise for sample i is seeded from (seed, i).
std::vector<JointDecision> joint_infer(const std::vector<ChannelMatrix>& hs, const JointModel& m,
                                       const InferenceOptions& opt = {});
JointDecision joint_infer(const ChannelMatrix& h, const JointModel& m, const InferenceOptions& opt = {});

/// Deployment BFNet on a given selection (ASNet bypassed).
std::vector<JointDecision> bfnet_infer(const std::vector<ChannelMatrix>& hs,
                                       const std::vector<SelectionMatrix>& sel, const JointModel& m);

/// MBM1 file holding every parameter, the running statistics
/// ("norm.<layer>.mean" / ".var") and a "config" entry
/// [N_T, N_TS, N_RF, N_S, N_R, snr, N_B, d, h, n].
void save_model(const std::string& path, const JointModel& m);
JointModel load_model(const std::string& path);
/// Throws FormatError naming both configurations when the file's differ.
JointModel load_model(const std::string& path, const SystemConfig& sys, const FeatureExtractorConfig& fe);

std::string describe(const SystemConfig& sys, const FeatureExtractorConfig& fe);

}  // namespace asbf
