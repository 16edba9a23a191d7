#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "asbf/autodiff/complex.hpp"
#include "asbf/channel.hpp"
#include "asbf/errors.hpp"

namespace asbf {

/// Dimensions and power of one downlink link. `snr` is the linear ratio
/// rho / sigma_n^2.
struct SystemConfig {
  int n_t = 6;
  int n_ts = 2;
  int n_rf = 2;
  int n_s = 1;
  int n_r = 2;
  double snr = 10.0;
  int n_b = 1;

  /// Enforces N_S <= N_RF <= N_TS <= N_T, N_S <= N_R, snr > 0 and N_B = 1.
  void validate() const;
  bool operator==(const SystemConfig&) const = default;
};

/// Hard antenna selection: column j of A is the unit vector e_{indices[j]}.
struct SelectionMatrix {
  int n_t = 0;
  std::vector<int> indices;

  Eigen::MatrixXd dense() const;
  /// True when the indices are in range and pairwise distinct (A^T A = I).
  bool orthonormal() const;
};

struct HybridBeamformer {
  Eigen::MatrixXcd t_rf;
  Eigen::MatrixXcd t_bb;
  Eigen::MatrixXd phases;
};

enum class QuantizerMode { Hard, Soft };

struct PhaseQuantizerConfig {
  double alpha = 0.01;
  QuantizerMode mode = QuantizerMode::Hard;
};

/// Columns of `h` picked by the selection, in selection order (= H A).
ChannelMatrix select_columns(const ChannelMatrix& h, const SelectionMatrix& a);

/// log2 det(I + (snr / n_s) G G^H).
double rate_from_effective(const Eigen::MatrixXcd& g, double snr, int n_s);

/// Achieved rate of H A T_RF T_BB. `a` may be a relaxed real N_T x N_TS matrix.
double achieved_rate(const ChannelMatrix& h, const Eigen::MatrixXd& a, const Eigen::MatrixXcd& t_rf,
                     const Eigen::MatrixXcd& t_bb, const SystemConfig& cfg);
double achieved_rate(const ChannelMatrix& h, const SelectionMatrix& a, const Eigen::MatrixXcd& t_rf,
                     const Eigen::MatrixXcd& t_bb, const SystemConfig& cfg);
double achieved_rate(const ChannelMatrix& h, const SelectionMatrix& a, const HybridBeamformer& bf,
                     const SystemConfig& cfg);

/// 1-bit quantizer: 0 on [0, pi), pi on [pi, 2pi]. Throws ContractError
/// outside [0, 2pi].
double quantize_phase(double theta);

/// Three-branch sigmoid staircase approximating quantize_phase:
///   pi s(theta / a) - pi          on [0, pi/2]
///   pi s((theta - pi) / a)        on (pi/2, 3pi/2]
///   pi s((theta - 2pi) / a) + pi  on (3pi/2, 2pi]
/// with s the logistic function.
double soft_quantize_phase(double theta, double alpha);

/// Entrywise exp(j q(theta)) / sqrt(rows), q = quantize_phase or
/// soft_quantize_phase. Hard entries have an exactly zero imaginary part.
Eigen::MatrixXcd analog_from_phases(const Eigen::MatrixXd& phases, const PhaseQuantizerConfig& q);

/// sqrt(n_s) T_BB_raw / ||T_RF T_BB_raw||_F. Throws DegenerateInputError on
/// a zero product.
Eigen::MatrixXcd normalize_digital(const Eigen::MatrixXcd& t_rf, const Eigen::MatrixXcd& t_bb_raw,
                                   int n_s);

/// Power allocation p_i = max(mu - 1/(c g_i^2), 0) with sum p_i = total_power.
///
/// mu is bracketed by bisection to 1e-12 and then recomputed exactly on the
/// resulting active set, so the sum constraint holds to rounding. Gains must
/// be non-negative and sorted in descending order.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> water_filling(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& gains, Scalar total_power, Scalar c) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (!(total_power > Scalar(0)) || !(c > Scalar(0))) {
    throw ContractError("water_filling: total power and noise factor must be positive");
  }
  const Eigen::Index n = gains.size();
  Eigen::Index n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(gains(i) >= Scalar(0))) throw ContractError("water_filling: gains must be non-negative");
    if (i > 0 && gains(i) > gains(i - 1)) {
      throw ContractError("water_filling: gains must be sorted in descending order");
    }
    if (gains(i) > Scalar(0)) ++n_pos;
  }
  if (n_pos == 0) throw DegenerateInputError("water_filling: all gains are zero");

  Vec floor_level = Vec::Zero(n_pos);
  for (Eigen::Index i = 0; i < n_pos; ++i) floor_level(i) = Scalar(1) / (c * gains(i) * gains(i));

  auto filled = [&](Scalar mu) {
    Scalar s(0);
    for (Eigen::Index i = 0; i < n_pos; ++i) s += std::max(mu - floor_level(i), Scalar(0));
    return s;
  };
  Scalar lo(0);
  Scalar hi = total_power + floor_level.maxCoeff();
  while (hi - lo > Scalar(1e-12) * std::max(Scalar(1), hi)) {
    const Scalar mid = (lo + hi) / 2;
    if (mid <= lo || mid >= hi) break;
    (filled(mid) < total_power ? lo : hi) = mid;
  }

  // Floor levels ascend, so the active set is a prefix.
  Eigen::Index k = 0;
  while (k < n_pos && floor_level(k) < hi) ++k;
  k = std::max<Eigen::Index>(k, 1);
  Scalar mu(0);
  for (;;) {
    mu = (total_power + floor_level.head(k).sum()) / Scalar(k);
    if (k > 1 && mu <= floor_level(k - 1)) {
      --k;
    } else if (k < n_pos && mu > floor_level(k)) {
      ++k;
    } else {
      break;
    }
  }
  Vec p = Vec::Zero(n);
  for (Eigen::Index i = 0; i < k; ++i) p(i) = mu - floor_level(i);
  return p;
}

/// Capacity-achieving unconstrained precoder of `h` for n_s streams.
struct DigitalSolution {
  Eigen::MatrixXcd precoder;
  double rate = 0.0;
};
/// Right singular vectors of `h` scaled by water-filled powers (total n_s,
/// noise factor snr / n_s). Streams beyond min(rows, cols) are zero columns.
/// A zero channel gives rate 0 and a feasible identity-column precoder.
DigitalSolution full_digital(const ChannelMatrix& h, int n_s, double snr);

struct DigitalBeamformerResult {
  Eigen::MatrixXcd t_bb;
  bool pseudo_inverse = false;
};

/// Optimal T_BB for a fixed effective channel H A T_RF under
/// ||T_RF T_BB||_F^2 = n_s.
///
/// With G = T_RF^H T_RF and W = G^{1/2} T_BB the constraint becomes
/// ||W||_F^2 = n_s and the rate depends on W only through H A T_RF G^{-1/2}.
/// W is taken from that whitened channel's SVD with water-filling and mapped
/// back by G^{-1/2}. A rank-deficient G falls back to its pseudo-inverse
/// square root and sets `pseudo_inverse`.
DigitalBeamformerResult optimal_digital_beamformer(const Eigen::MatrixXcd& h_eff,
                                                   const Eigen::MatrixXcd& t_rf,
                                                   const SystemConfig& cfg);

/// Standard Gumbel(0, 1) draws, -log(-log U).
Eigen::MatrixXd sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Sequential argmax of logits (+ noise) over not-yet-chosen antennas.
/// `logits` is N_TS x N_T; `gumbel` (same shape) may be null for noise off.
/// Ties go to the lowest index.
SelectionMatrix hard_select(const Eigen::MatrixXd& logits, const Eigen::MatrixXd* gumbel = nullptr);
SelectionMatrix hard_select(const Eigen::MatrixXd& logits, bool noise, Rng& rng);

/// Relaxed N_T x N_TS selection: column j is softmax((phi_j + g_j) / tau).
Eigen::MatrixXd relaxed_select(const Eigen::MatrixXd& logits, double tau,
                               const Eigen::MatrixXd* gumbel = nullptr);

Eigen::VectorXd logits_to_probabilities(const Eigen::VectorXd& logits);

// Tape counterparts. Batched inputs carry a leading batch axis; rates are
// returned per sample with shape (B), or as a scalar for unbatched input.

/// log2 det(I + (snr / n_s) G G^H) for G of shape (n_r, n_s) or (B, n_r, n_s).
ad::Tensor rate_from_effective(const ad::ComplexPair& g, double snr, int n_s);

/// Rate of H A T_RF T_BB with a real (relaxed or hard) selection `a`.
ad::Tensor achieved_rate(const ad::ComplexPair& h, const ad::Tensor& a, const ad::ComplexPair& t_rf,
                         const ad::ComplexPair& t_bb, const SystemConfig& cfg);

/// Entrywise soft quantizer. Branch membership is read from the forward
/// values and held constant for the backward pass.
ad::Tensor soft_quantize_phase(const ad::Tensor& theta, double alpha);

/// Hard mode yields a constant (no gradient); soft mode is differentiable.
ad::ComplexPair analog_from_phases(const ad::Tensor& phases, const PhaseQuantizerConfig& q);

ad::ComplexPair normalize_digital(const ad::ComplexPair& t_rf, const ad::ComplexPair& t_bb_raw, int n_s);

/// `logits` (N_TS, N_T) or (B, N_TS, N_T); `gumbel` matches or is invalid for
/// noise off. Result has the selection layout (N_T, N_TS) / (B, N_T, N_TS).
ad::Tensor relaxed_select(const ad::Tensor& logits, double tau, const ad::Tensor& gumbel);

// Conversions between Eigen matrices and tape constants.
ad::Tensor to_tensor(ad::Tape& tape, const Eigen::MatrixXd& m);
ad::ComplexPair to_complex_tensor(ad::Tape& tape, const Eigen::MatrixXcd& m);
/// Stacks equally sized matrices into (B, rows, cols).
ad::Tensor to_tensor(ad::Tape& tape, const std::vector<Eigen::MatrixXd>& ms);
ad::ComplexPair to_complex_tensor(ad::Tape& tape, const std::vector<Eigen::MatrixXcd>& ms);
/// Sample `b` of a rank-3 tensor, or the whole of a rank-2 one.
Eigen::MatrixXd to_matrix(const ad::Tensor& t, std::size_t b = 0);
Eigen::MatrixXcd to_complex_matrix(const ad::ComplexPair& t, std::size_t b = 0);

}  // namespace asbf
