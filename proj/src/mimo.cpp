#include "asbf/mimo.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <limits>
#include <numbers>

namespace asbf {

using std::numbers::pi;

void SystemConfig::validate() const {
  if (n_s < 1 || n_rf < n_s || n_ts < n_rf || n_t < n_ts) {
    throw ContractError("system config requires 1 <= N_S <= N_RF <= N_TS <= N_T, got N_S=" +
                        std::to_string(n_s) + " N_RF=" + std::to_string(n_rf) + " N_TS=" +
                        std::to_string(n_ts) + " N_T=" + std::to_string(n_t));
  }
  if (n_r < n_s) throw ContractError("system config requires N_S <= N_R");
  if (!(snr > 0.0)) throw ContractError("system config requires snr > 0");
  if (n_b != 1) throw ContractError("only 1-bit phase shifters are supported (N_B = 1)");
}

Eigen::MatrixXd SelectionMatrix::dense() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_t, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] < 0 || indices[j] >= n_t) throw ContractError("selection index out of range");
    a(indices[j], static_cast<Eigen::Index>(j)) = 1.0;
  }
  return a;
}

bool SelectionMatrix::orthonormal() const {
  std::vector<bool> seen(static_cast<std::size_t>(std::max(n_t, 0)), false);
  for (int i : indices) {
    if (i < 0 || i >= n_t || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

ChannelMatrix select_columns(const ChannelMatrix& h, const SelectionMatrix& a) {
  if (h.cols() != a.n_t) throw ContractError("select_columns: H has " + std::to_string(h.cols()) +
                                             " columns, selection expects " + std::to_string(a.n_t));
  ChannelMatrix out(h.rows(), static_cast<Eigen::Index>(a.indices.size()));
  for (std::size_t j = 0; j < a.indices.size(); ++j) {
    if (a.indices[j] < 0 || a.indices[j] >= a.n_t) throw ContractError("selection index out of range");
    out.col(static_cast<Eigen::Index>(j)) = h.col(a.indices[j]);
  }
  return out;
}

double rate_from_effective(const Eigen::MatrixXcd& g, double snr, int n_s) {
  const double c = snr / n_s;
  const Eigen::MatrixXcd m =
      Eigen::MatrixXcd::Identity(g.cols(), g.cols()) + c * (g.adjoint() * g);
  Eigen::LLT<Eigen::MatrixXcd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("achieved_rate: Cholesky failed");
  double logdet = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i).real());
  return logdet / std::numbers::ln2;
}

namespace {

void check_rate_dims(Eigen::Index h_r, Eigen::Index h_c, Eigen::Index a_r, Eigen::Index a_c,
                     Eigen::Index rf_r, Eigen::Index rf_c, Eigen::Index bb_r, Eigen::Index bb_c,
                     const SystemConfig& cfg) {
  auto dims = [](Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
  };
  if (h_c != a_r || a_c != rf_r || rf_c != bb_r || bb_c != cfg.n_s || h_r != cfg.n_r) {
    throw ContractError("achieved_rate: non-conforming dimensions H " + dims(h_r, h_c) + ", A " +
                        dims(a_r, a_c) + ", T_RF " + dims(rf_r, rf_c) + ", T_BB " + dims(bb_r, bb_c) +
                        " for N_R=" + std::to_string(cfg.n_r) + " N_S=" + std::to_string(cfg.n_s));
  }
}

}  // namespace

double achieved_rate(const ChannelMatrix& h, const Eigen::MatrixXd& a, const Eigen::MatrixXcd& t_rf,
                     const Eigen::MatrixXcd& t_bb, const SystemConfig& cfg) {
  check_rate_dims(h.rows(), h.cols(), a.rows(), a.cols(), t_rf.rows(), t_rf.cols(), t_bb.rows(),
                  t_bb.cols(), cfg);
  const Eigen::MatrixXcd g = h * a.cast<std::complex<double>>() * t_rf * t_bb;
  return rate_from_effective(g, cfg.snr, cfg.n_s);
}

double achieved_rate(const ChannelMatrix& h, const SelectionMatrix& a, const Eigen::MatrixXcd& t_rf,
                     const Eigen::MatrixXcd& t_bb, const SystemConfig& cfg) {
  const auto n_sel = static_cast<Eigen::Index>(a.indices.size());
  check_rate_dims(h.rows(), h.cols(), a.n_t, n_sel, t_rf.rows(), t_rf.cols(), t_bb.rows(),
                  t_bb.cols(), cfg);
  return rate_from_effective(select_columns(h, a) * t_rf * t_bb, cfg.snr, cfg.n_s);
}

double achieved_rate(const ChannelMatrix& h, const SelectionMatrix& a, const HybridBeamformer& bf,
                     const SystemConfig& cfg) {
  return achieved_rate(h, a, bf.t_rf, bf.t_bb, cfg);
}

namespace {

void check_phase(double theta, const char* who) {
  if (!(theta >= 0.0 && theta <= 2 * pi)) {
    throw ContractError(std::string(who) + ": phase " + std::to_string(theta) +
                        " outside [0, 2pi]");
  }
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Branch {
  double center;
  double offset;
};

Branch soft_branch(double theta) {
  if (theta <= 0.5 * pi) return {0.0, -pi};
  if (theta <= 1.5 * pi) return {pi, 0.0};
  return {2 * pi, pi};
}

}  // namespace

double quantize_phase(double theta) {
  check_phase(theta, "quantize_phase");
  return theta < pi ? 0.0 : pi;
}

double soft_quantize_phase(double theta, double alpha) {
  check_phase(theta, "soft_quantize_phase");
  if (!(alpha > 0.0)) throw ContractError("soft_quantize_phase: alpha must be positive");
  const Branch b = soft_branch(theta);
  return pi * logistic((theta - b.center) / alpha) + b.offset;
}

Eigen::MatrixXcd analog_from_phases(const Eigen::MatrixXd& phases, const PhaseQuantizerConfig& q) {
  const double amp = 1.0 / std::sqrt(static_cast<double>(phases.rows()));
  Eigen::MatrixXcd t(phases.rows(), phases.cols());
  for (Eigen::Index i = 0; i < phases.rows(); ++i) {
    for (Eigen::Index j = 0; j < phases.cols(); ++j) {
      if (q.mode == QuantizerMode::Hard) {
        t(i, j) = {quantize_phase(phases(i, j)) == 0.0 ? amp : -amp, 0.0};
      } else {
        t(i, j) = std::polar(amp, soft_quantize_phase(phases(i, j), q.alpha));
      }
    }
  }
  return t;
}

Eigen::MatrixXcd normalize_digital(const Eigen::MatrixXcd& t_rf, const Eigen::MatrixXcd& t_bb_raw,
                                   int n_s) {
  const double norm = (t_rf * t_bb_raw).norm();
  if (!(norm > 0.0)) throw DegenerateInputError("normalize_digital: ||T_RF T_BB|| is zero");
  return t_bb_raw * (std::sqrt(static_cast<double>(n_s)) / norm);
}

DigitalSolution full_digital(const ChannelMatrix& h, int n_s, double snr) {
  if (n_s < 1) throw ContractError("full_digital: n_s must be >= 1");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeFullV);
  const auto k = std::min<Eigen::Index>(n_s, svd.singularValues().size());
  const Eigen::VectorXd sigma = svd.singularValues().head(k);
  const double c = snr / n_s;
  DigitalSolution out;
  if (!(sigma(0) > 0.0)) {
    // Zero channel: every precoder achieves rate 0; return a feasible one.
    const Eigen::Index m = std::min<Eigen::Index>(n_s, h.cols());
    out.precoder = Eigen::MatrixXcd::Zero(h.cols(), n_s);
    out.precoder.topLeftCorner(m, m).setIdentity();
    out.precoder *= std::sqrt(static_cast<double>(n_s) / static_cast<double>(m));
    return out;
  }
  const Eigen::VectorXd p = water_filling<double>(sigma, static_cast<double>(n_s), c);
  // Streams beyond the channel rank get zero columns.
  out.precoder = Eigen::MatrixXcd::Zero(h.cols(), n_s);
  out.precoder.leftCols(k) =
      svd.matrixV().leftCols(k) * p.cwiseSqrt().cast<std::complex<double>>().asDiagonal();
  for (Eigen::Index i = 0; i < k; ++i) out.rate += std::log2(1.0 + c * sigma(i) * sigma(i) * p(i));
  return out;
}

DigitalBeamformerResult optimal_digital_beamformer(const Eigen::MatrixXcd& h_eff,
                                                   const Eigen::MatrixXcd& t_rf,
                                                   const SystemConfig& cfg) {
  if (h_eff.cols() != t_rf.cols()) {
    throw ContractError("optimal_digital_beamformer: H_eff has " + std::to_string(h_eff.cols()) +
                        " columns, T_RF has " + std::to_string(t_rf.cols()));
  }
  const Eigen::MatrixXcd gram = t_rf.adjoint() * t_rf;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  const Eigen::VectorXd w = eig.eigenvalues();
  const double tol = 1e-10 * std::max(w.maxCoeff(), std::numeric_limits<double>::min());
  DigitalBeamformerResult out;
  Eigen::VectorXd inv_sqrt(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) > tol) {
      inv_sqrt(i) = 1.0 / std::sqrt(w(i));
    } else {
      inv_sqrt(i) = 0.0;
      out.pseudo_inverse = true;
    }
  }
  const Eigen::MatrixXcd g_inv_sqrt =
      eig.eigenvectors() * inv_sqrt.cast<std::complex<double>>().asDiagonal() *
      eig.eigenvectors().adjoint();
  const Eigen::MatrixXcd whitened = h_eff * g_inv_sqrt;
  const DigitalSolution fd = full_digital(whitened, cfg.n_s, cfg.snr);
  Eigen::MatrixXcd t_bb = g_inv_sqrt * fd.precoder;
  if (!((t_rf * t_bb).norm() > 0.0)) {
    // Zero effective channel: put every stream on the strongest RF direction.
    t_bb = eig.eigenvectors().rightCols(1) * Eigen::RowVectorXcd::Ones(cfg.n_s);
  }
  out.t_bb = normalize_digital(t_rf, t_bb, cfg.n_s);
  return out;
}

Eigen::MatrixXd sample_gumbel(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      double u = unit(rng);
      while (u <= 0.0) u = unit(rng);
      g(i, j) = -std::log(-std::log(u));
    }
  }
  return g;
}

SelectionMatrix hard_select(const Eigen::MatrixXd& logits, const Eigen::MatrixXd* gumbel) {
  if (gumbel && (gumbel->rows() != logits.rows() || gumbel->cols() != logits.cols())) {
    throw DimensionError("hard_select: gumbel noise shape differs from logits");
  }
  const Eigen::Index n_ts = logits.rows();
  const Eigen::Index n_t = logits.cols();
  if (n_ts > n_t) throw ContractError("hard_select: more selections than antennas");
  SelectionMatrix a{static_cast<int>(n_t), {}};
  std::vector<bool> taken(static_cast<std::size_t>(n_t), false);
  for (Eigen::Index j = 0; j < n_ts; ++j) {
    Eigen::Index best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n_t; ++k) {
      if (taken[k]) continue;
      const double s = logits(j, k) + (gumbel ? (*gumbel)(j, k) : 0.0);
      if (best < 0 || s > best_score) {
        best = k;
        best_score = s;
      }
    }
    taken[best] = true;
    a.indices.push_back(static_cast<int>(best));
  }
  return a;
}

SelectionMatrix hard_select(const Eigen::MatrixXd& logits, bool noise, Rng& rng) {
  if (!noise) return hard_select(logits, nullptr);
  const Eigen::MatrixXd g = sample_gumbel(logits.rows(), logits.cols(), rng);
  return hard_select(logits, &g);
}

Eigen::VectorXd logits_to_probabilities(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::MatrixXd relaxed_select(const Eigen::MatrixXd& logits, double tau, const Eigen::MatrixXd* gumbel) {
  if (!(tau > 0.0)) throw ContractError("relaxed_select: temperature must be positive");
  if (gumbel && (gumbel->rows() != logits.rows() || gumbel->cols() != logits.cols())) {
    throw DimensionError("relaxed_select: gumbel noise shape differs from logits");
  }
  Eigen::MatrixXd a(logits.cols(), logits.rows());
  for (Eigen::Index j = 0; j < logits.rows(); ++j) {
    Eigen::VectorXd row = logits.row(j).transpose();
    if (gumbel) row += gumbel->row(j).transpose();
    a.col(j) = logits_to_probabilities(row / tau);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Tape counterparts.

namespace {

std::size_t rows_of(const ad::Shape& s) { return s[s.size() - 2]; }
std::size_t cols_of(const ad::Shape& s) { return s[s.size() - 1]; }

void check_matrix_like(const ad::Shape& s, const char* who, const char* what) {
  if (s.size() != 2 && s.size() != 3) {
    throw ContractError(std::string(who) + ": " + what + " must be rank 2 or 3, got " +
                        ad::to_string(s));
  }
}

}  // namespace

ad::Tensor rate_from_effective(const ad::ComplexPair& g, double snr, int n_s) {
  check_matrix_like(g.shape(), "rate_from_effective", "G");
  const std::size_t k = cols_of(g.shape());
  ad::Tape& tape = g.re.tape();
  const ad::ComplexPair gram = ad::cmatmul(ad::adjoint(g), g);
  std::vector<double> eye(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1.0;
  const double c = snr / n_s;
  const ad::Tensor re = ad::affine(gram.re, c) + tape.constant({k, k}, eye);
  const ad::Tensor im = ad::affine(gram.im, c);
  return ad::affine(ad::logdet_hermitian_pd(re, im), 1.0 / std::numbers::ln2);
}

ad::Tensor achieved_rate(const ad::ComplexPair& h, const ad::Tensor& a, const ad::ComplexPair& t_rf,
                         const ad::ComplexPair& t_bb, const SystemConfig& cfg) {
  check_matrix_like(h.shape(), "achieved_rate", "H");
  check_matrix_like(a.shape(), "achieved_rate", "A");
  check_matrix_like(t_rf.shape(), "achieved_rate", "T_RF");
  check_matrix_like(t_bb.shape(), "achieved_rate", "T_BB");
  const auto& hs = h.shape();
  const auto& as = a.shape();
  const auto& rs = t_rf.shape();
  const auto& bs = t_bb.shape();
  if (cols_of(hs) != rows_of(as) || cols_of(as) != rows_of(rs) || cols_of(rs) != rows_of(bs) ||
      cols_of(bs) != static_cast<std::size_t>(cfg.n_s) ||
      rows_of(hs) != static_cast<std::size_t>(cfg.n_r)) {
    throw ContractError("achieved_rate: non-conforming dimensions H " + ad::to_string(hs) + ", A " +
                        ad::to_string(as) + ", T_RF " + ad::to_string(rs) + ", T_BB " +
                        ad::to_string(bs));
  }
  const ad::ComplexPair g = ad::cmatmul(ad::cmatmul(ad::cmatmul(h, a), t_rf), t_bb);
  return rate_from_effective(g, cfg.snr, cfg.n_s);
}

ad::Tensor soft_quantize_phase(const ad::Tensor& theta, double alpha) {
  if (!(alpha > 0.0)) throw ContractError("soft_quantize_phase: alpha must be positive");
  ad::Tape& tape = theta.tape();
  const auto v = theta.data();
  const std::size_t n = v.size();
  std::vector<double> masks[3] = {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                                  std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    check_phase(v[i], "soft_quantize_phase");
    const Branch b = soft_branch(v[i]);
    masks[b.center == 0.0 ? 0 : (b.center == pi ? 1 : 2)][i] = 1.0;
  }
  const Branch branches[3] = {{0.0, -pi}, {pi, 0.0}, {2 * pi, pi}};
  ad::Tensor out;
  for (int k = 0; k < 3; ++k) {
    bool any = false;
    for (double m : masks[k]) any = any || m != 0.0;
    if (!any) continue;
    const ad::Tensor s =
        ad::affine(ad::sigmoid(ad::affine(theta, 1.0 / alpha, -branches[k].center / alpha)), pi,
                   branches[k].offset);
    const ad::Tensor term = s * tape.constant(theta.shape(), std::move(masks[k]));
    out = out.valid() ? out + term : term;
  }
  return out;
}

ad::ComplexPair analog_from_phases(const ad::Tensor& phases, const PhaseQuantizerConfig& q) {
  check_matrix_like(phases.shape(), "analog_from_phases", "phases");
  ad::Tape& tape = phases.tape();
  const double amp = 1.0 / std::sqrt(static_cast<double>(rows_of(phases.shape())));
  if (q.mode == QuantizerMode::Hard) {
    const auto v = phases.data();
    std::vector<double> re(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) re[i] = quantize_phase(v[i]) == 0.0 ? amp : -amp;
    return {tape.constant(phases.shape(), std::move(re)), tape.constant(phases.shape(), 0.0)};
  }
  const ad::Tensor f = soft_quantize_phase(phases, q.alpha);
  return {ad::affine(ad::cos(f), amp), ad::affine(ad::sin(f), amp)};
}

ad::ComplexPair normalize_digital(const ad::ComplexPair& t_rf, const ad::ComplexPair& t_bb_raw, int n_s) {
  const ad::Tensor n2 = ad::frobenius_sq(ad::cmatmul(t_rf, t_bb_raw));
  for (double v : n2.data()) {
    if (!(v > 0.0)) throw DegenerateInputError("normalize_digital: ||T_RF T_BB|| is zero");
  }
  ad::Tensor s = ad::affine(ad::reciprocal(ad::sqrt(n2)), std::sqrt(static_cast<double>(n_s)));
  if (t_bb_raw.shape().size() == 3) s = ad::reshape(s, {s.dim(0), 1, 1});
  return ad::scale(t_bb_raw, s);
}

ad::Tensor relaxed_select(const ad::Tensor& logits, double tau, const ad::Tensor& gumbel) {
  if (!(tau > 0.0)) throw ContractError("relaxed_select: temperature must be positive");
  check_matrix_like(logits.shape(), "relaxed_select", "logits");
  ad::Tensor x = logits;
  if (gumbel.valid()) {
    if (gumbel.shape() != logits.shape()) {
      throw DimensionError("relaxed_select: gumbel noise shape " + ad::to_string(gumbel.shape()) +
                           " differs from logits " + ad::to_string(logits.shape()));
    }
    x = x + gumbel;
  }
  return ad::transpose(ad::softmax(ad::affine(x, 1.0 / tau), logits.rank() - 1));
}

ad::Tensor to_tensor(ad::Tape& tape, const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[k++] = m(i, j);
  return tape.constant({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                       std::move(v));
}

ad::ComplexPair to_complex_tensor(ad::Tape& tape, const Eigen::MatrixXcd& m) {
  return {to_tensor(tape, m.real()), to_tensor(tape, m.imag())};
}

ad::Tensor to_tensor(ad::Tape& tape, const std::vector<Eigen::MatrixXd>& ms) {
  if (ms.empty()) throw ContractError("to_tensor: empty batch");
  const Eigen::Index r = ms[0].rows();
  const Eigen::Index c = ms[0].cols();
  std::vector<double> v;
  v.reserve(ms.size() * static_cast<std::size_t>(r * c));
  for (const auto& m : ms) {
    if (m.rows() != r || m.cols() != c) throw DimensionError("to_tensor: ragged batch");
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) v.push_back(m(i, j));
  }
  return tape.constant({ms.size(), static_cast<std::size_t>(r), static_cast<std::size_t>(c)},
                       std::move(v));
}

ad::ComplexPair to_complex_tensor(ad::Tape& tape, const std::vector<Eigen::MatrixXcd>& ms) {
  std::vector<Eigen::MatrixXd> re, im;
  re.reserve(ms.size());
  im.reserve(ms.size());
  for (const auto& m : ms) {
    re.push_back(m.real());
    im.push_back(m.imag());
  }
  return {to_tensor(tape, re), to_tensor(tape, im)};
}

Eigen::MatrixXd to_matrix(const ad::Tensor& t, std::size_t b) {
  check_matrix_like(t.shape(), "to_matrix", "tensor");
  const std::size_t r = rows_of(t.shape());
  const std::size_t c = cols_of(t.shape());
  if (t.rank() == 3 && b >= t.dim(0)) throw ContractError("to_matrix: batch index out of range");
  const auto v = t.data();
  const std::size_t base = (t.rank() == 3 ? b : 0) * r * c;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = v[base + i * c + j];
  return m;
}

Eigen::MatrixXcd to_complex_matrix(const ad::ComplexPair& t, std::size_t b) {
  Eigen::MatrixXcd m(to_matrix(t.re, b).cast<std::complex<double>>());
  m.imag() = to_matrix(t.im, b);
  return m;
}

}  // namespace asbf
