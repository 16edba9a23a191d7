#include "asbf/baselines.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

namespace asbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

// Advances `idx` to the next k-combination of [0, n) in lexicographic order.
bool next_combination(std::vector<int>& idx, int n) {
  const int k = static_cast<int>(idx.size());
  int i = k - 1;
  while (i >= 0 && idx[i] == n - k + i) --i;
  if (i < 0) return false;
  ++idx[i];
  for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  return true;
}

Eigen::MatrixXcd analog_from_bits(std::uint64_t bits, int rows, int cols) {
  const double amp = 1.0 / std::sqrt(static_cast<double>(rows));
  Eigen::MatrixXcd t(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const bool flip = (bits >> (i * cols + j)) & 1U;
      t(i, j) = {flip ? -amp : amp, 0.0};
    }
  return t;
}

Eigen::MatrixXd phases_of(const Eigen::MatrixXcd& t_rf) {
  Eigen::MatrixXd p(t_rf.rows(), t_rf.cols());
  for (Eigen::Index i = 0; i < t_rf.rows(); ++i)
    for (Eigen::Index j = 0; j < t_rf.cols(); ++j) p(i, j) = t_rf(i, j).real() < 0 ? std::numbers::pi : 0.0;
  return p;
}

SelectionMatrix identity_selection(int n) {
  SelectionMatrix a{n, std::vector<int>(static_cast<std::size_t>(n))};
  std::iota(a.indices.begin(), a.indices.end(), 0);
  return a;
}

BaselineResult finish(const ChannelMatrix& h, const SelectionMatrix& a, HybridBeamformer bf,
                      const SystemConfig& cfg, const char* tag, Clock::time_point t0) {
  BaselineResult r;
  r.rate = achieved_rate(h, a, bf, cfg);
  r.selection = a;
  r.beamformer = std::move(bf);
  r.elapsed_s = seconds_since(t0);
  r.algorithm = tag;
  return r;
}

}  // namespace

double exhaustive_search_size(const SystemConfig& cfg) {
  return binomial(cfg.n_t, cfg.n_ts) * std::pow(2.0, cfg.n_ts * cfg.n_rf);
}

BaselineResult exhaustive_joint_search(const ChannelMatrix& h, const SystemConfig& cfg) {
  cfg.validate();
  const double size = exhaustive_search_size(cfg);
  if (size > kExhaustiveLimit) {
    std::ostringstream os;
    os << "exhaustive search refused: " << size << " candidates exceed the limit of "
       << kExhaustiveLimit;
    throw SearchSpaceError(os.str());
  }
  const auto t0 = Clock::now();
  const std::uint64_t patterns = std::uint64_t{1} << (cfg.n_ts * cfg.n_rf);
  std::vector<int> idx(static_cast<std::size_t>(cfg.n_ts));
  std::iota(idx.begin(), idx.end(), 0);
  double best = -1.0;
  SelectionMatrix best_sel;
  HybridBeamformer best_bf;
  do {
    const SelectionMatrix a{cfg.n_t, idx};
    const ChannelMatrix h_s = select_columns(h, a);
    for (std::uint64_t bits = 0; bits < patterns; ++bits) {
      const Eigen::MatrixXcd t_rf = analog_from_bits(bits, cfg.n_ts, cfg.n_rf);
      const Eigen::MatrixXcd t_bb = optimal_digital_beamformer(h_s * t_rf, t_rf, cfg).t_bb;
      const double r = rate_from_effective(h_s * t_rf * t_bb, cfg.snr, cfg.n_s);
      if (r > best) {
        best = r;
        best_sel = a;
        best_bf = {t_rf, t_bb, phases_of(t_rf)};
      }
    }
  } while (next_combination(idx, cfg.n_t));
  return finish(h, best_sel, std::move(best_bf), cfg, "exhaustive", t0);
}

double full_digital_rate(const ChannelMatrix& h_sub, const SystemConfig& cfg) {
  return full_digital(h_sub, cfg.n_s, cfg.snr).rate;
}

SelectionMatrix greedy_antenna_selection(const ChannelMatrix& h, const SystemConfig& cfg,
                                         const SubsetRate& rate, int count) {
  const int k = count < 0 ? cfg.n_ts : count;
  if (k > h.cols()) throw ContractError("greedy_antenna_selection: N_TS exceeds N_T");
  SelectionMatrix a{static_cast<int>(h.cols()), {}};
  std::vector<bool> taken(static_cast<std::size_t>(h.cols()), false);
  for (int step = 0; step < k; ++step) {
    int best = -1;
    double best_rate = 0.0;
    for (int c = 0; c < h.cols(); ++c) {
      if (taken[c]) continue;
      SelectionMatrix trial = a;
      trial.indices.push_back(c);
      const double r = rate(select_columns(h, trial), cfg);
      if (best < 0 || r > best_rate) {
        best = c;
        best_rate = r;
      }
    }
    taken[best] = true;
    a.indices.push_back(best);
  }
  return a;
}

SelectionMatrix random_antenna_selection(const SystemConfig& cfg, Rng& rng) {
  std::vector<int> all(static_cast<std::size_t>(cfg.n_t));
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(cfg.n_ts));
  return {cfg.n_t, std::move(all)};
}

CdmResult cdm_altmin(const ChannelMatrix& h_s, const SystemConfig& cfg, int max_iters, double tol) {
  if (max_iters < 1) throw ContractError("cdm_altmin: max_iters must be >= 1");
  const Eigen::Index n_ts = h_s.cols();
  const Eigen::Index n_rf = cfg.n_rf;
  if (n_rf > n_ts) throw ContractError("cdm_altmin: N_RF exceeds the number of selected antennas");
  const Eigen::MatrixXcd f_opt = full_digital(h_s, cfg.n_s, cfg.snr).precoder;
  const double amp = 1.0 / std::sqrt(static_cast<double>(n_ts));

  Eigen::MatrixXcd t_rf(n_ts, n_rf);
  for (Eigen::Index i = 0; i < n_ts; ++i)
    for (Eigen::Index r = 0; r < n_rf; ++r)
      t_rf(i, r) = {f_opt(i, r % cfg.n_s).real() < 0 ? -amp : amp, 0.0};

  auto solve_bb = [&](const Eigen::MatrixXcd& rf) {
    return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd>(rf).solve(f_opt).eval();
  };
  auto objective = [&](const Eigen::MatrixXcd& rf, const Eigen::MatrixXcd& bb) {
    return (f_opt - rf * bb).norm();
  };

  CdmResult out;
  Eigen::MatrixXcd t_bb = solve_bb(t_rf);
  double obj = objective(t_rf, t_bb);
  out.objective.push_back(obj);
  for (int it = 0; it < max_iters; ++it) {
    t_bb = solve_bb(t_rf);
    obj = objective(t_rf, t_bb);
    for (Eigen::Index i = 0; i < n_ts; ++i) {
      for (Eigen::Index r = 0; r < n_rf; ++r) {
        t_rf(i, r) = -t_rf(i, r);
        const double trial = objective(t_rf, t_bb);
        if (trial < obj) {
          obj = trial;
        } else {
          t_rf(i, r) = -t_rf(i, r);
        }
      }
    }
    const double prev = out.objective.back();
    out.objective.push_back(obj);
    if (prev - obj <= tol * std::max(prev, 1e-300)) break;
  }
  // The least-squares solve can only lower the objective further.
  const Eigen::MatrixXcd final_bb = solve_bb(t_rf);
  if (objective(t_rf, final_bb) <= obj) t_bb = final_bb;
  out.beamformer = {t_rf, normalize_digital(t_rf, t_bb, cfg.n_s), phases_of(t_rf)};
  return out;
}

BaselineResult gas_cdm(const ChannelMatrix& h, const SystemConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  const SelectionMatrix a = greedy_antenna_selection(h, cfg);
  auto bf = cdm_altmin(select_columns(h, a), cfg).beamformer;
  return finish(h, a, std::move(bf), cfg, "gas+cdm", t0);
}

BaselineResult ras_cdm(const ChannelMatrix& h, const SystemConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto t0 = Clock::now();
  const SelectionMatrix a = random_antenna_selection(cfg, rng);
  auto bf = cdm_altmin(select_columns(h, a), cfg).beamformer;
  return finish(h, a, std::move(bf), cfg, "ras+cdm", t0);
}

BaselineResult full_array_reference(const ChannelMatrix& h, const SystemConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  SystemConfig full = cfg;
  full.n_ts = cfg.n_t;
  const SelectionMatrix a = identity_selection(cfg.n_t);
  auto bf = cdm_altmin(h, full).beamformer;
  return finish(h, a, std::move(bf), full, "full-array", t0);
}

BaselineResult switch_based_reference(const ChannelMatrix& h, const SystemConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  SystemConfig sw = cfg;
  sw.n_ts = cfg.n_rf;
  const SelectionMatrix a = greedy_antenna_selection(h, sw);
  const Eigen::MatrixXcd t_rf = Eigen::MatrixXcd::Identity(cfg.n_rf, cfg.n_rf);
  const ChannelMatrix h_s = select_columns(h, a);
  HybridBeamformer bf{t_rf, optimal_digital_beamformer(h_s, t_rf, sw).t_bb,
                      Eigen::MatrixXd::Zero(cfg.n_rf, cfg.n_rf)};
  return finish(h, a, std::move(bf), sw, "switch-based", t0);
}

}  // namespace asbf
