#include "asbf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "asbf/errors.hpp"

namespace asbf {

namespace {

// Random streams; the same stream across tags pairs the random selections.
constexpr std::uint64_t kSelectionStream = 0x5e1ec7;
constexpr std::uint64_t kPerturbStream = 0xc5150;
constexpr std::uint64_t kNoiseStream = 0x6a3b;

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool same_except_snr(SystemConfig a, const SystemConfig& b) {
  a.snr = b.snr;
  return a == b;
}

}  // namespace

const std::vector<std::string>& algorithm_tags() {
  static const std::vector<std::string> tags{"network",      "gas+cdm",    "ras+cdm",  "full-array",
                                             "switch-based", "exhaustive", "bfnet+ras"};
  return tags;
}

bool is_algorithm(const std::string& tag) {
  const auto& t = algorithm_tags();
  return std::find(t.begin(), t.end(), tag) != t.end();
}

void require_algorithm(const std::string& tag) {
  if (!is_algorithm(tag)) {
    throw ContractError("unknown algorithm \"" + tag + "\"; valid: " + join(algorithm_tags(), ", "));
  }
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads < 0) throw ContractError("parallel_for: threads must be >= 0");
  std::size_t workers = threads == 0 ? std::max(1U, std::thread::hardware_concurrency())
                                     : static_cast<std::size_t>(threads);
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

SweepAxis parse_axis(const std::string& s) {
  if (s == "snr") return SweepAxis::Snr;
  if (s == "n_ts") return SweepAxis::NTs;
  if (s == "n_s") return SweepAxis::NS;
  if (s == "nmse") return SweepAxis::Nmse;
  throw ContractError("unknown sweep axis \"" + s + "\"; valid: snr, n_ts, n_s, nmse");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Snr: return "snr_db";
    case SweepAxis::NTs: return "n_ts";
    case SweepAxis::NS: return "n_s";
    case SweepAxis::Nmse: return "nmse";
  }
  return "?";
}

std::vector<double> parse_values(const std::string& s) {
  auto to_d = [&](const std::string& t) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != t.size()) throw ContractError("bad number \"" + t + "\" in \"" + s + "\"");
    return v;
  };
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ContractError("range must be a:step:b, got \"" + s + "\"");
    const double a = to_d(parts[0]), step = to_d(parts[1]), b = to_d(parts[2]);
    if (!(step > 0) || b < a) throw ContractError("range needs step > 0 and b >= a: \"" + s + "\"");
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
  } else {
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(to_d(p));
  }
  if (out.empty()) throw ContractError("no values in \"" + s + "\"");
  return out;
}

void ExperimentSpec::validate() const {
  if (values.empty()) throw ContractError("sweep needs at least one value");
  if (!std::is_sorted(values.begin(), values.end()) ||
      std::adjacent_find(values.begin(), values.end()) != values.end()) {
    throw ContractError("sweep values must be strictly increasing");
  }
  if (algorithms.empty()) throw ContractError("no algorithms given");
  for (const auto& a : algorithms) require_algorithm(a);
  if (threads < 0) throw ContractError("threads must be >= 0");
  for (double v : values) sweep_point(*this, v).validate();
}

SystemConfig sweep_point(const ExperimentSpec& spec, double value) {
  SystemConfig s = spec.system;
  auto as_int = [&](const char* what) {
    if (value != std::round(value)) throw ContractError(std::string(what) + " sweep values must be integers");
    return static_cast<int>(value);
  };
  switch (spec.axis) {
    case SweepAxis::Snr: s.snr = db_to_linear(value); break;
    case SweepAxis::NTs: s.n_ts = as_int("n_ts"); break;
    case SweepAxis::NS: s.n_s = as_int("n_s"); break;
    case SweepAxis::Nmse:
      if (value < 0) throw ContractError("nmse sweep values must be >= 0");
      break;
  }
  return s;
}

const JointModel& model_for(const std::vector<JointModel>& models, const SystemConfig& sys) {
  for (const auto& m : models)
    if (same_except_snr(m.system, sys)) return m;
  throw ContractError("no model for N_T=" + std::to_string(sys.n_t) + " N_TS=" + std::to_string(sys.n_ts) +
                      " N_RF=" + std::to_string(sys.n_rf) + " N_S=" + std::to_string(sys.n_s) +
                      " N_R=" + std::to_string(sys.n_r));
}

double algorithm_rate(const std::string& tag, const ChannelMatrix& h_est, const ChannelMatrix& h_true,
                      const AlgorithmContext& ctx, std::uint64_t seed) {
  const SystemConfig& sys = *ctx.system;
  auto scored = [&](const BaselineResult& r, const SystemConfig& used) {
    return achieved_rate(h_true, r.selection, r.beamformer, used);
  };
  if (tag == "network" || tag == "bfnet+ras") {
    if (!ctx.models || ctx.models->empty()) throw ContractError("algorithm \"" + tag + "\" needs a model");
    const JointModel& m = model_for(*ctx.models, sys);
    JointDecision d;
    if (tag == "network") {
      d = joint_infer(h_est, m, {ctx.gumbel_noise, sample_seed(seed, kNoiseStream)});
    } else {
      Rng rng(sample_seed(seed, kSelectionStream));
      d = bfnet_infer({h_est}, {random_antenna_selection(sys, rng)}, m).front();
    }
    return achieved_rate(h_true, d.selection, d.beamformer, sys);
  }
  if (tag == "gas+cdm") return scored(gas_cdm(h_est, sys), sys);
  if (tag == "ras+cdm") {
    Rng rng(sample_seed(seed, kSelectionStream));
    return scored(ras_cdm(h_est, sys, rng), sys);
  }
  if (tag == "full-array") {
    SystemConfig full = sys;
    full.n_ts = sys.n_t;
    return scored(full_array_reference(h_est, sys), full);
  }
  if (tag == "switch-based") {
    SystemConfig sw = sys;
    sw.n_ts = sys.n_rf;
    return scored(switch_based_reference(h_est, sys), sw);
  }
  if (tag == "exhaustive") return scored(exhaustive_joint_search(h_est, sys), sys);
  require_algorithm(tag);
  return 0.0;
}

RateStats summarize(const std::vector<double>& v) {
  RateStats s;
  s.count = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return s;
}

RateStats SweepResult::stats(std::size_t point, std::size_t algorithm) const {
  return summarize(rates.at(point).at(algorithm));
}

SweepResult run_sweep(const ExperimentSpec& spec, const Dataset& test, const std::vector<JointModel>& models) {
  spec.validate();
  if (test.size() == 0) throw ContractError("evaluation dataset is empty");
  if (test.n_t != spec.system.n_t || test.n_r != spec.system.n_r) {
    throw ContractError("dataset is " + std::to_string(test.n_r) + "x" + std::to_string(test.n_t) +
                        ", system expects " + std::to_string(spec.system.n_r) + "x" +
                        std::to_string(spec.system.n_t));
  }
  SweepResult r;
  r.axis = spec.axis;
  r.values = spec.values;
  r.algorithms = spec.algorithms;
  const std::size_t n = test.size();
  r.rates.assign(spec.values.size(),
                 std::vector<std::vector<double>>(spec.algorithms.size(), std::vector<double>(n, 0.0)));
  for (std::size_t p = 0; p < spec.values.size(); ++p) {
    const SystemConfig sys = sweep_point(spec, spec.values[p]);
    const double nmse = spec.axis == SweepAxis::Nmse ? spec.values[p] : 0.0;
    const AlgorithmContext ctx{&sys, &models, spec.gumbel_noise};
    parallel_for(n, spec.threads, [&](std::size_t i) {
      const std::uint64_t s = sample_seed(spec.seed, i);
      const ChannelMatrix& h = test.samples[i];
      ChannelMatrix h_est = h;
      if (nmse > 0) {
        Rng rng(sample_seed(s, kPerturbStream));
        h_est = perturb_csi(h, nmse, rng);
      }
      for (std::size_t a = 0; a < spec.algorithms.size(); ++a)
        r.rates[p][a][i] = algorithm_rate(spec.algorithms[a], h_est, h, ctx, s);
    });
  }
  return r;
}

void write_sweep_csv(const std::string& path, const SweepResult& r) {
  auto os = open_csv(path);
  os << to_string(r.axis);
  for (const auto& a : r.algorithms) os << ',' << a << "_mean," << a << "_std," << a << "_count";
  os << '\n';
  for (std::size_t p = 0; p < r.values.size(); ++p) {
    os << num(r.values[p]);
    for (std::size_t a = 0; a < r.algorithms.size(); ++a) {
      const RateStats s = r.stats(p, a);
      os << ',' << num(s.mean) << ',' << num(s.std) << ',' << s.count;
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

double OracleReport::oracle_mean() const { return summarize(oracle).mean; }

double OracleReport::mean_rate(std::size_t algorithm) const { return summarize(rates.at(algorithm)).mean; }

double OracleReport::mean_ratio(std::size_t algorithm) const {
  double s = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i) s += rates.at(algorithm)[i] / oracle[i];
  return oracle.empty() ? 0.0 : s / static_cast<double>(oracle.size());
}

double OracleReport::ratio_of_means(std::size_t algorithm) const { return mean_rate(algorithm) / oracle_mean(); }

OracleReport oracle_certify(const Dataset& test, const SystemConfig& sys, const std::vector<std::string>& algorithms,
                            const std::vector<JointModel>& models, std::uint64_t seed, int threads) {
  sys.validate();
  const double size = exhaustive_search_size(sys);
  if (size > kExhaustiveLimit) {
    std::ostringstream os;
    os << "exhaustive search refused: " << size << " candidates exceed the limit of " << kExhaustiveLimit;
    throw SearchSpaceError(os.str());
  }
  if (test.size() > 0 && (test.n_t != sys.n_t || test.n_r != sys.n_r)) {
    throw ContractError("dataset dimensions do not match the system");
  }
  OracleReport r;
  for (const auto& a : algorithms) {
    require_algorithm(a);
    if (a != "exhaustive") r.algorithms.push_back(a);
  }
  const std::size_t n = test.size();
  r.oracle.assign(n, 0.0);
  r.rates.assign(r.algorithms.size(), std::vector<double>(n, 0.0));
  const AlgorithmContext ctx{&sys, &models, false};
  parallel_for(n, threads, [&](std::size_t i) {
    const std::uint64_t s = sample_seed(seed, i);
    const ChannelMatrix& h = test.samples[i];
    r.oracle[i] = algorithm_rate("exhaustive", h, h, ctx, s);
    for (std::size_t a = 0; a < r.algorithms.size(); ++a) r.rates[a][i] = algorithm_rate(r.algorithms[a], h, h, ctx, s);
  });
  return r;
}

void write_oracle_csv(const std::string& path, const OracleReport& r) {
  auto os = open_csv(path);
  os << "sample,oracle";
  for (const auto& a : r.algorithms) os << ',' << a << ',' << a << "_ratio";
  os << '\n';
  for (std::size_t i = 0; i < r.oracle.size(); ++i) {
    os << i << ',' << num(r.oracle[i]);
    for (std::size_t a = 0; a < r.algorithms.size(); ++a)
      os << ',' << num(r.rates[a][i]) << ',' << num(r.rates[a][i] / r.oracle[i]);
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

void BenchSpec::validate() const {
  if (n_t.empty() || n_ts.empty()) throw ContractError("bench grid is empty");
  if (samples < 1 || rounds < 1) throw ContractError("bench needs samples >= 1 and rounds >= 1");
  for (const auto& a : algorithms)
    if (a != "network" && a != "gas" && a != "cdm")
      throw ContractError("unknown bench algorithm \"" + a + "\"; valid: network, gas, cdm");
  for (int t : n_t)
    for (int s : n_ts) SystemConfig{t, s, n_rf, n_s, n_r, snr, 1}.validate();
  features.validate();
}

std::vector<BenchRow> run_bench(const BenchSpec& spec) {
  using Clock = std::chrono::steady_clock;
  spec.validate();
  std::vector<BenchRow> rows;
  for (const auto& alg : spec.algorithms) {
    for (int n_t : spec.n_t) {
      for (int n_ts : spec.n_ts) {
        const SystemConfig sys{n_t, n_ts, spec.n_rf, spec.n_s, spec.n_r, spec.snr, 1};
        ChannelModelConfig ch = spec.channel;
        ch.seed = sample_seed(spec.seed, static_cast<std::uint64_t>(n_t) * 1000 + n_ts);
        const Dataset d = generate_dataset(ch, spec.n_r, n_t, static_cast<std::size_t>(spec.samples));
        JointModel model;
        if (alg == "network") {
          model = init_model(sys, spec.features, spec.seed);
          ChannelModelConfig cal = ch;
          cal.seed = sample_seed(ch.seed, 0xca1);
          calibrate_norm_stats(model, generate_dataset(cal, spec.n_r, n_t, 16).samples);
        }
        std::vector<SelectionMatrix> picks;
        if (alg == "cdm") {
          Rng rng(spec.seed);
          for (int i = 0; i < spec.samples; ++i) picks.push_back(random_antenna_selection(sys, rng));
        }
        std::vector<ChannelMatrix> subs;
        for (int i = 0; i < static_cast<int>(picks.size()); ++i) subs.push_back(select_columns(d.samples[i], picks[i]));
        double sink = 0.0;
        auto once = [&](int i) {
          if (alg == "network") {
            sink += joint_infer(d.samples[i], model).beamformer.t_bb.norm();
          } else if (alg == "gas") {
            sink += greedy_antenna_selection(d.samples[i], sys).indices.front();
          } else {
            sink += cdm_altmin(subs[i], sys).beamformer.t_bb.norm();
          }
        };
        once(0);  // warm-up
        std::vector<double> medians;
        for (int round = 0; round < spec.rounds; ++round) {
          std::vector<double> t(static_cast<std::size_t>(spec.samples));
          for (int i = 0; i < spec.samples; ++i) {
            const auto t0 = Clock::now();
            once(i);
            t[i] = std::chrono::duration<double>(Clock::now() - t0).count();
          }
          std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
          medians.push_back(t[t.size() / 2]);
        }
        std::vector<double> sorted = medians;
        std::sort(sorted.begin(), sorted.end());
        BenchRow row;
        row.algorithm = alg;
        row.n_t = n_t;
        row.n_ts = n_ts;
        row.median_s = sorted[sorted.size() / 2];
        row.spread = (sorted.back() - sorted.front()) / row.median_s;
        row.samples = spec.samples;
        if (!std::isfinite(sink)) throw NumericalError("bench: non-finite result");
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  auto os = open_csv(path);
  os << "algorithm,n_t,n_ts,median_s,spread,samples\n";
  for (const auto& r : rows)
    os << r.algorithm << ',' << r.n_t << ',' << r.n_ts << ',' << num(r.median_s) << ',' << num(r.spread) << ','
       << r.samples << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("loglog_slope: need two or more paired points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw ContractError("loglog_slope: values must be positive");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw ContractError("loglog_slope: x values are all equal");
  return sxy / sxx;
}

double bench_slope(const std::vector<BenchRow>& rows, const std::string& algorithm, const std::string& axis) {
  if (axis != "n_t" && axis != "n_ts") throw ContractError("bench_slope: axis must be n_t or n_ts");
  const bool by_nt = axis == "n_t";
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : rows) {
    if (r.algorithm != algorithm) continue;
    auto& g = groups[by_nt ? r.n_ts : r.n_t];
    g.first.push_back(by_nt ? r.n_t : r.n_ts);
    g.second.push_back(r.median_s);
  }
  double sum = 0.0;
  int count = 0;
  for (const auto& [_, g] : groups) {
    if (g.first.size() < 2) continue;
    sum += loglog_slope(g.first, g.second);
    ++count;
  }
  if (count == 0) throw ContractError("bench_slope: no group with two or more points for " + algorithm);
  return sum / count;
}

}  // namespace asbf
