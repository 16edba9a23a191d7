// End-to-end acceptance run. One line per criterion; exit status 1 if any
// criterion fails (A9 only warns).

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "asbf/baselines.hpp"
#include "asbf/harness.hpp"
#include "asbf/training.hpp"

using namespace asbf;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const char* id, bool pass, const std::string& detail, bool warn_only = false) {
  const char* verdict = pass ? "PASS" : (warn_only ? "WARN" : "FAIL");
  if (!pass && !warn_only) ++failures;
  std::printf("%-4s %s  %s\n", id, verdict, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Dataset channels(const SystemConfig& sys, std::size_t n, std::uint64_t seed) {
  ChannelModelConfig cfg;
  cfg.seed = seed;
  return generate_dataset(cfg, sys.n_r, sys.n_t, n);
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- A1

void gradient_integrity() {
  const auto t0 = Clock::now();
  const SystemConfig sys{8, 3, 2, 2, 2, 10.0, 1};
  JointModel m = init_model(sys, {4, 3, 16}, 11);
  const TrainConfig cfg;
  BatchInputs in;
  in.channels = channels(sys, 4, 21).samples;
  in.tau = 0.5;
  Rng rng(5);
  for (std::size_t i = 0; i < in.channels.size(); ++i) in.gumbel.push_back(sample_gumbel(sys.n_ts, sys.n_t, rng));
  const NormContext norm{ad::NormMode::Train, nullptr};

  const auto loss_at = [&](const JointModel& model) {
    ad::Tape tape;
    BoundParams p(tape, model.params, [](const std::string&) { return false; });
    return batch_loss(3, in, p, model, cfg, norm).total.item();
  };

  ad::Tape tape;
  BoundParams p(tape, m.params, [](const std::string& n) { return trainable_in_phase(3, n); });
  const BatchLoss bl = batch_loss(3, in, p, m, cfg, norm);
  tape.backward(bl.total);

  const double eps = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0, zero_grad = 0;
  double worst_abs = 0.0;
  for (auto& [name, param] : m.params) {
    if (!trainable_in_phase(3, name)) continue;
    const std::vector<double> analytic = tape.grad(p[name]);
    std::vector<double> numeric(param.value.size());
    for (std::size_t k = 0; k < param.value.size(); ++k) {
      const double x0 = param.value[k];
      param.value[k] = x0 + eps;
      const double fp = loss_at(m);
      param.value[k] = x0 - eps;
      const double fm = loss_at(m);
      param.value[k] = x0;
      numeric[k] = (fp - fm) / (2 * eps);
    }
    double d = 0, na = 0, nn = 0;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      d += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      na += analytic[k] * analytic[k];
      nn += numeric[k] * numeric[k];
    }
    // Biases feeding batch norm have an exactly zero gradient, where central
    // differences carry only rounding noise (~1e-10). Such tensors are held
    // to absolute agreement; the rest to relative agreement.
    const double resolution = 1e-8;
    if (std::max(std::sqrt(na), std::sqrt(nn)) < resolution) {
      ++zero_grad;
      worst_abs = std::max(worst_abs, std::sqrt(d));
    } else {
      const double err = std::sqrt(d) / std::max(std::sqrt(na), std::sqrt(nn));
      if (err > worst) worst = err, worst_name = name;
    }
    ++checked;
  }
  const double t = seconds_since(t0);
  report("A1", worst < 1e-4 && worst_abs < 1e-8 && t < 120.0,
         fmt("%zu parameter tensors: worst relative error %.3e (%s); %zu zero-gradient tensors, worst absolute "
             "difference %.1e; %.1f s",
             checked, worst, worst_name.c_str(), zero_grad, worst_abs, t));
}

// ---------------------------------------------------------------- A2

const SystemConfig kTiny{6, 2, 2, 1, 2, 10.0, 1};

struct Trained {
  JointModel model;
  Dataset train, test;
  TrainConfig cfg;
};

Trained oracle_near_optimality() {
  const auto t0 = Clock::now();
  Trained r;
  r.train = channels(kTiny, 2000, 101);
  r.test = channels(kTiny, 500, 202);
  r.cfg.n1 = r.cfg.n2 = r.cfg.n3 = 10;
  r.model = init_model(kTiny, FeatureExtractorConfig::full_size(), r.cfg.seed);
  phased_train(r.model, r.train, r.test, r.cfg);
  const OracleReport o = oracle_certify(r.test, kTiny, {"network", "ras+cdm", "gas+cdm"}, {r.model}, 7, 0);
  const double ratio = o.ratio_of_means(0);
  const double t = seconds_since(t0);
  const bool pass = ratio >= 0.85 && o.mean_rate(0) > o.mean_rate(1) && t < 900.0;
  report("A2", pass,
         fmt("network/oracle %.4f (bar 0.85, per-sample mean ratio %.4f); network %.4f, ras+cdm %.4f, gas+cdm %.4f, "
             "oracle %.4f bit/s/Hz; %.0f s",
             ratio, o.mean_ratio(0), o.mean_rate(0), o.mean_rate(1), o.mean_rate(2), o.oracle_mean(), t));
  return r;
}

// ---------------------------------------------------------------- A3

bool constraints_hold(const std::vector<JointDecision>& ds, const SystemConfig& sys, double& worst_power) {
  const double amp = 1.0 / std::sqrt(static_cast<double>(sys.n_ts));
  bool ok = true;
  for (const auto& d : ds) {
    const Eigen::MatrixXd a = d.selection.dense();
    ok = ok && (a.transpose() * a == Eigen::MatrixXd::Identity(sys.n_ts, sys.n_ts));
    for (Eigen::Index i = 0; i < d.beamformer.t_rf.size(); ++i) {
      const auto z = d.beamformer.t_rf(i);
      ok = ok && z.imag() == 0.0 && (z.real() == amp || z.real() == -amp);
    }
    const double dev = std::abs((d.beamformer.t_rf * d.beamformer.t_bb).squaredNorm() - sys.n_s);
    worst_power = std::max(worst_power, dev);
  }
  return ok;
}

void constraint_satisfaction(const JointModel& trained) {
  double worst = 0.0;
  bool ok = constraints_hold(joint_infer(channels(kTiny, 1000, 303).samples, trained), kTiny, worst);
  const SystemConfig wide{8, 3, 2, 2, 2, 10.0, 1};
  JointModel fresh = init_model(wide, {4, 3, 16}, 3);
  calibrate_norm_stats(fresh, channels(wide, 32, 304).samples);
  ok = constraints_hold(joint_infer(channels(wide, 1000, 305).samples, fresh, {true, 9}), wide, worst) && ok;
  report("A3", ok && worst < 1e-9,
         fmt("2 x 1000 passes, selection and 1-bit entries exact: %s, worst power deviation %.2e", ok ? "yes" : "no",
             worst));
}

// ---------------------------------------------------------------- A4

void rate_hierarchy(const JointModel& trained) {
  const Dataset d = channels(kTiny, 200, 404);
  const std::vector<JointModel> models{trained};
  const AlgorithmContext ctx{&kTiny, &models, false};
  const std::vector<std::string> baselines{"gas+cdm", "ras+cdm", "switch-based", "bfnet+ras"};
  int bad_fd = 0, bad_net = 0, bad_neg = 0, bad_base = 0;
  double min_gap = 1e300;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& h = d.samples[i];
    const double fd = full_digital(h, kTiny.n_s, kTiny.snr).rate;
    const double ex = exhaustive_joint_search(h, kTiny).rate;
    const double net = algorithm_rate("network", h, h, ctx, i);
    bad_fd += fd < ex - 1e-9;
    bad_net += ex < net - 1e-9;
    bad_neg += net < -1e-9;
    min_gap = std::min(min_gap, ex - net);
    for (const auto& b : baselines) bad_base += ex < algorithm_rate(b, h, h, ctx, i) - 1e-9;
  }
  const bool pass = bad_fd + bad_net + bad_neg + bad_base == 0;
  report("A4", pass,
         fmt("200 instances; violations: fd<ex %d, ex<net %d, net<0 %d, ex<baseline %d; min ex-net %.3e", bad_fd,
             bad_net, bad_neg, bad_base, min_gap));
}

// ---------------------------------------------------------------- A5

void quantizer_approximation() {
  const double alpha = 0.01, pi = std::numbers::pi;
  double worst = 0.0, worst_at = 0.0;
  int used = 0;
  for (int i = 0; i < 10000; ++i) {
    const double th = 2 * pi * i / 9999.0;
    if (std::abs(th) < 10 * alpha || std::abs(th - pi) < 10 * alpha || std::abs(th - 2 * pi) < 10 * alpha) continue;
    ++used;
    const double err = std::abs(soft_quantize_phase(th, alpha) - quantize_phase(th));
    if (err > worst) worst = err, worst_at = th;
  }
  const double at_pi = std::abs(soft_quantize_phase(pi, alpha) - pi / 2);
  const double at_zero = std::abs(soft_quantize_phase(0.0, alpha) + pi / 2);
  report("A5", worst < 1e-4 && at_pi < 1e-12 && at_zero < 1e-12,
         fmt("%d grid points, max error %.3e at theta=%.4f (bar 1e-4); branch values off by %.1e (pi), %.1e (0)", used,
             worst, worst_at, at_pi, at_zero));
}

// ---------------------------------------------------------------- A6

void training_dynamics() {
  TrainConfig cfg;
  cfg.n1 = cfg.n2 = cfg.n3 = 6;
  cfg.batch_size = 32;
  const Dataset train = channels(kTiny, 2000, 601), test = channels(kTiny, 500, 602);
  const FeatureExtractorConfig fe;
  JointModel a = init_model(kTiny, fe, cfg.seed), b = a;
  const auto ha = phased_train(a, train, test, cfg);
  const auto hb = phased_train(b, train, test, cfg);
  bool same = ha.size() == hb.size();
  for (std::size_t i = 0; same && i < ha.size(); ++i)
    same = ha[i].train_loss == hb[i].train_loss && ha[i].test_loss == hb[i].test_loss;

  const int n[3] = {cfg.n1, cfg.n2, cfg.n3};
  bool decreasing = true;
  std::string per_phase;
  std::size_t start = 0;
  for (int ph = 0; ph < 3; ++ph) {
    std::vector<double> first, last;
    for (int e = 0; e < 3; ++e) {
      first.push_back(ha[start + e].train_loss);
      last.push_back(ha[start + n[ph] - 3 + e].train_loss);
    }
    decreasing = decreasing && mean(last) < mean(first);
    per_phase += fmt(" p%d %.4f->%.4f", ph + 1, mean(first), mean(last));
    start += n[ph];
  }
  const double end1 = ha[cfg.n1 - 1].train_loss, start2 = ha[cfg.n1].train_loss;
  const bool drop = start2 < end1;
  report("A6", decreasing && drop && same,
         fmt("first3->last3:%s; phase-1 end %.4f, phase-2 start %.4f (%s); repeat run identical: %s", per_phase.c_str(),
             end1, start2, drop ? "drop" : "no drop", same ? "yes" : "no"));
}

// ---------------------------------------------------------------- A7

void table_fidelity() {
  const auto j = nlohmann::json::parse(to_json(TrainConfig{}));
  const bool pass = j.at("mu1") == 1e-4 && j.at("mu2") == 1e-4 && j.at("mu3") == 5e-5 && j.at("tau_init") == 1.0 &&
                    j.at("tau_final") == 0.1 && j.at("alpha") == 0.01 && j.at("batch_size") == 512 &&
                    j.at("lambda1") == 1e-2 && j.at("lambda2") == 1e-3 && j.at("lambda3") == 1e-3;
  report("A7", pass, j.dump());
}

// ---------------------------------------------------------------- A8

double wf_value(const Eigen::VectorXd& g, const Eigen::VectorXd& p, double c) {
  double s = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) s += std::log2(1 + c * g(i) * g(i) * p(i));
  return s;
}

void water_filling_optimality() {
  std::mt19937_64 gen(808);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  double worst_kkt = 0.0, worst_margin = 1e300;
  int beaten = 0;
  for (int t = 0; t < 100; ++t) {
    const int k = 1 + static_cast<int>(gen() % 6);
    Eigen::VectorXd g(k);
    for (int i = 0; i < k; ++i) g(i) = 0.05 + 3.0 * u(gen);
    std::sort(g.data(), g.data() + k, std::greater<>());
    const double power = 0.1 + 5.0 * u(gen), c = 0.1 + 10.0 * u(gen);
    const Eigen::VectorXd p = water_filling<double>(g, power, c);

    // KKT: p >= 0, sum p = P, common level mu on the active set, and
    // inactive modes have floor 1/(c g^2) >= mu.
    double lvl = 0.0;
    int active = 0;
    for (int i = 0; i < k; ++i)
      if (p(i) > 0) lvl += p(i) + 1 / (c * g(i) * g(i)), ++active;
    lvl /= std::max(active, 1);
    double kkt = std::abs(p.sum() - power) / power;
    for (int i = 0; i < k; ++i) {
      const double floor = 1 / (c * g(i) * g(i));
      kkt = std::max(kkt, std::max(-p(i), 0.0));
      kkt = std::max(kkt, p(i) > 0 ? std::abs(p(i) + floor - lvl) / lvl : std::max(lvl - floor, 0.0) / lvl);
    }
    worst_kkt = std::max(worst_kkt, kkt);

    const double best = wf_value(g, p, c);
    Eigen::VectorXd q(k);
    for (int r = 0; r < 100000; ++r) {
      for (int i = 0; i < k; ++i) q(i) = ex(gen);
      q *= power / q.sum();
      const double v = wf_value(g, q, c);
      worst_margin = std::min(worst_margin, best - v);
      beaten += v > best + 1e-12;
    }
  }
  report("A8", worst_kkt < 1e-10 && beaten == 0,
         fmt("100 vectors; worst KKT residual %.2e; random allocations above water-filling (beyond 1e-12): %d; smallest margin %.2e",
             worst_kkt, beaten, worst_margin));
}

// ---------------------------------------------------------------- A9

void complexity_trend() {
  BenchSpec spec;
  spec.samples = 30;
  const auto rows = run_bench(spec);
  const double net = bench_slope(rows, "network", "n_t");
  const double cdm = bench_slope(rows, "cdm", "n_ts");
  report("A9", net <= 1.3 && cdm >= 1.7,
         fmt("log-log slope network vs N_T %.3f (bar <= 1.3), CDM vs N_TS %.3f (bar >= 1.7)", net, cdm), true);
}

// ---------------------------------------------------------------- A10

double clean_rate(const JointModel& m, const Dataset& test) {
  double s = 0;
  for (const auto& d : joint_infer(test.samples, m)) s += d.rate;
  return s / static_cast<double>(test.samples.size());
}

void robustness(const Trained& t) {
  ExperimentSpec spec;
  spec.system = kTiny;
  spec.axis = SweepAxis::Nmse;
  spec.values = {0.0, 0.01, 0.1, 0.5};
  spec.algorithms = {"network"};
  spec.seed = 1010;
  const SweepResult r = run_sweep(spec, t.test, {t.model});
  bool monotone = true;
  std::string curve;
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    curve += fmt(" %.2f:%.4f", spec.values[i], r.stats(i, 0).mean);
    if (i > 0) monotone = monotone && r.stats(i, 0).mean <= r.stats(i - 1, 0).mean;
  }

  Dataset noisy = t.train;
  for (std::size_t i = 0; i < noisy.samples.size(); ++i) {
    Rng rng(sample_seed(1011, i));
    noisy.samples[i] = perturb_csi(noisy.samples[i], 0.1, rng);
  }
  JointModel tuned = t.model;
  fine_tune(tuned, noisy, {}, t.cfg, 3);
  const double before = clean_rate(t.model, t.test), after = clean_rate(tuned, t.test);
  const double change = (after - before) / before;
  report("A10", monotone && change >= -0.05,
         fmt("mean rate by NMSE:%s (non-increasing: %s); clean rate %.4f -> %.4f after 3 noisy epochs (%+.2f%%, bar "
             "-5%%)",
             curve.c_str(), monotone ? "yes" : "no", before, after, 100 * change));
}

template <typename F>
void guarded(const char* id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  guarded("A1", gradient_integrity);
  Trained t;
  bool have_model = false;
  guarded("A2", [&] {
    t = oracle_near_optimality();
    have_model = true;
  });
  if (have_model) {
    guarded("A3", [&] { constraint_satisfaction(t.model); });
    guarded("A4", [&] { rate_hierarchy(t.model); });
  } else {
    report("A3", false, "no trained model");
    report("A4", false, "no trained model");
  }
  guarded("A5", quantizer_approximation);
  guarded("A6", training_dynamics);
  guarded("A7", table_fidelity);
  guarded("A8", water_filling_optimality);
  guarded("A9", complexity_trend);
  if (have_model) {
    guarded("A10", [&] { robustness(t); });
  } else {
    report("A10", false, "no trained model");
  }
  std::printf("%d criteria failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
