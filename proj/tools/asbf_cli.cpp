// asbf: data generation, training, evaluation, oracle certification and
// timing for joint antenna selection and 1-bit hybrid beamforming.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "asbf/errors.hpp"
#include "asbf/harness.hpp"
#include "asbf/training.hpp"

namespace {

using namespace asbf;

/// Bad flag values; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SystemFlags {
  int n_ts = 2;
  int n_rf = 2;
  int n_s = 1;
  double snr_db = 10.0;
  CLI::Option* o_nts = nullptr;
  CLI::Option* o_nrf = nullptr;
  CLI::Option* o_ns = nullptr;
  CLI::Option* o_snr = nullptr;

  void add(CLI::App* app) {
    o_nts = app->add_option("--nts", n_ts, "Selected antennas N_TS");
    o_nrf = app->add_option("--nrf", n_rf, "RF chains N_RF");
    o_ns = app->add_option("--ns", n_s, "Data streams N_S");
    o_snr = app->add_option("--snr-db", snr_db, "SNR in dB");
  }

  /// Flags override `base`; n_t and n_r come from the data.
  SystemConfig resolve(SystemConfig base, int n_t, int n_r) const {
    base.n_t = n_t;
    base.n_r = n_r;
    if (o_nts->count()) base.n_ts = n_ts;
    if (o_nrf->count()) base.n_rf = n_rf;
    if (o_ns->count()) base.n_s = n_s;
    if (o_snr->count()) base.snr = db_to_linear(snr_db);
    try {
      base.validate();
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
    return base;
  }

  SystemConfig defaults() const {
    SystemConfig s;
    s.n_ts = n_ts;
    s.n_rf = n_rf;
    s.n_s = n_s;
    s.snr = db_to_linear(snr_db);
    return s;
  }
};

struct NetFlags {
  bool full = false;
  FeatureExtractorConfig fe;

  void add(CLI::App* app) {
    app->add_flag("--full-net", full, "Use the full-size feature extractor (d=64, h=3, n=500)");
    app->add_option("--filters", fe.filters, "Conv filters d");
    app->add_option("--kernel", fe.kernel, "Conv kernel size h");
    app->add_option("--features", fe.features, "Feature vector length n");
  }

  FeatureExtractorConfig resolve() const {
    const FeatureExtractorConfig out = full ? FeatureExtractorConfig::full_size() : fe;
    try {
      out.validate();
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
    return out;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ',');)
    if (!p.empty()) out.push_back(p);
  return out;
}

std::vector<std::string> parse_algorithms(const std::string& s) {
  auto tags = split_list(s);
  if (tags.empty()) throw UsageError("no algorithms given");
  for (const auto& t : tags) {
    try {
      require_algorithm(t);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  return tags;
}

std::vector<JointModel> load_models(const std::vector<std::string>& paths) {
  std::vector<JointModel> models;
  for (const auto& p : paths) models.push_back(load_model(p));
  return models;
}

// ---------------------------------------------------------------- gen-data

struct GenDataFlags {
  std::string out;
  std::size_t count = 1000;
  int n_t = 6;
  int n_r = 2;
  ChannelModelConfig ch;
};

void cmd_gen_data(const GenDataFlags& f) {
  if (f.n_t < 1 || f.n_r < 1) throw UsageError("--nt and --nr must be >= 1");
  try {
    f.ch.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  const Dataset d = generate_dataset(f.ch, f.n_r, f.n_t, f.count);
  write_dataset(f.out, d);
  if (d.size() == 0) std::cerr << "warning: --count 0, wrote an empty dataset\n";
  double worst = 0.0;
  const double target = static_cast<double>(f.n_r) * f.n_t;
  for (const auto& h : d.samples) worst = std::max(worst, std::abs(h.squaredNorm() - target));
  std::printf("wrote %zu channels (%d x %d) to %s; max |‖H‖_F^2 - %g| = %.3g\n", d.size(), f.n_r, f.n_t,
              f.out.c_str(), target, worst);
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  std::string config;
  std::string train;
  std::string test;
  std::string out;
  std::string history;
  std::string init_model;
  int fine_tune = 0;
  std::uint64_t init_seed = 0;
  CLI::Option* o_init_seed = nullptr;
  bool quiet = false;
  SystemFlags sys;
  NetFlags net;
};

void cmd_train(const TrainFlags& f) {
  TrainConfig cfg;
  if (!f.config.empty()) cfg = read_train_config(f.config);
  if (f.fine_tune < 0) throw UsageError("--fine-tune must be >= 0");
  const Dataset train = read_dataset(f.train);
  const Dataset test = f.test.empty() ? Dataset{train.n_r, train.n_t, {}} : read_dataset(f.test);
  if (train.size() == 0) throw UsageError("training dataset is empty");
  if (test.size() > 0 && (test.n_t != train.n_t || test.n_r != train.n_r)) {
    throw UsageError("train and test datasets have different dimensions");
  }
  JointModel model;
  if (!f.init_model.empty()) {
    model = load_model(f.init_model);
    if (model.system.n_t != train.n_t || model.system.n_r != train.n_r) {
      throw UsageError("model does not match the dataset dimensions");
    }
  } else {
    const SystemConfig sys = f.sys.resolve(f.sys.defaults(), train.n_t, train.n_r);
    model = init_model(sys, f.net.resolve(), f.o_init_seed->count() ? f.init_seed : cfg.seed);
  }
  std::printf("%s\n", describe(model.system, model.features).c_str());
  TrainOptions opt;
  if (!f.quiet) {
    opt.on_epoch = [](const EpochRecord& r) {
      std::printf("epoch %3d  phase %d  tau %.4f  train %.6f  test %.6f\n", r.epoch, r.phase, r.tau, r.train_loss,
                  r.test_loss);
      std::fflush(stdout);
    };
  }
  const auto history = f.fine_tune > 0 ? fine_tune(model, train, test, cfg, f.fine_tune, opt)
                                       : phased_train(model, train, test, cfg, opt);
  save_model(f.out, model);
  if (!f.history.empty()) write_history_csv(f.history, history);
  std::printf("saved model to %s\n", f.out.c_str());
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::vector<std::string> models;
  std::string test;
  std::string algorithms = "network,gas+cdm,ras+cdm,full-array,switch-based";
  std::string axis = "snr";
  std::string values = "10";
  std::string out;
  std::uint64_t seed = 1;
  int threads = 1;
  bool gumbel_noise = false;
  SystemFlags sys;
};

void cmd_eval(const EvalFlags& f) {
  ExperimentSpec spec;
  spec.algorithms = parse_algorithms(f.algorithms);
  try {
    spec.axis = parse_axis(f.axis);
    spec.values = parse_values(f.values);
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  spec.seed = f.seed;
  spec.threads = f.threads;
  spec.gumbel_noise = f.gumbel_noise;
  const Dataset test = read_dataset(f.test);
  const auto models = load_models(f.models);
  const SystemConfig base = models.empty() ? f.sys.defaults() : models.front().system;
  spec.system = f.sys.resolve(base, test.n_t, test.n_r);
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  const SweepResult r = run_sweep(spec, test, models);
  write_sweep_csv(f.out, r);
  for (std::size_t p = 0; p < r.values.size(); ++p) {
    std::printf("%s = %g:", to_string(r.axis).c_str(), r.values[p]);
    for (std::size_t a = 0; a < r.algorithms.size(); ++a)
      std::printf("  %s %.4f", r.algorithms[a].c_str(), r.stats(p, a).mean);
    std::printf("\n");
  }
  std::printf("wrote %s\n", f.out.c_str());
}

// ---------------------------------------------------------------- oracle

struct OracleFlags {
  std::vector<std::string> models;
  std::string test;
  std::string algorithms;
  std::string out;
  std::uint64_t seed = 1;
  int threads = 1;
  SystemFlags sys;
};

void cmd_oracle(const OracleFlags& f) {
  const Dataset test = read_dataset(f.test);
  const auto models = load_models(f.models);
  const SystemConfig base = models.empty() ? f.sys.defaults() : models.front().system;
  const SystemConfig sys = f.sys.resolve(base, test.n_t, test.n_r);
  std::string tags = f.algorithms;
  if (tags.empty()) tags = models.empty() ? "gas+cdm,ras+cdm,switch-based" : "network,gas+cdm,ras+cdm,switch-based";
  const auto algorithms = parse_algorithms(tags);
  std::printf("exhaustive search: %.0f candidates per sample\n", exhaustive_search_size(sys));
  const OracleReport r = oracle_certify(test, sys, algorithms, models, f.seed, f.threads);
  write_oracle_csv(f.out, r);
  std::printf("oracle mean rate %.6f over %zu samples\n", r.oracle_mean(), r.oracle.size());
  for (std::size_t a = 0; a < r.algorithms.size(); ++a)
    std::printf("  %-13s mean %.6f  mean ratio %.6f  ratio of means %.6f\n", r.algorithms[a].c_str(), r.mean_rate(a),
                r.mean_ratio(a), r.ratio_of_means(a));
  std::printf("wrote %s\n", f.out.c_str());
}

// ---------------------------------------------------------------- bench

struct BenchFlags {
  std::string nt_grid = "32,64,128";
  std::string nts_grid = "4,8,16";
  std::string algorithms = "network,gas,cdm";
  std::string out;
  BenchSpec spec;
  double snr_db = 10.0;
  NetFlags net;
};

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_values(s)) {
    if (v != std::round(v)) throw UsageError("grid values must be integers: " + s);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void cmd_bench(BenchFlags f) {
  BenchSpec spec = f.spec;
  try {
    spec.n_t = parse_ints(f.nt_grid);
    spec.n_ts = parse_ints(f.nts_grid);
    spec.algorithms = split_list(f.algorithms);
    spec.features = f.net.resolve();
    spec.snr = db_to_linear(f.snr_db);
    spec.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  const auto rows = run_bench(spec);
  write_bench_csv(f.out, rows);
  for (const auto& r : rows)
    std::printf("%-8s N_T=%4d N_TS=%3d  median %.3e s  spread %.2f\n", r.algorithm.c_str(), r.n_t, r.n_ts, r.median_s,
                r.spread);
  for (const auto& [alg, axis] : {std::pair{"network", "n_t"}, std::pair{"cdm", "n_ts"}, std::pair{"gas", "n_t"}}) {
    if (std::find(spec.algorithms.begin(), spec.algorithms.end(), alg) == spec.algorithms.end()) continue;
    try {
      std::printf("log-log slope of %s vs %s: %.3f\n", alg, axis, bench_slope(rows, alg, axis));
    } catch (const ContractError&) {
      // grid too small along this axis
    }
  }
  std::printf("wrote %s\n", f.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint antenna selection and 1-bit hybrid beamforming"};
  app.require_subcommand(1);

  GenDataFlags gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic channel dataset");
  g->add_option("--out", gen.out, "Output dataset file")->required();
  g->add_option("--count", gen.count, "Number of channels");
  g->add_option("--nt", gen.n_t, "Transmit antennas N_T");
  g->add_option("--nr", gen.n_r, "Receive antennas N_R");
  g->add_option("--paths", gen.ch.n_paths, "Propagation paths L");
  g->add_option("--seed", gen.ch.seed, "Random seed");
  g->add_option("--bandwidth", gen.ch.bandwidth_hz, "Bandwidth in Hz");
  g->add_option("--min-delay", gen.ch.min_delay_s, "Smallest path delay in s");
  g->add_option("--max-delay", gen.ch.max_delay_s, "Largest path delay in s");
  g->add_option("--decay", gen.ch.power_decay, "Per-path power decay exponent");
  g->add_option("--elev-min", gen.ch.elevation_min, "Elevation range start (rad)");
  g->add_option("--elev-max", gen.ch.elevation_max, "Elevation range end (rad)");
  g->add_option("--az-min", gen.ch.azimuth_min, "Azimuth range start (rad)");
  g->add_option("--az-max", gen.ch.azimuth_max, "Azimuth range end (rad)");

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "Three-phase training (or fine-tuning) of the joint network");
  t->add_option("--config", tr.config, "Training configuration JSON");
  t->add_option("--train", tr.train, "Training dataset")->required();
  t->add_option("--test", tr.test, "Held-out dataset");
  t->add_option("--out", tr.out, "Output model file")->required();
  t->add_option("--history", tr.history, "Loss history CSV");
  t->add_option("--init-model", tr.init_model, "Start from this model instead of a fresh one");
  t->add_option("--fine-tune", tr.fine_tune, "Run this many joint epochs instead of the three phases");
  tr.o_init_seed = t->add_option("--init-seed", tr.init_seed, "Weight initialization seed (default: config seed)");
  t->add_flag("--quiet", tr.quiet, "No per-epoch output");
  tr.sys.add(t);
  tr.net.add(t);

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "Rate sweep of the network and baselines");
  e->add_option("--model", ev.models, "Trained model (repeatable)");
  e->add_option("--test", ev.test, "Evaluation dataset")->required();
  e->add_option("--algorithms", ev.algorithms, "Comma-separated algorithm tags");
  e->add_option("--axis", ev.axis, "Sweep axis: snr, n_ts, n_s or nmse");
  e->add_option("--values", ev.values, "Sweep values: a:step:b or a,b,c (SNR in dB)");
  e->add_option("--out", ev.out, "Output CSV")->required();
  e->add_option("--seed", ev.seed, "Seed for random baselines and CSI errors");
  e->add_option("--threads", ev.threads, "Worker cap (0 = all cores)");
  e->add_flag("--gumbel-noise", ev.gumbel_noise, "Perturb selection logits at deployment");
  ev.sys.add(e);

  OracleFlags orc;
  auto* o = app.add_subcommand("oracle", "Certify against exhaustive joint search");
  o->add_option("--model", orc.models, "Trained model (repeatable)");
  o->add_option("--test", orc.test, "Evaluation dataset")->required();
  o->add_option("--algorithms", orc.algorithms, "Comma-separated algorithm tags");
  o->add_option("--out", orc.out, "Output CSV")->required();
  o->add_option("--seed", orc.seed, "Seed for random baselines");
  o->add_option("--threads", orc.threads, "Worker cap (0 = all cores)");
  orc.sys.add(o);

  BenchFlags be;
  auto* b = app.add_subcommand("bench", "Per-sample inference timing");
  b->add_option("--nt-grid", be.nt_grid, "N_T values");
  b->add_option("--nts-grid", be.nts_grid, "N_TS values");
  b->add_option("--algorithms", be.algorithms, "Subset of network,gas,cdm");
  b->add_option("--samples", be.spec.samples, "Timed samples per grid point");
  b->add_option("--rounds", be.spec.rounds, "Timing rounds per grid point");
  b->add_option("--nr", be.spec.n_r, "Receive antennas N_R");
  b->add_option("--nrf", be.spec.n_rf, "RF chains N_RF");
  b->add_option("--ns", be.spec.n_s, "Data streams N_S");
  b->add_option("--snr-db", be.snr_db, "SNR in dB");
  b->add_option("--seed", be.spec.seed, "Random seed");
  b->add_option("--out", be.out, "Output CSV")->required();
  be.net.add(b);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);  // prints help or the parse error
    if (code == 0) return 0;
    return 2;
  }

  try {
    if (*g) cmd_gen_data(gen);
    else if (*t) cmd_train(tr);
    else if (*e) cmd_eval(ev);
    else if (*o) cmd_oracle(orc);
    else if (*b) cmd_bench(be);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
