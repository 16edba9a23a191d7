#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asbf/baselines.hpp"
#include "asbf/channel.hpp"
#include "asbf/nets.hpp"

namespace asbf {

/// Registered algorithm tags, in report order.
const std::vector<std::string>& algorithm_tags();
bool is_algorithm(const std::string& tag);
/// Throws ContractError listing the valid tags.
void require_algorithm(const std::string& tag);

/// Runs fn(i) for i in [0, n) on at most `threads` workers (0 = hardware
/// concurrency). The first exception by index is rethrown after all workers
/// finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

double db_to_linear(double db);

enum class SweepAxis { Snr, NTs, NS, Nmse };
SweepAxis parse_axis(const std::string& s);
std::string to_string(SweepAxis axis);

/// "a:step:b" (inclusive) or a comma-separated list.
std::vector<double> parse_values(const std::string& s);

struct ExperimentSpec {
  SystemConfig system;
  SweepAxis axis = SweepAxis::Snr;
  /// SNR points are in dB; the other axes are used as given.
  std::vector<double> values;
  std::vector<std::string> algorithms;
  std::uint64_t seed = 1;
  bool gumbel_noise = false;
  int threads = 1;

  /// Non-empty sorted values, registered tags, and every sweep point
  /// yielding a valid system.
  void validate() const;
};

/// System at one sweep point.
SystemConfig sweep_point(const ExperimentSpec& spec, double value);

/// Everything an algorithm may consume for one sample.
struct AlgorithmContext {
  const SystemConfig* system = nullptr;
  /// Trained models; "network" and "bfnet+ras" use the one whose system
  /// matches (SNR excluded).
  const std::vector<JointModel>* models = nullptr;
  bool gumbel_noise = false;
};

/// Rate on `h_true` of the design computed from `h_est` by `tag`. `seed`
/// drives the random choices of this sample.
double algorithm_rate(const std::string& tag, const ChannelMatrix& h_est, const ChannelMatrix& h_true,
                      const AlgorithmContext& ctx, std::uint64_t seed);

/// Model matching `sys` in every field except the SNR; throws ContractError
/// when none does.
const JointModel& model_for(const std::vector<JointModel>& models, const SystemConfig& sys);

struct RateStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one sample
  std::size_t count = 0;
};
RateStats summarize(const std::vector<double>& v);

struct SweepResult {
  SweepAxis axis = SweepAxis::Snr;
  std::vector<double> values;
  std::vector<std::string> algorithms;
  /// rates[point][algorithm][sample]
  std::vector<std::vector<std::vector<double>>> rates;

  RateStats stats(std::size_t point, std::size_t algorithm) const;
};

/// Evaluates every algorithm on every test sample at every sweep point.
/// Under the NMSE axis each algorithm sees perturb_csi(H) and is scored on
/// H; the perturbation of sample i is shared by all algorithms and points.
SweepResult run_sweep(const ExperimentSpec& spec, const Dataset& test, const std::vector<JointModel>& models);

/// One row per sweep point: the axis value, then mean, std and count per
/// algorithm.
void write_sweep_csv(const std::string& path, const SweepResult& r);

struct OracleReport {
  std::vector<std::string> algorithms;  // without "exhaustive"
  std::vector<double> oracle;           // per sample
  std::vector<std::vector<double>> rates;  // [algorithm][sample]

  double oracle_mean() const;
  double mean_rate(std::size_t algorithm) const;
  /// Mean over samples of rate / oracle.
  double mean_ratio(std::size_t algorithm) const;
  /// Ratio of mean rates.
  double ratio_of_means(std::size_t algorithm) const;
};

/// Exhaustive joint search per sample next to the listed algorithms.
/// Throws SearchSpaceError when the instance is too large.
OracleReport oracle_certify(const Dataset& test, const SystemConfig& sys, const std::vector<std::string>& algorithms,
                            const std::vector<JointModel>& models, std::uint64_t seed, int threads);

/// Columns: sample, oracle, then per algorithm its rate and its ratio.
void write_oracle_csv(const std::string& path, const OracleReport& r);

struct BenchSpec {
  std::vector<int> n_t{32, 64, 128};
  std::vector<int> n_ts{4, 8, 16};
  /// Subset of {"network", "gas", "cdm"}.
  std::vector<std::string> algorithms{"network", "gas", "cdm"};
  int n_r = 2;
  int n_rf = 2;
  int n_s = 1;
  double snr = 10.0;
  FeatureExtractorConfig features;
  int samples = 100;
  /// Independent timing rounds per grid point, for the stability column.
  int rounds = 3;
  std::uint64_t seed = 1;
  ChannelModelConfig channel;

  void validate() const;
};

struct BenchRow {
  std::string algorithm;
  int n_t = 0;
  int n_ts = 0;
  double median_s = 0.0;
  /// (max - min) / median over the per-round medians.
  double spread = 0.0;
  int samples = 0;
};

/// Per-sample wall-clock times at batch size 1: network forward (untrained
/// weights), greedy selection and CDM alternating minimization.
std::vector<BenchRow> run_bench(const BenchSpec& spec);
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Mean of the per-group log-log slopes of `algorithm`'s median time against
/// "n_t" or "n_ts", grouping by the other dimension.
double bench_slope(const std::vector<BenchRow>& rows, const std::string& algorithm, const std::string& axis);

}  // namespace asbf
