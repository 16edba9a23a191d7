#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace asbf {

using ChannelMatrix = Eigen::MatrixXcd;
using Rng = std::mt19937_64;

/// Parameters of a synthetic Saleh-Valenzuela draw.
///
/// Gains are Rayleigh distributed with mean power exp(-power_decay * l) for
/// path l = 0..L-1. Path phases are uniform on [0, 2pi), delays uniform on
/// [min_delay_s, max_delay_s], elevations uniform on the elevation range and
/// azimuths uniform on the azimuth range, drawn independently for arrival and
/// departure. Arrays are half-wavelength ULAs on both sides.
struct ChannelModelConfig {
  int n_paths = 5;
  double bandwidth_hz = 100e6;
  double min_delay_s = 0.0;
  double max_delay_s = 1e-6;
  double power_decay = 0.7;
  double elevation_min = -std::numbers::pi / 2;
  double elevation_max = std::numbers::pi / 2;
  double azimuth_min = 0.0;
  double azimuth_max = 2 * std::numbers::pi;
  std::uint64_t seed = 1;

  /// Throws ContractError when any field is outside its documented domain.
  void validate() const;
};

struct PathParams {
  double magnitude = 1.0;
  double phase = 0.0;
  double delay_s = 0.0;
  double elevation_arrival = 0.0;
  double azimuth_arrival = 0.0;
  double elevation_departure = 0.0;
  double azimuth_departure = 0.0;
};

/// ULA response: element k is exp(j 2 pi k sin(elevation) cos(azimuth)).
Eigen::VectorXcd steering_vector(int n_elem, double elevation, double azimuth);

/// Scales `h` so that ||h||_F^2 = rows * cols.
ChannelMatrix normalize_frobenius(const ChannelMatrix& h);

/// Sum of rank-one path contributions, normalized to ||H||_F^2 = N_R N_T.
/// Throws DegenerateInputError when the unnormalized sum is zero.
ChannelMatrix synthesize_channel(const std::vector<PathParams>& paths, int n_r, int n_t,
                                 double bandwidth_hz);

std::vector<PathParams> draw_paths(const ChannelModelConfig& cfg, Rng& rng);

/// One normalized channel draw; redraws on a degenerate (all-zero) sum.
ChannelMatrix generate_channel(const ChannelModelConfig& cfg, int n_r, int n_t, Rng& rng);

/// Seed for sample `index` derived from a base seed (splitmix64 mixing), so
/// samples can be generated independently and in any order.
std::uint64_t sample_seed(std::uint64_t base, std::uint64_t index);

/// Additive estimation error with i.i.d. circular Gaussian entries whose
/// variance makes E{||E||_F^2} / ||H||_F^2 = nmse.
ChannelMatrix csi_error(const ChannelMatrix& h, double nmse, Rng& rng);

/// Imperfect CSI: (H + E) re-normalized to the Frobenius constraint.
/// nmse = 0 returns H unchanged. Throws ContractError for nmse < 0.
ChannelMatrix perturb_csi(const ChannelMatrix& h, double nmse, Rng& rng);

struct Dataset {
  int n_r = 0;
  int n_t = 0;
  std::vector<ChannelMatrix> samples;

  std::size_t size() const { return samples.size(); }
};

Dataset generate_dataset(const ChannelModelConfig& cfg, int n_r, int n_t, std::size_t count);

struct DatasetSplit {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// Random disjoint split; round(train_fraction * size) samples go to train.
DatasetSplit split_dataset(const Dataset& d, double train_fraction, std::uint64_t seed);

/// MCH1: magic "MCH1", u32 count, u32 N_R, u32 N_T, then per sample the
/// row-major entries as (re, im) f64 pairs, all little-endian.
std::vector<char> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::vector<char> bytes);
void write_dataset(const std::string& path, const Dataset& d);
Dataset read_dataset(const std::string& path);

}  // namespace asbf
