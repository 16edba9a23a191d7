#include "asbf/channel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "asbf/binary_io.hpp"
#include "asbf/errors.hpp"

namespace asbf {

using std::numbers::pi;

void ChannelModelConfig::validate() const {
  if (n_paths < 1) throw ContractError("channel config: n_paths must be >= 1");
  if (!(bandwidth_hz >= 0.0)) throw ContractError("channel config: bandwidth must be >= 0");
  if (!(min_delay_s >= 0.0) || !(max_delay_s >= min_delay_s)) {
    throw ContractError("channel config: delays must satisfy 0 <= min <= max");
  }
  if (!(power_decay >= 0.0)) throw ContractError("channel config: power_decay must be >= 0");
  if (!(elevation_min >= -pi / 2 && elevation_max <= pi / 2 && elevation_min <= elevation_max)) {
    throw ContractError("channel config: elevation range must lie in [-pi/2, pi/2]");
  }
  if (!(azimuth_min >= 0.0 && azimuth_max <= 2 * pi && azimuth_min <= azimuth_max)) {
    throw ContractError("channel config: azimuth range must lie in [0, 2pi]");
  }
}

Eigen::VectorXcd steering_vector(int n_elem, double elevation, double azimuth) {
  if (n_elem < 1) throw ContractError("steering_vector: n_elem must be >= 1");
  const double u = std::sin(elevation) * std::cos(azimuth);
  Eigen::VectorXcd a(n_elem);
  for (int k = 0; k < n_elem; ++k) a(k) = std::polar(1.0, 2 * pi * k * u);
  return a;
}

ChannelMatrix normalize_frobenius(const ChannelMatrix& h) {
  const double norm = h.norm();
  if (!(norm > 0.0)) throw DegenerateInputError("normalize_frobenius: zero matrix");
  return h * (std::sqrt(static_cast<double>(h.rows() * h.cols())) / norm);
}

ChannelMatrix synthesize_channel(const std::vector<PathParams>& paths, int n_r, int n_t,
                                 double bandwidth_hz) {
  ChannelMatrix h = ChannelMatrix::Zero(n_r, n_t);
  for (const auto& p : paths) {
    const std::complex<double> gain =
        p.magnitude * std::polar(1.0, p.phase + 2 * pi * p.delay_s * bandwidth_hz);
    h += gain * steering_vector(n_r, p.elevation_arrival, p.azimuth_arrival) *
         steering_vector(n_t, p.elevation_departure, p.azimuth_departure).adjoint();
  }
  return normalize_frobenius(h);
}

std::vector<PathParams> draw_paths(const ChannelModelConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::vector<PathParams> paths(cfg.n_paths);
  for (int l = 0; l < cfg.n_paths; ++l) {
    auto& p = paths[l];
    // Rayleigh magnitude with E|alpha|^2 = exp(-decay * l).
    const double mean_power = std::exp(-cfg.power_decay * l);
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    p.magnitude = std::sqrt(-mean_power * std::log(u));
    p.phase = uniform(0.0, 2 * pi);
    p.delay_s = uniform(cfg.min_delay_s, cfg.max_delay_s);
    p.elevation_arrival = uniform(cfg.elevation_min, cfg.elevation_max);
    p.azimuth_arrival = uniform(cfg.azimuth_min, cfg.azimuth_max);
    p.elevation_departure = uniform(cfg.elevation_min, cfg.elevation_max);
    p.azimuth_departure = uniform(cfg.azimuth_min, cfg.azimuth_max);
  }
  return paths;
}

ChannelMatrix generate_channel(const ChannelModelConfig& cfg, int n_r, int n_t, Rng& rng) {
  cfg.validate();
  if (n_r < 1 || n_t < 1) throw ContractError("generate_channel: dimensions must be >= 1");
  for (;;) {
    try {
      return synthesize_channel(draw_paths(cfg, rng), n_r, n_t, cfg.bandwidth_hz);
    } catch (const DegenerateInputError&) {
      // probability-zero event; draw again
    }
  }
}

std::uint64_t sample_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ChannelMatrix csi_error(const ChannelMatrix& h, double nmse, Rng& rng) {
  if (!(nmse >= 0.0)) throw ContractError("csi_error: nmse must be >= 0");
  const double n = static_cast<double>(h.rows() * h.cols());
  const double per_entry = nmse * h.squaredNorm() / n;
  std::normal_distribution<double> gauss(0.0, std::sqrt(per_entry / 2.0));
  ChannelMatrix e(h.rows(), h.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) e(i, j) = {gauss(rng), gauss(rng)};
  return e;
}

ChannelMatrix perturb_csi(const ChannelMatrix& h, double nmse, Rng& rng) {
  if (!(nmse >= 0.0)) throw ContractError("perturb_csi: nmse must be >= 0");
  if (nmse == 0.0) return h;
  return normalize_frobenius(h + csi_error(h, nmse, rng));
}

Dataset generate_dataset(const ChannelModelConfig& cfg, int n_r, int n_t, std::size_t count) {
  cfg.validate();
  Dataset d{n_r, n_t, {}};
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(sample_seed(cfg.seed, i));
    d.samples.push_back(generate_channel(cfg, n_r, n_t, rng));
  }
  return d;
}

DatasetSplit split_dataset(const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ContractError("split_dataset: train_fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * d.size()));
  DatasetSplit s;
  s.train = {d.n_r, d.n_t, {}};
  s.test = {d.n_r, d.n_t, {}};
  s.train_indices.assign(order.begin(), order.begin() + n_train);
  s.test_indices.assign(order.begin() + n_train, order.end());
  std::sort(s.train_indices.begin(), s.train_indices.end());
  std::sort(s.test_indices.begin(), s.test_indices.end());
  for (auto i : s.train_indices) s.train.samples.push_back(d.samples[i]);
  for (auto i : s.test_indices) s.test.samples.push_back(d.samples[i]);
  return s;
}

std::vector<char> encode_dataset(const Dataset& d) {
  io::ByteWriter w;
  w.bytes("MCH1");
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u32(static_cast<std::uint32_t>(d.n_r));
  w.u32(static_cast<std::uint32_t>(d.n_t));
  for (const auto& h : d.samples) {
    if (h.rows() != d.n_r || h.cols() != d.n_t) {
      throw DimensionError("write_dataset: sample shape does not match dataset dimensions");
    }
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      for (Eigen::Index j = 0; j < h.cols(); ++j) {
        w.f64(h(i, j).real());
        w.f64(h(i, j).imag());
      }
  }
  return w.buffer();
}

Dataset decode_dataset(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("MCH1");
  const std::uint32_t count = r.u32();
  Dataset d;
  d.n_r = static_cast<int>(r.u32());
  d.n_t = static_cast<int>(r.u32());
  const std::size_t per_sample = static_cast<std::size_t>(d.n_r) * d.n_t * 2 * sizeof(double);
  if (per_sample * count != r.remaining()) {
    throw FormatError("dataset body at byte offset " + std::to_string(r.offset()) + " holds " +
                      std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(per_sample * count));
  }
  d.samples.reserve(count);
  std::vector<double> buf(static_cast<std::size_t>(d.n_r) * d.n_t * 2);
  for (std::uint32_t s = 0; s < count; ++s) {
    r.f64s(buf.data(), buf.size());
    ChannelMatrix h(d.n_r, d.n_t);
    std::size_t k = 0;
    for (int i = 0; i < d.n_r; ++i)
      for (int j = 0; j < d.n_t; ++j, k += 2) h(i, j) = {buf[k], buf[k + 1]};
    d.samples.push_back(std::move(h));
  }
  return d;
}

void write_dataset(const std::string& path, const Dataset& d) {
  io::write_file(path, encode_dataset(d));
}

Dataset read_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace asbf
