#include "asbf/nets.hpp"

#include <numbers>
#include <random>
#include <sstream>

#include "asbf/errors.hpp"

namespace asbf {

namespace {

constexpr std::size_t kInputChannels = 3;
const char* const kConvLayers[] = {"conv1", "conv2", "conv3", "conv4"};

void add_he(ad::ParameterSet& ps, const std::string& name, ad::Shape shape, std::size_t fan_in,
            Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = dist(rng);
  ps.add(name, std::move(shape), std::move(v));
}

void add_fill(ad::ParameterSet& ps, const std::string& name, std::size_t n, double fill) {
  ps.add(name, {n}, std::vector<double>(n, fill));
}

void add_extractor(ad::ParameterSet& ps, const std::string& prefix, std::size_t rows,
                   std::size_t cols, const FeatureExtractorConfig& fe, Rng& rng) {
  const auto k = static_cast<std::size_t>(fe.kernel);
  const auto d = static_cast<std::size_t>(fe.filters);
  std::size_t in_ch = kInputChannels;
  for (int l = 0; l < 4; ++l) {
    const std::string conv = prefix + kConvLayers[l];
    const std::string bn = prefix + "bn" + std::to_string(l + 1);
    add_he(ps, conv + ".w", {k, k, in_ch, d}, k * k * in_ch, rng);
    add_fill(ps, conv + ".b", d, 0.0);
    add_fill(ps, bn + ".scale", d, 1.0);
    add_fill(ps, bn + ".shift", d, 0.0);
    in_ch = d;
  }
  const std::size_t flat = rows * cols * d;
  const auto n = static_cast<std::size_t>(fe.features);
  add_he(ps, prefix + "fc.w", {flat, n}, flat, rng);
  add_fill(ps, prefix + "fc.b", n, 0.0);
}

void add_linear(ad::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                Rng& rng) {
  add_he(ps, name + ".w", {in, out}, in, rng);
  add_fill(ps, name + ".b", out, 0.0);
}

ad::Tensor linear(const ad::Tensor& x, BoundParams& p, const std::string& name) {
  return ad::matmul(x, p[name + ".w"]) + p[name + ".b"];
}

ad::Tensor conv_block(const ad::Tensor& x, BoundParams& p, const std::string& conv,
                      const std::string& bn, const NormContext& norm) {
  const ad::Tensor c = ad::conv2d(x, p[conv + ".w"], p[conv + ".b"]);
  ad::BatchNormState* state = norm.stats ? &(*norm.stats)[bn] : nullptr;
  return ad::relu(ad::batch_norm(c, p[bn + ".scale"], p[bn + ".shift"], norm.mode, state));
}

std::size_t batch_of(const ad::ComplexPair& h, const char* who) {
  if (h.shape().size() != 3) {
    throw DimensionError(std::string(who) + ": channel batch must be (B, rows, cols), got " +
                         ad::to_string(h.shape()));
  }
  return h.shape()[0];
}

}  // namespace

void FeatureExtractorConfig::validate() const {
  if (filters < 1) throw ContractError("feature extractor: filters must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ContractError("feature extractor: kernel size must be odd");
  if (features < 1) throw ContractError("feature extractor: feature length must be >= 1");
}

bool JointModel::operator==(const JointModel& o) const {
  if (!(system == o.system && features == o.features && params == o.params)) return false;
  if (norm_stats.size() != o.norm_stats.size()) return false;
  for (const auto& [k, s] : norm_stats) {
    auto it = o.norm_stats.find(k);
    if (it == o.norm_stats.end() || it->second.running_mean != s.running_mean ||
        it->second.running_var != s.running_var) {
      return false;
    }
  }
  return true;
}

JointModel init_model(const SystemConfig& sys, const FeatureExtractorConfig& fe, std::uint64_t seed) {
  sys.validate();
  fe.validate();
  JointModel m{sys, fe, {}, {}};
  Rng rng(seed);
  const auto n_r = static_cast<std::size_t>(sys.n_r);
  const auto n = static_cast<std::size_t>(fe.features);
  add_extractor(m.params, "as.", n_r, static_cast<std::size_t>(sys.n_t), fe, rng);
  for (int j = 0; j < sys.n_ts; ++j) {
    add_linear(m.params, "as.head" + std::to_string(j), n, static_cast<std::size_t>(sys.n_t), rng);
  }
  add_extractor(m.params, "bf.", n_r, static_cast<std::size_t>(sys.n_ts), fe, rng);
  add_linear(m.params, "bf.phase", n, static_cast<std::size_t>(sys.n_ts * sys.n_rf), rng);
  add_linear(m.params, "bf.re", n, static_cast<std::size_t>(sys.n_rf * sys.n_s), rng);
  add_linear(m.params, "bf.im", n, static_cast<std::size_t>(sys.n_rf * sys.n_s), rng);
  return m;
}

std::vector<std::string> parameter_names(const JointModel& m, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& [name, _] : m.params) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(name);
  }
  return out;
}

BoundParams::BoundParams(ad::Tape& tape, const ad::ParameterSet& params,
                         std::function<bool(const std::string&)> trainable)
    : tape_(tape), params_(params), trainable_(std::move(trainable)) {}

ad::Tensor BoundParams::operator[](const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const ad::Parameter& p = params_.at(name);
  ad::Tensor t;
  if (trainable_ && trainable_(name)) {
    t = tape_.parameter(name, p.shape, p.value);
    leaves_.push_back(t);
  } else {
    t = tape_.constant(p.shape, p.value);
  }
  bound_.emplace(name, t);
  return t;
}

ad::Tensor build_input_tensor(const ad::ComplexPair& h) {
  ad::Shape s = h.shape();
  s.push_back(1);
  const ad::Tensor re = ad::reshape(h.re, s);
  const ad::Tensor im = ad::reshape(h.im, s);
  const ad::Tensor mag = ad::sqrt(ad::square(re) + ad::square(im));
  return ad::concat({re, im, mag}, s.size() - 1);
}

ad::Tensor extract_features(const ad::Tensor& x, BoundParams& p, const std::string& prefix,
                            const NormContext& norm) {
  if (x.rank() != 4) {
    throw DimensionError("extract_features: input must be (B, rows, cols, channels), got " +
                         ad::to_string(x.shape()));
  }
  const ad::Tensor x1 = conv_block(x, p, prefix + "conv1", prefix + "bn1", norm);
  const ad::Tensor r = conv_block(conv_block(x1, p, prefix + "conv2", prefix + "bn2", norm), p,
                                  prefix + "conv3", prefix + "bn3", norm) +
                       x1;
  const ad::Tensor x3 = conv_block(r, p, prefix + "conv4", prefix + "bn4", norm);
  const std::size_t b = x3.dim(0);
  const ad::Tensor flat = ad::reshape(x3, {b, x3.size() / b});
  return ad::relu(linear(flat, p, prefix + "fc"));
}

AsnetOutput asnet_forward(const ad::ComplexPair& h, BoundParams& p, const JointModel& m,
                          const NormContext& norm, double tau, const ad::Tensor& gumbel) {
  const std::size_t b = batch_of(h, "asnet_forward");
  const auto n_t = static_cast<std::size_t>(m.system.n_t);
  if (h.shape()[1] != static_cast<std::size_t>(m.system.n_r) || h.shape()[2] != n_t) {
    throw DimensionError("asnet_forward: channel shape " + ad::to_string(h.shape()) +
                         " does not match N_R x N_T = " + std::to_string(m.system.n_r) + "x" +
                         std::to_string(n_t));
  }
  const ad::Tensor v = extract_features(build_input_tensor(h), p, "as.", norm);
  std::vector<ad::Tensor> heads;
  for (int j = 0; j < m.system.n_ts; ++j) {
    heads.push_back(ad::reshape(linear(v, p, "as.head" + std::to_string(j)), {b, 1, n_t}));
  }
  AsnetOutput out;
  out.logits = ad::concat(heads, 1);
  if (tau > 0.0) out.selection = relaxed_select(out.logits, tau, gumbel);
  return out;
}

BfnetOutput bfnet_forward(const ad::ComplexPair& h_s, BoundParams& p, const JointModel& m,
                          const NormContext& norm, const PhaseQuantizerConfig& q) {
  const std::size_t b = batch_of(h_s, "bfnet_forward");
  const auto& sys = m.system;
  if (h_s.shape()[1] != static_cast<std::size_t>(sys.n_r) ||
      h_s.shape()[2] != static_cast<std::size_t>(sys.n_ts)) {
    throw DimensionError("bfnet_forward: selected channel shape " + ad::to_string(h_s.shape()) +
                         " does not match N_R x N_TS = " + std::to_string(sys.n_r) + "x" +
                         std::to_string(sys.n_ts));
  }
  const ad::Tensor v = extract_features(build_input_tensor(h_s), p, "bf.", norm);
  const auto n_ts = static_cast<std::size_t>(sys.n_ts);
  const auto n_rf = static_cast<std::size_t>(sys.n_rf);
  const auto n_s = static_cast<std::size_t>(sys.n_s);
  BfnetOutput out;
  out.phases = ad::reshape(ad::affine(ad::sigmoid(linear(v, p, "bf.phase")), 2 * std::numbers::pi),
                           {b, n_ts, n_rf});
  out.t_rf = analog_from_phases(out.phases, q);
  out.t_bb_raw = {ad::reshape(linear(v, p, "bf.re"), {b, n_rf, n_s}),
                  ad::reshape(linear(v, p, "bf.im"), {b, n_rf, n_s})};
  if (q.mode == QuantizerMode::Soft) out.t_bb = normalize_digital(out.t_rf, out.t_bb_raw, sys.n_s);
  return out;
}

TrainForward joint_forward_train(const ad::ComplexPair& h, BoundParams& p, const JointModel& m,
                                 const NormContext& norm, double tau, const ad::Tensor& gumbel,
                                 double alpha) {
  if (!(tau > 0.0)) throw ContractError("joint_forward_train: temperature must be positive");
  TrainForward out;
  out.as = asnet_forward(h, p, m, norm, tau, gumbel);
  const ad::ComplexPair h_s = ad::cmatmul(h, out.as.selection);
  out.bf = bfnet_forward(h_s, p, m, norm, {alpha, QuantizerMode::Soft});
  out.rate = achieved_rate(h, out.as.selection, out.bf.t_rf, out.bf.t_bb, m.system);
  return out;
}

void calibrate_norm_stats(JointModel& m, const std::vector<ChannelMatrix>& hs) {
  if (hs.size() < 2) throw ContractError("calibrate_norm_stats: need at least two channels");
  ad::Tape tape;
  BoundParams p(tape, m.params);
  const NormContext norm{ad::NormMode::Train, &m.norm_stats};
  const ad::ComplexPair h = to_complex_tensor(tape, hs);
  const AsnetOutput as = asnet_forward(h, p, m, norm, 1.0);
  // The quantizer sits after every normalization layer, so the hard one
  // yields the same statistics without normalizing T_BB.
  bfnet_forward(ad::cmatmul(h, as.selection), p, m, norm, {0.01, QuantizerMode::Hard});
}

namespace {

std::vector<ChannelMatrix> selected(const std::vector<ChannelMatrix>& hs,
                                    const std::vector<SelectionMatrix>& sel) {
  if (hs.size() != sel.size()) throw ContractError("one selection per channel is required");
  std::vector<ChannelMatrix> out;
  out.reserve(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) out.push_back(select_columns(hs[i], sel[i]));
  return out;
}

}  // namespace

TrainForward bfnet_forward_train(const std::vector<ChannelMatrix>& hs,
                                 const std::vector<SelectionMatrix>& sel, BoundParams& p,
                                 const JointModel& m, const NormContext& norm, double alpha) {
  const ad::ComplexPair h_s = to_complex_tensor(p.tape(), selected(hs, sel));
  TrainForward out;
  out.bf = bfnet_forward(h_s, p, m, norm, {alpha, QuantizerMode::Soft});
  out.rate = rate_from_effective(ad::cmatmul(ad::cmatmul(h_s, out.bf.t_rf), out.bf.t_bb),
                                 m.system.snr, m.system.n_s);
  return out;
}

namespace {

std::vector<JointDecision> bfnet_decide(const std::vector<ChannelMatrix>& hs,
                                        std::vector<SelectionMatrix> sel, const JointModel& m,
                                        std::vector<Eigen::MatrixXd> logits) {
  ad::Tape tape;
  BoundParams p(tape, m.params);
  auto stats = m.norm_stats;
  const NormContext norm{ad::NormMode::Infer, &stats};
  const ad::ComplexPair h_s = to_complex_tensor(tape, selected(hs, sel));
  const BfnetOutput bf = bfnet_forward(h_s, p, m, norm, {0.01, QuantizerMode::Hard});
  std::vector<JointDecision> out(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    JointDecision& d = out[i];
    d.selection = std::move(sel[i]);
    d.beamformer.phases = to_matrix(bf.phases, i);
    d.beamformer.t_rf = analog_from_phases(d.beamformer.phases, {0.01, QuantizerMode::Hard});
    const Eigen::MatrixXcd raw = to_complex_matrix(bf.t_bb_raw, i);
    if ((d.beamformer.t_rf * raw).norm() > 0.0) {
      d.beamformer.t_bb = normalize_digital(d.beamformer.t_rf, raw, m.system.n_s);
    } else {
      const ChannelMatrix h_sel = select_columns(hs[i], d.selection);
      d.beamformer.t_bb = optimal_digital_beamformer(h_sel * d.beamformer.t_rf, d.beamformer.t_rf, m.system).t_bb;
      d.digital_fallback = true;
    }
    if (!logits.empty()) d.logits = std::move(logits[i]);
    d.rate = achieved_rate(hs[i], d.selection, d.beamformer, m.system);
  }
  return out;
}

}  // namespace

std::vector<JointDecision> joint_infer(const std::vector<ChannelMatrix>& hs, const JointModel& m,
                                       const InferenceOptions& opt) {
  if (hs.empty()) return {};
  std::vector<Eigen::MatrixXd> logits;
  {
    ad::Tape tape;
    BoundParams p(tape, m.params);
    auto stats = m.norm_stats;
    const NormContext norm{ad::NormMode::Infer, &stats};
    const AsnetOutput as = asnet_forward(to_complex_tensor(tape, hs), p, m, norm);
    for (std::size_t i = 0; i < hs.size(); ++i) logits.push_back(to_matrix(as.logits, i));
  }
  std::vector<SelectionMatrix> sel;
  sel.reserve(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (opt.gumbel_noise) {
      Rng rng(sample_seed(opt.seed, i));
      sel.push_back(hard_select(logits[i], true, rng));
    } else {
      sel.push_back(hard_select(logits[i]));
    }
  }
  return bfnet_decide(hs, std::move(sel), m, std::move(logits));
}

JointDecision joint_infer(const ChannelMatrix& h, const JointModel& m, const InferenceOptions& opt) {
  return joint_infer(std::vector<ChannelMatrix>{h}, m, opt).front();
}

std::vector<JointDecision> bfnet_infer(const std::vector<ChannelMatrix>& hs,
                                       const std::vector<SelectionMatrix>& sel, const JointModel& m) {
  if (hs.empty()) return {};
  return bfnet_decide(hs, sel, m, {});
}

std::string describe(const SystemConfig& sys, const FeatureExtractorConfig& fe) {
  std::ostringstream os;
  os << "N_T=" << sys.n_t << " N_TS=" << sys.n_ts << " N_RF=" << sys.n_rf << " N_S=" << sys.n_s
     << " N_R=" << sys.n_r << " snr=" << sys.snr << " N_B=" << sys.n_b << " d=" << fe.filters
     << " h=" << fe.kernel << " n=" << fe.features;
  return os.str();
}

void save_model(const std::string& path, const JointModel& m) {
  ad::NamedArrays entries;
  for (const auto& [name, p] : m.params) entries.emplace(name, p);
  for (const auto& [name, s] : m.norm_stats) {
    if (!s.populated()) continue;
    entries.emplace("norm." + name + ".mean", ad::Parameter{{s.running_mean.size()}, s.running_mean});
    entries.emplace("norm." + name + ".var", ad::Parameter{{s.running_var.size()}, s.running_var});
  }
  const auto& sys = m.system;
  const auto& fe = m.features;
  entries.emplace("config",
                  ad::Parameter{{10},
                                {double(sys.n_t), double(sys.n_ts), double(sys.n_rf), double(sys.n_s),
                                 double(sys.n_r), sys.snr, double(sys.n_b), double(fe.filters),
                                 double(fe.kernel), double(fe.features)}});
  ad::write_mbm1(path, entries);
}

JointModel load_model(const std::string& path) {
  ad::NamedArrays entries = ad::read_mbm1(path);
  auto cfg_it = entries.find("config");
  if (cfg_it == entries.end() || cfg_it->second.value.size() != 10) {
    throw FormatError("model file " + path + " has no valid config entry");
  }
  const auto& c = cfg_it->second.value;
  auto as_int = [&](std::size_t i) { return static_cast<int>(c[i]); };
  SystemConfig sys{as_int(0), as_int(1), as_int(2), as_int(3), as_int(4), c[5], as_int(6)};
  FeatureExtractorConfig fe{as_int(7), as_int(8), as_int(9)};
  try {
    sys.validate();
    fe.validate();
  } catch (const ContractError& e) {
    throw FormatError("model file " + path + " holds an invalid config: " + e.what());
  }
  entries.erase(cfg_it);

  // The freshly initialized model fixes the expected names and shapes.
  JointModel m = init_model(sys, fe, 0);
  for (auto& [name, p] : m.params) {
    auto it = entries.find(name);
    if (it == entries.end()) throw FormatError("model file " + path + " lacks parameter " + name);
    if (it->second.shape != p.shape) {
      throw FormatError("model file " + path + ": parameter " + name + " has shape " +
                        ad::to_string(it->second.shape) + ", expected " + ad::to_string(p.shape));
    }
    p.value = std::move(it->second.value);
    entries.erase(it);
  }
  for (auto it = entries.begin(); it != entries.end();) {
    const std::string& name = it->first;
    const std::string mean_suffix = ".mean";
    if (name.rfind("norm.", 0) == 0 && name.size() > mean_suffix.size() &&
        name.compare(name.size() - mean_suffix.size(), mean_suffix.size(), mean_suffix) == 0) {
      const std::string layer = name.substr(5, name.size() - 5 - mean_suffix.size());
      auto var = entries.find("norm." + layer + ".var");
      if (var == entries.end()) throw FormatError("model file " + path + " lacks variance of " + layer);
      if (!m.params.contains(layer + ".scale") ||
          var->second.value.size() != m.params.at(layer + ".scale").value.size() ||
          it->second.value.size() != var->second.value.size()) {
        throw FormatError("model file " + path + ": statistics for unknown or mis-sized layer " + layer);
      }
      m.norm_stats[layer] = {it->second.value, var->second.value};
      entries.erase(var);
      it = entries.erase(it);
    } else {
      ++it;
    }
  }
  if (!entries.empty()) {
    throw FormatError("model file " + path + " has unexpected entry " + entries.begin()->first);
  }
  return m;
}

JointModel load_model(const std::string& path, const SystemConfig& sys,
                      const FeatureExtractorConfig& fe) {
  JointModel m = load_model(path);
  if (!(m.system == sys && m.features == fe)) {
    throw FormatError("model config mismatch: file has [" + describe(m.system, m.features) +
                      "], expected [" + describe(sys, fe) + "]");
  }
  return m;
}

}  // namespace asbf
