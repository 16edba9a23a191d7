#include "asbf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "asbf/baselines.hpp"
#include "asbf/binary_io.hpp"
#include "asbf/errors.hpp"

namespace asbf {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (n1 < 0 || n2 < 0 || n3 < 0) throw ContractError("train config: epoch counts must be >= 0");
  if (!(mu1 > 0 && mu2 > 0 && mu3 > 0)) throw ContractError("train config: learning rates must be > 0");
  if (batch_size < 2) throw ContractError("train config: batch_size must be >= 2");
  if (!(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0)) {
    throw ContractError("train config: penalty weights must be >= 0");
  }
  if (!(tau_init > 0 && tau_final > 0)) throw ContractError("train config: temperatures must be > 0");
  if (!(tau_final <= tau_init)) throw ContractError("train config: tau_final must not exceed tau_init");
  if (!(alpha > 0)) throw ContractError("train config: alpha must be > 0");
}

std::string to_json(const TrainConfig& c) {
  json j = {{"n1", c.n1},           {"n2", c.n2},
            {"n3", c.n3},           {"mu1", c.mu1},
            {"mu2", c.mu2},         {"mu3", c.mu3},
            {"batch_size", c.batch_size}, {"lambda1", c.lambda1},
            {"lambda2", c.lambda2}, {"lambda3", c.lambda3},
            {"tau_init", c.tau_init}, {"tau_final", c.tau_final},
            {"alpha", c.alpha},     {"seed", c.seed}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("train config: top-level JSON value must be an object");
  TrainConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n1") c.n1 = v.get<int>();
      else if (key == "n2") c.n2 = v.get<int>();
      else if (key == "n3") c.n3 = v.get<int>();
      else if (key == "mu1") c.mu1 = v.get<double>();
      else if (key == "mu2") c.mu2 = v.get<double>();
      else if (key == "mu3") c.mu3 = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "lambda1") c.lambda1 = v.get<double>();
      else if (key == "lambda2") c.lambda2 = v.get<double>();
      else if (key == "lambda3") c.lambda3 = v.get<double>();
      else if (key == "tau_init") c.tau_init = v.get<double>();
      else if (key == "tau_final") c.tau_final = v.get<double>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ContractError("train config: unknown key \"" + key + "\"");
    }
  } catch (const json::type_error& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig read_train_config(const std::string& path) {
  const auto bytes = io::read_file(path);
  return train_config_from_json(std::string(bytes.begin(), bytes.end()));
}

ad::Tensor loss_rate(const ad::Tensor& rate) { return -ad::mean(rate); }

ad::Tensor loss_pen1(const ad::Tensor& a_hat, double lambda1) {
  if (a_hat.rank() != 2 && a_hat.rank() != 3) {
    throw DimensionError("loss_pen1: selection must be rank 2 or 3, got " + ad::to_string(a_hat.shape()));
  }
  const ad::Tensor gram = ad::matmul(ad::transpose(a_hat), a_hat);
  const std::size_t k = a_hat.shape().back();
  std::vector<double> off(k * k, 1.0);
  for (std::size_t i = 0; i < k; ++i) off[i * k + i] = 0.0;
  const ad::Tensor s = ad::sum(ad::square(gram) * a_hat.tape().constant({k, k}, std::move(off)));
  const double batch = a_hat.rank() == 3 ? static_cast<double>(a_hat.dim(0)) : 1.0;
  return ad::affine(s, lambda1 / batch);
}

ad::Tensor loss_pen2(const ad::Tensor& logits, double lambda2) {
  if (logits.rank() != 2 && logits.rank() != 3) {
    throw DimensionError("loss_pen2: logits must be rank 2 or 3, got " + ad::to_string(logits.shape()));
  }
  const std::size_t axis = logits.rank() - 1;
  const ad::Tensor plogp = ad::softmax(logits, axis) * ad::log_softmax(logits, axis);
  const double batch = logits.rank() == 3 ? static_cast<double>(logits.dim(0)) : 1.0;
  return ad::affine(ad::sum(plogp), -lambda2 / (std::numbers::ln2 * batch));
}

ad::Tensor loss_pen3(const std::vector<ad::Tensor>& params, double lambda3) {
  if (params.empty()) throw ContractError("loss_pen3: no parameters given");
  ad::Tensor s;
  for (const auto& p : params) {
    const ad::Tensor t = ad::sum(ad::square(p));
    s = s.valid() ? s + t : t;
  }
  return ad::affine(s, lambda3);
}

double temperature(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= std::max(cfg.n2, 1)) {
    throw ContractError("temperature: epoch " + std::to_string(epoch) + " outside phase 2");
  }
  if (cfg.n2 <= 1) return cfg.tau_init;
  return cfg.tau_init *
         std::pow(cfg.tau_final / cfg.tau_init, static_cast<double>(epoch) / (cfg.n2 - 1));
}

bool trainable_in_phase(int phase, const std::string& name) {
  switch (phase) {
    case 1: return name.rfind("bf.", 0) == 0;
    case 2: return name.rfind("as.", 0) == 0;
    case 3: return true;
    default: throw ContractError("unknown training phase " + std::to_string(phase));
  }
}

BatchLoss batch_loss(int phase, const BatchInputs& in, BoundParams& p, const JointModel& m,
                     const TrainConfig& cfg, const NormContext& norm) {
  if (in.channels.empty()) throw ContractError("batch_loss: empty batch");
  ad::Tape& tape = p.tape();
  BatchLoss out;
  ad::Tensor total;
  if (phase == 1) {
    const TrainForward f = bfnet_forward_train(in.channels, in.selections, p, m, norm, cfg.alpha);
    total = loss_rate(f.rate);
    out.parts.rate = total.item();
  } else {
    ad::Tensor gumbel;
    if (!in.gumbel.empty()) gumbel = to_tensor(tape, in.gumbel);
    const TrainForward f = joint_forward_train(to_complex_tensor(tape, in.channels), p, m, norm,
                                               in.tau, gumbel, cfg.alpha);
    const ad::Tensor r = loss_rate(f.rate);
    const ad::Tensor p1 = loss_pen1(f.as.selection, cfg.lambda1);
    const ad::Tensor p2 = loss_pen2(f.as.logits, cfg.lambda2);
    out.parts.rate = r.item();
    out.parts.pen1 = p1.item();
    out.parts.pen2 = p2.item();
    total = r + p1 + p2;
  }
  std::vector<ad::Tensor> reg;
  for (const auto& [name, _] : m.params) {
    if (trainable_in_phase(phase, name)) reg.push_back(p[name]);
  }
  const ad::Tensor p3 = loss_pen3(reg, cfg.lambda3);
  out.parts.pen3 = p3.item();
  out.total = total + p3;
  out.parts.total = out.total.item();
  return out;
}

namespace {

// Batch boundaries for n samples; a lone trailing sample joins the batch before it.
std::vector<std::pair<std::size_t, std::size_t>> batches(std::size_t n, std::size_t k) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += k) out.emplace_back(b, std::min(n, b + k));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

std::string context(int phase, int epoch, std::size_t batch) {
  return "phase " + std::to_string(phase) + ", epoch " + std::to_string(epoch) + ", batch " +
         std::to_string(batch);
}

constexpr std::uint64_t kTestStream = 0x7e57;

double phase_tau(int phase, int epoch_in_phase, const TrainConfig& cfg) {
  if (phase == 1) return 0.0;
  if (phase == 2) return temperature(epoch_in_phase, cfg);
  return cfg.tau_final;
}

void run_phase(JointModel& model, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
               int phase, int epochs, double lr, Rng& rng, const TrainOptions& opt,
               std::vector<EpochRecord>& history) {
  ad::AdamState adam;
  const auto& sys = model.system;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs; ++e) {
    EpochRecord rec;
    rec.epoch = static_cast<int>(history.size()) + 1;
    rec.phase = phase;
    rec.tau = phase_tau(phase, e, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t b_index = 0;
    for (const auto& [lo, hi] : batches(order.size(), static_cast<std::size_t>(cfg.batch_size))) {
      ++b_index;
      BatchInputs in;
      in.tau = phase == 1 ? 1.0 : rec.tau;
      for (std::size_t i = lo; i < hi; ++i) {
        in.channels.push_back(train.samples[order[i]]);
        if (phase == 1) {
          in.selections.push_back(random_antenna_selection(sys, rng));
        } else {
          in.gumbel.push_back(sample_gumbel(sys.n_ts, sys.n_t, rng));
        }
      }
      ad::Tape tape;
      BoundParams p(tape, model.params, [phase](const std::string& n) { return trainable_in_phase(phase, n); });
      const NormContext norm{ad::NormMode::Train, &model.norm_stats};
      BatchLoss bl;
      try {
        bl = batch_loss(phase, in, p, model, cfg, norm);
      } catch (const NumericalError& err) {
        throw NumericalError(std::string(err.what()) + " (" + context(phase, rec.epoch, b_index) + ")");
      }
      if (!std::isfinite(bl.parts.total)) {
        throw NumericalError("non-finite training loss at " + context(phase, rec.epoch, b_index));
      }
      const ad::GradientMap grads = tape.gradients(bl.total);
      try {
        ad::adam_step(model.params, grads, adam, lr);
      } catch (const NumericalError& err) {
        throw NumericalError(std::string(err.what()) + " (" + context(phase, rec.epoch, b_index) + ")");
      }
      loss_sum += bl.parts.total * static_cast<double>(hi - lo);
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.test_loss = test.size() > 0
                        ? evaluate_loss(phase, model, test, cfg, phase == 1 ? 1.0 : rec.tau,
                                        cfg.seed ^ kTestStream)
                        : std::numeric_limits<double>::quiet_NaN();
    history.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);
  }
}

void check_dims(const JointModel& model, const Dataset& d, const char* what) {
  if (d.size() > 0 && (d.n_r != model.system.n_r || d.n_t != model.system.n_t)) {
    throw ContractError(std::string(what) + " dataset is " + std::to_string(d.n_r) + "x" +
                        std::to_string(d.n_t) + ", model expects " + std::to_string(model.system.n_r) +
                        "x" + std::to_string(model.system.n_t));
  }
}

}  // namespace

double evaluate_loss(int phase, const JointModel& model, const Dataset& data, const TrainConfig& cfg,
                     double tau, std::uint64_t seed) {
  if (data.size() == 0) throw ContractError("evaluate_loss: empty dataset");
  check_dims(model, data, "evaluation");
  Rng rng(seed);
  auto stats = model.norm_stats;
  double sum = 0.0;
  for (const auto& [lo, hi] : batches(data.size(), static_cast<std::size_t>(cfg.batch_size))) {
    BatchInputs in;
    in.tau = tau;
    for (std::size_t i = lo; i < hi; ++i) {
      in.channels.push_back(data.samples[i]);
      if (phase == 1) in.selections.push_back(random_antenna_selection(model.system, rng));
    }
    ad::Tape tape;
    BoundParams p(tape, model.params);
    const BatchLoss bl = batch_loss(phase, in, p, model, cfg, {ad::NormMode::Infer, &stats});
    sum += bl.parts.total * static_cast<double>(hi - lo);
  }
  return sum / static_cast<double>(data.size());
}

std::vector<EpochRecord> phased_train(JointModel& model, const Dataset& train, const Dataset& test,
                                      const TrainConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (train.size() == 0) throw ContractError("phased_train: empty training set");
  check_dims(model, train, "training");
  check_dims(model, test, "test");
  Rng rng(cfg.seed);
  std::vector<EpochRecord> history;
  run_phase(model, train, test, cfg, 1, cfg.n1, cfg.mu1, rng, opt, history);
  run_phase(model, train, test, cfg, 2, cfg.n2, cfg.mu2, rng, opt, history);
  run_phase(model, train, test, cfg, 3, cfg.n3, cfg.mu3, rng, opt, history);
  return history;
}

std::vector<EpochRecord> fine_tune(JointModel& model, const Dataset& train, const Dataset& test,
                                   const TrainConfig& cfg, int epochs, const TrainOptions& opt) {
  cfg.validate();
  if (train.size() == 0) throw ContractError("fine_tune: empty training set");
  check_dims(model, train, "training");
  check_dims(model, test, "test");
  Rng rng(sample_seed(cfg.seed, 0xf17e));
  std::vector<EpochRecord> history;
  run_phase(model, train, test, cfg, 3, epochs, cfg.mu3, rng, opt, history);
  return history;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "epoch,phase,train_loss,test_loss,tau\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", r.epoch, r.phase, r.train_loss,
                  r.test_loss, r.tau);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace asbf
