#include "asbf/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "asbf/errors.hpp"

namespace asbf::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(op) + ": empty tensor");
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

[[noreturn]] void dim_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                       to_string(b));
}

// Offsets of each output element into both operands under broadcasting.
struct Broadcast {
  Shape out;
  bool trivial = false;
  std::vector<std::size_t> a_off, b_off;
};

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.trivial = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (r - b.size()));
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) dim_error(op, a, b);
    p.out[i] = std::max(pa[i], pb[i]);
  }
  std::vector<std::size_t> sa(r, 0), sb(r, 0);
  std::size_t ca = 1, cb = 1;
  for (std::size_t i = r; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ca;
    sb[i] = pb[i] == 1 ? 0 : cb;
    ca *= pa[i];
    cb *= pb[i];
  }
  const std::size_t n = numel(p.out);
  p.a_off.resize(n);
  p.b_off.resize(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < n; ++k) {
    p.a_off[k] = oa;
    p.b_off[k] = ob;
    for (std::size_t i = r; i-- > 0;) {
      ++idx[i];
      oa += sa[i];
      ob += sb[i];
      if (idx[i] < p.out[i]) break;
      oa -= sa[i] * idx[i];
      ob -= sb[i] * idx[i];
      idx[i] = 0;
    }
  }
  return p;
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* kind, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  same_tape(a, b, kind);
  Tape& tape = a.tape();
  auto plan = std::make_shared<Broadcast>(plan_broadcast(kind, a.shape(), b.shape()));
  const auto& va = tape.value_of(a.node_id());
  const auto& vb = tape.value_of(b.node_id());
  const std::size_t n = numel(plan->out);
  std::vector<double> out(n);
  if (plan->trivial) {
    for (std::size_t k = 0; k < n; ++k) out[k] = fwd(va[k], vb[k]);
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = fwd(va[plan->a_off[k]], vb[plan->b_off[k]]);
  }
  const int ia = a.node_id(), ib = b.node_id();
  Shape shape = plan->out;
  return tape.record(kind, std::move(shape), std::move(out), {ia, ib},
                     [plan, ia, ib, da, db](Tape& t, int self) {
                       const auto& g = t.grad_of(self);
                       const auto& xa = t.value_of(ia);
                       const auto& xb = t.value_of(ib);
                       double* ga = t.grad_buffer(ia);
                       double* gb = t.grad_buffer(ib);
                       const std::size_t n = g.size();
                       for (std::size_t k = 0; k < n; ++k) {
                         const std::size_t oa = plan->trivial ? k : plan->a_off[k];
                         const std::size_t ob = plan->trivial ? k : plan->b_off[k];
                         if (ga) ga[oa] += da(xa[oa], xb[ob], g[k]);
                         if (gb) gb[ob] += db(xa[oa], xb[ob], g[k]);
                       }
                     });
}

// Elementwise unary op whose derivative is expressed through input x and
// output y.
template <class Fwd, class Deriv>
Tensor unary(const char* kind, const Tensor& x, Fwd fwd, Deriv deriv) {
  if (!x.valid()) throw ContractError(std::string(kind) + ": empty tensor");
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = fwd(v[k]);
  const int ix = x.node_id();
  return tape.record(kind, x.shape(), std::move(out), {ix}, [ix, deriv](Tape& t, int self) {
    const auto& g = t.grad_of(self);
    const auto& xv = t.value_of(ix);
    const auto& yv = t.value_of(self);
    double* gx = t.grad_buffer(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * deriv(xv[k], yv[k]);
  });
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor affine(const Tensor& x, double scale, double offset) {
  return unary(
      "affine", x, [=](double v) { return scale * v + offset; },
      [=](double, double) { return scale; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3) dim_error("matmul", sa, sb);
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) dim_error("matmul", sa, sb);
  const std::size_t ba = sa.size() == 3 ? sa[0] : 1;
  const std::size_t bb = sb.size() == 3 ? sb[0] : 1;
  if (sa.size() == 3 && sb.size() == 3 && ba != bb) dim_error("matmul", sa, sb);
  const std::size_t batch = std::max(ba, bb);
  const bool batched = sa.size() == 3 || sb.size() == 3;
  const std::size_t stride_a = sa.size() == 3 ? m * k : 0;
  const std::size_t stride_b = sb.size() == 3 ? k * n : 0;

  Tape& tape = a.tape();
  const auto& va = tape.value_of(a.node_id());
  const auto& vb = tape.value_of(b.node_id());
  std::vector<double> out(batch * m * n);
  for (std::size_t p = 0; p < batch; ++p) {
    ConstMap ma(va.data() + p * stride_a, m, k);
    ConstMap mb(vb.data() + p * stride_b, k, n);
    MutMap mc(out.data() + p * m * n, m, n);
    mc.noalias() = ma * mb;
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  const int ia = a.node_id(), ib = b.node_id();
  return tape.record("matmul", std::move(shape), std::move(out), {ia, ib},
                     [=](Tape& t, int self) {
                       const auto& g = t.grad_of(self);
                       const auto& xa = t.value_of(ia);
                       const auto& xb = t.value_of(ib);
                       double* ga = t.grad_buffer(ia);
                       double* gb = t.grad_buffer(ib);
                       for (std::size_t p = 0; p < batch; ++p) {
                         ConstMap mg(g.data() + p * m * n, m, n);
                         if (ga) {
                           MutMap da(ga + p * stride_a, m, k);
                           da.noalias() += mg * ConstMap(xb.data() + p * stride_b, k, n).transpose();
                         }
                         if (gb) {
                           MutMap db(gb + p * stride_b, k, n);
                           db.noalias() += ConstMap(xa.data() + p * stride_a, m, k).transpose() * mg;
                         }
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose: rank < 2 for shape " + to_string(s));
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t batch = numel(s) / (r * c);
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(v.size());
  for (std::size_t p = 0; p < batch; ++p)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[p * r * c + j * r + i] = v[p * r * c + i * c + j];
  Shape shape = s;
  std::swap(shape[shape.size() - 2], shape.back());
  const int ix = x.node_id();
  return tape.record("transpose", std::move(shape), std::move(out), {ix},
                     [=](Tape& t, int self) {
                       const auto& g = t.grad_of(self);
                       double* gx = t.grad_buffer(ix);
                       for (std::size_t p = 0; p < batch; ++p)
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j)
                             gx[p * r * c + i * c + j] += g[p * r * c + j * r + i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Tape& tape = x.tape();
  const int ix = x.node_id();
  return tape.record("reshape", std::move(shape), tape.value_of(ix), {ix}, [ix](Tape& t, int self) {
    const auto& g = t.grad_of(self);
    double* gx = t.grad_buffer(ix);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = split_axis(x.shape(), axis, "slice");
  if (begin >= end || end > sp.len) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + to_string(x.shape()));
  }
  const std::size_t len = end - begin;
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(sp.outer * len * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(v.begin() + (o * sp.len + begin) * sp.inner, len * sp.inner,
                out.begin() + o * len * sp.inner);
  Shape shape = x.shape();
  shape[axis] = len;
  const int ix = x.node_id();
  return tape.record("slice", std::move(shape), std::move(out), {ix}, [=](Tape& t, int self) {
    const auto& g = t.grad_of(self);
    double* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t q = 0; q < len * sp.inner; ++q)
        gx[(o * sp.len + begin) * sp.inner + q] += g[o * len * sp.inner + q];
  });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  const auto sp0 = split_axis(s0, axis, "concat");
  std::vector<std::size_t> lens;
  std::vector<int> ids;
  std::size_t total = 0;
  for (const auto& x : xs) {
    same_tape(xs[0], x, "concat");
    const Shape& s = x.shape();
    if (s.size() != s0.size()) dim_error("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) dim_error("concat", s0, s);
    lens.push_back(s[axis]);
    ids.push_back(x.node_id());
    total += s[axis];
  }
  Tape& tape = xs[0].tape();
  const std::size_t outer = sp0.outer, inner = sp0.inner;
  std::vector<double> out(outer * total * inner);
  std::size_t off = 0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    const auto& v = tape.value_of(ids[q]);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + o * lens[q] * inner, lens[q] * inner,
                  out.begin() + (o * total + off) * inner);
    off += lens[q];
  }
  Shape shape = s0;
  shape[axis] = total;
  return tape.record("concat", std::move(shape), std::move(out), ids, [=](Tape& t, int self) {
    const auto& g = t.grad_of(self);
    std::size_t off = 0;
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (double* gx = t.grad_buffer(ids[q])) {
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t r = 0; r < lens[q] * inner; ++r)
            gx[o * lens[q] * inner + r] += g[(o * total + off) * inner + r];
      }
      off += lens[q];
    }
  });
}

Tensor sum(const Tensor& x) {
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  double s = 0.0;
  for (double e : v) s += e;
  const int ix = x.node_id();
  return tape.record("reduce-sum", {}, {s}, {ix}, [ix](Tape& t, int self) {
    const double g = t.grad_of(self)[0];
    double* gx = t.grad_buffer(ix);
    const std::size_t n = t.value_of(ix).size();
    for (std::size_t k = 0; k < n; ++k) gx[k] += g;
  });
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  const auto sp = split_axis(x.shape(), axis, "reduce-sum");
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += v[(o * sp.len + l) * sp.inner + i];
  Shape shape = x.shape();
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  const int ix = x.node_id();
  return tape.record("reduce-sum", std::move(shape), std::move(out), {ix}, [=](Tape& t, int self) {
    const auto& g = t.grad_of(self);
    double* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t l = 0; l < sp.len; ++l)
        for (std::size_t i = 0; i < sp.inner; ++i)
          gx[(o * sp.len + l) * sp.inner + i] += g[o * sp.inner + i];
  });
}

Tensor mean(const Tensor& x) { return affine(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  const double n = static_cast<double>(split_axis(x.shape(), axis, "reduce-mean").len);
  return affine(sum(x, axis, keepdim), 1.0 / n);
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor reciprocal(const Tensor& x) {
  return unary(
      "reciprocal", x, [](double v) { return 1.0 / v; }, [](double, double y) { return -y * y; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sin(const Tensor& x) {
  return unary(
      "sin", x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary(
      "cos", x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor floor(const Tensor& x) {
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::floor(v[k]);
  return tape.constant(x.shape(), std::move(out));
}

Tensor max(const Tensor& x, double c) {
  return unary(
      "max-with-const", x, [c](double v) { return v > c ? v : c; },
      [c](double v, double) { return v > c ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto sp = split_axis(x.shape(), axis, "softmax");
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t l) { return (o * sp.len + l) * sp.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, v[at(l)]);
      double z = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) z += (out[at(l)] = std::exp(v[at(l)] - mx));
      for (std::size_t l = 0; l < sp.len; ++l) out[at(l)] /= z;
    }
  }
  const int ix = x.node_id();
  return tape.record("softmax", x.shape(), std::move(out), {ix}, [=](Tape& t, int self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    double* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        auto at = [&](std::size_t l) { return (o * sp.len + l) * sp.inner + i; };
        double dot = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) dot += g[at(l)] * y[at(l)];
        for (std::size_t l = 0; l < sp.len; ++l) gx[at(l)] += y[at(l)] * (g[at(l)] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto sp = split_axis(x.shape(), axis, "log-softmax");
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t l) { return (o * sp.len + l) * sp.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, v[at(l)]);
      double z = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) z += std::exp(v[at(l)] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t l = 0; l < sp.len; ++l) out[at(l)] = v[at(l)] - lse;
    }
  }
  const int ix = x.node_id();
  return tape.record("log-softmax", x.shape(), std::move(out), {ix}, [=](Tape& t, int self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    double* gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        auto at = [&](std::size_t l) { return (o * sp.len + l) * sp.inner + i; };
        double gs = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) gs += g[at(l)];
        for (std::size_t l = 0; l < sp.len; ++l) gx[at(l)] += g[at(l)] - std::exp(y[at(l)]) * gs;
      }
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, NormMode mode,
                  BatchNormState* state) {
  same_tape(x, scale, "batch-norm");
  same_tape(x, shift, "batch-norm");
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("batch-norm: scalar input");
  const std::size_t c = s.back();
  if (scale.shape() != Shape{c} || shift.shape() != Shape{c}) dim_error("batch-norm", s, scale.shape());
  const std::size_t rows = x.size() / c;
  Tape& tape = x.tape();
  const auto& v = tape.value_of(x.node_id());
  const auto& gamma = tape.value_of(scale.node_id());
  const auto& beta = tape.value_of(shift.node_id());

  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (mode == NormMode::Train) {
    if (s.size() < 2 || s[0] < 2) {
      throw ContractError("batch-norm: train mode needs batch size >= 2, got shape " + to_string(s));
    }
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mu[j] += v[r * c + j];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = v[r * c + j] - mu[j];
        var[j] += d * d;
      }
    for (auto& q : var) q /= static_cast<double>(rows);
    if (state) {
      if (!state->populated()) {
        state->running_mean = mu;
        state->running_var = var;
      } else {
        for (std::size_t j = 0; j < c; ++j) {
          state->running_mean[j] =
              kBatchNormMomentum * state->running_mean[j] + (1.0 - kBatchNormMomentum) * mu[j];
          state->running_var[j] =
              kBatchNormMomentum * state->running_var[j] + (1.0 - kBatchNormMomentum) * var[j];
        }
      }
    }
  } else {
    if (!state || !state->populated()) throw StateError("batch-norm: infer mode with empty running stats");
    if (state->running_mean.size() != c) dim_error("batch-norm", s, Shape{state->running_mean.size()});
    mu = state->running_mean;
    var = state->running_var;
  }

  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEpsilon);
  std::vector<double> xhat(v.size()), out(v.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t k = r * c + j;
      xhat[k] = (v[k] - mu[j]) * inv_std[j];
      out[k] = gamma[j] * xhat[k] + beta[j];
    }
  const int ix = x.node_id(), ig = scale.node_id(), ib = shift.node_id();
  const bool train = mode == NormMode::Train;
  return tape.record(
      "batch-norm", s, std::move(out), {ix, ig, ib},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& gam = t.value_of(ig);
        double* gx = t.grad_buffer(ix);
        double* gg = t.grad_buffer(ig);
        double* gb = t.grad_buffer(ib);
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t k = r * c + j;
            sum_g[j] += g[k];
            sum_gx[j] += g[k] * xhat[k];
          }
        if (gg)
          for (std::size_t j = 0; j < c; ++j) gg[j] += sum_gx[j];
        if (gb)
          for (std::size_t j = 0; j < c; ++j) gb[j] += sum_g[j];
        if (!gx) return;
        const double n = static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t k = r * c + j;
            if (train) {
              gx[k] += gam[j] * inv_std[j] * (g[k] - sum_g[j] / n - xhat[k] * sum_gx[j] / n);
            } else {
              gx[k] += gam[j] * inv_std[j] * g[k];
            }
          }
      });
}

Tensor logdet_hermitian_pd(const Tensor& re, const Tensor& im) {
  same_tape(re, im, "logdet");
  const Shape& s = re.shape();
  if (s != im.shape()) dim_error("logdet", s, im.shape());
  if (s.size() < 2 || s.size() > 3 || s[s.size() - 1] != s[s.size() - 2]) {
    throw DimensionError("logdet: expected square (n, n) or (B, n, n), got " + to_string(s));
  }
  const std::size_t n = s.back();
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  Tape& tape = re.tape();
  const auto& vr = tape.value_of(re.node_id());
  const auto& vi = tape.value_of(im.node_id());

  std::vector<double> out(batch);
  // Inverse of each embedding, kept for the backward pass.
  auto inverses = std::make_shared<std::vector<RowMat>>(batch);
  for (std::size_t p = 0; p < batch; ++p) {
    ConstMap mr(vr.data() + p * n * n, n, n);
    ConstMap mi(vi.data() + p * n * n, n, n);
    Eigen::MatrixXd emb(2 * n, 2 * n);
    emb << mr, -mi, mi, mr;
    Eigen::LLT<Eigen::MatrixXd> llt(emb);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("logdet: Cholesky failed, matrix is not positive definite");
    }
    const Eigen::MatrixXd l = llt.matrixL();
    double ld = 0.0;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const double d = l(i, i);
      if (!(d * d >= 1e-10)) {
        throw NumericalError("logdet: Cholesky pivot " + std::to_string(d * d) +
                             " below tolerance 1e-10");
      }
      ld += std::log(d);
    }
    out[p] = ld;  // half of the embedding's 2 * sum(log l_ii)
    if (re.requires_grad() || im.requires_grad()) {
      (*inverses)[p] = llt.solve(Eigen::MatrixXd::Identity(2 * n, 2 * n));
    }
  }
  Shape shape = s.size() == 3 ? Shape{batch} : Shape{};
  const int ir = re.node_id(), ii = im.node_id();
  return tape.record("logdet", std::move(shape), std::move(out), {ir, ii},
                     [=](Tape& t, int self) {
                       const auto& g = t.grad_of(self);
                       double* gr = t.grad_buffer(ir);
                       double* gi = t.grad_buffer(ii);
                       for (std::size_t p = 0; p < batch; ++p) {
                         const RowMat& e = (*inverses)[p];
                         const auto tl = e.topLeftCorner(n, n);
                         const auto tr = e.topRightCorner(n, n);
                         const auto bl = e.bottomLeftCorner(n, n);
                         const auto br = e.bottomRightCorner(n, n);
                         for (std::size_t a = 0; a < n; ++a)
                           for (std::size_t b = 0; b < n; ++b) {
                             const std::size_t k = p * n * n + a * n + b;
                             if (gr) gr[k] += g[p] * 0.5 * (tl(b, a) + br(b, a));
                             if (gi) gi[k] += g[p] * 0.5 * (tr(b, a) - bl(b, a));
                           }
                       }
                     });
}

}  // namespace asbf::ad
