#include "asbf/autodiff/complex.hpp"

#include "asbf/errors.hpp"

namespace asbf::ad {

ComplexPair make_complex(const Tensor& re, const Tensor& im) {
  if (re.shape() != im.shape()) {
    throw DimensionError("complex pair: re " + to_string(re.shape()) + " vs im " +
                         to_string(im.shape()));
  }
  return {re, im};
}

ComplexPair operator+(const ComplexPair& a, const ComplexPair& b) {
  return {a.re + b.re, a.im + b.im};
}

ComplexPair operator-(const ComplexPair& a, const ComplexPair& b) {
  return {a.re - b.re, a.im - b.im};
}

ComplexPair cmatmul(const ComplexPair& a, const ComplexPair& b) {
  return {matmul(a.re, b.re) - matmul(a.im, b.im), matmul(a.re, b.im) + matmul(a.im, b.re)};
}

ComplexPair cmatmul(const ComplexPair& a, const Tensor& real) {
  return {matmul(a.re, real), matmul(a.im, real)};
}

ComplexPair adjoint(const ComplexPair& a) { return {transpose(a.re), -transpose(a.im)}; }

ComplexPair scale(const ComplexPair& a, const Tensor& s) { return {a.re * s, a.im * s}; }

Tensor abs2(const ComplexPair& a) { return square(a.re) + square(a.im); }

Tensor frobenius_sq(const ComplexPair& a) {
  const Tensor p = abs2(a);
  if (p.rank() == 2) return sum(p);
  if (p.rank() == 3) return sum(sum(p, 2), 1);
  throw DimensionError("frobenius_sq: expected rank 2 or 3, got " + to_string(p.shape()));
}

}  // namespace asbf::ad
