#pragma once

#include <optional>
#include <vector>

#include "asbf/autodiff/tensor.hpp"

namespace asbf::ad {

// Elementwise binary operations broadcast with numpy rules (trailing
// dimensions aligned, size-1 or missing dimensions stretched).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// y = scale * x + offset with compile-time-free constants.
Tensor affine(const Tensor& x, double scale, double offset = 0.0);
inline Tensor operator*(double s, const Tensor& x) { return affine(x, s); }
inline Tensor operator*(const Tensor& x, double s) { return affine(x, s); }
inline Tensor operator+(const Tensor& x, double c) { return affine(x, 1.0, c); }
inline Tensor operator-(const Tensor& x, double c) { return affine(x, 1.0, -c); }
inline Tensor operator-(const Tensor& x) { return affine(x, -1.0); }

/// Matrix product over the last two axes. Operands are rank 2 or 3; a rank-2
/// operand is broadcast across the other's leading batch axis.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);

/// Sum of all entries (scalar result).
Tensor sum(const Tensor& x);
/// Sum along one axis; the axis is removed unless `keepdim`.
Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// Gradient at 0 is taken as 0.
Tensor sqrt(const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
/// Logistic function 1 / (1 + e^{-x}).
Tensor sigmoid(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
/// Piecewise constant; never propagates gradient.
Tensor floor(const Tensor& x);
Tensor max(const Tensor& x, double c);

/// Same-padded, stride-1 2-D cross-correlation.
/// input (B, H, W, Cin) or (H, W, Cin); kernel (k, k, Cin, Cout), k odd;
/// bias (Cout). Output keeps the input's spatial shape.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

enum class NormMode { Train, Infer };

/// Running statistics owned by a batch-norm layer. Empty until the first
/// train-mode batch has been seen.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool populated() const { return !running_mean.empty(); }
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEpsilon = 1e-8;

/// Per-channel normalization over all axes but the last.
///
/// Train mode normalizes by the batch statistics (biased variance) and, when
/// `state` is non-null, folds them into the running statistics with momentum
/// kBatchNormMomentum; the very first batch initializes them directly. Infer
/// mode uses the running statistics and throws StateError when they are empty.
Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                  NormMode mode, BatchNormState* state);

/// Natural log-determinant of Hermitian positive-definite matrices given as
/// real and imaginary parts of shape (n, n) or (B, n, n). Result is a scalar,
/// or shape (B) for batched input.
///
/// Uses a Cholesky factorization of the real embedding [[Re, -Im], [Im, Re]]
/// whose log-determinant is twice the complex one. Backward applies
/// d logdet(M) = tr(M^{-1} dM). Throws NumericalError when a Cholesky pivot
/// squared falls below 1e-10.
Tensor logdet_hermitian_pd(const Tensor& re, const Tensor& im);

}  // namespace asbf::ad
