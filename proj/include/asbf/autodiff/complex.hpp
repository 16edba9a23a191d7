#pragma once

#include "asbf/autodiff/ops.hpp"

namespace asbf::ad {

/// Complex tensor carried as two real tensors of identical shape.
struct ComplexPair {
  Tensor re;
  Tensor im;

  const Shape& shape() const { return re.shape(); }
};

ComplexPair make_complex(const Tensor& re, const Tensor& im);

ComplexPair operator+(const ComplexPair& a, const ComplexPair& b);
ComplexPair operator-(const ComplexPair& a, const ComplexPair& b);

/// Complex matrix product (rank 2 or 3 operands, see matmul).
ComplexPair cmatmul(const ComplexPair& a, const ComplexPair& b);
/// Complex times real matrix.
ComplexPair cmatmul(const ComplexPair& a, const Tensor& real);
/// Conjugate transpose over the last two axes.
ComplexPair adjoint(const ComplexPair& a);
/// Entrywise product with a real tensor (broadcasting).
ComplexPair scale(const ComplexPair& a, const Tensor& s);
/// Entrywise squared modulus re^2 + im^2.
Tensor abs2(const ComplexPair& a);
/// Squared Frobenius norm over the last two axes: scalar for rank 2, (B) for
/// rank 3.
Tensor frobenius_sq(const ComplexPair& a);

}  // namespace asbf::ad
