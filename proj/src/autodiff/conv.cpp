#include <memory>

#include "asbf/autodiff/ops.hpp"
#include "asbf/errors.hpp"

namespace asbf::ad {

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  if (input.rank() == 3) {
    const Shape s = input.shape();
    auto y = conv2d(reshape(input, {1, s[0], s[1], s[2]}), kernel, bias);
    return reshape(y, {s[0], s[1], kernel.dim(3)});
  }
  const Shape& si = input.shape();
  const Shape& sk = kernel.shape();
  if (si.size() != 4 || sk.size() != 4 || sk[0] != sk[1] || sk[0] % 2 == 0 || sk[2] != si[3] ||
      bias.shape() != Shape{sk[3]}) {
    throw DimensionError("conv2d: input " + to_string(si) + ", kernel " + to_string(sk) +
                         ", bias " + to_string(bias.shape()) + " do not conform");
  }
  const std::size_t nb = si[0], h = si[1], w = si[2], cin = si[3];
  const std::size_t k = sk[0], cout = sk[3];
  const long pad = static_cast<long>(k / 2);

  Tape& tape = input.tape();
  const auto& x = tape.value_of(input.node_id());
  const auto& ker = tape.value_of(kernel.node_id());
  const auto& b = tape.value_of(bias.node_id());

  std::vector<double> out(nb * h * w * cout);
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xo = 0; xo < w; ++xo) {
        double* o = &out[((n * h + y) * w + xo) * cout];
        for (std::size_t co = 0; co < cout; ++co) o[co] = b[co];
        for (std::size_t dy = 0; dy < k; ++dy) {
          const long yy = static_cast<long>(y + dy) - pad;
          if (yy < 0 || yy >= static_cast<long>(h)) continue;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const long xx = static_cast<long>(xo + dx) - pad;
            if (xx < 0 || xx >= static_cast<long>(w)) continue;
            const double* in = &x[((n * h + yy) * w + xx) * cin];
            const double* kk = &ker[(dy * k + dx) * cin * cout];
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double v = in[ci];
              const double* kr = kk + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) o[co] += v * kr[co];
            }
          }
        }
      }

  const int ix = input.node_id(), ik = kernel.node_id(), ib = bias.node_id();
  return tape.record("conv2d", {nb, h, w, cout}, std::move(out), {ix, ik, ib},
                     [=](Tape& t, int self) {
                       const auto& g = t.grad_of(self);
                       const auto& xv = t.value_of(ix);
                       const auto& kv = t.value_of(ik);
                       double* gx = t.grad_buffer(ix);
                       double* gk = t.grad_buffer(ik);
                       double* gb = t.grad_buffer(ib);
                       for (std::size_t n = 0; n < nb; ++n)
                         for (std::size_t y = 0; y < h; ++y)
                           for (std::size_t xo = 0; xo < w; ++xo) {
                             const double* go = &g[((n * h + y) * w + xo) * cout];
                             if (gb)
                               for (std::size_t co = 0; co < cout; ++co) gb[co] += go[co];
                             for (std::size_t dy = 0; dy < k; ++dy) {
                               const long yy = static_cast<long>(y + dy) - pad;
                               if (yy < 0 || yy >= static_cast<long>(h)) continue;
                               for (std::size_t dx = 0; dx < k; ++dx) {
                                 const long xx = static_cast<long>(xo + dx) - pad;
                                 if (xx < 0 || xx >= static_cast<long>(w)) continue;
                                 const std::size_t in_off = ((n * h + yy) * w + xx) * cin;
                                 const std::size_t k_off = (dy * k + dx) * cin * cout;
                                 for (std::size_t ci = 0; ci < cin; ++ci) {
                                   const double* kr = &kv[k_off + ci * cout];
                                   double acc = 0.0;
                                   for (std::size_t co = 0; co < cout; ++co) acc += go[co] * kr[co];
                                   if (gx) gx[in_off + ci] += acc;
                                   if (gk) {
                                     const double v = xv[in_off + ci];
                                     double* gkr = gk + k_off + ci * cout;
                                     for (std::size_t co = 0; co < cout; ++co) gkr[co] += v * go[co];
                                   }
                                 }
                               }
                             }
                           }
                     });
}

}  // namespace asbf::ad
