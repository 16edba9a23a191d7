#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "asbf/autodiff/params.hpp"
#include "asbf/autodiff/tensor.hpp"

namespace asbf::ad {

struct AdamState {
  long step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every parameter named in `grads`.
/// Moment buffers are created on first use. Throws NumericalError naming the
/// parameter if any gradient entry is non-finite; in that case no parameter
/// is modified.
void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, double lr);

}  // namespace asbf::ad
