#pragma once

#include <functional>
#include <vector>

#include "capgan/tensor.hpp"

namespace capgan {

// A deterministic scalar map over a list of parameter tensors, with an
// analytic gradient route (reverse mode) alongside the plain evaluation.
struct ScalarMap {
  std::function<double(const std::vector<Tensor>&)> value;
  std::function<std::vector<Tensor>(const std::vector<Tensor>&)> gradient;
};

// Central-difference validation of ScalarMap::gradient. Returns the max over
// all parameter entries of |analytic - central| / (|analytic| + |central| + 1e-12).
// Throws ContractError if two identical evaluations disagree (the map must be
// deterministic for the oracle to mean anything) or if epsilon is out of range.
double finite_difference_check(const ScalarMap& f, std::vector<Tensor> params,
                               double epsilon);

}  // namespace capgan
