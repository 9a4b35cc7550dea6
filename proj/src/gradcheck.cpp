#include "capgan/gradcheck.hpp"

#include <cmath>

#include "capgan/error.hpp"

namespace capgan {

double finite_difference_check(const ScalarMap& f, std::vector<Tensor> params,
                               double epsilon) {
  if (!(epsilon > 0.0) || epsilon > 1e-2)
    throw ParamError("finite_difference_check: epsilon must be in (0, 1e-2]");

  double base1 = f.value(params);
  double base2 = f.value(params);
  if (base1 != base2)
    throw ContractError("finite_difference_check: function is not deterministic");

  std::vector<Tensor> grads = f.gradient(params);
  if (grads.size() != params.size())
    throw ContractError("finite_difference_check: gradient count mismatch");

  double max_rel = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].size() != params[p].size())
      throw ContractError("finite_difference_check: gradient shape mismatch");
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      double orig = params[p].data[i];
      params[p].data[i] = orig + epsilon;
      double up = f.value(params);
      params[p].data[i] = orig - epsilon;
      double down = f.value(params);
      params[p].data[i] = orig;
      double central = (up - down) / (2.0 * epsilon);
      double analytic = grads[p].data[i];
      double rel = std::fabs(analytic - central) /
                   (std::fabs(analytic) + std::fabs(central) + 1e-12);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace capgan
