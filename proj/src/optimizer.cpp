#include "capgan/optimizer.hpp"

#include <cmath>

#include "capgan/error.hpp"

namespace capgan {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ParamError("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ParamError("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ParamError("adam: eps must be positive");
}

Adam::Adam(AdamConfig config) : cfg_(config) { cfg_.validate(); }

void Adam::step(const std::string& name, Tensor& param, const Tensor& grad) {
  if (!param.same_shape(grad))
    throw ShapeError("adam: gradient shape " + grad.shape_str() +
                     " does not match parameter " + name + " " + param.shape_str());
  if (!grad.all_finite())
    throw NumericError("adam: non-finite gradient for " + name);
  Slot& s = slots_[name];
  if (s.t == 0) {
    s.m = Tensor(param.shape);
    s.v = Tensor(param.shape);
  } else if (!s.m.same_shape(param)) {
    throw ShapeError("adam: parameter " + name + " changed shape between steps");
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double g = grad.data[i];
    s.m.data[i] = cfg_.beta1 * s.m.data[i] + (1.0 - cfg_.beta1) * g;
    s.v.data[i] = cfg_.beta2 * s.v.data[i] + (1.0 - cfg_.beta2) * g * g;
    double mhat = s.m.data[i] / c1;
    double vhat = s.v.data[i] / c2;
    param.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
  if (!param.all_finite())
    throw NumericError("adam: parameter " + name + " became non-finite");
}

void Adam::reset() { slots_.clear(); }

}  // namespace capgan
