#pragma once

#include <string>
#include <unordered_map>

#include "capgan/tensor.hpp"

namespace capgan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Adam with per-parameter moment buffers keyed by name. Each parameter is
// expected to be stepped once per optimization step; the bias-correction
// counter is tracked per name.
class Adam {
 public:
  explicit Adam(AdamConfig config);

  const AdamConfig& config() const { return cfg_; }

  void step(const std::string& name, Tensor& param, const Tensor& grad);
  void reset();

 private:
  struct Slot {
    Tensor m, v;
    long long t = 0;
  };
  AdamConfig cfg_;
  std::unordered_map<std::string, Slot> slots_;
};

}  // namespace capgan
