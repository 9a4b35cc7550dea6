#pragma once

#include <functional>
#include <vector>

#include "capgan/gradcheck.hpp"
#include "capgan/rng.hpp"
#include "capgan/tape.hpp"

namespace testutil {

using capgan::Rng;
using capgan::ScalarMap;
using capgan::Tape;
using capgan::Tensor;

// Lifts a tape-builder into the two routes finite_difference_check needs.
inline ScalarMap tape_map(
    std::function<Tape::Var(Tape&, std::vector<Tape::Var>&)> build) {
  ScalarMap m;
  m.value = [build](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<Tape::Var> vars;
    for (const auto& p : ps) vars.push_back(t.leaf(p, false));
    return t.val(build(t, vars)).data[0];
  };
  m.gradient = [build](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<Tape::Var> vars;
    for (const auto& p : ps) vars.push_back(t.leaf(p, true));
    Tape::Var loss = build(t, vars);
    t.backward(loss);
    std::vector<Tensor> gs;
    gs.reserve(vars.size());
    for (auto v : vars) gs.push_back(t.grad(v));
    return gs;
  };
  return m;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace testutil
