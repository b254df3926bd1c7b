// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "gdn/tensor.hpp"

namespace gdn {

// Non-owning view of one learnable tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  std::string group;
  Shape4 shape;
  std::span<T> value;
  std::span<T> grad;
};

template <typename T>
struct Parameter {
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  explicit Parameter(Shape4 s) : value(s), grad(s) {}

  void zero_grad() { grad.fill(T(0)); }

  ParamRef<T> ref(std::string name, std::string group) {
    return ParamRef<T>{std::move(name), std::move(group), value.shape(), value.values(), grad.values()};
  }
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

}  // namespace gdn
