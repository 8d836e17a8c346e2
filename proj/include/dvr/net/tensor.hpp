#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dvr/error.hpp"

namespace dvr::nn {

using Scalar = double;

/// Per-sample activation volume, stored depth-major: [depth][channels][height][width].
/// Dense activations use depth = height = width = 1.
struct Volume {
  std::size_t depth = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return depth * channels * height * width; }
  bool operator==(const Volume&) const = default;
};

std::string to_string(const Volume& v);

/// A batch of volumes, samples stored back to back.
struct Tensor {
  std::size_t batch = 0;
  Volume shape;
  std::vector<Scalar> data;

  Tensor() = default;
  Tensor(std::size_t n, Volume v) : batch(n), shape(v), data(n * v.size(), Scalar{0}) {}

  Scalar* sample(std::size_t b) { return data.data() + b * shape.size(); }
  const Scalar* sample(std::size_t b) const { return data.data() + b * shape.size(); }
  std::size_t size() const { return data.size(); }
};

/// A named parameter tensor with its gradient buffer.
struct Param {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> d, bool train = true);
  std::size_t size() const { return value.size(); }
};

}  // namespace dvr::nn
