#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace etd {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(element_count(shape), 0.0) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (element_count(shape) != data.size()) {
      throw std::invalid_argument("neuralnet: tensor data size does not match its shape");
    }
  }

  static std::size_t element_count(std::span<const std::size_t> s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const {
    if (i >= shape.size()) throw std::out_of_range("neuralnet: tensor dimension out of range");
    return shape[i];
  }

  // NaN/Inf anywhere is a contract violation.
  void check_finite(const std::string& where) const {
    for (double v : data) {
      if (!std::isfinite(v)) throw std::runtime_error("neuralnet: non-finite value in " + where);
    }
  }

  bool operator==(const Tensor&) const = default;
};

}  // namespace etd
