#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "dcbdl/error.hpp"

namespace dcbdl {

#if defined(DCBDL_PRECISION_64)
using real = double;
#else
using real = float;
#endif

inline std::string shape_str(const std::vector<std::int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::int64_t shape_numel(const std::vector<std::int64_t>& s) {
  std::int64_t n = 1;
  for (auto e : s) {
    if (e <= 0) throw ContractViolation("tensor extents must be positive, got " + shape_str(s));
    n *= e;
  }
  return n;
}

// Dense row-major N-d array. Values are expected to stay finite; the autodiff
// layer checks this after every public operation.
template <class T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw ContractViolation("tensor data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(std::vector<std::int64_t> s) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)));
  }
  static Tensor full(std::vector<std::int64_t> s, T v) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), v));
  }
  static Tensor scalar(T v) { return full({1}, v); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  // Throws NumericError naming the first non-finite element.
  void require_finite(const std::string& what) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(static_cast<double>(data[i])))
        throw NumericError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace dcbdl
