#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace dpc {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Images are [h, w, c] with the channel fastest.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(numel(shape), T(0)) {}
  Tensor(Shape s, T fill) : shape(std::move(s)), v(numel(shape), fill) {}

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T x) { return Tensor(std::move(s), x); }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  bool empty() const { return v.empty(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  // [h,w,c] accessors
  T& at(int y, int x, int c) { return v[(static_cast<int64_t>(y) * shape[1] + x) * shape[2] + c]; }
  const T& at(int y, int x, int c) const {
    return v[(static_cast<int64_t>(y) * shape[1] + x) * shape[2] + c];
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (int64_t i = 0; i < size(); ++i) out.v[static_cast<size_t>(i)] = static_cast<U>(v[static_cast<size_t>(i)]);
    return out;
  }

  bool all_finite() const {
    for (const T& x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

inline bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

template <typename T>
void check_image_shape(const Tensor<T>& t, const char* what) {
  require(t.shape.size() == 3, ErrorKind::shape,
          std::string(what) + ": expected [h,w,c], got " + shape_str(t.shape));
}

}  // namespace dpc
