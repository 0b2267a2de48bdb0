#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace dpc {

// Reverse-mode tape. Operations append nodes holding the forward value and a
// closure that scatters the node's gradient into its parents. backward() walks
// the nodes in reverse creation order, which is a valid topological order.
//
// float is the training dtype; double is used by the finite-difference checks.
template <typename T>
class Tape {
public:
  using Var = int;

  struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // empty for leaves and constants
  };

  bool check_finite = false;  // validate every forward value (test mode)

  Var leaf(Tensor<T> value, bool learnable) { return push(std::move(value), learnable); }
  Var constant(Tensor<T> value) { return push(std::move(value), false); }
  Var scalar_const(T x) { return constant(Tensor<T>({1}, x)); }

  Var push(Tensor<T> value, bool requires_grad) {
    if (check_finite)
      require(value.all_finite(), ErrorKind::numeric, "non-finite value produced by a primitive");
    Node n;
    n.val = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size()) - 1;
  }

  void set_back(Var v, std::function<void(Tape&)> fn) {
    nodes_[static_cast<size_t>(v)].back = std::move(fn);
  }

  const Tensor<T>& val(Var v) const { return nodes_[static_cast<size_t>(v)].val; }
  Tensor<T>& val_mut(Var v) { return nodes_[static_cast<size_t>(v)].val; }
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v)].requires_grad; }

  // Gradient buffer, zero-initialized on first touch.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_[static_cast<size_t>(v)];
    if (n.grad.empty() && !n.val.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
    return n.grad;
  }
  bool has_grad(Var v) const { return !nodes_[static_cast<size_t>(v)].grad.empty(); }

  void backward(Var root) {
    require(val(root).size() == 1, ErrorKind::shape, "backward root must be a scalar");
    grad(root).v[0] = T(1);
    for (Var i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.requires_grad || !n.back || n.grad.empty()) continue;
      n.back(*this);
    }
  }

  void clear() { nodes_.clear(); }
  Var last() const { return static_cast<Var>(nodes_.size()) - 1; }

private:
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise and reduction primitives.
// Elementwise ops broadcast a scalar (numel 1) against an array, or require
// equal shapes; no general broadcasting.
// ---------------------------------------------------------------------------
namespace ops {

template <typename T>
using Var = typename Tape<T>::Var;

template <typename T>
void check_broadcast(const Tape<T>& t, Var<T> a, Var<T> b, const char* op) {
  const auto& sa = t.val(a).shape;
  const auto& sb = t.val(b).shape;
  if (numel(sa) == 1 || numel(sb) == 1 || sa == sb) return;
  fail(ErrorKind::shape,
       std::string(op) + ": incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
}

// fwd(x, y) -> out; bwd(x, y, g, dx&, dy&) accumulands for both parents.
template <typename T, typename F, typename B>
Var<T> binary_op(Tape<T>& t, Var<T> a, Var<T> b, const char* name, F fwd, B bwd) {
  check_broadcast(t, a, b, name);
  const Tensor<T>& xa = t.val(a);
  const Tensor<T>& xb = t.val(b);
  const bool sa = xa.size() == 1, sb = xb.size() == 1;
  Tensor<T> out(sa ? xb.shape : xa.shape);
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out.v[i] = fwd(xa.v[sa ? 0 : i], xb.v[sb ? 0 : i]);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, b, sa, sb, bwd](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      const Tensor<T>& va = tp.val(a);
      const Tensor<T>& vb = tp.val(b);
      Tensor<T>* ga = tp.requires_grad(a) ? &tp.grad(a) : nullptr;
      Tensor<T>* gb = tp.requires_grad(b) ? &tp.grad(b) : nullptr;
      const int64_t n = g.size();
      for (int64_t i = 0; i < n; ++i) {
        T dx = T(0), dy = T(0);
        bwd(va.v[sa ? 0 : i], vb.v[sb ? 0 : i], g.v[i], dx, dy);
        if (ga) ga->v[sa ? 0 : i] += dx;
        if (gb) gb->v[sb ? 0 : i] += dy;
      }
    });
  return self;
}

template <typename T, typename F, typename B>
Var<T> unary_op(Tape<T>& t, Var<T> a, F fwd, B bwd) {
  const Tensor<T>& xa = t.val(a);
  Tensor<T> out(xa.shape);
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out.v[i] = fwd(xa.v[i]);
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, bwd](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      const Tensor<T>& va = tp.val(a);
      Tensor<T>& ga = tp.grad(a);
      const int64_t n = g.size();
      for (int64_t i = 0; i < n; ++i) ga.v[i] += bwd(va.v[i], g.v[i]);
    });
  return self;
}

// ---- arithmetic ----

template <typename T>
Var<T> add(Tape<T>& t, Var<T> a, Var<T> b) {
  return binary_op(
      t, a, b, "add", [](T x, T y) { return x + y; },
      [](T, T, T g, T& dx, T& dy) {
        dx = g;
        dy = g;
      });
}

template <typename T>
Var<T> sub(Tape<T>& t, Var<T> a, Var<T> b) {
  return binary_op(
      t, a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T, T g, T& dx, T& dy) {
        dx = g;
        dy = -g;
      });
}

template <typename T>
Var<T> mul(Tape<T>& t, Var<T> a, Var<T> b) {
  return binary_op(
      t, a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& dx, T& dy) {
        dx = g * y;
        dy = g * x;
      });
}

template <typename T>
Var<T> div(Tape<T>& t, Var<T> a, Var<T> b) {
  const Tensor<T>& xb = t.val(b);
  for (const T& y : xb.v)
    require(std::fabs(static_cast<double>(y)) >= 1e-300, ErrorKind::numeric,
            "div: divisor magnitude below 1e-300");
  return binary_op(
      t, a, b, "div", [](T x, T y) { return x / y; },
      [](T x, T y, T g, T& dx, T& dy) {
        dx = g / y;
        dy = -g * x / (y * y);
      });
}

template <typename T>
Var<T> minimum(Tape<T>& t, Var<T> a, Var<T> b) {
  // Subgradient: ties route to the first argument.
  return binary_op(
      t, a, b, "min", [](T x, T y) { return x <= y ? x : y; },
      [](T x, T y, T g, T& dx, T& dy) {
        if (x <= y)
          dx = g;
        else
          dy = g;
      });
}

template <typename T>
Var<T> maximum(Tape<T>& t, Var<T> a, Var<T> b) {
  return binary_op(
      t, a, b, "max", [](T x, T y) { return x >= y ? x : y; },
      [](T x, T y, T g, T& dx, T& dy) {
        if (x >= y)
          dx = g;
        else
          dy = g;
      });
}

template <typename T>
Var<T> neg(Tape<T>& t, Var<T> a) {
  return unary_op(
      t, a, [](T x) { return -x; }, [](T, T g) { return -g; });
}

template <typename T>
Var<T> abs(Tape<T>& t, Var<T> a) {
  // Subgradient 0 at the kink.
  return unary_op(
      t, a, [](T x) { return x < T(0) ? -x : x; },
      [](T x, T g) { return x > T(0) ? g : (x < T(0) ? -g : T(0)); });
}

template <typename T>
Var<T> exp(Tape<T>& t, Var<T> a) {
  return unary_op(
      t, a, [](T x) { return std::exp(x); }, [](T x, T g) { return g * std::exp(x); });
}

template <typename T>
Var<T> sqrt(Tape<T>& t, Var<T> a) {
  return unary_op(
      t, a, [](T x) { return std::sqrt(x); },
      [](T x, T g) { return g / (T(2) * std::sqrt(x)); });
}

template <typename T>
Var<T> recip(Tape<T>& t, Var<T> a) {
  const Tensor<T>& xa = t.val(a);
  for (const T& y : xa.v)
    require(std::fabs(static_cast<double>(y)) >= 1e-300, ErrorKind::numeric,
            "recip: magnitude below 1e-300");
  return unary_op(
      t, a, [](T x) { return T(1) / x; }, [](T x, T g) { return -g / (x * x); });
}

template <typename T>
Var<T> relu(Tape<T>& t, Var<T> a) {
  // Subgradient 0 at 0.
  return unary_op(
      t, a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T g) { return x > T(0) ? g : T(0); });
}

template <typename T>
Var<T> clamp(Tape<T>& t, Var<T> a, T lo, T hi) {
  // Subgradient 0 outside and at the bounds.
  return unary_op(
      t, a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](T x, T g) { return (x > lo && x < hi) ? g : T(0); });
}

// Scalar-literal conveniences (the literal becomes a constant node).
template <typename T>
Var<T> add_s(Tape<T>& t, Var<T> a, double s) {
  return add(t, a, t.scalar_const(static_cast<T>(s)));
}
template <typename T>
Var<T> sub_s(Tape<T>& t, Var<T> a, double s) {
  return sub(t, a, t.scalar_const(static_cast<T>(s)));
}
template <typename T>
Var<T> mul_s(Tape<T>& t, Var<T> a, double s) {
  return mul(t, a, t.scalar_const(static_cast<T>(s)));
}
template <typename T>
Var<T> min_s(Tape<T>& t, Var<T> a, double s) {
  return minimum(t, a, t.scalar_const(static_cast<T>(s)));
}
template <typename T>
Var<T> max_s(Tape<T>& t, Var<T> a, double s) {
  return maximum(t, a, t.scalar_const(static_cast<T>(s)));
}

// min(sigma * relu(u), 1): the differentiable step used by the light mask.
template <typename T>
Var<T> smooth_step(Tape<T>& t, Var<T> u, double sigma = 100.0) {
  return min_s(t, mul_s(t, relu(t, u), sigma), 1.0);
}

// ---- reductions ----

enum class Reduce { sum, mean, l1, l2sq };

template <typename T>
Var<T> reduce(Tape<T>& t, Var<T> a, Reduce op) {
  const Tensor<T>& xa = t.val(a);
  const int64_t n = xa.size();
  double acc = 0.0;
  switch (op) {
    case Reduce::sum:
    case Reduce::mean:
      for (const T& x : xa.v) acc += static_cast<double>(x);
      break;
    case Reduce::l1:
      for (const T& x : xa.v) acc += std::fabs(static_cast<double>(x));
      break;
    case Reduce::l2sq:
      for (const T& x : xa.v) acc += static_cast<double>(x) * static_cast<double>(x);
      break;
  }
  if (op == Reduce::mean) acc /= static_cast<double>(n);
  Tensor<T> out({1}, static_cast<T>(acc));
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, op, n](Tape<T>& tp) {
      const T g = tp.grad(self).v[0];
      const Tensor<T>& va = tp.val(a);
      Tensor<T>& ga = tp.grad(a);
      switch (op) {
        case Reduce::sum:
          for (int64_t i = 0; i < n; ++i) ga.v[i] += g;
          break;
        case Reduce::mean: {
          const T gn = g / static_cast<T>(n);
          for (int64_t i = 0; i < n; ++i) ga.v[i] += gn;
          break;
        }
        case Reduce::l1:
          for (int64_t i = 0; i < n; ++i)
            ga.v[i] += va.v[i] > T(0) ? g : (va.v[i] < T(0) ? -g : T(0));
          break;
        case Reduce::l2sq:
          for (int64_t i = 0; i < n; ++i) ga.v[i] += T(2) * g * va.v[i];
          break;
      }
    });
  return self;
}

template <typename T>
Var<T> reduce_sum(Tape<T>& t, Var<T> a) {
  return reduce(t, a, Reduce::sum);
}
template <typename T>
Var<T> reduce_mean(Tape<T>& t, Var<T> a) {
  return reduce(t, a, Reduce::mean);
}
template <typename T>
Var<T> reduce_l1(Tape<T>& t, Var<T> a) {
  return reduce(t, a, Reduce::l1);
}
template <typename T>
Var<T> reduce_l2sq(Tape<T>& t, Var<T> a) {
  return reduce(t, a, Reduce::l2sq);
}

// ---- channel plumbing for [h,w,c] images ----

template <typename T>
Var<T> concat_c(Tape<T>& t, const std::vector<Var<T>>& parts) {
  require(!parts.empty(), ErrorKind::shape, "concat_c: no inputs");
  const Shape& s0 = t.val(parts[0]).shape;
  require(s0.size() == 3, ErrorKind::shape, "concat_c: expected [h,w,c]");
  int h = s0[0], w = s0[1], c_total = 0;
  bool rg = false;
  for (Var<T> p : parts) {
    const Shape& s = t.val(p).shape;
    require(s.size() == 3 && s[0] == h && s[1] == w, ErrorKind::shape,
            "concat_c: spatial shape mismatch");
    c_total += s[2];
    rg = rg || t.requires_grad(p);
  }
  Tensor<T> out({h, w, c_total});
  int64_t npix = static_cast<int64_t>(h) * w;
  int off = 0;
  for (Var<T> p : parts) {
    const Tensor<T>& xp = t.val(p);
    int c = xp.shape[2];
    for (int64_t i = 0; i < npix; ++i)
      for (int k = 0; k < c; ++k) out.v[i * c_total + off + k] = xp.v[i * c + k];
    off += c;
  }
  Var<T> self = t.push(std::move(out), rg);
  if (rg) {
    std::vector<Var<T>> ps = parts;
    t.set_back(self, [self, ps, h, w, c_total](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      int64_t npix = static_cast<int64_t>(h) * w;
      int off = 0;
      for (Var<T> p : ps) {
        int c = tp.val(p).shape[2];
        if (tp.requires_grad(p)) {
          Tensor<T>& gp = tp.grad(p);
          for (int64_t i = 0; i < npix; ++i)
            for (int k = 0; k < c; ++k) gp.v[i * c + k] += g.v[i * c_total + off + k];
        }
        off += c;
      }
    });
  }
  return self;
}

// Channels [c0, c1) of an [h,w,c] image.
template <typename T>
Var<T> slice_c(Tape<T>& t, Var<T> a, int c0, int c1) {
  const Tensor<T>& xa = t.val(a);
  require(xa.shape.size() == 3, ErrorKind::shape, "slice_c: expected [h,w,c]");
  const int h = xa.shape[0], w = xa.shape[1], c = xa.shape[2];
  require(0 <= c0 && c0 < c1 && c1 <= c, ErrorKind::shape, "slice_c: channel range out of bounds");
  const int cs = c1 - c0;
  Tensor<T> out({h, w, cs});
  const int64_t npix = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < npix; ++i)
    for (int k = 0; k < cs; ++k) out.v[i * cs + k] = xa.v[i * c + c0 + k];
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, c0, cs, c, npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& ga = tp.grad(a);
      for (int64_t i = 0; i < npix; ++i)
        for (int k = 0; k < cs; ++k) ga.v[i * c + c0 + k] += g.v[i * cs + k];
    });
  return self;
}

// Repeat a single-channel [h,w,1] map to [h,w,k].
template <typename T>
Var<T> repeat_c(Tape<T>& t, Var<T> a, int k) {
  const Tensor<T>& xa = t.val(a);
  require(xa.shape.size() == 3 && xa.shape[2] == 1, ErrorKind::shape, "repeat_c: expected [h,w,1]");
  const int h = xa.shape[0], w = xa.shape[1];
  Tensor<T> out({h, w, k});
  const int64_t npix = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < npix; ++i)
    for (int j = 0; j < k; ++j) out.v[i * k + j] = xa.v[i];
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, k, npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& ga = tp.grad(a);
      for (int64_t i = 0; i < npix; ++i) {
        T acc = T(0);
        for (int j = 0; j < k; ++j) acc += g.v[i * k + j];
        ga.v[i] += acc;
      }
    });
  return self;
}

// Per-pixel dot product over channels: [h,w,c] x [h,w,c] -> [h,w,1].
template <typename T>
Var<T> channel_dot(Tape<T>& t, Var<T> a, Var<T> b) {
  const Tensor<T>& xa = t.val(a);
  const Tensor<T>& xb = t.val(b);
  require(xa.shape == xb.shape && xa.shape.size() == 3, ErrorKind::shape,
          "channel_dot: shapes must match and be [h,w,c]");
  const int h = xa.shape[0], w = xa.shape[1], c = xa.shape[2];
  Tensor<T> out({h, w, 1});
  const int64_t npix = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < npix; ++i) {
    T acc = T(0);
    for (int k = 0; k < c; ++k) acc += xa.v[i * c + k] * xb.v[i * c + k];
    out.v[i] = acc;
  }
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, b, c, npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      const Tensor<T>& va = tp.val(a);
      const Tensor<T>& vb = tp.val(b);
      Tensor<T>* ga = tp.requires_grad(a) ? &tp.grad(a) : nullptr;
      Tensor<T>* gb = tp.requires_grad(b) ? &tp.grad(b) : nullptr;
      for (int64_t i = 0; i < npix; ++i)
        for (int k = 0; k < c; ++k) {
          if (ga) ga->v[i * c + k] += g.v[i] * vb.v[i * c + k];
          if (gb) gb->v[i * c + k] += g.v[i] * va.v[i * c + k];
        }
    });
  return self;
}

// Per-pixel 3-vector cross product: [h,w,3] x [h,w,3] -> [h,w,3].
template <typename T>
Var<T> channel_cross(Tape<T>& t, Var<T> a, Var<T> b) {
  const Tensor<T>& xa = t.val(a);
  const Tensor<T>& xb = t.val(b);
  require(xa.shape == xb.shape && xa.shape.size() == 3 && xa.shape[2] == 3, ErrorKind::shape,
          "channel_cross: expected matching [h,w,3]");
  const int64_t npix = static_cast<int64_t>(xa.shape[0]) * xa.shape[1];
  Tensor<T> out(xa.shape);
  for (int64_t i = 0; i < npix; ++i) {
    const T* u = &xa.v[i * 3];
    const T* w = &xb.v[i * 3];
    out.v[i * 3 + 0] = u[1] * w[2] - u[2] * w[1];
    out.v[i * 3 + 1] = u[2] * w[0] - u[0] * w[2];
    out.v[i * 3 + 2] = u[0] * w[1] - u[1] * w[0];
  }
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, b, npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      const Tensor<T>& va = tp.val(a);
      const Tensor<T>& vb = tp.val(b);
      Tensor<T>* ga = tp.requires_grad(a) ? &tp.grad(a) : nullptr;
      Tensor<T>* gb = tp.requires_grad(b) ? &tp.grad(b) : nullptr;
      for (int64_t i = 0; i < npix; ++i) {
        const T* u = &va.v[i * 3];
        const T* w = &vb.v[i * 3];
        const T* gg = &g.v[i * 3];
        // d(u x w)/du^T g = w x g;  d(u x w)/dw^T g = g x u
        if (ga) {
          ga->v[i * 3 + 0] += w[1] * gg[2] - w[2] * gg[1];
          ga->v[i * 3 + 1] += w[2] * gg[0] - w[0] * gg[2];
          ga->v[i * 3 + 2] += w[0] * gg[1] - w[1] * gg[0];
        }
        if (gb) {
          gb->v[i * 3 + 0] += gg[1] * u[2] - gg[2] * u[1];
          gb->v[i * 3 + 1] += gg[2] * u[0] - gg[0] * u[2];
          gb->v[i * 3 + 2] += gg[0] * u[1] - gg[1] * u[0];
        }
      }
    });
  return self;
}

// Per-pixel rigid map out = R * p + t with constant R (row-major 9) and t.
template <typename T>
Var<T> affine3(Tape<T>& t, Var<T> a, const std::array<double, 9>& r,
               const std::array<double, 3>& tr) {
  const Tensor<T>& xa = t.val(a);
  require(xa.shape.size() == 3 && xa.shape[2] == 3, ErrorKind::shape, "affine3: expected [h,w,3]");
  const int64_t npix = static_cast<int64_t>(xa.shape[0]) * xa.shape[1];
  std::array<T, 9> R;
  std::array<T, 3> tt;
  for (int i = 0; i < 9; ++i) R[static_cast<size_t>(i)] = static_cast<T>(r[static_cast<size_t>(i)]);
  for (int i = 0; i < 3; ++i) tt[static_cast<size_t>(i)] = static_cast<T>(tr[static_cast<size_t>(i)]);
  Tensor<T> out(xa.shape);
  for (int64_t i = 0; i < npix; ++i) {
    const T* p = &xa.v[i * 3];
    for (int k = 0; k < 3; ++k)
      out.v[i * 3 + k] = R[static_cast<size_t>(k * 3)] * p[0] + R[static_cast<size_t>(k * 3 + 1)] * p[1] +
                         R[static_cast<size_t>(k * 3 + 2)] * p[2] + tt[static_cast<size_t>(k)];
  }
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, R, npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& ga = tp.grad(a);
      for (int64_t i = 0; i < npix; ++i) {
        const T* gg = &g.v[i * 3];
        for (int j = 0; j < 3; ++j)
          ga.v[i * 3 + j] += R[static_cast<size_t>(j)] * gg[0] + R[static_cast<size_t>(3 + j)] * gg[1] +
                             R[static_cast<size_t>(6 + j)] * gg[2];
      }
    });
  return self;
}

// y added into channels [c0, c0 + yc) of x.
template <typename T>
Var<T> add_into_c(Tape<T>& t, Var<T> x, Var<T> y, int c0) {
  const Tensor<T>& xv = t.val(x);
  const Tensor<T>& yv = t.val(y);
  require(xv.shape.size() == 3 && yv.shape.size() == 3 && xv.shape[0] == yv.shape[0] &&
              xv.shape[1] == yv.shape[1],
          ErrorKind::shape, "add_into_c: spatial shape mismatch");
  const int c = xv.shape[2], yc = yv.shape[2];
  require(c0 >= 0 && c0 + yc <= c, ErrorKind::shape, "add_into_c: channel range out of bounds");
  Tensor<T> out = xv;
  const int64_t npix = static_cast<int64_t>(xv.shape[0]) * xv.shape[1];
  for (int64_t i = 0; i < npix; ++i)
    for (int k = 0; k < yc; ++k) out.v[i * c + c0 + k] += yv.v[i * yc + k];
  const bool rg = t.requires_grad(x) || t.requires_grad(y);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, x, y, c0, c, yc, npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      if (tp.requires_grad(x)) {
        Tensor<T>& gx = tp.grad(x);
        for (int64_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i];
      }
      if (tp.requires_grad(y)) {
        Tensor<T>& gy = tp.grad(y);
        for (int64_t i = 0; i < npix; ++i)
          for (int k = 0; k < yc; ++k) gy.v[i * yc + k] += g.v[i * c + c0 + k];
      }
    });
  return self;
}

// a*x + (1-a)*y with a constant per-pixel selector in [0,1].
template <typename T>
Var<T> lerp_const(Tape<T>& t, const Tensor<T>& a, Var<T> x, Var<T> y) {
  Var<T> av = t.constant(a);
  Var<T> one_minus = t.constant([&] {
    Tensor<T> m(a.shape);
    for (int64_t i = 0; i < a.size(); ++i) m.v[i] = T(1) - a.v[i];
    return m;
  }());
  return add(t, mul(t, av, x), mul(t, one_minus, y));
}

}  // namespace ops
}  // namespace dpc
