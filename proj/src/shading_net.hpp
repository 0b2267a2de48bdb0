#pragma once

#include <array>
#include <string>

#include "rng.hpp"
#include "tape.hpp"
#include "tape_image.hpp"

namespace dpc {

// Layer inventory. The order doubles as the checkpoint manifest order.
enum class NetLayer : int {
  conv1 = 0,
  conv2,
  conv3,
  conv4,
  conv5,
  tconv1,
  tconv2,
  conv6,
  conv1r,
  conv2r,
  conv3r,
  conv4r,
  sk1a,
  sk1b,
  sk1c,
  sk2,
  sk3,
  count
};

inline constexpr int kNetLayerCount = static_cast<int>(NetLayer::count);

struct NetLayerSpec {
  const char* name;
  bool transposed;
  int cin, cout, k, stride, pad;
};

inline constexpr std::array<NetLayerSpec, kNetLayerCount> kNetLayers = {{
    {"conv1", false, 3, 32, 3, 2, 1},
    {"conv2", false, 32, 64, 3, 2, 1},
    {"conv3", false, 64, 128, 3, 1, 1},
    {"conv4", false, 128, 256, 3, 1, 1},
    {"conv5", false, 256, 128, 3, 1, 1},
    {"tconv1", true, 128, 64, 2, 2, 0},
    {"tconv2", true, 64, 32, 2, 2, 0},
    {"conv6", false, 32, 3, 3, 1, 1},
    {"conv1r", false, 9, 32, 3, 2, 1},
    {"conv2r", false, 32, 64, 3, 2, 1},
    {"conv3r", false, 64, 128, 3, 1, 1},
    {"conv4r", false, 128, 256, 3, 1, 1},
    {"sk1a", false, 3, 32, 3, 1, 1},
    {"sk1b", false, 32, 32, 3, 1, 1},
    {"sk1c", false, 32, 32, 3, 1, 1},
    {"sk2", false, 32, 32, 1, 1, 0},
    {"sk3", false, 64, 64, 1, 1, 0},
}};

struct ConvBank {
  Tensor<float> w;  // [cout, k, k, cin]
  Tensor<float> b;  // [cout]
};

struct ShadingNetParams {
  std::array<ConvBank, kNetLayerCount> banks;

  ConvBank& operator[](NetLayer l) { return banks[static_cast<size_t>(l)]; }
  const ConvBank& operator[](NetLayer l) const { return banks[static_cast<size_t>(l)]; }

  static ShadingNetParams zeros() {
    ShadingNetParams p;
    for (int i = 0; i < kNetLayerCount; ++i) {
      const NetLayerSpec& s = kNetLayers[static_cast<size_t>(i)];
      p.banks[static_cast<size_t>(i)].w = Tensor<float>({s.cout, s.k, s.k, s.cin});
      p.banks[static_cast<size_t>(i)].b = Tensor<float>({s.cout});
    }
    return p;
  }

  bool all_finite() const {
    for (const ConvBank& bk : banks)
      if (!bk.w.all_finite() || !bk.b.all_finite()) return false;
    return true;
  }
};

// He initialization: filters ~ N(0, 2 / fan_in), biases zero.
inline ShadingNetParams he_init(uint64_t seed) {
  ShadingNetParams p = ShadingNetParams::zeros();
  Rng root(seed);
  for (int i = 0; i < kNetLayerCount; ++i) {
    const NetLayerSpec& s = kNetLayers[static_cast<size_t>(i)];
    const double stddev = std::sqrt(2.0 / (static_cast<double>(s.cin) * s.k * s.k));
    Rng r = root.fork(static_cast<uint64_t>(i));
    for (float& x : p.banks[static_cast<size_t>(i)].w.v)
      x = static_cast<float>(r.normal() * stddev);
  }
  return p;
}

// Tape leaves for every bank, cast to the tape dtype.
template <typename T>
struct ShadingNetVars {
  using Var = typename Tape<T>::Var;
  std::array<Var, kNetLayerCount> w{};
  std::array<Var, kNetLayerCount> b{};

  Var wv(NetLayer l) const { return w[static_cast<size_t>(l)]; }
  Var bv(NetLayer l) const { return b[static_cast<size_t>(l)]; }
};

template <typename T>
ShadingNetVars<T> net_leaves(Tape<T>& t, const ShadingNetParams& p, bool learnable) {
  ShadingNetVars<T> nv;
  for (int i = 0; i < kNetLayerCount; ++i) {
    nv.w[static_cast<size_t>(i)] = t.leaf(p.banks[static_cast<size_t>(i)].w.template cast<T>(), learnable);
    nv.b[static_cast<size_t>(i)] = t.leaf(p.banks[static_cast<size_t>(i)].b.template cast<T>(), learnable);
  }
  return nv;
}

namespace detail {

template <typename T>
typename Tape<T>::Var conv_relu(Tape<T>& t, const ShadingNetVars<T>& nv, NetLayer l,
                                typename Tape<T>::Var x) {
  const NetLayerSpec& s = kNetLayers[static_cast<size_t>(l)];
  auto y = s.transposed ? ops::tconv2d(t, x, nv.wv(l), nv.bv(l), s.stride)
                        : ops::conv2d(t, x, nv.wv(l), nv.bv(l), s.stride, s.pad);
  return ops::relu(t, y);
}

template <typename T>
typename Tape<T>::Var conv_linear(Tape<T>& t, const ShadingNetVars<T>& nv, NetLayer l,
                                  typename Tape<T>::Var x) {
  const NetLayerSpec& s = kNetLayers[static_cast<size_t>(l)];
  return ops::conv2d(t, x, nv.wv(l), nv.bv(l), s.stride, s.pad);
}

}  // namespace detail

// Surface skip branch (Sk1): three 3x3 conv+ReLU layers carrying s to the
// output stage. It depends only on s and the parameters, so callers evaluate
// it once per optimizer step and share it across the batch.
template <typename T>
typename Tape<T>::Var surface_skip_forward(Tape<T>& t, const ShadingNetVars<T>& nv,
                                           typename Tape<T>::Var s) {
  auto y = detail::conv_relu(t, nv, NetLayer::sk1a, s);
  y = detail::conv_relu(t, nv, NetLayer::sk1b, y);
  return detail::conv_relu(t, nv, NetLayer::sk1c, y);
}

// Full ShadingNet pass.
//
// Encoder stages add the rough-shading branch output after each backbone
// ReLU; the decoder adds low-level backbone maps to the first half of the
// channels and skip-transformed rough maps to the second half; the surface
// skip joins before the output convolution; the result is clamped to [0,1].
template <typename T>
typename Tape<T>::Var shading_forward(Tape<T>& t, const ShadingNetVars<T>& nv,
                                      typename Tape<T>::Var i_p_prime,
                                      typename Tape<T>::Var i_abnt, typename Tape<T>::Var i_diff,
                                      typename Tape<T>::Var i_spec,
                                      typename Tape<T>::Var sk1_out) {
  using namespace ops;
  const Shape& s = t.val(i_p_prime).shape;
  require(s.size() == 3 && s[2] == 3, ErrorKind::shape, "shading_forward: I'_p must be [h,w,3]");
  require(s[0] % 4 == 0 && s[1] % 4 == 0, ErrorKind::shape,
          "shading_forward: spatial size must be divisible by 4, got " + shape_str(s));
  for (auto v : {i_abnt, i_diff, i_spec})
    require(t.val(v).shape == s, ErrorKind::shape,
            "shading_forward: rough shading shape mismatch at input junction");

  auto rough_in = concat_c<T>(t, {i_abnt, i_diff, i_spec});
  auto r1 = detail::conv_relu(t, nv, NetLayer::conv1r, rough_in);
  auto b1 = detail::conv_relu(t, nv, NetLayer::conv1, i_p_prime);
  auto b1p = add(t, b1, r1);
  auto r2 = detail::conv_relu(t, nv, NetLayer::conv2r, r1);
  auto b2 = detail::conv_relu(t, nv, NetLayer::conv2, b1p);
  auto b2p = add(t, b2, r2);
  auto r3 = detail::conv_relu(t, nv, NetLayer::conv3r, r2);
  auto b3 = detail::conv_relu(t, nv, NetLayer::conv3, b2p);
  auto b3p = add(t, b3, r3);
  auto r4 = detail::conv_relu(t, nv, NetLayer::conv4r, r3);
  auto b4 = detail::conv_relu(t, nv, NetLayer::conv4, b3p);
  auto b4p = add(t, b4, r4);

  auto b5 = detail::conv_relu(t, nv, NetLayer::conv5, b4p);
  b5 = add_into_c(t, b5, b2, 0);
  b5 = add_into_c(t, b5, detail::conv_relu(t, nv, NetLayer::sk3, r2), 64);
  auto t1 = detail::conv_relu(t, nv, NetLayer::tconv1, b5);
  t1 = add_into_c(t, t1, b1, 0);
  t1 = add_into_c(t, t1, detail::conv_relu(t, nv, NetLayer::sk2, r1), 32);
  auto t2 = detail::conv_relu(t, nv, NetLayer::tconv2, t1);
  auto fused = add(t, t2, sk1_out);
  return clamp(t, detail::conv_linear(t, nv, NetLayer::conv6, fused), T(0), T(1));
}

}  // namespace dpc
