#include <cmath>

#include "adam.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "tape.hpp"
#include "tape_image.hpp"

using namespace dpc;
using D = Tape<double>;

namespace {

Tensor<double> rand_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(s));
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("relu value and subgradient at and below zero") {
  D t;
  auto x = t.leaf(Tensor<double>({1}, -3.0), true);
  auto y = ops::relu(t, x);
  CHECK(t.val(y).v[0] == 0.0);
  t.backward(ops::reduce_sum(t, y));
  CHECK(t.grad(x).v[0] == 0.0);

  D t2;
  auto x0 = t2.leaf(Tensor<double>({1}, 0.0), true);
  t2.backward(ops::reduce_sum(t2, ops::relu(t2, x0)));
  CHECK(t2.grad(x0).v[0] == 0.0);
}

TEST_CASE("smooth step saturates: min(100*relu(0.02), 1) = 1") {
  D t;
  auto x = t.constant(Tensor<double>({1}, 0.02));
  CHECK(t.val(ops::smooth_step(t, x, 100.0)).v[0] == 1.0);
}

TEST_CASE("elementwise shape and numeric guards") {
  D t;
  auto a = t.leaf(Tensor<double>({2, 2, 1}, 1.0), true);
  auto b = t.leaf(Tensor<double>({2, 3, 1}, 1.0), true);
  CHECK_THROWS_AS(ops::add(t, a, b), Error);
  auto tiny = t.leaf(Tensor<double>({2, 2, 1}, 1e-310), true);
  CHECK_THROWS_AS(ops::div(t, a, tiny), Error);
}

TEST_CASE("finite-value checking flags overflow in test mode") {
  D t;
  t.check_finite = true;
  auto x = t.leaf(Tensor<double>({1}, 1e9), true);
  CHECK_THROWS_AS(ops::exp(t, x), Error);
}

TEST_CASE("conv2d: 1x1 identity kernel is the identity") {
  Rng rng(5);
  D t;
  Tensor<double> img = rand_tensor({5, 6, 2}, rng);
  Tensor<double> w({2, 1, 1, 2});
  w.v = {1, 0, 0, 1};
  auto y = ops::conv2d(t, t.constant(img), t.constant(w), t.constant(Tensor<double>({2})), 1, 0);
  for (int64_t i = 0; i < img.size(); ++i) CHECK(t.val(y).v[i] == doctest::Approx(img.v[i]));
}

TEST_CASE("conv2d matches the nested-loop oracle on a 5x5 ramp") {
  Rng rng(6);
  Tensor<double> img({5, 5, 1});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) img.at(y, x, 0) = x + 0.5 * y;
  Tensor<double> w = rand_tensor({3, 3, 3, 1}, rng);
  Tensor<double> b = rand_tensor({3}, rng, -0.2, 0.2);
  for (int stride : {1, 2}) {
    D t;
    auto y = ops::conv2d(t, t.constant(img), t.constant(w), t.constant(b), stride, 1);
    Tensor<double> ref = oracle::conv2d(img, w, b, stride, 1);
    REQUIRE(t.val(y).shape == ref.shape);
    for (int64_t i = 0; i < ref.size(); ++i)
      CHECK(t.val(y).v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d shape errors carry sizes") {
  D t;
  auto img = t.constant(Tensor<double>({2, 2, 1}));
  auto w = t.constant(Tensor<double>({1, 5, 5, 1}));
  CHECK_THROWS_WITH_AS(ops::conv2d(t, img, w, t.constant(Tensor<double>({1})), 1, 0),
                       doctest::Contains("kernel larger"), Error);
  auto w2 = t.constant(Tensor<double>({1, 1, 1, 3}));  // cin mismatch
  CHECK_THROWS_AS(ops::conv2d(t, img, w2, t.constant(Tensor<double>({1})), 1, 0), Error);
}

TEST_CASE("tconv2d matches the scatter oracle") {
  Rng rng(7);
  Tensor<double> img = rand_tensor({3, 4, 2}, rng);
  Tensor<double> w = rand_tensor({3, 2, 2, 2}, rng);
  Tensor<double> b = rand_tensor({3}, rng, -0.2, 0.2);
  D t;
  auto y = ops::tconv2d(t, t.constant(img), t.constant(w), t.constant(b), 2);
  Tensor<double> ref = oracle::tconv2d(img, w, b, 2);
  REQUIRE(t.val(y).shape == ref.shape);
  for (int64_t i = 0; i < ref.size(); ++i)
    CHECK(t.val(y).v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
}

TEST_CASE("grid_sample identity grid reproduces the image") {
  Rng rng(8);
  Tensor<double> img = rand_tensor({6, 7, 3}, rng, 0, 1);
  Tensor<double> grid({6, 7, 2});
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) {
      grid.at(y, x, 0) = x;
      grid.at(y, x, 1) = y;
    }
  D t;
  auto out = ops::grid_sample(t, t.constant(img), t.constant(grid));
  for (int64_t i = 0; i < img.size(); ++i) CHECK(t.val(out).v[i] == doctest::Approx(img.v[i]));
}

TEST_CASE("grid_sample half-pixel shift on a ramp interpolates linearly") {
  Tensor<double> img({4, 8, 1});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) img.at(y, x, 0) = 2.0 * x;
  Tensor<double> grid({4, 6, 2});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) {
      grid.at(y, x, 0) = x + 0.5;
      grid.at(y, x, 1) = y;
    }
  D t;
  auto out = ops::grid_sample(t, t.constant(img), t.constant(grid));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x)
      CHECK(t.val(out).at(y, x, 0) == doctest::Approx(2.0 * x + 1.0));
}

TEST_CASE("grid_sample out of bounds returns zeros") {
  Tensor<double> img({4, 4, 1}, 1.0);
  Tensor<double> grid({1, 2, 2});
  grid.at(0, 0, 0) = -7.0;
  grid.at(0, 0, 1) = 1.0;
  grid.at(0, 1, 0) = 1.0;
  grid.at(0, 1, 1) = 9.0;
  D t;
  auto out = ops::grid_sample(t, t.constant(img), t.constant(grid));
  CHECK(t.val(out).v[0] == 0.0);
  CHECK(t.val(out).v[1] == 0.0);
}

TEST_CASE("row_sort_lex identity, reversal, and random-vs-oracle") {
  D t;
  Tensor<double> sorted_row({1, 3, 3});
  for (int k = 0; k < 3; ++k) {
    sorted_row.at(0, k, 0) = k;
    sorted_row.at(0, k, 1) = 0;
    sorted_row.at(0, k, 2) = 10 + k;
  }
  auto [s1, p1] = ops::row_sort_lex(t, t.constant(sorted_row));
  for (int k = 0; k < 3; ++k) CHECK((*p1)[static_cast<size_t>(k)] == k);

  Tensor<double> reversed({1, 3, 3});
  for (int k = 0; k < 3; ++k) {
    reversed.at(0, k, 0) = 2 - k;
    reversed.at(0, k, 1) = 0;
    reversed.at(0, k, 2) = k;
  }
  auto [s2, p2] = ops::row_sort_lex(t, t.constant(reversed));
  for (int k = 0; k < 3; ++k) CHECK((*p2)[static_cast<size_t>(k)] == 2 - k);
  // applying the inverse permutation recovers the input
  auto back = ops::unsort_rows(t, s2, p2);
  for (int64_t i = 0; i < reversed.size(); ++i)
    CHECK(t.val(back).v[i] == doctest::Approx(reversed.v[i]));

  Rng rng(9);
  Tensor<double> rand_rows = rand_tensor({5, 9, 3}, rng);
  auto [s3, p3] = ops::row_sort_lex(t, t.constant(rand_rows));
  for (int y = 0; y < 5; ++y) {
    std::vector<std::array<double, 3>> row;
    for (int x = 0; x < 9; ++x)
      row.push_back({rand_rows.at(y, x, 0), rand_rows.at(y, x, 1), rand_rows.at(y, x, 2)});
    std::stable_sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      return a[0] != b[0] ? a[0] < b[0] : a[1] < b[1];
    });
    for (int x = 0; x < 9; ++x)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(t.val(s3).at(y, x, ch) == doctest::Approx(row[static_cast<size_t>(x)][static_cast<size_t>(ch)]));
  }
}

TEST_CASE("sorting gradient is a permutation (one-hot maps to one-hot)") {
  Rng rng(10);
  Tensor<double> rows = rand_tensor({2, 6, 3}, rng);
  D t;
  auto x = t.leaf(rows, true);
  auto [sorted, perm] = ops::row_sort_lex(t, x);
  // scalar = one specific sorted element
  auto sl = ops::slice_c(t, sorted, 1, 2);
  Tensor<double> onehot({2, 6, 1});
  onehot.at(1, 4, 0) = 1.0;
  auto probe = ops::reduce_sum(t, ops::mul(t, sl, t.constant(onehot)));
  t.backward(probe);
  int nonzero = 0;
  for (int64_t i = 0; i < t.grad(x).size(); ++i)
    if (t.grad(x).v[i] != 0.0) ++nonzero;
  CHECK(nonzero == 1);
  CHECK(t.grad(x).at(1, (*perm)[static_cast<size_t>(1 * 6 + 4)], 1) == 1.0);
}

TEST_CASE("spatial gradient: constants, ramps, borders, oracle") {
  D t;
  auto c = t.constant(Tensor<double>({4, 5, 1}, 3.25));
  auto gx0 = ops::grad_x(t, c);
  for (double v : t.val(gx0).v) CHECK(v == 0.0);

  Tensor<double> ramp({4, 5, 1});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) ramp.at(y, x, 0) = 2.0 * x;
  auto gx = ops::grad_x(t, t.constant(ramp));
  for (double v : t.val(gx).v) CHECK(v == doctest::Approx(2.0));

  Rng rng(11);
  Tensor<double> img = rand_tensor({6, 7, 2}, rng);
  auto g = ops::grad_x(t, t.constant(img));
  Tensor<double> ref = oracle::forward_diff_x(img);
  for (int64_t i = 0; i < ref.size(); ++i) CHECK(t.val(g).v[i] == doctest::Approx(ref.v[i]));

  CHECK_THROWS_AS(ops::grad_x(t, t.constant(Tensor<double>({3, 1, 1}))), Error);
}

TEST_CASE("ssim of an image with itself is 1") {
  Rng rng(12);
  Tensor<double> img = rand_tensor({13, 14, 3}, rng, 0, 1);
  D t;
  auto s = ops::ssim(t, t.constant(img), t.constant(img));
  CHECK(t.val(s).v[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim of checkerboard vs inverse matches the direct formula") {
  Tensor<double> a({12, 12, 1});
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) a.at(y, x, 0) = (x + y) % 2 ? 1.0 : 0.0;
  Tensor<double> b(a.shape);
  for (int64_t i = 0; i < a.size(); ++i) b.v[i] = 1.0 - a.v[i];
  D t;
  auto s = ops::ssim(t, t.constant(a), t.constant(b));
  const double direct = oracle::ssim_mean(a, b);
  CHECK(t.val(s).v[0] == doctest::Approx(direct).epsilon(1e-10));
  CHECK(t.val(s).v[0] <= 0.0);
  CHECK(t.val(s).v[0] >= -1.0);
}

TEST_CASE("gradient of 1-ssim vanishes at a == b") {
  Rng rng(13);
  Tensor<double> img = rand_tensor({12, 12, 1}, rng, 0.2, 0.8);
  D t;
  auto a = t.leaf(img, true);
  auto loss = ops::sub(t, t.scalar_const(1.0), ops::ssim(t, a, t.constant(img)));
  t.backward(loss);
  for (double g : t.grad(a).v) CHECK(std::fabs(g) < 1e-8);
}

TEST_CASE("ssim rejects images smaller than the window") {
  D t;
  auto a = t.constant(Tensor<double>({8, 12, 1}));
  CHECK_THROWS_AS(ops::ssim(t, a, a), Error);
}

TEST_CASE("adam converges on a 1-D quadratic") {
  Tensor<float> x({1}, 0.0f);
  AdamState<float> state;
  AdamConfig<float> cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 500; ++i) {
    Tensor<float> g({1}, 2.0f * (x.v[0] - 3.0f));
    adam_step(x, g, state, cfg);
  }
  CHECK(std::fabs(x.v[0] - 3.0f) < 1e-3);
}

TEST_CASE("adam with zero gradient leaves parameters, decays moments") {
  Tensor<float> x({2}, 1.5f);
  AdamState<float> state;
  AdamConfig<float> cfg;
  adam_step(x, Tensor<float>({2}, 0.5f), state, cfg);
  const float after_one = x.v[0];
  const float m_before = state.m.v[0];
  adam_step(x, Tensor<float>({2}, 0.0f), state, cfg);
  CHECK(std::fabs(state.m.v[0] - 0.9f * m_before) < 1e-7);
  // the parameter still moves (momentum), but the moment decayed
  CHECK(x.v[0] != after_one);

  AdamState<float> fresh;
  Tensor<float> y({2}, 1.5f);
  adam_step(y, Tensor<float>({2}, 0.0f), fresh, cfg);
  CHECK(y.v[0] == 1.5f);  // zero gradient from the start: no movement
}

TEST_CASE("adam is deterministic and validates config") {
  AdamConfig<float> bad;
  bad.lr = 0.0;
  Tensor<float> x({1}, 1.0f);
  AdamState<float> st;
  CHECK_THROWS_AS(adam_step(x, Tensor<float>({1}, 1.0f), st, bad), Error);

  auto run = [] {
    Rng rng(99);
    Tensor<float> p({16}, 0.0f);
    AdamState<float> state;
    AdamConfig<float> cfg;
    cfg.lr = 0.01;
    for (int i = 0; i < 50; ++i) {
      Tensor<float> g({16});
      for (float& v : g.v) v = static_cast<float>(rng.uniform(-1, 1));
      adam_step(p, g, state, cfg);
    }
    return p;
  };
  Tensor<float> a = run(), b = run();
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a.v[i] == b.v[i]);
}

TEST_CASE("reduce ops match manual sums") {
  Rng rng(14);
  Tensor<double> x = rand_tensor({3, 4, 2}, rng);
  double sum = 0, l1 = 0, l2 = 0;
  for (double v : x.v) {
    sum += v;
    l1 += std::fabs(v);
    l2 += v * v;
  }
  D t;
  auto xv = t.constant(x);
  CHECK(t.val(ops::reduce_sum(t, xv)).v[0] == doctest::Approx(sum));
  CHECK(t.val(ops::reduce_mean(t, xv)).v[0] == doctest::Approx(sum / 24.0));
  CHECK(t.val(ops::reduce_l1(t, xv)).v[0] == doctest::Approx(l1));
  CHECK(t.val(ops::reduce_l2sq(t, xv)).v[0] == doctest::Approx(l2));
}

TEST_CASE("tape replay determinism: identical graphs give identical grads") {
  auto run = [] {
    Rng rng(15);
    D t;
    auto a = t.leaf(Tensor<double>({4, 4, 1}, 0.7), true);
    auto b = t.constant(Tensor<double>({4, 4, 1}, 0.3));
    auto y = ops::reduce_sum(t, ops::mul(t, ops::exp(t, ops::neg(t, a)), b));
    t.backward(y);
    (void)rng;
    return std::make_pair(t.val(y).v[0], t.grad(a).v[0]);
  };
  auto r1 = run(), r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}

TEST_CASE("universal finite-difference gradient check") {
  GradCheckReport report = run_gradcheck(2024);
  for (const auto& item : report.items) {
    INFO(item.name, " max_rel_err=", item.max_rel_err, " checked=", item.checked, " skipped=",
         item.skipped);
    CHECK(item.pass);
  }
  CHECK(report.all_pass());
}
