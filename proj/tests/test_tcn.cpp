#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vidsim/tcn.hpp"
#include "vidsim/train.hpp"

using namespace vidsim;

namespace {

std::vector<double> nested_loop_conv(const std::vector<double>& in, std::size_t len, std::size_t cin,
                                     const std::vector<double>& f, const std::vector<double>& bias, std::size_t cout,
                                     std::size_t q, std::size_t h) {
  std::vector<double> out(len * cout, 0.0);
  for (std::size_t e = 0; e < len; ++e)
    for (std::size_t o = 0; o < cout; ++o) {
      double s = bias[o];
      for (std::size_t g = 0; g < q; ++g) {
        const long src = static_cast<long>(e) - static_cast<long>(h * g);
        if (src < 0) continue;
        for (std::size_t c = 0; c < cin; ++c) s += f[(o * cin + c) * q + g] * in[static_cast<std::size_t>(src) * cin + c];
      }
      out[e * cout + o] = s;
    }
  return out;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Architecture small_arch() {
  Architecture a;
  a.window = 8;
  a.features = 10;
  a.kernel = 3;
  a.channels = {4, 6, 8};
  a.dilations = {1, 2, 4};
  a.dropout = 0.2;
  return a;
}

// Mean norm loss of a batch with the masks fixed by seed.
double batch_loss(const Tcn<double>& net, const std::vector<double>& params, const std::vector<double>& x,
                  const std::vector<std::array<double, 2>>& y, const std::vector<std::uint64_t>& seeds) {
  const auto p = net.prepare(params);
  typename Tcn<double>::Trace tr;
  std::vector<double> acc;
  double s = 0.0;
  const std::size_t n = net.input_size();
  for (std::size_t i = 0; i < y.size(); ++i) {
    net.draw_masks(tr, seeds[i]);
    const auto o = net.forward(p, std::span<const double>(x).subspan(i * n, n), tr, Mode::Training, acc);
    s += std::hypot(o[0] - y[i][0], o[1] - y[i][1]);
  }
  return s / static_cast<double>(y.size());
}

}  // namespace

TEST(DilatedCausalConv, IdentityKernelCopiesInput) {
  std::mt19937_64 rng(1);
  const std::size_t len = 12, c = 3, q = 4;
  const auto in = random_vec(rng, len * c);
  std::vector<double> f(c * c * q, 0.0);
  for (std::size_t o = 0; o < c; ++o) f[(o * c + o) * q] = 1.0;
  for (std::size_t h : {1u, 2u, 4u}) {
    const auto out = dilated_causal_conv<double>(in, len, c, f, {}, c, q, h);
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_DOUBLE_EQ(out[i], in[i]);
  }
}

TEST(DilatedCausalConv, MatchesNestedLoops) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> len_d(1, 32), ch_d(1, 8), q_d(1, 8);
  const std::size_t hs[] = {1, 2, 4};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = len_d(rng), cin = ch_d(rng), cout = ch_d(rng), q = q_d(rng), h = hs[trial % 3];
    const auto in = random_vec(rng, len * cin);
    const auto f = random_vec(rng, cout * cin * q);
    const auto b = random_vec(rng, cout);
    const auto got = dilated_causal_conv<double>(in, len, cin, f, b, cout, q, h);
    const auto want = nested_loop_conv(in, len, cin, f, b, cout, q, h);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-9);
  }
}

TEST(DilatedCausalConv, ReceptiveSpan) { EXPECT_EQ(Architecture::receptive_span(4, 8), 29u); }

TEST(DilatedCausalConv, RejectsBadShapes) {
  std::vector<double> in(6), f(4);
  EXPECT_THROW(dilated_causal_conv<double>(in, 3, 2, f, {}, 2, 2, 1), Error);
}

TEST(ResidualBlock, ZeroInputZeroBiasGivesZero) {
  Architecture a = small_arch();
  const Tcn<double> net(a);
  auto params = initialize_params<double>(a, 3);
  const auto& L = net.layout();
  for (const auto& b : L.blocks) {
    std::fill_n(params.begin() + static_cast<long>(b.b1), b.out, 0.0);
    std::fill_n(params.begin() + static_cast<long>(b.b2), b.out, 0.0);
    if (b.has_down) std::fill_n(params.begin() + static_cast<long>(b.bd), b.out, 0.0);
  }
  const auto p = net.prepare(params);
  std::vector<double> zero(a.window * a.features, 0.0);
  for (double v : net.residual_block_forward(p, 0, zero, Mode::Inference)) EXPECT_EQ(v, 0.0);
}

TEST(ResidualBlock, ZeroGainsLeaveReluOfInput) {
  Architecture a = small_arch();
  a.channels = {10, 10, 10};
  const Tcn<double> net(a);
  auto params = initialize_params<double>(a, 4);
  const auto& b = net.layout().blocks[0];
  ASSERT_FALSE(b.has_down);
  std::fill_n(params.begin() + static_cast<long>(b.g1), b.out, 0.0);
  std::fill_n(params.begin() + static_cast<long>(b.g2), b.out, 0.0);
  const auto p = net.prepare(params);
  std::mt19937_64 rng(5);
  const auto x = random_vec(rng, a.window * a.features);
  const auto out = net.residual_block_forward(p, 0, x, Mode::Inference);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(out[i], std::max(0.0, x[i]));
}

TEST(ResidualBlock, MatchesStraightLineReference) {
  Architecture a = small_arch();
  const Tcn<double> net(a);
  const auto params = initialize_params<double>(a, 9);
  const auto p = net.prepare(params);
  const auto& L = net.layout();
  std::mt19937_64 rng(2);
  auto x = random_vec(rng, a.window * a.features);
  for (std::size_t m = 0; m < L.blocks.size(); ++m) {
    const auto& b = L.blocks[m];
    auto slice = [&](std::size_t off, std::size_t n) { return std::vector<double>(params.begin() + static_cast<long>(off), params.begin() + static_cast<long>(off + n)); };
    auto wn = [&](std::size_t v, std::size_t g, std::size_t cin) {
      auto vv = slice(v, b.out * cin * a.kernel);
      const auto gg = slice(g, b.out);
      const std::size_t per = cin * a.kernel;
      for (std::size_t o = 0; o < b.out; ++o) {
        double n = 0.0;
        for (std::size_t i = 0; i < per; ++i) n += vv[o * per + i] * vv[o * per + i];
        for (std::size_t i = 0; i < per; ++i) vv[o * per + i] *= gg[o] / std::sqrt(n);
      }
      return vv;
    };
    auto relu = [](std::vector<double> v) {
      for (auto& e : v) e = std::max(0.0, e);
      return v;
    };
    const auto h1 = relu(nested_loop_conv(x, a.window, b.in, wn(b.v1, b.g1, b.in), slice(b.b1, b.out), b.out, a.kernel, b.dilation));
    const auto h2 = relu(nested_loop_conv(h1, a.window, b.out, wn(b.v2, b.g2, b.out), slice(b.b2, b.out), b.out, a.kernel, b.dilation));
    std::vector<double> skip = x;
    if (b.has_down) skip = nested_loop_conv(x, a.window, b.in, slice(b.wd, b.out * b.in), slice(b.bd, b.out), b.out, 1, 1);
    std::vector<double> want(h2.size());
    for (std::size_t i = 0; i < want.size(); ++i) want[i] = std::max(0.0, h2[i] + skip[i]);
    const auto got = net.residual_block_forward(p, m, x, Mode::Inference);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
    x = want;
  }
}

TEST(ResidualBlock, Causality) {
  Architecture a = small_arch();
  const Tcn<double> net(a);
  const auto p = net.prepare(initialize_params<double>(a, 11));
  std::mt19937_64 rng(3);
  const auto x = random_vec(rng, a.window * a.features);
  const auto base = net.residual_block_forward(p, 0, x, Mode::Inference);
  for (std::size_t t = 0; t < a.window; ++t) {
    auto y = x;
    for (std::size_t c = 0; c < a.features; ++c) y[t * a.features + c] += 0.5;
    const auto out = net.residual_block_forward(p, 0, y, Mode::Inference);
    const std::size_t c_out = net.layout().blocks[0].out;
    for (std::size_t i = 0; i < t * c_out; ++i) EXPECT_EQ(out[i], base[i]);
  }
}

TEST(Forward, ZeroParamsGiveZero) {
  Architecture a = small_arch();
  const Tcn<double> net(a);
  auto params = initialize_params<double>(a, 1);
  const auto& L = net.layout();
  std::fill_n(params.begin() + static_cast<long>(L.head_w), 2 * a.channels.back(), 0.0);
  const auto p = net.prepare(params);
  std::vector<double> x(net.input_size(), 0.0);
  const auto y = net.predict(p, x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(Forward, WeightNormScaleInvariance) {
  Architecture a = small_arch();
  const Tcn<double> net(a);
  const auto params = initialize_params<double>(a, 21);
  auto scaled = params;
  for (const auto& t : net.layout().tensors) {
    if (!t.name.ends_with(".v")) continue;
    for (std::size_t i = 0; i < t.size(); ++i) scaled[t.offset + i] *= 3.7;
  }
  std::mt19937_64 rng(8);
  const auto x = random_vec(rng, net.input_size());
  const auto y0 = net.predict(net.prepare(params), x);
  const auto y1 = net.predict(net.prepare(scaled), x);
  EXPECT_NEAR(y0[0], y1[0], 1e-9);
  EXPECT_NEAR(y0[1], y1[1], 1e-9);

  std::vector<std::array<double, 2>> tgt{{0.3, -0.2}};
  std::vector<std::uint64_t> seeds{5};
  std::vector<double> g0(net.param_count()), g1(net.param_count());
  batch_gradient<double>(net, params, x, tgt, seeds, g0);
  batch_gradient<double>(net, scaled, x, tgt, seeds, g1);
  for (const auto& t : net.layout().tensors) {
    if (!t.name.ends_with(".g")) continue;
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(g0[t.offset + i], g1[t.offset + i], 1e-9);
  }
}

TEST(Forward, FloatMatchesDoubleReference) {
  Architecture a = small_arch();
  a.features = 20;
  const Tcn<double> ref(a);
  const Tcn<float> net(a);
  const auto pd = initialize_params<double>(a, 31);
  std::vector<float> pf(pd.begin(), pd.end());
  std::vector<double> pd_rounded(pf.begin(), pf.end());
  std::mt19937_64 rng(4);
  const auto x = random_vec(rng, net.input_size());
  std::vector<float> xf(x.begin(), x.end());
  std::vector<double> xd(xf.begin(), xf.end());
  const auto yd = ref.predict(ref.prepare(pd_rounded), xd);
  const auto yf = net.predict(net.prepare(pf), xf);
  EXPECT_NEAR(yd[0], yf[0], 1e-5);
  EXPECT_NEAR(yd[1], yf[1], 1e-5);
}

TEST(Loss, NormLoss) {
  std::vector<std::array<double, 2>> p{{3.0, 4.0}}, t{{0.0, 0.0}};
  EXPECT_DOUBLE_EQ(norm_loss(p, t), 5.0);
  EXPECT_DOUBLE_EQ(norm_loss(t, t), 0.0);
  std::vector<std::array<double, 2>> empty;
  EXPECT_THROW(norm_loss(empty, empty), Error);
  const auto g = norm_loss_grad({1.0, 1.0}, {1.0, 1.0}, 1);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Backward, MatchesCentralDifferences) {
  const Architecture a = small_arch();
  const Tcn<double> net(a);
  auto params = initialize_params<double>(a, 77);
  std::mt19937_64 rng(12);
  for (auto& v : params) v += 0.05 * std::uniform_real_distribution<double>(-1, 1)(rng);
  const std::size_t batch = 3;
  const auto x = random_vec(rng, batch * net.input_size());
  std::vector<std::array<double, 2>> y(batch);
  for (auto& t : y) t = {std::uniform_real_distribution<double>(-1, 1)(rng), std::uniform_real_distribution<double>(-1, 1)(rng)};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> grad(net.param_count());
  batch_gradient<double>(net, params, x, y, seeds, grad);

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params;
    p[i] = params[i] + 1e-4;
    const double up = batch_loss(net, p, x, y, seeds);
    p[i] = params[i] - 1e-4;
    const double dn = batch_loss(net, p, x, y, seeds);
    const double num = (up - dn) / 2e-4;
    const double rel = std::abs(num - grad[i]) / std::max(1e-6, std::max(std::abs(num), std::abs(grad[i])));
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Backward, ZeroResidualGivesZeroGradient) {
  const Architecture a = small_arch();
  const Tcn<double> net(a);
  const auto params = initialize_params<double>(a, 5);
  std::mt19937_64 rng(6);
  const auto x = random_vec(rng, net.input_size());
  const auto y = net.predict(net.prepare(params), x);
  std::vector<std::array<double, 2>> t{y};
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> grad(net.param_count(), 1.0);
  batch_gradient<double>(net, params, x, t, seeds, grad, Mode::Inference);
  for (double g : grad) EXPECT_EQ(g, 0.0);
}

TEST(Backward, DeterministicAcrossThreadCounts) {
  const Architecture a = small_arch();
  const Tcn<float> net(a);
  const auto params = initialize_params<float>(a, 5);
  std::mt19937_64 rng(6);
  const std::size_t batch = 37;
  const auto xd = random_vec(rng, batch * net.input_size());
  std::vector<float> x(xd.begin(), xd.end());
  std::vector<std::array<double, 2>> y(batch, {0.5, -0.5});
  std::vector<std::uint64_t> seeds(batch);
  for (std::size_t i = 0; i < batch; ++i) seeds[i] = i * 13;
  std::vector<double> g1(net.param_count()), g4(net.param_count());
  const double l1 = batch_gradient<float>(net, params, x, y, seeds, g1, Mode::Training, 1);
  const double l4 = batch_gradient<float>(net, params, x, y, seeds, g4, Mode::Training, 4);
  EXPECT_EQ(l1, l4);
  EXPECT_EQ(g1, g4);
}

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<float> p{1.0f, -2.0f};
  std::vector<double> g{0.0, 0.0};
  AdamState<float> st(2);
  adam_step<float>(p, g, st, AdamConfig{});
  EXPECT_EQ(p[0], 1.0f);
  EXPECT_EQ(p[1], -2.0f);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepClosedForm) {
  std::vector<double> p{0.5, 0.5, 0.5};
  std::vector<double> g{2.0, -0.01, 1e-9};
  AdamState<double> st(3);
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  adam_step<double>(p, g, st, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    // m_hat = g, v_hat = g^2 after bias correction
    const double want = 0.5 - cfg.learning_rate * g[i] / (std::abs(g[i]) + cfg.epsilon);
    EXPECT_NEAR(p[i], want, 1e-12);
  }
}

TEST(Adam, ShapeMismatch) {
  std::vector<float> p(3);
  std::vector<double> g(2);
  AdamState<float> st(3);
  EXPECT_THROW(adam_step<float>(p, g, st, AdamConfig{}), Error);
}

TEST(Normalize, RoundTrip) {
  FeatureStats st{{1.0, -2.0, 0.5}, {2.0, 0.5, 1.0}};
  std::vector<double> x{0.3, 4.0, -1.0, 7.0, 0.0, 2.5};
  std::vector<double> z(x.size()), back(x.size());
  st.normalize<double>(x, z);
  st.denormalize(z, back);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
  const auto id = FeatureStats::identity(3);
  id.normalize<double>(x, z);
  EXPECT_EQ(z, x);
}

TEST(Init, DeterministicAndGainMatchesNorm) {
  const Architecture a = small_arch();
  const auto p1 = initialize_params<float>(a, 42);
  const auto p2 = initialize_params<float>(a, 42);
  EXPECT_EQ(p1, p2);
  const ParamLayout L(a);
  const auto& b = L.blocks[0];
  const std::size_t per = b.in * a.kernel;
  for (std::size_t o = 0; o < b.out; ++o) {
    double n = 0.0;
    for (std::size_t i = 0; i < per; ++i) n += double(p1[b.v1 + o * per + i]) * p1[b.v1 + o * per + i];
    EXPECT_NEAR(p1[b.g1 + o], std::sqrt(n), 1e-6);
  }
}
