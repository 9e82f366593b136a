#include <gtest/gtest.h>

#include <cmath>

#include "reference_unet.hpp"
#include "flythrough/unet.hpp"

using namespace flythrough;
using Td = Tensor<double>;

namespace {

UNetConfig tiny_config() {
  UNetConfig cfg;
  cfg.channels = {4, 6, 8};
  cfg.time_features = 8;
  cfg.embed_dim = 8;
  return cfg;
}

Td random(int c, int h, int w, Rng& rng) {
  Td t(c, h, w);
  for (auto& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

TEST(TimestepFeatures, SinCosLayout) {
  const auto f = timestep_features<double>(3, 8);
  EXPECT_DOUBLE_EQ(f.data[0], std::sin(3.0));
  EXPECT_DOUBLE_EQ(f.data[4], std::cos(3.0));
  EXPECT_NEAR(f.data[1], std::sin(3.0 * std::pow(10000.0, -0.25)), 1e-12);
}

TEST(UNet, MatchesStraightLineReference) {
  UNet<double> net(tiny_config());
  Rng rng(1, "unet-ref");
  net.init(rng, InitMode::all_random);
  const Td x = random(9, 8, 8, rng);
  for (int t : {1, 17, 250}) {
    const Td out = net.apply(x, t);
    const Td ref = flythrough::testing::reference_unet_forward(net, x, t);
    ASSERT_TRUE(out.same_shape(ref));
    ASSERT_EQ(out.channels, 4);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) max_diff = std::max(max_diff, std::abs(out.data[i] - ref.data[i]));
    EXPECT_LT(max_diff, 1e-5) << "t=" << t;
  }
}

TEST(UNet, FloatMatchesDoubleReference) {
  UNet<double> ref_net(tiny_config());
  Rng rng(2, "unet-float");
  ref_net.init(rng, InitMode::all_random);
  UNet<float> net(tiny_config());
  for (std::size_t p = 0; p < net.parameters().count(); ++p)
    for (std::size_t i = 0; i < net.parameters()[p].size(); ++i)
      net.parameters()[p].value[i] = static_cast<float>(ref_net.parameters()[p].value[i]);
  const Td x = random(9, 8, 8, rng);
  const auto out = net.apply(x.cast<float>(), 5);
  const Td ref = flythrough::testing::reference_unet_forward(ref_net, x, 5);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.data[i], ref.data[i], 1e-3);
}

TEST(UNet, ZeroParametersGiveZeroOutput) {
  UNet<float> net(tiny_config());
  Rng rng(3, "zero");
  Tensor<float> x(9, 8, 8);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  for (float v : net.apply(x, 10).data) EXPECT_EQ(v, 0.0f);
}

TEST(UNet, StandardInitStartsAtZeroOutput) {
  UNet<float> net(tiny_config());
  Rng rng(4, "standard");
  net.init(rng);
  Tensor<float> x(9, 8, 8, 0.3f);
  for (float v : net.apply(x, 10).data) EXPECT_EQ(v, 0.0f);
}

TEST(UNet, Deterministic) {
  UNet<float> a(tiny_config()), b(tiny_config());
  Rng ra(5, "det"), rb(5, "det");
  a.init(ra, InitMode::all_random);
  b.init(rb, InitMode::all_random);
  Tensor<float> x(9, 8, 8, 0.1f);
  EXPECT_EQ(a.apply(x, 42), b.apply(x, 42));
  EXPECT_EQ(a.apply(x, 42), a.apply(x, 42));
}

TEST(UNet, RejectsBadInput) {
  UNet<float> net(tiny_config());
  EXPECT_THROW(net.apply(Tensor<float>(8, 8, 8), 1), std::invalid_argument);
  EXPECT_THROW(net.apply(Tensor<float>(9, 6, 8), 1), std::invalid_argument);
}

TEST(UNet, EveryParameterPassesFiniteDifferenceCheck) {
  UNet<double> net(tiny_config());
  Rng rng(6, "gradcheck");
  net.init(rng, InitMode::all_random);
  const Td x = random(9, 8, 8, rng);
  const Td proj = random(4, 8, 8, rng);
  const auto results = flythrough::testing::gradient_check(net, x, 37, proj, 8, 1e-3);
  ASSERT_EQ(results.size(), net.parameters().count());
  for (const auto& r : results) {
    EXPECT_GT(r.checked, 0) << r.name;
    EXPECT_LT(r.relative_error, 1e-3) << r.name;
  }
}
