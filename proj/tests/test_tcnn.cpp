#include <gtest/gtest.h>

#include <vector>

#include "oracles.hpp"
#include "pcinr/loss.hpp"
#include "pcinr/numerics.hpp"
#include "pcinr/tcnn.hpp"

using namespace pcinr;

namespace {

TcnnConfig toy() {
  TcnnConfig c;
  c.latent_dim = 4;
  c.base_channels = 4;
  c.kernel_len = 5;
  c.stride = 2;
  c.num_upsample_layers = 2;
  c.seed_timesteps = 4;
  return c;
}

}  // namespace

TEST(TcnnCount, DefaultConfig) {
  const TcnnConfig c;
  EXPECT_EQ(tcnn_count_params(c), 798657u);
  Rng r(0);
  EXPECT_EQ(tcnn_count_params(init_tcnn<float>(c, r)), 798657u);
  EXPECT_EQ(c.output_length(), 16384u);
  EXPECT_EQ(c.channels(), (std::vector<std::size_t>{128, 64, 32, 16, 8, 1}));
  EXPECT_EQ(transposed_conv_padding(25, 4), 11u);
}

TEST(TcnnConfig, Validation) {
  TcnnConfig c;
  c.kernel_len = 24;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TcnnConfig{};
  c.num_upsample_layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ConvTranspose, MatchesNaiveScatter) {
  Rng r(1);
  for (std::size_t stride : {1u, 2u, 4u}) {
    for (std::size_t k : {3u, 5u, 25u}) {
      if (k + 1 < stride) continue;
      ConvTransposeLayer<double> layer;
      layer.in_ch = 3;
      layer.kernel.resize(static_cast<Eigen::Index>(3 * k), 5);
      fill_uniform(r, layer.kernel, 1.0);
      layer.bias = Vec<double>::Zero(5);
      for (Eigen::Index i = 0; i < 5; ++i) layer.bias(i) = r.next_double();
      Mat<double> in(3, 9);
      std::vector<std::vector<double>> in_v(3, std::vector<double>(9));
      for (int c = 0; c < 3; ++c) {
        for (int t = 0; t < 9; ++t) in(c, t) = in_v[c][t] = r.next_double() - 0.5;
      }
      const auto got = conv1d_transpose(in, layer, stride);
      const auto want = oracle::naive_conv_transpose(in_v, layer, stride);
      ASSERT_EQ(got.cols(), static_cast<Eigen::Index>(9 * stride));
      for (int c = 0; c < 5; ++c) {
        for (Eigen::Index t = 0; t < got.cols(); ++t) EXPECT_NEAR(got(c, t), want[c][t], 1e-10);
      }
    }
  }
}

TEST(ConvTranspose, RejectsChannelMismatch) {
  ConvTransposeLayer<double> layer;
  layer.in_ch = 2;
  layer.kernel = Tensor2<double>::Zero(6, 1);
  layer.bias = Vec<double>::Zero(1);
  EXPECT_THROW(conv1d_transpose(Mat<double>(Mat<double>::Zero(3, 4)), layer, 2), ShapeError);
}

TEST(TcnnForward, OutputShapeAndRange) {
  Rng r(2);
  const auto p = init_tcnn<double>(toy(), r);
  Vec<double> z(4);
  z << 1, -2, 0.5, 3;
  const auto y = tcnn_forward(p, z);
  EXPECT_EQ(y.size(), 16);
  EXPECT_LE(y.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_THROW(tcnn_forward(p, Vec<double>(Vec<double>::Zero(3))), ShapeError);
}

TEST(TcnnBackward, MatchesFiniteDifferencesThroughLoss) {
  Rng r(3);
  const auto cfg = toy();
  auto p = init_tcnn<double>(cfg, r);
  for (auto& conv : p.convs) {
    for (Eigen::Index i = 0; i < conv.bias.size(); ++i) conv.bias(i) = 0.1 * (r.next_double() - 0.5);
  }
  Vec<double> z(4);
  for (int i = 0; i < 4; ++i) z(i) = r.next_normal();
  const auto target = rng_uniform<double>(r, -0.5, 0.5, 14);  // shorter than the 16-sample output
  auto objective = [&](const TcnnParams<double>& pp, const Vec<double>& zz) {
    const auto y = tcnn_forward(pp, zz);
    return reconstruction_loss<double, double>(std::span<const double>(y.data(), 14), {}, target).breakdown.total;
  };
  TcnnCache<double> cache;
  const auto y = tcnn_forward(p, z, &cache);
  const auto l = reconstruction_loss<double, double>(std::span<const double>(y.data(), 14), {}, target);
  std::vector<double> up(16, 0.0);
  std::copy(l.grad_pred.begin(), l.grad_pred.end(), up.begin());
  auto grad = zeros_like(p);
  const Vec<double> gz = tcnn_backward(cache, p, std::span<const double>(up), grad);

  const double h = 1e-6;
  double worst = 0;
  std::vector<double*> ptrs;
  p.visit([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) ptrs.push_back(t.data() + i);
  });
  std::vector<double> analytic;
  grad.visit([&](const std::string&, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) analytic.push_back(t.data()[i]);
  });
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const double keep = *ptrs[i];
    *ptrs[i] = keep + h;
    const double a = objective(p, z);
    *ptrs[i] = keep - h;
    const double b = objective(p, z);
    *ptrs[i] = keep;
    worst = std::max(worst, oracle::rel_err(analytic[i], (a - b) / (2 * h), 1e-6));
  }
  Vec<double> zz = z;
  for (int k = 0; k < 4; ++k) {
    zz(k) = z(k) + h;
    const double a = objective(p, zz);
    zz(k) = z(k) - h;
    const double b = objective(p, zz);
    zz(k) = z(k);
    worst = std::max(worst, oracle::rel_err(gz(k), (a - b) / (2 * h), 1e-6));
  }
  EXPECT_LT(worst, 1e-4);
}
