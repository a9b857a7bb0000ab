#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flsnn/flsnn.hpp"
#include "oracles/nn_oracles.hpp"

using namespace flsnn;

TEST(AnnForward, ZeroWeightsGiveUniformSoftmax) {
  MlpTopology topo{{6, 5, 7}, ModelKind::dense};
  ParameterVector<double> params(make_layout(topo));
  const std::vector<float> x{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  const auto act = ann_forward(params, x, topo);
  for (double z : act.logits()) EXPECT_EQ(z, 0.0);
  std::vector<double> grad(params.size(), 0.0);
  EXPECT_NEAR(ann_backward(act, params, topo, 3, std::span<double>(grad)), std::log(7.0), 1e-12);
}

TEST(AnnBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> width(1, 7), layers(1, 3);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  for (int trial = 0; trial < 25; ++trial) {
    MlpTopology topo{{}, ModelKind::dense};
    const std::size_t L = layers(rng);
    for (std::size_t l = 0; l <= L; ++l) topo.layer_sizes.push_back(width(rng));
    topo.layer_sizes.back() = std::max<std::size_t>(topo.layer_sizes.back(), 2);
    ParameterVector<double> params(make_layout(topo));
    for (auto& v : params.values) v = w(rng);
    std::vector<float> x(topo.input_dim());
    for (auto& v : x) v = u01(rng);
    const std::size_t label = std::uniform_int_distribution<std::size_t>(0, topo.output_dim() - 1)(rng);

    std::vector<double> grad(params.size(), 0.0);
    ann_backward(ann_forward(params, x, topo), params, topo, label, std::span<double>(grad));
    const auto fd = oracle::finite_difference_grad(params, topo, x, label);
    EXPECT_LT(oracle::relative_error(grad, fd), 1e-4) << "trial " << trial;
  }
}

TEST(AnnBackward, IdentityNetOnOneHotInput) {
  MlpTopology topo{{4, 4}, ModelKind::dense};
  ParameterVector<double> params(make_layout(topo));
  for (std::size_t i = 0; i < 4; ++i) params.values[i * 4 + i] = 1.0;
  const std::vector<float> x{0.0f, 0.0f, 1.0f, 0.0f};
  const std::size_t label = 1;
  std::vector<double> grad(params.size(), 0.0);
  const double loss = ann_backward(ann_forward(params, x, topo), params, topo, label, std::span<double>(grad));
  const double z = 3.0 + std::exp(1.0);
  EXPECT_NEAR(loss, std::log(z), 1e-12);
  for (std::size_t i = 0; i < 4; ++i) {
    const double soft = (i == 2 ? std::exp(1.0) : 1.0) / z - (i == label ? 1.0 : 0.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(grad[i * 4 + j], j == 2 ? soft : 0.0, 1e-14);
    EXPECT_NEAR(grad[16 + i], soft, 1e-14);
  }
}

TEST(AnnForward, ShapeErrors) {
  MlpTopology topo{{3, 2}, ModelKind::dense};
  ParameterVector<double> params(make_layout(topo));
  const std::vector<float> bad(2, 0.0f);
  EXPECT_THROW(ann_forward(params, bad, topo), ShapeError);
  MlpTopology spiking{{3, 2}, ModelKind::spiking};
  ParameterVector<double> sp(make_layout(spiking));
  const std::vector<float> ok(3, 0.0f);
  EXPECT_THROW(ann_forward(sp, ok, topo), ShapeError);
}
