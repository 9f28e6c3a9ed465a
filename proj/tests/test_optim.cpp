#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "pcinr/numerics.hpp"
#include "pcinr/optim.hpp"

using namespace pcinr;

namespace {

struct ScalarMoments {
  double m = 0, v = 0;
};

// Textbook single-parameter updates written out independently.
double adam_ref(double theta, double g, ScalarMoments& s, int t, double lr) {
  s.m = 0.9 * s.m + 0.1 * g;
  s.v = 0.999 * s.v + 0.001 * g * g;
  const double mh = s.m / (1 - std::pow(0.9, t));
  const double vh = s.v / (1 - std::pow(0.999, t));
  return theta - lr * mh / (std::sqrt(vh) + 1e-8);
}

double adabelief_ref(double theta, double g, ScalarMoments& s, int t, double lr) {
  s.m = 0.9 * s.m + 0.1 * g;
  s.v = 0.999 * s.v + 0.001 * (g - s.m) * (g - s.m) + 1e-8;
  const double mh = s.m / (1 - std::pow(0.9, t));
  const double sh = s.v / (1 - std::pow(0.999, t));
  return theta - lr * mh / (std::sqrt(sh) + 1e-8);
}

template <class F>
void check_against(OptimizerKind kind, F ref) {
  Rng rng(3);
  std::vector<double> p = rng_uniform<double>(rng, -1, 1, 5), q = p;
  std::vector<ScalarMoments> moments(p.size());
  auto state = make_optim_state<double>(kind, 1e-2);
  for (int t = 1; t <= 50; ++t) {
    const auto g = rng_uniform<double>(rng, -2, 2, p.size());
    std::vector<std::span<double>> ps{std::span<double>(p)};
    std::vector<std::span<const double>> gs{std::span<const double>(g)};
    optimizer_step<double>(state, ps, gs);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = ref(q[i], g[i], moments[i], t, 1e-2);
    for (std::size_t i = 0; i < q.size(); ++i) ASSERT_NEAR(p[i], q[i], 1e-13) << "step " << t;
  }
  EXPECT_EQ(state.step, 50);
}

}  // namespace

TEST(Adam, MatchesScalarReference) { check_against(OptimizerKind::adam, adam_ref); }

TEST(AdaBelief, MatchesScalarReference) { check_against(OptimizerKind::adabelief, adabelief_ref); }

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -1.0};
  const std::vector<double> g{3.0, -0.5};
  auto s = make_optim_state<double>(OptimizerKind::adam, 0.1);
  std::vector<std::span<double>> ps{std::span<double>(p)};
  std::vector<std::span<const double>> gs{std::span<const double>(g)};
  adam_step<double>(s, ps, gs);
  EXPECT_NEAR(p[0], 0.9, 1e-8);
  EXPECT_NEAR(p[1], -0.9, 1e-8);
}

TEST(AdaBelief, ConstantGradientTakesLargeSteps) {
  std::vector<double> p{0.0};
  const std::vector<double> g{1.0};
  auto s = make_optim_state<double>(OptimizerKind::adabelief, 1e-3);
  std::vector<std::span<double>> ps{std::span<double>(p)};
  std::vector<std::span<const double>> gs{std::span<const double>(g)};
  for (int i = 0; i < 20; ++i) adabelief_step<double>(s, ps, gs);
  auto a = make_optim_state<double>(OptimizerKind::adam, 1e-3);
  std::vector<double> q{0.0};
  std::vector<std::span<double>> qs{std::span<double>(q)};
  for (int i = 0; i < 20; ++i) adam_step<double>(a, qs, gs);
  EXPECT_LT(p[0], q[0]);
}

TEST(Optimizer, RejectsMismatchAndNonFinite) {
  std::vector<double> p(3, 0.0);
  std::vector<double> g(2, 0.0);
  auto s = make_optim_state<double>(OptimizerKind::adam, 1e-3);
  std::vector<std::span<double>> ps{std::span<double>(p)};
  std::vector<std::span<const double>> gs{std::span<const double>(g)};
  EXPECT_THROW(optimizer_step<double>(s, ps, gs), ShapeError);
  std::vector<double> bad{0.0, std::numeric_limits<double>::infinity(), 0.0};
  std::vector<std::span<const double>> bs{std::span<const double>(bad)};
  EXPECT_THROW(optimizer_step<double>(s, ps, bs), NumericError);
  EXPECT_EQ(s.step, 0);
}

TEST(Optimizer, ParseNames) {
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::adam);
  EXPECT_EQ(parse_optimizer("adabelief"), OptimizerKind::adabelief);
  EXPECT_THROW(parse_optimizer("sgd"), ConfigError);
}
