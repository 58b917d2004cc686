#include "vrae/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace vrae;

namespace {

// Hand-rolled scalar Adam in double.
struct ScalarAdam {
  double lr, b1, b2, eps;
  double m = 0, v = 0;
  int t = 0;
  double step(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

Parameter<float> make_param(std::vector<float> values, std::vector<float> grads) {
  const Shape s{values.size(), 1, 1, 1};
  Parameter<float> p;
  p.value = Tensor4(s, std::move(values));
  p.grad = Tensor4(s, std::move(grads));
  p.rank = 1;
  return p;
}

}  // namespace

TEST(Adam, DefaultsMatchConvention) {
  AdamHyperparams h;
  EXPECT_EQ(h.lr, 1e-4);
  EXPECT_EQ(h.beta1, 0.9);
  EXPECT_EQ(h.beta2, 0.999);
  EXPECT_EQ(h.epsilon, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParametersButAdvancesStep) {
  auto p = make_param({0.5f, -1.25f, 3.0f}, {0, 0, 0});
  const auto before = p.value;
  AdamState state;
  std::vector<NamedParameter<float>> params{{"w", &p}};
  adam_step(params, state);
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(state.step, 1u);
  adam_step(params, state);
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  auto p = make_param({1.0f, 1.0f, 1.0f, 1.0f}, {3.0f, -0.5f, 1e-2f, -200.0f});
  AdamState state;
  state.hyper.lr = 1e-3;
  std::vector<NamedParameter<float>> params{{"w", &p}};
  adam_step(params, state);
  const float expected[] = {1.0f - 1e-3f, 1.0f + 1e-3f, 1.0f - 1e-3f, 1.0f + 1e-3f};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.value[i], expected[i], 1e-6);
}

TEST(Adam, ThreeStepsMatchScalarOracle) {
  // Magnitudes below 0.5 keep a float ulp under the 1e-7 tolerance.
  const std::vector<float> init{0.3f, -0.45f, 0.11f, 0.0f, 0.25f};
  const std::vector<float> grad{0.2f, -1.5f, 0.01f, 4.0f, -0.03f};
  auto p = make_param(init, grad);
  AdamState state;
  std::vector<NamedParameter<float>> params{{"w", &p}};
  std::vector<ScalarAdam> oracle(init.size(), ScalarAdam{1e-4, 0.9, 0.999, 1e-8});
  std::vector<double> want(init.begin(), init.end());
  for (int t = 0; t < 3; ++t) {
    adam_step(params, state);
    for (std::size_t i = 0; i < init.size(); ++i) want[i] = static_cast<float>(oracle[i].step(want[i], grad[i]));
  }
  for (std::size_t i = 0; i < init.size(); ++i) EXPECT_NEAR(p.value[i], want[i], 1e-7) << i;
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, MomentsStartAtZeroAndHaveParameterShape) {
  auto p = make_param({1.0f, 2.0f}, {0.5f, 0.5f});
  AdamState state;
  std::vector<NamedParameter<float>> params{{"w", &p}};
  adam_step(params, state);
  ASSERT_EQ(state.first_moment.at("w").shape(), p.value.shape());
  EXPECT_NEAR(state.first_moment.at("w")[0], 0.05, 1e-7);
  EXPECT_NEAR(state.second_moment.at("w")[0], 0.00025, 0.00025 * 1e-4);
}

TEST(Adam, MissingGradientRejectedWithoutSideEffects) {
  auto good = make_param({1.0f}, {1.0f});
  Parameter<float> bad;
  bad.value = Tensor4({2, 1, 1, 1}, 1.0f);
  AdamState state;
  std::vector<NamedParameter<float>> params{{"good", &good}, {"bad", &bad}};
  EXPECT_THROW(adam_step(params, state), std::invalid_argument);
  EXPECT_EQ(good.value[0], 1.0f);
  EXPECT_EQ(state.step, 0u);
}
