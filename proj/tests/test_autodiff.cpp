#include <gtest/gtest.h>

#include <cmath>

#include "hyperadapters/adam.hpp"
#include "hyperadapters/grad_check.hpp"
#include "hyperadapters/ops.hpp"

namespace ha = hyperadapters;
namespace ops = hyperadapters::ops;
using ha::Tape;
using ha::Tensor;
using ha::Var;

namespace {

// Contracts a tensor with fixed pseudo-random weights so every output
// coordinate contributes a distinct gradient.
Var weighted_sum(const Var& x, std::uint64_t seed) {
  ha::Rng rng(seed);
  return ops::sum(ops::mul(x, x.tape().constant(ha::random_normal(x.shape(), 1.0, rng))));
}

constexpr double kTol = 1e-4;

}  // namespace

TEST(Primitives, ReluZeroesNegatives) {
  Tape t;
  auto y = ops::relu(t.constant(Tensor::vector({-2, 0, 3})));
  EXPECT_EQ(y.value().storage(), (std::vector<double>{0, 0, 3}));
}

TEST(Primitives, ConcatJoinsVectors) {
  Tape t;
  std::vector<Var> parts{t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({3}))};
  auto y = ops::concat(parts);
  EXPECT_EQ(y.value().storage(), (std::vector<double>{1, 2, 3}));
}

TEST(Primitives, MatmulShapeRule) {
  Tape t;
  auto y = ops::matmul(t.constant(Tensor({2, 3}, 1.0)), t.constant(Tensor({3, 1}, 1.0)));
  EXPECT_EQ(y.shape(), (ha::Shape{2, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 3.0);
}

TEST(Primitives, ShapeMismatchNamesBothShapes) {
  Tape t;
  try {
    ops::matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3})));
    FAIL() << "expected ShapeError";
  } catch (const ha::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
  EXPECT_THROW(ops::add(t.constant(Tensor({2})), t.constant(Tensor({3}))), ha::ShapeError);
}

TEST(LayerNorm, ConstantInputMapsToBias) {
  Tape t;
  auto y = ops::layer_norm(t.constant(Tensor::vector({1, 1, 1})), t.constant(Tensor::vector({3, -2, 5})),
                           t.constant(Tensor::vector({0, 0, 0})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitScaleAndGain) {
  Tape t;
  const double eps = 1e-14;
  auto z = t.constant(Tensor::vector({1, -1}));
  auto beta = t.constant(Tensor::vector({0, 0}));
  auto y1 = ops::layer_norm(z, t.constant(Tensor::vector({1, 1})), beta, eps);
  EXPECT_NEAR(y1.value()[0], 1.0, 1e-12);
  EXPECT_NEAR(y1.value()[1], -1.0, 1e-12);
  auto y2 = ops::layer_norm(z, t.constant(Tensor::vector({2, 2})), beta, eps);
  EXPECT_NEAR(y2.value()[0], 2.0, 1e-12);
  EXPECT_NEAR(y2.value()[1], -2.0, 1e-12);
}

TEST(LayerNorm, RejectsLengthMismatch) {
  Tape t;
  EXPECT_THROW(ops::layer_norm(t.constant(Tensor::vector({1, 2, 3})), t.constant(Tensor::vector({1, 1})),
                               t.constant(Tensor::vector({0, 0}))),
               ha::ShapeError);
}

TEST(GradCheck, Polynomial) {
  auto res = ha::grad_check([](Tape&, std::span<const Var> x) { return ops::sum(ops::mul(x[0], x[0])); },
                            {Tensor::vector({3.0})});
  EXPECT_NEAR(res.analytic, 6.0, 1e-12);
  EXPECT_LT(res.max_relative_error, 1e-6);
}

TEST(GradCheck, ConstantFunctionPassesAgainstFloor) {
  auto res = ha::grad_check(
      [](Tape& t, std::span<const Var> x) {
        return ops::add(ops::scale(ops::sum(x[0]), 0.0), t.constant(Tensor::scalar(4.0)));
      },
      {Tensor::vector({1.0, 2.0})});
  EXPECT_EQ(res.analytic, 0.0);
  EXPECT_LT(res.max_relative_error, 1e-6);
}

TEST(GradCheck, NonFiniteProbeThrows) {
  EXPECT_THROW(ha::grad_check(
                   [](Tape& t, std::span<const Var> x) {
                     return ops::add(x[0], t.constant(Tensor::scalar(std::nan(""))));
                   },
                   {Tensor::vector({1.0})}),
               std::domain_error);
}

class PrimitiveGradients : public ::testing::TestWithParam<int> {};

// Randomized shapes up to 16x16; each primitive contracted with random weights.
TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  ha::Rng rng(1000 + GetParam());
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
  auto rnd = [&](ha::Shape s) { return ha::random_normal(std::move(s), 1.0, rng); };

  struct Case {
    const char* name;
    std::vector<Tensor> inputs;
    ha::ScalarFunction f;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", {rnd({m, k}), rnd({k, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::matmul(x[0], x[1]), 1); }});
  cases.push_back({"matmul_nt", {rnd({m, k}), rnd({n, k})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::matmul_nt(x[0], x[1]), 2); }});
  cases.push_back({"add", {rnd({m, n}), rnd({m, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::add(x[0], x[1]), 3); }});
  cases.push_back({"add_bias", {rnd({m, n}), rnd({n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::add_bias(x[0], x[1]), 4); }});
  cases.push_back({"mul", {rnd({m, n}), rnd({m, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::mul(x[0], x[1]), 5); }});
  cases.push_back({"scale", {rnd({m, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::scale(x[0], -1.7), 6); }});
  cases.push_back({"relu", {rnd({m, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::relu(x[0]), 7); }});
  cases.push_back({"concat", {rnd({m, k}), rnd({m, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::concat(x), 8); }});
  cases.push_back({"concat_rows", {rnd({m, k}), rnd({n, k})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::concat_rows(x), 9); }});
  cases.push_back({"reshape", {rnd({m, n})}, [m, n](Tape&, std::span<const Var> x) {
                     return weighted_sum(ops::reshape(x[0], {n * m}), 10);
                   }});
  cases.push_back({"gather_rows", {rnd({m, n})}, [m](Tape&, std::span<const Var> x) {
                     std::vector<std::int64_t> idx{0, static_cast<std::int64_t>(m - 1), -1, 0};
                     return weighted_sum(ops::gather_rows(x[0], idx), 11);
                   }});
  cases.push_back({"layer_norm", {rnd({m, n + 1}), rnd({n + 1}), rnd({n + 1})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::layer_norm(x[0], x[1], x[2]), 12); }});
  cases.push_back({"softmax", {rnd({m, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::softmax(x[0]), 13); }});
  cases.push_back({"log_softmax", {rnd({m, n})},
                   [](Tape&, std::span<const Var> x) { return weighted_sum(ops::log_softmax(x[0]), 14); }});
  cases.push_back({"mean", {rnd({m, n})}, [](Tape&, std::span<const Var> x) {
                     return ops::mul(ops::mean(x[0]), ops::mean(x[0]));
                   }});
  cases.push_back({"variance", {rnd({m, n})}, [](Tape&, std::span<const Var> x) { return ops::variance(x[0]); }});
  cases.push_back({"label_smoothed_ce", {rnd({m, n + 1})}, [m, n](Tape&, std::span<const Var> x) {
                     std::vector<std::int64_t> tgt(m);
                     for (std::size_t i = 0; i < m; ++i) tgt[i] = (i % 3 == 2) ? -1 : static_cast<std::int64_t>(i % (n + 1));
                     tgt[0] = 0;
                     return ops::label_smoothed_cross_entropy(x[0], tgt, 0.1);
                   }});
  const std::size_t heads = 2, d = 2 * ((k + 1) / 2 + 1), B = 2, Tq = (m % 5) + 1, Tk = (n % 5) + 2;
  for (bool causal : {false, true}) {
    const std::size_t tk = causal ? Tq : Tk;
    cases.push_back({causal ? "attention_causal" : "attention", {rnd({B * Tq, d}), rnd({B * tk, d}), rnd({B * tk, d})},
                     [=](Tape&, std::span<const Var> x) {
                       ops::AttentionLayout layout{B, Tq, tk, heads, causal, {tk, tk > 1 ? tk - 1 : 1}};
                       return weighted_sum(ops::attention(x[0], x[1], x[2], layout), 15);
                     }});
  }

  for (auto& c : cases) {
    auto res = ha::grad_check(c.f, c.inputs);
    EXPECT_LT(res.max_relative_error, kTol) << c.name << " shape m=" << m << " k=" << k << " n=" << n
                                            << " analytic=" << res.analytic << " numeric=" << res.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGradients, ::testing::Range(0, 6));

TEST(Backward, DiamondAccumulatesAdditively) {
  auto g = [](const Var& x) { return ops::sum(ops::mul(ops::relu(x), x)); };
  Tensor x0 = Tensor::vector({0.5, -1.0, 2.0});
  Tape t1;
  auto x1 = t1.leaf(x0);
  t1.backward(g(x1));
  Tape t2;
  auto x2 = t2.leaf(x0);
  auto shared = g(x2);
  t2.backward(ops::add(shared, shared));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x2.grad()[i], 2.0 * x1.grad()[i]);
}

TEST(Backward, VisitsEachNodeOnce) {
  Tape t;
  auto x = t.leaf(Tensor::vector({1, 2}));
  auto y = ops::relu(x);
  auto z = ops::add(y, y);
  t.backward(ops::sum(z));
  // relu, add, sum each run their rule exactly once
  EXPECT_EQ(t.backward_visits(), 3u);
}

TEST(Backward, Deterministic) {
  auto run = [] {
    ha::Rng rng(7);
    Tape t;
    auto a = t.leaf(ha::random_normal({5, 4}, 1.0, rng));
    auto b = t.leaf(ha::random_normal({4, 3}, 1.0, rng));
    auto out = weighted_sum(ops::softmax(ops::matmul(a, b)), 3);
    t.backward(out);
    return std::make_pair(out.value(), a.grad());
  };
  auto r1 = run(), r2 = run();
  EXPECT_TRUE(r1.first.identical(r2.first));
  EXPECT_TRUE(r1.second.identical(r2.second));
}

TEST(LabelSmoothing, UniformLogitsGiveLogV) {
  for (double alpha : {0.0, 0.1, 0.5}) {
    Tape t;
    auto loss = ops::label_smoothed_cross_entropy(t.constant(Tensor({3, 7}, 0.25)), std::vector<std::int64_t>{1, 4, 6},
                                                  alpha);
    EXPECT_NEAR(loss.value().item(), std::log(7.0), 1e-12);
  }
}

TEST(LabelSmoothing, ConfidentCorrectPredictionApproachesZero) {
  Tape t;
  Tensor logits({1, 4}, 0.0);
  logits[2] = 60.0;
  auto loss = ops::label_smoothed_cross_entropy(t.constant(logits), std::vector<std::int64_t>{2}, 0.0);
  EXPECT_LT(loss.value().item(), 1e-20);
}

TEST(LabelSmoothing, MatchesHandComputedValue) {
  // p(gold) = 0.9, the other nine share 0.1; logits are log-probabilities.
  const double alpha = 0.1, V = 10.0;
  Tensor logits({1, 10}, std::log(0.1 / 9.0));
  logits[3] = std::log(0.9);
  Tape t;
  auto loss = ops::label_smoothed_cross_entropy(t.constant(logits), std::vector<std::int64_t>{3}, alpha);
  const double q_gold = 1.0 - alpha + alpha / V, q_other = alpha / V;
  const double expected = -q_gold * std::log(0.9) - 9.0 * q_other * std::log(0.1 / 9.0);
  EXPECT_NEAR(expected, 0.5008610, 1e-6);
  EXPECT_NEAR(loss.value().item(), expected, 1e-12);
}

TEST(LabelSmoothing, RejectsAllPadding) {
  Tape t;
  EXPECT_THROW(ops::label_smoothed_cross_entropy(t.constant(Tensor({2, 3})), std::vector<std::int64_t>{-1, -1}, 0.1),
               std::invalid_argument);
}

namespace {

// Textbook scalar Adam, written independently of adam_step.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double update(double w, double g, double lr, double b1, double b2, double eps) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, t));
    double vh = v / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = std::make_shared<ha::Parameter>("w", Tensor::vector({1.5, -2.0}));
  ha::ParameterList params{p};
  ha::AdamState state(params);
  ha::adam_step(params, state, 0.1);
  EXPECT_EQ(p->value()[0], 1.5);
  EXPECT_EQ(p->value()[1], -2.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  auto p = std::make_shared<ha::Parameter>("w", Tensor::vector({0.0, 0.0}));
  p->grad()[0] = 3.0;
  p->grad()[1] = -0.5;
  ha::ParameterList params{p};
  ha::AdamState state(params);
  ha::adam_step(params, state, 0.01);
  EXPECT_NEAR(p->value()[0], -0.01, 1e-7);
  EXPECT_NEAR(p->value()[1], 0.01, 1e-7);
}

TEST(Adam, TwoStepsMatchScalarReference) {
  auto p = std::make_shared<ha::Parameter>("w", Tensor::vector({0.3}));
  ha::ParameterList params{p};
  ha::AdamState state(params, {0.9, 0.98, 1e-6});
  ScalarAdam ref;
  double w = 0.3;
  for (int i = 0; i < 2; ++i) {
    p->grad()[0] = 1.0;
    ha::adam_step(params, state, 0.1);
    w = ref.update(w, 1.0, 0.1, 0.9, 0.98, 1e-6);
    EXPECT_NEAR(p->value()[0], w, 1e-12);
  }
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, NonFiniteGradientRejected) {
  auto p = std::make_shared<ha::Parameter>("w", Tensor::vector({1.0}));
  p->grad()[0] = std::numeric_limits<double>::infinity();
  ha::ParameterList params{p};
  ha::AdamState state(params);
  EXPECT_THROW(ha::adam_step(params, state, 0.1), std::domain_error);
  EXPECT_EQ(p->value()[0], 1.0);
  EXPECT_EQ(state.step, 0u);
}

TEST(Parameters, GradientAccumulatesIntoSharedParameter) {
  auto p = std::make_shared<ha::Parameter>("w", Tensor::vector({2.0}));
  Tape t;
  auto a = t.param(p);
  auto b = t.param(p);
  t.backward(ops::sum(ops::mul(a, b)));
  EXPECT_DOUBLE_EQ(p->grad()[0], 4.0);
}
