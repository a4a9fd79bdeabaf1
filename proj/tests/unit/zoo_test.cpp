#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "wtpgd/graph.hpp"
#include "wtpgd/model.hpp"
#include "wtpgd/oracle_channel.hpp"
#include "wtpgd/zoo.hpp"

using namespace wtpgd;

namespace {

Model random_model(std::uint64_t seed, DefenceSpec defence = {}) {
  Rng rng(seed);
  return Model::initialize(Architecture::mlp({6, 10, 3}), rng).with_defence(defence);
}

const Tensor kPoint = Tensor::vector({0.2, 0.4, 0.6, 0.8, 0.5, 0.3});

ZooConfig small_config() {
  ZooConfig cfg;
  cfg.iterations = 5;
  cfg.coords_per_iter = 3;
  cfg.wt_samples = 2;
  cfg.eot_samples = 3;
  return cfg;
}

ZooConfig degenerate(ZooConfig cfg) {
  cfg.wt_samples = 1;
  cfg.sigma = 0.0;
  return cfg;
}

}  // namespace

TEST(ZooLoss, LogRatioAndHinge) {
  EXPECT_NEAR(zoo_loss(Tensor::vector({0.7, 0.2, 0.1}), 0, 0.0), 1.2528, 5e-5);
  EXPECT_NEAR(zoo_loss(Tensor::vector({0.7, 0.2, 0.1}), 0, 0.0), std::log(3.5), 1e-15);
  EXPECT_EQ(zoo_loss(Tensor::vector({0.1, 0.9}), 0, 0.0), 0.0);
  EXPECT_NEAR(zoo_loss(Tensor::vector({0.1, 0.9}), 0, 1e9), std::log(1.0 / 9.0), 1e-15);
}

TEST(ZooLoss, FloorKeepsLogsFinite) {
  EXPECT_NEAR(zoo_loss(Tensor::vector({1.0, 0.0}), 0, 0.0, 1e-12), -std::log(1e-12), 1e-9);
  EXPECT_TRUE(std::isfinite(zoo_loss(Tensor::vector({0.0, 1.0}), 0, 1e9)));
}

TEST(ZooLoss, RejectsInvalidPosteriors) {
  EXPECT_THROW(zoo_loss(Tensor::vector({0.5, 0.6}), 0, 0.0), Error);
  EXPECT_THROW(zoo_loss(Tensor::vector({1.0}), 0, 0.0), Error);
  EXPECT_THROW(zoo_loss(Tensor::vector({0.5, 0.5}), 2, 0.0), Error);
}

TEST(ZooCoordEstimates, QuadraticIsExactForAnyStep) {
  const double a = 1.7;
  const auto f = [a](const Tensor& x) { return a * x[1] * x[1] + 3.0 * x[0]; };
  const Tensor x = Tensor::vector({0.3, 1.0});
  for (double h : {0.5, 0.1, 1e-2}) {
    const CoordinateEstimate e = zoo_coord_estimates(f, x, 1, h);
    EXPECT_NEAR(e.gradient, 2.0 * a, 1e-9) << "h=" << h;
    EXPECT_NEAR(e.curvature, 2.0 * a, 1e-9) << "h=" << h;
    EXPECT_EQ(e.queries, 3u);
  }
  const double center = f(x);
  EXPECT_EQ(zoo_coord_estimates(f, x, 1, 0.1, &center).queries, 2u);
}

TEST(ZooCoordEstimates, LinearHasZeroCurvature) {
  const auto f = [](const Tensor& x) { return 2.0 * x[0] - x[1]; };
  const CoordinateEstimate e = zoo_coord_estimates(f, Tensor::vector({0.4, 0.4}), 0, 1e-3);
  EXPECT_NEAR(e.gradient, 2.0, 1e-10);
  EXPECT_NEAR(e.curvature, 0.0, 1e-6);
  EXPECT_THROW(zoo_coord_estimates(f, Tensor::vector({0.4, 0.4}), 0, 0.0), Error);
}

TEST(ZooCoordEstimates, MlpMatchesAutodiff) {
  const Model model = random_model(3);
  const ModelOracle oracle(model);
  Rng unused(0);
  const Tensor z = forward(model.graph(), kPoint, unused);
  const std::size_t c0 = argmax(z.values());
  std::size_t other = c0 == 0 ? 1 : 0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    if (c != c0 && z[c] > z[other]) other = c;
  }
  // The unclipped hinge is the logit difference z[c0] - z[other].
  Tensor cot(Shape{z.size()});
  cot[c0] = 1.0;
  cot[other] = -1.0;
  const Tensor g = vjp(model.graph(), kPoint, cot, unused);
  for (std::size_t i = 0; i < kPoint.size(); ++i) {
    const CoordinateEstimate e = zoo_coord_estimates(oracle, kPoint, c0, i, 1e-4, 1e9, Rng(1));
    EXPECT_LE(std::abs(e.gradient - g[i]), 1e-3 * std::max(1.0, std::abs(g[i]))) << "coordinate " << i;
  }
}

TEST(ZooDelta, NewtonStepWithGradientFallback) {
  EXPECT_DOUBLE_EQ(zoo_delta(2.0, -1.0, 0.01), -0.02);
  EXPECT_DOUBLE_EQ(zoo_delta(2.0, 4.0, 0.01), -0.005);
  EXPECT_DOUBLE_EQ(zoo_delta(2.0, 1e-12, 0.01), -0.02);
  EXPECT_EQ(zoo_delta(0.0, 3.0, 0.01), 0.0);
  EXPECT_EQ(zoo_delta(0.0, -3.0, 0.01), 0.0);
}

TEST(WtZooDelta, DegenerateEqualsPlainStep) {
  const Model model = random_model(5);
  const ModelOracle oracle(model);
  ZooConfig cfg = degenerate(ZooConfig{});
  cfg.kappa = 1e9;
  const CoordinateEstimate e = zoo_coord_estimates(oracle, kPoint, 0, 2, cfg.fd_step, cfg.kappa, Rng(0));
  const double plain = zoo_delta(e.gradient, e.curvature, cfg.step_size, cfg.curvature_floor);
  EXPECT_DOUBLE_EQ(wt_zoo_delta(oracle, kPoint, 0, 2, cfg, Rng(4)), plain);
}

TEST(WtZooDelta, LinearLossKeepsTheStepOnAverage) {
  // Posterior softmax(w.x, 0): the unclipped hinge is linear in x.
  const FunctionOracle oracle([](const Tensor& x) {
    return softmax(Tensor::vector({1.5 * x[0] - 0.5 * x[1], 0.0}));
  });
  ZooConfig cfg;
  cfg.kappa = 1e9;
  cfg.wt_samples = 2000;
  cfg.sigma = 0.1;
  const Tensor x = Tensor::vector({0.5, 0.5});
  // Curvature is rounding noise around zero, so both branches give -alpha g.
  EXPECT_NEAR(wt_zoo_delta(oracle, x, 0, 0, cfg, Rng(2)), -cfg.step_size * 1.5, 1e-6);
  EXPECT_NEAR(wt_zoo_delta(oracle, x, 0, 1, cfg, Rng(2)), cfg.step_size * 0.5, 1e-6);
}

TEST(WtZoo, DegenerateIsPlainZoo) {
  for (DefenceSpec defence : {DefenceSpec::none(), DefenceSpec::weight_noise(0.2)}) {
    const Model model = random_model(7, defence);
    const ModelOracle oracle(model);
    for (std::size_t n : {std::size_t{1}, std::size_t{3}}) {
      ZooConfig cfg = degenerate(small_config());
      cfg.eot_samples = n;
      const AttackResult a = zoo(oracle, kPoint, 1, ThreatModel{}, cfg, Rng(8));
      const AttackResult b = wt_zoo(oracle, kPoint, 1, ThreatModel{}, cfg, Rng(8));
      EXPECT_EQ(a.trajectory, b.trajectory);
      EXPECT_EQ(a.loss_trace, b.loss_trace);
      EXPECT_EQ(a.queries, b.queries);
      EXPECT_EQ(a.success, b.success);
    }
  }
}

TEST(WtZoo, ZeroIterationsLeavesInput) {
  const Model model = random_model(9);
  const ModelOracle oracle(model);
  ZooConfig cfg = small_config();
  cfg.iterations = 0;
  Rng unused(0);
  const std::size_t predicted = argmax(forward(model.graph(), kPoint, unused).values());
  for (std::size_t c0 : {std::size_t{0}, std::size_t{1}}) {
    const AttackResult r = wt_zoo(oracle, kPoint, c0, ThreatModel{}, cfg, Rng(1));
    EXPECT_EQ(r.adversarial, kPoint);
    EXPECT_EQ(r.queries, 0u);
    EXPECT_EQ(r.success, predicted != c0);
  }
}

TEST(WtZoo, QueryAccountingIsExact) {
  const ZooConfig cfg = small_config();
  const std::size_t per_draw = 2 * cfg.coords_per_iter + 1;
  const Model plain = random_model(2);
  const Model noisy = random_model(2, DefenceSpec::weight_noise(0.1));
  const ModelOracle plain_oracle(plain), noisy_oracle(noisy);
  EXPECT_EQ(zoo(plain_oracle, kPoint, 0, ThreatModel{}, cfg, Rng(1)).queries, cfg.iterations * per_draw);
  EXPECT_EQ(zoo(noisy_oracle, kPoint, 0, ThreatModel{}, cfg, Rng(1)).queries,
            cfg.iterations * per_draw * cfg.eot_samples);
  EXPECT_EQ(wt_zoo(plain_oracle, kPoint, 0, ThreatModel{}, cfg, Rng(1)).queries,
            cfg.iterations * per_draw * cfg.wt_samples);
  EXPECT_EQ(wt_zoo(noisy_oracle, kPoint, 0, ThreatModel{}, cfg, Rng(1)).queries,
            cfg.iterations * per_draw * cfg.wt_samples * cfg.eot_samples);
}

TEST(WtZoo, IteratesStayContained) {
  const Model model = random_model(4, DefenceSpec::weight_noise(0.3));
  const ModelOracle oracle(model);
  ZooConfig cfg = small_config();
  cfg.step_size = 0.5;
  for (Norm norm : {Norm::Linf, Norm::L2}) {
    const ThreatModel tm{norm, 0.05};
    const AttackResult r = wt_zoo(oracle, kPoint, 0, tm, cfg, Rng(3));
    for (const Tensor& it : r.trajectory) {
      const double d = norm == Norm::Linf ? linf_distance(it, kPoint) : l2_distance(it, kPoint);
      EXPECT_LE(d, tm.epsilon + 1e-9);
      EXPECT_TRUE(in_unit_box(it));
    }
  }
}

TEST(WtZoo, CoordinatePicksReproducibleAndDistinct) {
  const Rng rng(12);
  const auto a = zoo_coordinates(50, 10, rng, 3);
  EXPECT_EQ(a, zoo_coordinates(50, 10, rng, 3));
  EXPECT_NE(a, zoo_coordinates(50, 10, rng, 4));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_EQ(zoo_coordinates(4, 10, rng, 0).size(), 4u);
}

TEST(ModelOracle, FixedDrawMatchesOneStochasticQuery) {
  const Model model = random_model(6, DefenceSpec::weight_noise(0.4));
  const ModelOracle oracle(model);
  const Rng draw(21);
  const auto fixed = oracle.fixed_draw(draw);
  Rng r = draw;
  EXPECT_EQ(fixed(kPoint), oracle.posterior(kPoint, r));
  EXPECT_EQ(fixed(kPoint), fixed(kPoint));
}

TEST(OracleProtocol, ValuesRoundTripExactly) {
  const Tensor t = Tensor::vector({0.1, 1.0 / 3.0, 1e-300, 0.0});
  EXPECT_EQ(parse_values(format_values(t)), t);
  EXPECT_EQ(parse_values(" 0.5 ,0.25\r"), Tensor::vector({0.5, 0.25}));
  EXPECT_THROW(parse_values("0.5,,0.1"), Error);
  EXPECT_THROW(parse_values("0.5,abc"), Error);
}

TEST(OracleProtocol, ServedModelMatchesInProcessOracle) {
  const Model model = random_model(10, DefenceSpec::weight_noise(0.2));
  const Rng rng(4);
  std::stringstream requests;
  requests << format_values(kPoint) << "\n\n" << format_values(kPoint) << '\n';
  std::stringstream responses;
  serve_oracle(model, requests, responses, rng);
  const ModelOracle local(model);
  std::string line;
  for (std::uint64_t r = 0; r < 2; ++r) {
    ASSERT_TRUE(std::getline(responses, line));
    Rng draw = rng.derive(r);
    EXPECT_EQ(parse_values(line), local.posterior(kPoint, draw));
  }
  EXPECT_FALSE(std::getline(responses, line));
}

TEST(OracleProtocol, ChannelOracleOverStreams) {
  std::stringstream replies("0.25,0.75\n");
  std::stringstream sent;
  StreamChannel channel(replies, sent);
  const ChannelOracle oracle(channel, false, Shape{2});
  Rng unused(0);
  EXPECT_EQ(oracle.posterior(Tensor::vector({0.5, 1.0}), unused), Tensor::vector({0.25, 0.75}));
  EXPECT_EQ(sent.str(), "0.5,1\n");
  EXPECT_THROW(oracle.posterior(Tensor::vector({0.5, 1.0}), unused), Error);
  EXPECT_THROW(oracle.posterior(Tensor::vector({0.5}), unused), ShapeError);
}

TEST(OracleProtocol, ProcessChannelTalksToAChild) {
  ProcessChannel channel("while read line; do echo 0.5,0.5; done");
  const ChannelOracle oracle(channel, false, Shape{3});
  ZooConfig cfg = small_config();
  cfg.iterations = 2;
  const AttackResult r = zoo(oracle, Tensor::vector({0.1, 0.2, 0.3}), 0, ThreatModel{}, cfg, Rng(1));
  EXPECT_EQ(r.queries, 2 * (2 * cfg.coords_per_iter + 1));
  EXPECT_EQ(r.adversarial, Tensor::vector({0.1, 0.2, 0.3}));
}
