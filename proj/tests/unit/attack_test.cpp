#include <gtest/gtest.h>

#include <cmath>

#include "wtpgd/gradient_attacks.hpp"
#include "wtpgd/graph.hpp"
#include "wtpgd/model.hpp"
#include "wtpgd/objective.hpp"

using namespace wtpgd;

namespace {

// Two logits (w.x, 0): class 0 plays the role of y = +1.
Model margin_model(std::vector<double> w, DefenceSpec defence = {}) {
  const std::size_t d = w.size();
  std::vector<double> weight = w;
  weight.resize(2 * d, 0.0);
  return Model(Architecture::mlp({d, 2}), {Tensor(Shape{2, d}, weight), Tensor(Shape{2})}, defence);
}

Model random_model(std::uint64_t seed, DefenceSpec defence = {}) {
  Rng rng(seed);
  return Model::initialize(Architecture::mlp({6, 12, 3}), rng).with_defence(defence);
}

FunctionLoss square_loss() {
  return FunctionLoss([](const Tensor& x) { return x[0] * x[0]; },
                      [](const Tensor& x) { return Tensor::vector({2.0 * x[0]}); });
}

FunctionLoss linear_loss(std::vector<double> w) {
  return FunctionLoss(
      [w](const Tensor& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
        return s;
      },
      [w](const Tensor&) { return Tensor::vector(w); });
}

bool contained(const Tensor& adv, const Tensor& x, const ThreatModel& tm) {
  const double dist = tm.norm == Norm::Linf ? linf_distance(adv, x) : l2_distance(adv, x);
  return dist <= tm.epsilon + 1e-9 && in_unit_box(adv);
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "coordinate " << i;
}

// Logit margin z0 - z1 of one draw: linear in the weights, so its input
// gradient is an affine function of the weight noise.
class MarginLoss final : public LossFunction {
 public:
  explicit MarginLoss(const Model& model) : model_(&model) {}
  double value(const Tensor& x, Rng& rng) const override { return value_and_gradient(x, rng).value; }
  ValueGradient value_and_gradient(const Tensor& x, Rng& rng) const override {
    const Graph g = inject_weight_noise(*model_, rng);
    Rng unused(0);
    const Tensor z = forward(g, x, unused);
    return {z[0] - z[1], vjp(g, x, Tensor::vector({1.0, -1.0}), unused)};
  }
  bool stochastic() const override { return true; }

 private:
  const Model* model_;
};

AttackConfig degenerate_config() {
  AttackConfig cfg;
  cfg.wt_samples = 1;
  cfg.eot_samples = 1;
  cfg.sigma = 0.0;
  return cfg;
}

}  // namespace

TEST(Project, LinfClipsIntoBallAndBox) {
  const ThreatModel tm{Norm::Linf, 0.1};
  EXPECT_NEAR(project(Tensor::vector({0.7}), Tensor::vector({0.5}), tm)[0], 0.6, 1e-15);
  const Tensor inside = Tensor::vector({0.55, 0.45});
  EXPECT_EQ(project(inside, Tensor::vector({0.5, 0.5}), tm), inside);
  EXPECT_EQ(project(Tensor::vector({-0.05}), Tensor::vector({0.0}), tm), Tensor::vector({0.0}));
}

TEST(Project, L2ScalesRadiallyThenClamps) {
  const Tensor out = project(Tensor::vector({3.0, 4.0}), Tensor::vector({0.0, 0.0}), ThreatModel{Norm::L2, 1.0});
  EXPECT_NEAR(out[0], 0.6, 1e-15);
  EXPECT_NEAR(out[1], 0.8, 1e-15);
  const Tensor clamped = project(Tensor::vector({-3.0, 4.0}), Tensor::vector({0.0, 0.0}), ThreatModel{Norm::L2, 1.0});
  EXPECT_EQ(clamped[0], 0.0);
  EXPECT_NEAR(clamped[1], 0.8, 1e-15);
}

TEST(Project, Idempotent) {
  Rng rng(5);
  for (Norm norm : {Norm::Linf, Norm::L2}) {
    const ThreatModel tm{norm, 0.2};
    for (int trial = 0; trial < 50; ++trial) {
      Tensor x(Shape{5}), c(Shape{5});
      for (std::size_t i = 0; i < 5; ++i) {
        x[i] = rng.uniform();
        c[i] = rng.uniform(-0.5, 1.5);
      }
      const Tensor once = project(c, x, tm);
      const Tensor twice = project(once, x, tm);
      if (norm == Norm::Linf) {
        EXPECT_EQ(twice, once);
      } else {
        expect_close(twice, once, 1e-15);
      }
    }
  }
}

TEST(Project, RejectsShapeMismatch) {
  EXPECT_THROW(project(Tensor::vector({0.1}), Tensor::vector({0.1, 0.2}), ThreatModel{}), ShapeError);
}

TEST(Fgsm, LinearMarginMovesAgainstTheMargin) {
  const Model model = margin_model({1.0, -2.0});
  const AttackResult r = fgsm(model, Tensor::vector({0.5, 0.5}), 0, ThreatModel{Norm::Linf, 0.1}, Rng(1));
  EXPECT_NEAR(r.adversarial[0], 0.4, 1e-15);
  EXPECT_NEAR(r.adversarial[1], 0.6, 1e-15);
  EXPECT_EQ(r.queries, 1u);
}

TEST(Fgsm, ZeroGradientLeavesInputUnchanged) {
  const Model model = margin_model({0.0, 0.0});
  const Tensor x = Tensor::vector({0.3, 0.7});
  EXPECT_EQ(fgsm(model, x, 0, ThreatModel{Norm::Linf, 0.1}, Rng(1)).adversarial, x);
}

TEST(Fgsm, LargeEpsilonFlipsASeparablePoint) {
  // Margin at x is 0.6 - 0.4 = 0.2; each coordinate moving by 0.1 removes 0.3.
  const Model model = margin_model({1.0, -1.0});
  const Tensor x = Tensor::vector({0.6, 0.4});
  EXPECT_FALSE(fgsm(model, x, 0, ThreatModel{Norm::Linf, 0.05}, Rng(1)).success);
  EXPECT_TRUE(fgsm(model, x, 0, ThreatModel{Norm::Linf, 0.15}, Rng(1)).success);
}

TEST(WtSample, DegenerateKernelCopiesInput) {
  const Tensor x = Tensor::vector({0.1, 0.9});
  for (const Tensor& s : wt_sample(x, 3, 0.0, Rng(2))) EXPECT_EQ(s, x);
}

TEST(WtSample, MeanAndVarianceMatchKernel) {
  const double sigma = 0.3;
  const std::size_t m = 100000;
  const Tensor x = Tensor::vector({0.2, 0.7});
  const auto samples = wt_sample(x, m, sigma, Rng(9));
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0, s2 = 0.0;
    for (const Tensor& t : samples) {
      s += t[c];
      s2 += (t[c] - x[c]) * (t[c] - x[c]);
    }
    EXPECT_NEAR(s / m, x[c], 4.0 * sigma / std::sqrt(static_cast<double>(m)));
    EXPECT_NEAR(s2 / m, sigma * sigma, 0.05 * sigma * sigma);
  }
}

TEST(WtSample, SamplesAreNotClamped) {
  bool outside = false;
  for (const Tensor& s : wt_sample(Tensor::vector({0.0}), 100, 0.5, Rng(3))) outside = outside || s[0] < 0.0;
  EXPECT_TRUE(outside);
}

TEST(SmoothedLoss, QuadraticAtZeroIsSigmaSquared) {
  const FunctionLoss f = square_loss();
  const double sigma = 0.05;
  const std::size_t m = 1000000;
  const double mean = smoothed_loss(f, Tensor::vector({0.0}), m, sigma, Rng(4));
  // Var[(sigma z)^2] = 2 sigma^4.
  const double se = std::sqrt(2.0) * sigma * sigma / std::sqrt(static_cast<double>(m));
  EXPECT_NEAR(mean, sigma * sigma, 3.0 * se);
}

TEST(SmoothedLoss, ZeroSigmaIsExactLoss) {
  const FunctionLoss f = square_loss();
  EXPECT_DOUBLE_EQ(smoothed_loss(f, Tensor::vector({0.3}), 7, 0.0, Rng(1)), 0.09);
}

TEST(SmoothedLoss, LinearLossIsUnbiased) {
  const FunctionLoss f = linear_loss({1.5, -0.5});
  const Tensor x = Tensor::vector({0.2, 0.4});
  const std::size_t m = 200000;
  const double sigma = 0.2;
  const double se = sigma * std::sqrt(1.5 * 1.5 + 0.5 * 0.5) / std::sqrt(static_cast<double>(m));
  EXPECT_NEAR(smoothed_loss(f, x, m, sigma, Rng(8)), 0.1, 4.0 * se);
}

TEST(WtGradient, ZeroSigmaEqualsInputGradient) {
  const Model model = random_model(3);
  const ClassifierLoss f(model, 1);
  const Tensor x = Tensor::vector({0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  Rng unused(0);
  const Tensor g = input_gradient(model.graph(), x, 1, unused);
  expect_close(wt_gradient(f, x, 5, 0.0, Rng(7)), g, 1e-14);
  EXPECT_EQ(wt_gradient(f, x, 1, 0.0, Rng(7)), g);
  EXPECT_EQ(eot_gradient(f, x, 9, Rng(7)), g);
  EXPECT_EQ(wt_eot_gradient(f, x, 4, 6, 0.2, Rng(7)), wt_gradient(f, x, 4, 0.2, Rng(7)));
}

TEST(WtGradient, QuadraticKeepsCenterGradient) {
  const FunctionLoss f = square_loss();
  const double sigma = 0.05;
  const std::size_t m = 1000000;
  // Gradient samples 2(x + sigma z) have stddev 2 sigma.
  const double se = 2.0 * sigma / std::sqrt(static_cast<double>(m));
  EXPECT_NEAR(wt_gradient(f, Tensor::vector({0.3}), m, sigma, Rng(12))[0], 0.6, 3.0 * se);
}

TEST(WtGradient, LinearModelExactForAnySampling) {
  const FunctionLoss f = linear_loss({0.25, -2.0});
  const Tensor g = wt_gradient(f, Tensor::vector({0.5, 0.5}), 13, 0.4, Rng(3));
  EXPECT_DOUBLE_EQ(g[0], 0.25);
  EXPECT_DOUBLE_EQ(g[1], -2.0);
}

TEST(WtGradient, AgreesWithFiniteDifferenceOfSmoothedLoss) {
  const Model model = random_model(21);
  const ClassifierLoss f(model, 2);
  const Tensor x = Tensor::vector({0.3, 0.6, 0.2, 0.8, 0.5, 0.4});
  const double sigma = 0.05;
  const std::size_t m = 10000;
  const Rng rng(31);
  const Tensor g = wt_gradient(f, x, m, sigma, rng);
  // Common random numbers: every probe reuses the same sample offsets.
  const Tensor fd = finite_diff_gradient([&](const Tensor& p) { return smoothed_loss(f, p, m, sigma, rng); }, x, 1e-5);
  EXPECT_GE(cosine_similarity(g, fd), 0.99);
}

TEST(EotGradient, LinearModelWithWeightNoiseIsUnbiased) {
  const double scale = 0.5;
  const Model model = margin_model({1.0, -2.0}, DefenceSpec::weight_noise(scale));
  const MarginLoss f(model);
  const Tensor x = Tensor::vector({0.5, 0.5});
  const std::size_t n = 100000;
  const Tensor mean = eot_gradient(f, x, n, Rng(5));
  // Each coordinate is a difference of two independent N(w, scale^2) weights.
  const double se = std::sqrt(2.0) * scale / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(mean[0], 1.0, 4.0 * se);
  EXPECT_NEAR(mean[1], -2.0, 4.0 * se);
}

TEST(EotGradient, NoiseChangesDrawsButNotTheCallContract) {
  const Model model = random_model(4, DefenceSpec::weight_noise(0.3));
  const ClassifierLoss f(model, 0);
  const Tensor x = Tensor::vector({0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  EXPECT_EQ(eot_gradient(f, x, 4, Rng(2)), eot_gradient(f, x, 4, Rng(2)));
  EXPECT_NE(eot_gradient(f, x, 1, Rng(2)), eot_gradient(f, x, 1, Rng(3)));
  // m = n = 1, sigma = 0 is one plain draw.
  EXPECT_EQ(wt_eot_gradient(f, x, 1, 1, 0.0, Rng(2)), eot_gradient(f, x, 1, Rng(2)));
}

TEST(Pgd, DegenerateWtPgdIsBitIdentical) {
  for (DefenceSpec defence : {DefenceSpec::none(), DefenceSpec::weight_noise(0.2), DefenceSpec::penultimate_noise(0.3)}) {
    const Model model = random_model(6, defence);
    const Tensor x = Tensor::vector({0.1, 0.9, 0.4, 0.6, 0.2, 0.8});
    AttackConfig cfg = degenerate_config();
    for (bool start : {false, true}) {
      cfg.random_start = start;
      const AttackResult a = pgd(model, x, 1, ThreatModel{}, cfg, Rng(10));
      const AttackResult b = wt_pgd(model, x, 1, ThreatModel{}, cfg, Rng(10));
      ASSERT_EQ(a.trajectory.size(), cfg.iterations + 1);
      EXPECT_EQ(a.trajectory, b.trajectory);
      EXPECT_EQ(a.loss_trace, b.loss_trace);
      EXPECT_EQ(a.success, b.success);
    }
  }
}

TEST(Pgd, DegenerateSmoothingWithEotMatchesPgd) {
  const Model model = random_model(6, DefenceSpec::weight_noise(0.2));
  const Tensor x = Tensor::vector({0.1, 0.9, 0.4, 0.6, 0.2, 0.8});
  AttackConfig cfg = degenerate_config();
  cfg.eot_samples = 8;
  EXPECT_EQ(pgd(model, x, 0, ThreatModel{}, cfg, Rng(4)).trajectory,
            wt_pgd(model, x, 0, ThreatModel{}, cfg, Rng(4)).trajectory);
}

TEST(Pgd, OneStepFromCleanEqualsFgsmWithStepAlpha) {
  const Model model = random_model(8);
  const Tensor x = Tensor::vector({0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  AttackConfig cfg;
  cfg.iterations = 1;
  cfg.random_start = false;
  const ThreatModel tm{Norm::Linf, 0.05};
  Rng unused(0);
  const Tensor g = input_gradient(model.graph(), x, 2, unused);
  Tensor expected = x;
  add_scaled(expected, sign(g), cfg.step_size);
  EXPECT_EQ(pgd(model, x, 2, tm, cfg, Rng(1)).adversarial, project(expected, x, tm));
}

TEST(Pgd, ZeroIterationsReturnsProjectedStart) {
  const Model model = random_model(8);
  const Tensor x = Tensor::vector({0.0, 1.0, 0.5, 0.5, 0.5, 0.5});
  AttackConfig cfg;
  cfg.iterations = 0;
  const ThreatModel tm{Norm::Linf, 0.05};
  const AttackResult r = wt_pgd(model, x, 0, tm, cfg, Rng(3));
  EXPECT_EQ(r.queries, 0u);
  EXPECT_NE(r.adversarial, x);
  EXPECT_TRUE(contained(r.adversarial, x, tm));
  Rng unused(0);
  EXPECT_EQ(r.predicted, argmax(forward(model.graph(), r.adversarial, unused).values()));
}

TEST(Pgd, ZeroEpsilonKeepsPrediction) {
  const Model model = random_model(8, DefenceSpec::weight_noise(0.1));
  const Tensor x = Tensor::vector({0.2, 0.3, 0.5, 0.7, 0.1, 0.9});
  const ThreatModel tm{Norm::Linf, 0.0};
  const Rng rng(5);
  const AttackResult r = wt_pgd(model, x, 0, tm, AttackConfig{}, rng);
  EXPECT_EQ(r.adversarial, x);
  EXPECT_EQ(r.predicted, majority_vote_predict(model, x, 11, vote_stream(rng)));
}

TEST(Pgd, QueryAccountingIsExact) {
  const Tensor x = Tensor::vector({0.2, 0.3, 0.5, 0.7, 0.1, 0.9});
  AttackConfig cfg;
  cfg.iterations = 3;
  cfg.wt_samples = 4;
  cfg.eot_samples = 5;
  const Model noisy = random_model(2, DefenceSpec::weight_noise(0.1));
  const Model plain = random_model(2);
  EXPECT_EQ(wt_pgd(noisy, x, 0, ThreatModel{}, cfg, Rng(1)).queries, 3u * 4u * 5u);
  EXPECT_EQ(wt_pgd(plain, x, 0, ThreatModel{}, cfg, Rng(1)).queries, 3u * 4u);
  EXPECT_EQ(pgd(noisy, x, 0, ThreatModel{}, cfg, Rng(1)).queries, 3u * 5u);
  EXPECT_EQ(pgd(plain, x, 0, ThreatModel{}, cfg, Rng(1)).queries, 3u);
}

TEST(Pgd, EveryIterateIsContained) {
  Rng seeds(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Model model = random_model(seeds.next_u64(), trial % 2 ? DefenceSpec::weight_noise(0.2) : DefenceSpec{});
    Tensor x(Shape{6});
    for (auto& v : x.values()) v = seeds.uniform();
    const ThreatModel tm{trial % 3 == 0 ? Norm::L2 : Norm::Linf, seeds.uniform(0.0, 0.3)};
    AttackConfig cfg;
    cfg.wt_samples = 3;
    cfg.eot_samples = 2;
    cfg.step_size = 0.05;
    const AttackResult r = wt_pgd(model, x, trial % 3, tm, cfg, Rng(static_cast<std::uint64_t>(trial)));
    for (const Tensor& it : r.trajectory) EXPECT_TRUE(contained(it, x, tm));
  }
}

TEST(Pgd, RejectsInputsOutsideTheBox) {
  const Model model = random_model(1);
  EXPECT_THROW(pgd(model, Tensor::vector({1.5, 0, 0, 0, 0, 0}), 0, ThreatModel{}, AttackConfig{}, Rng(1)), Error);
  EXPECT_THROW(pgd(model, Tensor::vector({0.5, 0, 0, 0, 0, 0}), 3, ThreatModel{}, AttackConfig{}, Rng(1)), Error);
}

TEST(GradientHook, PlainHookIsPgd) {
  const Model model = random_model(12);
  const ClassifierLoss f(model, 1);
  const Tensor x = Tensor::vector({0.4, 0.4, 0.4, 0.6, 0.6, 0.6});
  const ThreatModel tm;
  AttackConfig cfg;
  const StepOptions opts{cfg.iterations, cfg.step_size, cfg.random_start};
  const Trajectory hooked = gradient_hook(tm, opts, plain_provider(f)).run(x, Rng(6));
  EXPECT_EQ(hooked.iterates, pgd(model, x, 1, tm, cfg, Rng(6)).trajectory);
}

TEST(GradientHook, WtHookIsWtPgdWithOneDraw) {
  const Model model = random_model(12, DefenceSpec::weight_noise(0.1));
  const ClassifierLoss f(model, 1);
  const Tensor x = Tensor::vector({0.4, 0.4, 0.4, 0.6, 0.6, 0.6});
  AttackConfig cfg;
  cfg.eot_samples = 1;
  const StepOptions opts{cfg.iterations, cfg.step_size, cfg.random_start};
  const auto hook = gradient_hook(ThreatModel{}, opts, wt_provider(f, cfg.wt_samples, cfg.sigma));
  const Trajectory a = hook.run(x, Rng(2));
  EXPECT_EQ(a.iterates, wt_pgd(model, x, 1, ThreatModel{}, cfg, Rng(2)).trajectory);
  EXPECT_EQ(a.iterates, hook.run(x, Rng(2)).iterates);
}

TEST(MajorityVote, DeterministicIsArgmaxAndVotingHelpsNoisyModels) {
  const Model plain = random_model(13);
  const Tensor x = Tensor::vector({0.4, 0.1, 0.4, 0.6, 0.3, 0.6});
  Rng unused(0);
  EXPECT_EQ(majority_vote_predict(plain, x, 11, Rng(1)), argmax(forward(plain.graph(), x, unused).values()));

  // Noisy copy of a confident model: label points by the clean model.
  const Model noisy = plain.with_defence(DefenceSpec::weight_noise(0.6));
  Rng points(3);
  std::size_t hits1 = 0, hits101 = 0;
  for (std::uint64_t i = 0; i < 500; ++i) {
    Tensor p(Shape{6});
    for (auto& v : p.values()) v = points.uniform();
    const std::size_t label = argmax(forward(plain.graph(), p, unused).values());
    hits1 += majority_vote_predict(noisy, p, 1, Rng(i)) == label;
    hits101 += majority_vote_predict(noisy, p, 101, Rng(i)) == label;
  }
  EXPECT_GE(hits101, hits1);
}
