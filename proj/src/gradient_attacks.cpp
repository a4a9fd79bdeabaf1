#include "wtpgd/gradient_attacks.hpp"

#include <algorithm>
#include <cmath>

namespace wtpgd {

namespace {

// Child-stream keys.
constexpr std::uint64_t kStartKey = 1;
constexpr std::uint64_t kIterationKey = 2;
constexpr std::uint64_t kVoteKey = 3;
constexpr std::uint64_t kSampleKey = 11;
constexpr std::uint64_t kDrawKey = 12;

std::size_t effective_draws(const LossFunction& f, std::size_t n) { return f.stochastic() ? n : 1; }

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw Error(std::string(what) + " must be positive");
}

void require_sigma(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error("sigma must be finite and >= 0");
}

Tensor sample_point(const Tensor& x, double sigma, const Rng& samples, std::size_t i) {
  Tensor xi = x;
  if (sigma > 0.0) {
    Rng r = samples.derive(i);
    for (auto& v : xi.values()) v += sigma * r.normal();
  }
  return xi;
}

}  // namespace

std::string to_string(Norm norm) { return norm == Norm::L2 ? "l2" : "linf"; }

Norm parse_norm(const std::string& text) {
  if (text == "linf" || text == "inf") return Norm::Linf;
  if (text == "l2" || text == "2") return Norm::L2;
  throw Error("unsupported norm '" + text + "' (expected linf or l2)");
}

void ThreatModel::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error("epsilon must be finite and >= 0");
}

void AttackConfig::validate() const {
  require_positive(wt_samples, "wt-samples");
  require_positive(eot_samples, "eot-samples");
  require_positive(votes, "votes");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw Error("step size must be positive");
  require_sigma(sigma);
}

Tensor project(const Tensor& candidate, const Tensor& origin, const ThreatModel& tm) {
  if (candidate.shape() != origin.shape()) {
    throw ShapeError("project: shapes " + shape_string(candidate.shape()) + " and " + shape_string(origin.shape()) +
                     " differ");
  }
  Tensor out = candidate;
  const double eps = tm.epsilon;
  if (tm.norm == Norm::Linf) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], origin[i] - eps, origin[i] + eps);
  } else {
    const double dist = l2_distance(candidate, origin);
    if (dist > eps) {
      const double s = eps / dist;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = origin[i] + s * (candidate[i] - origin[i]);
    }
  }
  for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Rng vote_stream(const Rng& rng) { return rng.derive(kVoteKey); }

std::size_t majority_vote_predict(const Model& model, const Tensor& x, std::size_t votes, const Rng& rng) {
  require_positive(votes, "votes");
  if (!model.stochastic()) {
    Rng r = rng;
    return argmax(model_logits(model, x, r).values());
  }
  Tensor total(Shape{model.classes()});
  for (std::size_t v = 0; v < votes; ++v) {
    Rng r = rng.derive(v);
    add_scaled(total, softmax(model_logits(model, x, r)), 1.0);
  }
  return argmax(total.values());
}

GradientEstimate eot_estimate(const LossFunction& f, const Tensor& x, std::size_t n, const Rng& rng) {
  require_positive(n, "eot-samples");
  const std::size_t draws = effective_draws(f, n);
  const Rng draw_streams = rng.derive(kDrawKey);
  GradientEstimate est;
  for (std::size_t j = 0; j < draws; ++j) {
    Rng r = draw_streams.derive(j);
    auto vg = f.value_and_gradient(x, r);
    if (j == 0) {
      est.gradient = std::move(vg.gradient);
    } else {
      add_scaled(est.gradient, vg.gradient, 1.0);
    }
    est.loss += vg.value;
  }
  const double inv = 1.0 / static_cast<double>(draws);
  for (auto& v : est.gradient.values()) v *= inv;
  est.loss *= inv;
  est.queries = draws;
  return est;
}

GradientEstimate wt_eot_estimate(const LossFunction& f, const Tensor& x, std::size_t m, std::size_t n, double sigma,
                                 const Rng& rng) {
  require_positive(m, "wt-samples");
  require_positive(n, "eot-samples");
  require_sigma(sigma);
  const std::size_t draws = effective_draws(f, n);
  const Rng sample_streams = rng.derive(kSampleKey);
  const Rng draw_streams = rng.derive(kDrawKey);
  GradientEstimate est;
  for (std::size_t i = 0; i < m; ++i) {
    const Tensor xi = sample_point(x, sigma, sample_streams, i);
    for (std::size_t j = 0; j < draws; ++j) {
      Rng r = draw_streams.derive(i * draws + j);
      auto vg = f.value_and_gradient(xi, r);
      if (i == 0 && j == 0) {
        est.gradient = std::move(vg.gradient);
      } else {
        add_scaled(est.gradient, vg.gradient, 1.0);
      }
      est.loss += vg.value;
    }
  }
  const double inv = 1.0 / static_cast<double>(m * draws);
  for (auto& v : est.gradient.values()) v *= inv;
  est.loss *= inv;
  est.queries = m * draws;
  return est;
}

std::vector<Tensor> wt_sample(const Tensor& x, std::size_t m, double sigma, const Rng& rng) {
  require_positive(m, "wt-samples");
  require_sigma(sigma);
  const Rng sample_streams = rng.derive(kSampleKey);
  std::vector<Tensor> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(sample_point(x, sigma, sample_streams, i));
  return out;
}

double smoothed_loss(const LossFunction& f, const Tensor& x, std::size_t m, double sigma, const Rng& rng) {
  return smoothed_loss(f, x, m, 1, sigma, rng);
}

double smoothed_loss(const LossFunction& f, const Tensor& x, std::size_t m, std::size_t n, double sigma,
                     const Rng& rng) {
  require_positive(m, "wt-samples");
  require_positive(n, "eot-samples");
  require_sigma(sigma);
  const std::size_t draws = effective_draws(f, n);
  const Rng sample_streams = rng.derive(kSampleKey);
  const Rng draw_streams = rng.derive(kDrawKey);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Tensor xi = sample_point(x, sigma, sample_streams, i);
    for (std::size_t j = 0; j < draws; ++j) {
      Rng r = draw_streams.derive(i * draws + j);
      total += f.value(xi, r);
    }
  }
  return total / static_cast<double>(m * draws);
}

Tensor eot_gradient(const LossFunction& f, const Tensor& x, std::size_t n, const Rng& rng) {
  return eot_estimate(f, x, n, rng).gradient;
}

Tensor wt_gradient(const LossFunction& f, const Tensor& x, std::size_t m, double sigma, const Rng& rng) {
  return wt_eot_estimate(f, x, m, 1, sigma, rng).gradient;
}

Tensor wt_eot_gradient(const LossFunction& f, const Tensor& x, std::size_t m, std::size_t n, double sigma,
                       const Rng& rng) {
  return wt_eot_estimate(f, x, m, n, sigma, rng).gradient;
}

GradientProvider plain_provider(const LossFunction& f) {
  return [&f](const Tensor& x, const Rng& rng) { return eot_estimate(f, x, 1, rng); };
}

GradientProvider eot_provider(const LossFunction& f, std::size_t n) {
  require_positive(n, "eot-samples");
  return [&f, n](const Tensor& x, const Rng& rng) { return eot_estimate(f, x, n, rng); };
}

GradientProvider wt_provider(const LossFunction& f, std::size_t m, double sigma) {
  return wt_eot_provider(f, m, 1, sigma);
}

GradientProvider wt_eot_provider(const LossFunction& f, std::size_t m, std::size_t n, double sigma) {
  require_positive(m, "wt-samples");
  require_positive(n, "eot-samples");
  require_sigma(sigma);
  return [&f, m, n, sigma](const Tensor& x, const Rng& rng) { return wt_eot_estimate(f, x, m, n, sigma, rng); };
}

IterativeAttack::IterativeAttack(ThreatModel tm, StepOptions options, GradientProvider provider)
    : tm_(tm), options_(options), provider_(std::move(provider)) {
  tm_.validate();
  if (!provider_) throw Error("iterative attack needs a gradient provider");
  if (!(options_.step_size > 0.0)) throw Error("step size must be positive");
}

Trajectory IterativeAttack::run(const Tensor& x, const Rng& rng) const {
  Trajectory tr;
  Tensor adv = x;
  if (options_.random_start) {
    Rng start = rng.derive(kStartKey);
    for (auto& v : adv.values()) v += start.uniform(-tm_.epsilon, tm_.epsilon);
  }
  adv = project(adv, x, tm_);
  tr.iterates.push_back(adv);
  const Rng iterations = rng.derive(kIterationKey);
  for (std::size_t t = 0; t < options_.iterations; ++t) {
    GradientEstimate est = provider_(adv, iterations.derive(t));
    tr.loss_trace.push_back(est.loss);
    tr.queries += est.queries;
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double g = est.gradient[i];
      adv[i] += options_.step_size * (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
    }
    adv = project(adv, x, tm_);
    tr.iterates.push_back(adv);
  }
  tr.final = std::move(adv);
  return tr;
}

IterativeAttack gradient_hook(const ThreatModel& tm, const StepOptions& options, GradientProvider provider) {
  return IterativeAttack(tm, options, std::move(provider));
}

namespace {

void check_clean_input(const Model& model, const Tensor& x, std::size_t label) {
  if (x.shape() != model.input_shape()) {
    throw ShapeError("attack input shape " + shape_string(x.shape()) + " does not match model input " +
                     shape_string(model.input_shape()));
  }
  if (!in_unit_box(x)) throw Error("attack input must lie in [0, 1]");
  if (label >= model.classes()) throw Error("label " + std::to_string(label) + " out of range");
}

AttackResult finish(const Model& model, std::size_t label, Trajectory tr, std::size_t votes, const Rng& rng) {
  AttackResult res;
  res.predicted = majority_vote_predict(model, tr.final, votes, vote_stream(rng));
  res.success = res.predicted != label;
  res.queries = tr.queries;
  res.loss_trace = std::move(tr.loss_trace);
  res.trajectory = std::move(tr.iterates);
  res.adversarial = std::move(tr.final);
  return res;
}

}  // namespace

AttackResult fgsm(const Model& model, const Tensor& x, std::size_t label, const ThreatModel& tm, const Rng& rng,
                  std::size_t votes) {
  check_clean_input(model, x, label);
  tm.validate();
  if (tm.norm != Norm::Linf) throw Error("fgsm is defined for the linf threat model");
  const ClassifierLoss f(model, label);
  const StepOptions opts{1, tm.epsilon > 0.0 ? tm.epsilon : 1.0, false};
  Trajectory tr;
  if (tm.epsilon > 0.0) {
    tr = gradient_hook(tm, opts, plain_provider(f)).run(x, rng);
  } else {
    tr.final = x;
    tr.iterates = {x};
  }
  return finish(model, label, std::move(tr), votes, rng);
}

AttackResult pgd(const Model& model, const Tensor& x, std::size_t label, const ThreatModel& tm,
                 const AttackConfig& cfg, const Rng& rng) {
  check_clean_input(model, x, label);
  cfg.validate();
  const ClassifierLoss f(model, label);
  const StepOptions opts{cfg.iterations, cfg.step_size, cfg.random_start};
  auto tr = gradient_hook(tm, opts, eot_provider(f, cfg.eot_samples)).run(x, rng);
  return finish(model, label, std::move(tr), cfg.votes, rng);
}

AttackResult wt_pgd(const Model& model, const Tensor& x, std::size_t label, const ThreatModel& tm,
                    const AttackConfig& cfg, const Rng& rng) {
  check_clean_input(model, x, label);
  cfg.validate();
  const ClassifierLoss f(model, label);
  const StepOptions opts{cfg.iterations, cfg.step_size, cfg.random_start};
  GradientProvider provider = model.stochastic() ? wt_eot_provider(f, cfg.wt_samples, cfg.eot_samples, cfg.sigma)
                                                 : wt_provider(f, cfg.wt_samples, cfg.sigma);
  auto tr = gradient_hook(tm, opts, std::move(provider)).run(x, rng);
  return finish(model, label, std::move(tr), cfg.votes, rng);
}

}  // namespace wtpgd
