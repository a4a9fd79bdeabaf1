#include "wtpgd/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace wtpgd {

namespace {

constexpr std::uint64_t kIterationKey = 2;
constexpr std::uint64_t kSampleKey = 11;
constexpr std::uint64_t kDrawKey = 12;
constexpr std::uint64_t kCoordKey = 13;

void check_posterior(const Tensor& p) {
  if (p.size() < 2) throw Error("posterior needs at least 2 classes");
  double s = 0.0;
  for (double v : p.values()) {
    if (v < 0.0) throw Error("posterior has a negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw Error("posterior does not sum to 1 (sum=" + std::to_string(s) + ")");
}

using Scalar = std::function<double(const Tensor&)>;

Scalar hinge_of(const PosteriorOracle& oracle, std::size_t c0, const ZooConfig& cfg, const Rng& draw) {
  return [posterior = oracle.fixed_draw(draw), c0, &cfg](const Tensor& p) {
    return zoo_loss(posterior(p), c0, cfg.kappa, cfg.log_floor);
  };
}

void check_attack_input(const Tensor& x) {
  if (!in_unit_box(x)) throw Error("attack input must lie in [0, 1]");
}

template <typename StepFn>
AttackResult run_zoo(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0, const ThreatModel& tm,
                     const ZooConfig& cfg, const Rng& rng, StepFn&& step) {
  check_attack_input(x);
  cfg.validate();
  tm.validate();
  AttackResult res;
  Tensor adv = x;
  res.trajectory.push_back(adv);
  const Rng iterations = rng.derive(kIterationKey);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto coords = zoo_coordinates(x.size(), cfg.coords_per_iter, rng, t);
    DeltaEstimate est = step(adv, coords, iterations.derive(t));
    for (std::size_t c = 0; c < coords.size(); ++c) adv[coords[c]] += est.deltas[c];
    adv = project(adv, x, tm);
    res.queries += est.queries;
    res.loss_trace.push_back(est.loss);
    res.trajectory.push_back(adv);
  }
  res.predicted = majority_vote_predict(oracle, adv, cfg.votes, vote_stream(rng));
  res.success = res.predicted != c0;
  res.adversarial = std::move(adv);
  return res;
}

}  // namespace

std::function<Tensor(const Tensor&)> PosteriorOracle::fixed_draw(const Rng& rng) const {
  return [this, rng](const Tensor& x) {
    Rng r = rng;
    return posterior(x, r);
  };
}

Tensor ModelOracle::posterior(const Tensor& x, Rng& rng) const { return softmax(model_logits(*model_, x, rng)); }

std::function<Tensor(const Tensor&)> ModelOracle::fixed_draw(const Rng& rng) const {
  if (model_->defence().kind != DefenceKind::WeightNoise) return PosteriorOracle::fixed_draw(rng);
  Rng r = rng;
  auto instance = std::make_shared<const Graph>(inject_weight_noise(*model_, r));
  return [instance, r](const Tensor& x) {
    Rng after = r;
    return softmax(forward(*instance, x, after));
  };
}

void ZooConfig::validate() const {
  if (coords_per_iter == 0) throw Error("coords-per-iter must be positive");
  if (!(fd_step > 0.0)) throw Error("fd-step h must be positive");
  if (!(kappa >= 0.0)) throw Error("kappa must be >= 0");
  if (wt_samples == 0 || eot_samples == 0 || votes == 0) throw Error("sample counts must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error("sigma must be finite and >= 0");
  if (!(step_size > 0.0)) throw Error("step size must be positive");
  if (!(log_floor > 0.0)) throw Error("log floor must be positive");
}

double zoo_loss(const Tensor& posterior, std::size_t c0, double kappa, double log_floor) {
  check_posterior(posterior);
  if (c0 >= posterior.size()) throw Error("class " + std::to_string(c0) + " out of range");
  if (!(kappa >= 0.0)) throw Error("kappa must be >= 0");
  auto safe_log = [log_floor](double p) { return std::log(std::max(p, log_floor)); };
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < posterior.size(); ++c) {
    if (c != c0) best_other = std::max(best_other, safe_log(posterior[c]));
  }
  return std::max(safe_log(posterior[c0]) - best_other, -kappa);
}

CoordinateEstimate zoo_coord_estimates(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                       std::size_t coord, double h, const double* center) {
  if (!(h > 0.0)) throw Error("fd-step h must be positive");
  if (coord >= x.size()) throw Error("coordinate " + std::to_string(coord) + " out of range");
  CoordinateEstimate est;
  double f0 = 0.0;
  if (center != nullptr) {
    f0 = *center;
  } else {
    f0 = f(x);
    ++est.queries;
  }
  Tensor probe = x;
  probe[coord] = x[coord] + h;
  const double up = f(probe);
  probe[coord] = x[coord] - h;
  const double down = f(probe);
  est.queries += 2;
  est.gradient = (up - down) / (2.0 * h);
  est.curvature = (up - 2.0 * f0 + down) / (h * h);
  return est;
}

CoordinateEstimate zoo_coord_estimates(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0,
                                       std::size_t coord, double h, double kappa, const Rng& rng) {
  ZooConfig cfg;
  cfg.kappa = kappa;
  return zoo_coord_estimates(hinge_of(oracle, c0, cfg, rng), x, coord, h);
}

double zoo_delta(double gradient, double curvature, double alpha, double curvature_floor) {
  if (curvature <= 0.0 || curvature < curvature_floor) return -alpha * gradient;
  return -alpha * gradient / curvature;
}

std::vector<std::size_t> zoo_coordinates(std::size_t dim, std::size_t count, const Rng& rng, std::size_t iteration) {
  count = std::min(count, dim);
  Rng r = rng.derive(kCoordKey).derive(iteration);
  std::vector<std::size_t> idx(dim);
  for (std::size_t i = 0; i < dim; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + r.below(dim - i)]);
  idx.resize(count);
  return idx;
}

DeltaEstimate wt_zoo_deltas(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0,
                            const std::vector<std::size_t>& coords, const ZooConfig& cfg, const Rng& rng) {
  cfg.validate();
  const std::size_t draws = oracle.stochastic() ? cfg.eot_samples : 1;
  const Rng samples = rng.derive(kSampleKey);
  const Rng draw_streams = rng.derive(kDrawKey);
  DeltaEstimate est;
  est.deltas.assign(coords.size(), 0.0);
  for (std::size_t i = 0; i < cfg.wt_samples; ++i) {
    Tensor xi = x;
    if (cfg.sigma > 0.0) {
      Rng r = samples.derive(i);
      for (auto& v : xi.values()) v += cfg.sigma * r.normal();
    }
    for (std::size_t j = 0; j < draws; ++j) {
      const auto f = hinge_of(oracle, c0, cfg, draw_streams.derive(i * draws + j));
      const double f0 = f(xi);
      est.loss += f0;
      est.queries += 1;
      for (std::size_t c = 0; c < coords.size(); ++c) {
        const auto ce = zoo_coord_estimates(f, xi, coords[c], cfg.fd_step, &f0);
        est.deltas[c] += zoo_delta(ce.gradient, ce.curvature, cfg.step_size, cfg.curvature_floor);
        est.queries += ce.queries;
      }
    }
  }
  const double total = static_cast<double>(cfg.wt_samples * draws);
  for (auto& d : est.deltas) d /= total;
  est.loss /= total;
  return est;
}

double wt_zoo_delta(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0, std::size_t coord,
                    const ZooConfig& cfg, const Rng& rng) {
  return wt_zoo_deltas(oracle, x, c0, {coord}, cfg, rng).deltas.front();
}

std::size_t majority_vote_predict(const PosteriorOracle& oracle, const Tensor& x, std::size_t votes,
                                  const Rng& rng) {
  if (votes == 0) throw Error("votes must be positive");
  if (!oracle.stochastic()) {
    Rng r = rng;
    return argmax(oracle.posterior(x, r).values());
  }
  Tensor total;
  for (std::size_t v = 0; v < votes; ++v) {
    Rng r = rng.derive(v);
    Tensor p = oracle.posterior(x, r);
    if (v == 0) {
      total = std::move(p);
    } else {
      add_scaled(total, p, 1.0);
    }
  }
  return argmax(total.values());
}

AttackResult zoo(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0, const ThreatModel& tm,
                 const ZooConfig& cfg, const Rng& rng) {
  const std::size_t draws = oracle.stochastic() ? cfg.eot_samples : 1;
  return run_zoo(oracle, x, c0, tm, cfg, rng,
                 [&](const Tensor& at, const std::vector<std::size_t>& coords, const Rng& it) {
                   const Rng draw_streams = it.derive(kDrawKey);
                   DeltaEstimate est;
                   est.deltas.assign(coords.size(), 0.0);
                   for (std::size_t j = 0; j < draws; ++j) {
                     const auto f = hinge_of(oracle, c0, cfg, draw_streams.derive(j));
                     const double f0 = f(at);
                     est.loss += f0;
                     est.queries += 1;
                     for (std::size_t c = 0; c < coords.size(); ++c) {
                       const auto ce = zoo_coord_estimates(f, at, coords[c], cfg.fd_step, &f0);
                       est.deltas[c] += zoo_delta(ce.gradient, ce.curvature, cfg.step_size, cfg.curvature_floor);
                       est.queries += ce.queries;
                     }
                   }
                   for (auto& d : est.deltas) d /= static_cast<double>(draws);
                   est.loss /= static_cast<double>(draws);
                   return est;
                 });
}

AttackResult wt_zoo(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0, const ThreatModel& tm,
                    const ZooConfig& cfg, const Rng& rng) {
  return run_zoo(oracle, x, c0, tm, cfg, rng,
                 [&](const Tensor& at, const std::vector<std::size_t>& coords, const Rng& it) {
                   return wt_zoo_deltas(oracle, at, c0, coords, cfg, it);
                 });
}

}  // namespace wtpgd
