#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "wtpgd/gradient_attacks.hpp"
#include "wtpgd/model.hpp"
#include "wtpgd/rng.hpp"
#include "wtpgd/tensor.hpp"

namespace wtpgd {

/// Black-box access to a classifier: flat pixels in, class posterior out.
class PosteriorOracle {
 public:
  virtual ~PosteriorOracle() = default;
  /// One query. Stochastic oracles draw their randomness from `rng`.
  virtual Tensor posterior(const Tensor& x, Rng& rng) const = 0;
  virtual bool stochastic() const = 0;
  /// Posterior under one fixed draw: every call replays `rng` from the same
  /// state, so repeated probes see the same randomness.
  virtual std::function<Tensor(const Tensor&)> fixed_draw(const Rng& rng) const;
};

/// Softmax of an in-process (defended) model. The model must outlive it.
class ModelOracle final : public PosteriorOracle {
 public:
  explicit ModelOracle(const Model& model) : model_(&model) {}
  Tensor posterior(const Tensor& x, Rng& rng) const override;
  bool stochastic() const override { return model_->stochastic(); }
  /// Weight noise is sampled once per draw rather than once per probe.
  std::function<Tensor(const Tensor&)> fixed_draw(const Rng& rng) const override;

 private:
  const Model* model_;
};

/// Deterministic oracle from a callable.
class FunctionOracle final : public PosteriorOracle {
 public:
  explicit FunctionOracle(std::function<Tensor(const Tensor&)> fn) : fn_(std::move(fn)) {}
  Tensor posterior(const Tensor& x, Rng&) const override { return fn_(x); }
  bool stochastic() const override { return false; }

 private:
  std::function<Tensor(const Tensor&)> fn_;
};

struct ZooConfig {
  std::size_t iterations = 100;     // k
  double step_size = 0.01;          // alpha
  std::size_t coords_per_iter = 16;
  double fd_step = 1e-3;            // h
  double kappa = 0.0;
  std::size_t wt_samples = 16;      // m
  std::size_t eot_samples = 16;     // n
  double sigma = 0.05;
  double log_floor = 1e-12;
  double curvature_floor = 1e-8;
  std::size_t votes = 11;

  void validate() const;
};

/// max{log p[c0] - max_{c != c0} log p[c], -kappa}, logs floored at `log_floor`.
double zoo_loss(const Tensor& posterior, std::size_t c0, double kappa, double log_floor = 1e-12);

struct CoordinateEstimate {
  double gradient = 0.0;
  double curvature = 0.0;
  std::size_t queries = 0;
};

/// Central first and second differences of f along one coordinate.
/// `center` supplies a cached f(x); otherwise it is queried.
CoordinateEstimate zoo_coord_estimates(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                       std::size_t coord, double h, const double* center = nullptr);

/// Same, with f = zoo_loss of the oracle. All three probes share one copy of
/// `rng`, i.e. one draw of a stochastic oracle.
CoordinateEstimate zoo_coord_estimates(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0,
                                       std::size_t coord, double h, double kappa, const Rng& rng);

/// Newton step -alpha*g/h, falling back to -alpha*g when the curvature is
/// below `curvature_floor`.
double zoo_delta(double gradient, double curvature, double alpha, double curvature_floor = 1e-8);

struct DeltaEstimate {
  std::vector<double> deltas;  // one per requested coordinate
  double loss = 0.0;           // mean hinge loss at the sampled centres
  std::size_t queries = 0;
};

/// Mean ZOO step per coordinate over m smoothing samples (and n oracle draws
/// per sample when the oracle is stochastic).
DeltaEstimate wt_zoo_deltas(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0,
                            const std::vector<std::size_t>& coords, const ZooConfig& cfg, const Rng& rng);

double wt_zoo_delta(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0, std::size_t coord,
                    const ZooConfig& cfg, const Rng& rng);

/// Argmax of summed posteriors over `votes` draws (one query if deterministic).
std::size_t majority_vote_predict(const PosteriorOracle& oracle, const Tensor& x, std::size_t votes, const Rng& rng);

/// Coordinate-wise ZOO, with EoT over cfg.eot_samples draws on stochastic oracles.
AttackResult zoo(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0, const ThreatModel& tm,
                 const ZooConfig& cfg, const Rng& rng);

/// ZOO with WT-smoothed coordinate steps.
AttackResult wt_zoo(const PosteriorOracle& oracle, const Tensor& x, std::size_t c0, const ThreatModel& tm,
                    const ZooConfig& cfg, const Rng& rng);

/// The coordinates iteration t would pick, for inspection and tests.
std::vector<std::size_t> zoo_coordinates(std::size_t dim, std::size_t count, const Rng& rng, std::size_t iteration);

}  // namespace wtpgd
