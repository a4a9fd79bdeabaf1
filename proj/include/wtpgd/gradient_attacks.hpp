#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "wtpgd/model.hpp"
#include "wtpgd/objective.hpp"
#include "wtpgd/rng.hpp"
#include "wtpgd/tensor.hpp"

namespace wtpgd {

enum class Norm { L2, Linf };

std::string to_string(Norm norm);
Norm parse_norm(const std::string& text);

/// Feasible set ||x_adv - x||_p <= epsilon intersected with the pixel box.
struct ThreatModel {
  Norm norm = Norm::Linf;
  double epsilon = 8.0 / 255.0;

  void validate() const;
};

/// Hyperparameters of the signed-gradient attacks.
struct AttackConfig {
  std::size_t iterations = 10;     // k
  double step_size = 0.01;         // alpha
  std::size_t wt_samples = 16;     // m
  std::size_t eot_samples = 16;    // n
  double sigma = 0.05;             // smoothing stddev
  bool random_start = true;
  std::size_t votes = 11;          // majority vote for stochastic success checks

  void validate() const;
};

struct AttackResult {
  Tensor adversarial;
  bool success = false;
  std::size_t predicted = 0;
  std::size_t queries = 0;
  std::vector<double> loss_trace;  // estimated loss at each iterate before its step
  std::vector<Tensor> trajectory;  // start point followed by every iterate
};

/// Clips into the epsilon ball around `origin`, then into [0, 1].
Tensor project(const Tensor& candidate, const Tensor& origin, const ThreatModel& tm);

/// Majority vote over `votes` draws (argmax of summed softmax). A single
/// forward pass for deterministic models.
std::size_t majority_vote_predict(const Model& model, const Tensor& x, std::size_t votes, const Rng& rng);

/// Stream used for the success vote of an attack run with `rng`. The
/// evaluation harness uses it for the clean prediction too, so an attack that
/// does not move the input cannot change the verdict.
Rng vote_stream(const Rng& rng);

// Monte-Carlo estimators. Streams are derived by index from `rng`: smoothing
// sample i uses a fixed child stream and model draw (i, j) another, so the
// m = 1, sigma = 0 case consumes exactly the draws of plain EoT. For a
// deterministic loss the EoT axis collapses to a single evaluation.

struct GradientEstimate {
  Tensor gradient;
  double loss = 0.0;        // mean loss over the evaluated points
  std::size_t queries = 0;  // gradient evaluations spent
};

/// Mean of n gradient draws at x.
GradientEstimate eot_estimate(const LossFunction& f, const Tensor& x, std::size_t n, const Rng& rng);
/// Mean over m smoothing samples of the mean over n draws at each sample.
GradientEstimate wt_eot_estimate(const LossFunction& f, const Tensor& x, std::size_t m, std::size_t n, double sigma,
                                 const Rng& rng);

/// x + N(0, sigma^2 I) samples. Not clamped to the pixel box.
std::vector<Tensor> wt_sample(const Tensor& x, std::size_t m, double sigma, const Rng& rng);

double smoothed_loss(const LossFunction& f, const Tensor& x, std::size_t m, double sigma, const Rng& rng);
/// Smoothed loss with n draws of a stochastic loss at every sample.
double smoothed_loss(const LossFunction& f, const Tensor& x, std::size_t m, std::size_t n, double sigma,
                     const Rng& rng);

Tensor eot_gradient(const LossFunction& f, const Tensor& x, std::size_t n, const Rng& rng);
Tensor wt_gradient(const LossFunction& f, const Tensor& x, std::size_t m, double sigma, const Rng& rng);
Tensor wt_eot_gradient(const LossFunction& f, const Tensor& x, std::size_t m, std::size_t n, double sigma,
                       const Rng& rng);

// Gradient-replacement hook: an iterative signed-gradient attack whose
// update direction comes from any provider. Providers hold a reference to
// their loss function.

using GradientProvider = std::function<GradientEstimate(const Tensor& x, const Rng& rng)>;

GradientProvider plain_provider(const LossFunction& f);
GradientProvider eot_provider(const LossFunction& f, std::size_t n);
GradientProvider wt_provider(const LossFunction& f, std::size_t m, double sigma);
GradientProvider wt_eot_provider(const LossFunction& f, std::size_t m, std::size_t n, double sigma);

struct StepOptions {
  std::size_t iterations = 10;
  double step_size = 0.01;
  bool random_start = true;
};

struct Trajectory {
  Tensor final;
  std::vector<Tensor> iterates;
  std::vector<double> loss_trace;
  std::size_t queries = 0;
};

/// x_adv <- project(x_adv + step * sign(direction)) for a fixed number of
/// iterations, from x or from a uniform random start in [-eps, eps]^d.
class IterativeAttack {
 public:
  IterativeAttack(ThreatModel tm, StepOptions options, GradientProvider provider);
  Trajectory run(const Tensor& x, const Rng& rng) const;

 private:
  ThreatModel tm_;
  StepOptions options_;
  GradientProvider provider_;
};

IterativeAttack gradient_hook(const ThreatModel& tm, const StepOptions& options, GradientProvider provider);

// Attacks on a classifier.

AttackResult fgsm(const Model& model, const Tensor& x, std::size_t label, const ThreatModel& tm, const Rng& rng,
                  std::size_t votes = 11);

/// PGD, with EoT over cfg.eot_samples draws when the model is stochastic.
AttackResult pgd(const Model& model, const Tensor& x, std::size_t label, const ThreatModel& tm,
                 const AttackConfig& cfg, const Rng& rng);

/// PGD whose direction is the WT-smoothed gradient (with EoT for stochastic
/// models).
AttackResult wt_pgd(const Model& model, const Tensor& x, std::size_t label, const ThreatModel& tm,
                    const AttackConfig& cfg, const Rng& rng);

}  // namespace wtpgd
