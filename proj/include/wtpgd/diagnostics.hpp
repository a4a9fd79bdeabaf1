#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <vector>

#include "wtpgd/dataset.hpp"
#include "wtpgd/evaluation.hpp"
#include "wtpgd/gradient_attacks.hpp"
#include "wtpgd/graph.hpp"
#include "wtpgd/model.hpp"
#include "wtpgd/objective.hpp"

namespace wtpgd {

/// Lipschitz constant of softmax cross-entropy with respect to the logits:
/// the gradient softmax(z) - e_c has squared norm at most 2.
inline constexpr double kCrossEntropyLipschitz = std::numbers::sqrt2;

struct BoundParams {
  double lipschitz_k = 1.0;
  double lipschitz_l = 1.0;
  double sigma = 0.05;
  std::size_t dimension = 1;
  std::size_t samples = 16;
  double delta = 0.05;

  void validate() const;
};

/// Deviation bound for the m-sample smoothed loss, holding with
/// probability at least 1 - delta:
///   kL sigma sqrt(4 d ln(1/delta) / m) + 2 kL ln(1/delta) / (3m).
double smoothing_error_bound(const BoundParams& bp);

struct BoundCheck {
  double bound = 0.0;
  double reference = 0.0;  // high-sample estimate of the smoothed loss
  std::size_t violations = 0;
  std::size_t trials = 0;
  double violation_rate() const;
};

/// Compares `trials` independent bp.samples-sample estimates of the smoothed
/// loss against a reference built from `oracle_samples` samples. Sigma is
/// taken from bp. Requires a deterministic loss.
BoundCheck empirical_bound_check(const LossFunction& f, const Tensor& x, const BoundParams& bp, std::size_t trials,
                                 std::size_t oracle_samples, const Rng& rng);

/// Product of per-layer operator-norm upper bounds along the output path.
double lipschitz_upper_bound(const Graph& graph);

/// Upper bound on the spectral norm of the linear part of one affine or
/// conv node, by power iteration.
double operator_norm_bound(const Graph& graph, std::size_t node);

struct LandscapeSlice {
  std::size_t resolution = 0;
  double epsilon_max = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t center_stream = 0;  // stream of the draw behind the center value
  Tensor axis1;                     // loss gradient at x
  Tensor axis2;                     // orthogonal to axis1, same norm
  std::vector<double> grid;         // row i: epsilon1 index, column j: epsilon2 index

  double at(std::size_t i, std::size_t j) const { return grid[i * resolution + j]; }
  double center() const { return at(resolution / 2, resolution / 2); }
  double offset(std::size_t i) const;  // epsilon value of grid index i
};

/// Loss on x + e1 sign(g1) + e2 sign(g2) over a resolution^2 grid. A
/// stochastic model gets one fresh draw per grid point.
LandscapeSlice landscape_slice(const Model& model, const Tensor& x, std::size_t c, std::size_t resolution,
                               double epsilon_max, const Rng& rng);

/// Same axes and grid as landscape_slice, but each value is the smoothed
/// loss with m samples and n draws per sample.
LandscapeSlice smoothed_landscape_slice(const Model& model, const Tensor& x, std::size_t c, std::size_t resolution,
                                        double epsilon_max, std::size_t m, std::size_t n, double sigma,
                                        const Rng& rng);

/// Mean squared 5-point discrete Laplacian over interior cells.
double roughness(const LandscapeSlice& slice);

void write_slice(std::ostream& out, const LandscapeSlice& slice);

struct SweepPoint {
  double sigma = 0.0;
  Evaluation evaluation;
};

/// wt_pgd at each sigma with everything else fixed. Sigma = 0 makes all
/// smoothing samples coincide, so it runs pgd.
std::vector<SweepPoint> sigma_sweep(const Model& model, const Dataset& data, const ThreatModel& tm,
                                    const AttackConfig& base, const std::vector<double>& sigmas, const Rng& rng,
                                    std::size_t workers = worker_count());

struct AblationCell {
  std::size_t m = 0;
  std::size_t n = 0;
  Evaluation evaluation;
};

/// wt_pgd for every (m, n) pair, row-major over m. A single smoothing sample
/// means no smoothing, so m = 1 cells run pgd with n draws.
std::vector<AblationCell> ablation_grid(const Model& model, const Dataset& data, const ThreatModel& tm,
                                        const AttackConfig& base, const std::vector<std::size_t>& m_list,
                                        const std::vector<std::size_t>& n_list, const Rng& rng,
                                        std::size_t workers = worker_count());

/// The attack used by sweep and ablation cells for a given configuration.
AttackFn smoothing_attack(const Model& model, const ThreatModel& tm, const AttackConfig& cfg);

}  // namespace wtpgd
