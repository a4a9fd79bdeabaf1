#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "wtpgd/dataset.hpp"
#include "wtpgd/gradient_attacks.hpp"
#include "wtpgd/model.hpp"
#include "wtpgd/zoo.hpp"

namespace wtpgd {

/// Worker threads for batch evaluation: $WTPGD_WORKERS when set, else 1.
std::size_t worker_count();

/// Runs fn(0..n-1) over `workers` threads. Results must be written by index;
/// completion order does not matter.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct ImageRecord {
  std::size_t index = 0;
  std::size_t label = 0;
  std::size_t clean_prediction = 0;
  std::size_t adversarial_prediction = 0;
  bool success = false;
  std::size_t queries = 0;
  double linf_distance = 0.0;
  double l2_distance = 0.0;
  bool contained = false;  // within the threat model and the pixel box
};

struct Evaluation {
  std::vector<ImageRecord> records;
  double clean_accuracy = 0.0;   // percent
  double robust_accuracy = 0.0;  // percent
  std::size_t total_queries = 0;
  bool all_contained() const;
};

using AttackFn = std::function<AttackResult(const Tensor& x, std::size_t label, const Rng& rng)>;

/// Attacks every point of `data`. Point i uses stream rng.derive(i); the
/// clean prediction uses the same vote stream as the attack's success check.
Evaluation evaluate_attack(const Model& model, const Dataset& data, const ThreatModel& tm, const AttackFn& attack,
                           std::size_t votes, const Rng& rng, std::size_t workers = worker_count());

/// Same, for a black box: clean predictions come from the oracle.
Evaluation evaluate_attack(const PosteriorOracle& oracle, const Shape& input_shape, const Dataset& data,
                           const ThreatModel& tm, const AttackFn& attack, std::size_t votes, const Rng& rng,
                           std::size_t workers = worker_count());

}  // namespace wtpgd
