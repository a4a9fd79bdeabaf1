#pragma once

#include <cstddef>
#include <string>

#include "wtpgd/dataset.hpp"
#include "wtpgd/model.hpp"

namespace wtpgd {

struct TrainOptions {
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  double holdout_fraction = 0.2;
  /// Held-out accuracy below this is reported as underfit.
  double accuracy_floor = 0.9;
};

struct TrainResult {
  Model model;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  bool underfit = false;
  std::string report;
};

/// Minibatch SGD on cross-entropy. The returned model has no defence.
TrainResult train_baseline(const Architecture& arch, const Dataset& data, const TrainOptions& options, Rng& rng);

/// Fraction of points whose argmax prediction (one draw) matches the label.
double accuracy(const Model& model, const Dataset& data, Rng& rng);

}  // namespace wtpgd
