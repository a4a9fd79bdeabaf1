#include "wtpgd/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace wtpgd {

double accuracy(const Model& model, const Dataset& data, Rng& rng) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor logits = model_logits(model, data.input(i, model.input_shape()), rng);
    if (argmax(logits.values()) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_baseline(const Architecture& arch, const Dataset& data, const TrainOptions& options, Rng& rng) {
  if (data.size() == 0) throw Error("cannot train on an empty dataset");
  if (data.dim != arch.input_size()) {
    throw ShapeError("dataset has " + std::to_string(data.dim) + " features but " + arch.name() + " expects " +
                     std::to_string(arch.input_size()));
  }
  if (data.classes != arch.classes()) throw Error("dataset class count does not match architecture");
  if (options.batch_size == 0) throw Error("batch size must be positive");

  Rng split_rng = rng.derive(1);
  auto [train, heldout] = split_dataset(data, options.holdout_fraction, split_rng);
  if (heldout.size() == 0) heldout = train;

  Rng init_rng = rng.derive(2);
  Model model = Model::initialize(arch, init_rng);
  std::vector<Tensor> params = model.parameters();
  Rng order_rng = rng.derive(3);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const Graph graph = model.graph().with_parameters(params);
      std::vector<Tensor> total;
      for (std::size_t b = start; b < end; ++b) {
        Rng unused(0);
        const Tensor x = train.input(order[b], arch.input_shape());
        ParameterGradients pg = parameter_gradients(graph, x, train.labels[order[b]], unused);
        if (total.empty()) {
          total = std::move(pg.gradients);
        } else {
          for (std::size_t p = 0; p < total.size(); ++p) add_scaled(total[p], pg.gradients[p], 1.0);
        }
      }
      const double lr = options.learning_rate / static_cast<double>(end - start);
      for (std::size_t p = 0; p < params.size(); ++p) add_scaled(params[p], total[p], -lr);
    }
  }

  TrainResult result{model.with_parameters(params), 0.0, 0.0, false, {}};
  Rng eval_rng(0);
  result.train_accuracy = accuracy(result.model, train, eval_rng);
  result.heldout_accuracy = accuracy(result.model, heldout, eval_rng);
  result.underfit = options.epochs == 0 || result.heldout_accuracy < options.accuracy_floor;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epochs=%zu train_accuracy=%.4f heldout_accuracy=%.4f floor=%.4f status=%s",
                options.epochs, result.train_accuracy, result.heldout_accuracy, options.accuracy_floor,
                result.underfit ? "underfit" : "ok");
  result.report = buf;
  return result;
}

}  // namespace wtpgd
