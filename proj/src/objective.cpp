#include "wtpgd/objective.hpp"

namespace wtpgd {

ClassifierLoss::ClassifierLoss(const Model& model, std::size_t label) : model_(&model), label_(label) {
  if (label >= model.classes()) throw Error("label " + std::to_string(label) + " out of range");
}

double ClassifierLoss::value(const Tensor& x, Rng& rng) const { return model_loss(*model_, x, label_, rng); }

ValueGradient ClassifierLoss::value_and_gradient(const Tensor& x, Rng& rng) const {
  auto lg = model_loss_and_gradient(*model_, x, label_, rng);
  return {lg.loss, std::move(lg.gradient)};
}

FunctionLoss::FunctionLoss(Value value, Gradient gradient) : value_(std::move(value)), gradient_(std::move(gradient)) {}

double FunctionLoss::value(const Tensor& x, Rng&) const { return value_(x); }

ValueGradient FunctionLoss::value_and_gradient(const Tensor& x, Rng&) const { return {value_(x), gradient_(x)}; }

}  // namespace wtpgd
