#pragma once

#include <cstddef>
#include <functional>

#include "wtpgd/model.hpp"
#include "wtpgd/rng.hpp"
#include "wtpgd/tensor.hpp"

namespace wtpgd {

struct ValueGradient {
  double value = 0.0;
  Tensor gradient;
};

/// Scalar loss of an input, possibly random. Each call with a given Rng is
/// one draw; deterministic implementations ignore the Rng.
class LossFunction {
 public:
  virtual ~LossFunction() = default;
  virtual double value(const Tensor& x, Rng& rng) const = 0;
  virtual ValueGradient value_and_gradient(const Tensor& x, Rng& rng) const = 0;
  virtual bool stochastic() const = 0;
};

/// Cross-entropy of a (defended) classifier against a fixed label.
/// Holds a reference: the model must outlive it.
class ClassifierLoss final : public LossFunction {
 public:
  ClassifierLoss(const Model& model, std::size_t label);
  double value(const Tensor& x, Rng& rng) const override;
  ValueGradient value_and_gradient(const Tensor& x, Rng& rng) const override;
  bool stochastic() const override { return model_->stochastic(); }
  const Model& model() const { return *model_; }
  std::size_t label() const { return label_; }

 private:
  const Model* model_;
  std::size_t label_;
};

/// Deterministic loss given as plain callables (analytic toy losses).
class FunctionLoss final : public LossFunction {
 public:
  using Value = std::function<double(const Tensor&)>;
  using Gradient = std::function<Tensor(const Tensor&)>;
  FunctionLoss(Value value, Gradient gradient);
  double value(const Tensor& x, Rng& rng) const override;
  ValueGradient value_and_gradient(const Tensor& x, Rng& rng) const override;
  bool stochastic() const override { return false; }

 private:
  Value value_;
  Gradient gradient_;
};

}  // namespace wtpgd
