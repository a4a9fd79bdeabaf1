#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wtpgd/graph.hpp"
#include "wtpgd/rng.hpp"
#include "wtpgd/tensor.hpp"

namespace wtpgd {

enum class DefenceKind { None, WeightNoise, PenultimateNoise, Kwta, AntiAdversary };

std::string to_string(DefenceKind kind);
DefenceKind parse_defence_kind(const std::string& text);

/// Inference-time defence applied on top of a trained classifier.
struct DefenceSpec {
  DefenceKind kind = DefenceKind::None;
  double noise_scale = 0.0;  // stddev for the two noise kinds
  std::size_t kwta_k = 0;
  std::size_t aa_steps = 2;
  double aa_step_size = 8.0 / 255.0;

  static DefenceSpec none() { return {}; }
  static DefenceSpec weight_noise(double scale);
  static DefenceSpec penultimate_noise(double scale);
  static DefenceSpec kwta(std::size_t k);
  static DefenceSpec anti_adversary(std::size_t steps = 2, double step_size = 8.0 / 255.0);

  void validate() const;
};

enum class Family { Mlp, Cnn };

/// Layer layout of a desk-scale classifier.
///
/// MLP sizes: {inputs, hidden..., classes}.
/// CNN sizes: {channels, height, width, conv1 channels, conv2 channels, classes}
/// with 3x3 kernels and a dense head.
struct Architecture {
  Family family = Family::Mlp;
  std::vector<std::size_t> sizes;

  static Architecture mlp(std::vector<std::size_t> sizes);
  static Architecture cnn(std::size_t channels, std::size_t height, std::size_t width, std::size_t conv1,
                          std::size_t conv2, std::size_t classes);

  std::string name() const;
  Shape input_shape() const;
  std::size_t input_size() const { return shape_size(input_shape()); }
  std::size_t classes() const { return sizes.back(); }
  /// Widths of the activation layers (the ones k-WTA would replace).
  std::vector<std::size_t> activation_widths() const;
  std::vector<std::string> parameter_names() const;
  std::vector<Shape> parameter_shapes() const;
  void validate() const;
};

/// Trained parameters + architecture + defence. Immutable once built.
class Model {
 public:
  Model(Architecture arch, std::vector<Tensor> params, DefenceSpec defence);

  /// He-normal weights, zero biases.
  static Model initialize(const Architecture& arch, Rng& rng);

  const Architecture& architecture() const { return arch_; }
  const DefenceSpec& defence() const { return defence_; }
  /// Graph including the defence's structural changes (k-WTA activations,
  /// penultimate noise node). Weight noise is applied per draw, not here.
  const Graph& graph() const { return graph_; }
  const std::vector<Tensor>& parameters() const { return graph_.parameters(); }
  bool stochastic() const;
  std::size_t classes() const { return arch_.classes(); }
  const Shape& input_shape() const { return graph_.input_shape(); }

  Model with_defence(DefenceSpec defence) const;
  Model with_parameters(std::vector<Tensor> params) const;

 private:
  Architecture arch_;
  DefenceSpec defence_;
  Graph graph_;
};

/// Keeps the k largest entries (lowest index wins ties) and zeroes the rest.
Tensor kwta_activation(const Tensor& z, std::size_t k);

/// Graph with every affine/conv parameter perturbed by noise_scale * N(0, 1).
Graph inject_weight_noise(const Model& model, Rng& rng);

Tensor penultimate_noise_forward(const Model& model, const Tensor& input, Rng& rng);

/// Signed-gradient steps that lower the loss of the predicted class, clamped
/// to [0, 1] after each step.
Tensor anti_adversary_transform(const Model& model, const Tensor& input);

/// Defence-aware logits. Rejects inputs outside [0, 1].
Tensor predict(const Model& model, const Tensor& input, Rng& rng);

/// Defence-aware logits without the pixel-range check (attack sampling points
/// may leave the box).
Tensor model_logits(const Model& model, const Tensor& input, Rng& rng);

double model_loss(const Model& model, const Tensor& input, std::size_t label, Rng& rng);

/// Loss and input gradient for one draw of the defended model. For the
/// anti-adversary layer the sign step has zero derivative almost everywhere,
/// so the gradient is the one at the transformed point, zeroed where the
/// pixel clamp was active.
LossGradient model_loss_and_gradient(const Model& model, const Tensor& input, std::size_t label, Rng& rng);

}  // namespace wtpgd
