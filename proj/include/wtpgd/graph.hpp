#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "wtpgd/rng.hpp"
#include "wtpgd/tensor.hpp"

namespace wtpgd {

enum class OpKind { Input, Affine, Conv2d, Relu, Kwta, Noise, Mean };

std::string op_name(OpKind kind);

inline constexpr std::size_t kNoParameter = std::numeric_limits<std::size_t>::max();

struct Node {
  OpKind kind = OpKind::Input;
  int input = -1;
  std::size_t weight = kNoParameter;
  std::size_t bias = kNoParameter;
  std::size_t k = 0;    // k-WTA winners
  double scale = 0.0;   // stddev of additive noise
  Shape shape;          // output shape
};

/// Computation graph over a fixed set of primitives.
///
/// Nodes are appended in topological order: a node may only read from a node
/// created before it, so every graph is acyclic by construction. Node 0 is
/// the input. Parameters are owned by the graph and referenced by index.
///
/// Supported primitives: affine (weight `out x in`, input flattened),
/// 2-D convolution (stride 1, zero "same" padding, odd kernel), ReLU, k-WTA,
/// additive Gaussian noise, and mean reduction. Softmax cross-entropy is
/// applied on top of the output by `loss` and friends.
class Graph {
 public:
  explicit Graph(Shape input_shape);

  int add_affine(int from, const std::string& name, Tensor weight, Tensor bias);
  /// kernel: (out_channels, in_channels, kh, kw); input must be (C, H, W).
  int add_conv2d(int from, const std::string& name, Tensor kernel, Tensor bias);
  int add_relu(int from);
  int add_kwta(int from, std::size_t k);
  int add_noise(int from, double scale);
  int add_mean(int from);

  /// Output defaults to the most recently added node.
  void set_output(int id);
  int output() const { return output_; }

  const Shape& input_shape() const { return nodes_.front().shape; }
  const Shape& output_shape() const { return nodes_[static_cast<std::size_t>(output_)].shape; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  /// Same structure, new parameter values (shapes must match).
  Graph with_parameters(std::vector<Tensor> params) const;
  /// True when any noise node has a positive scale.
  bool stochastic() const;

 private:
  int push(Node node);
  const Node& at(int id) const;
  std::size_t add_parameter(const std::string& name, Tensor value);

  std::vector<Node> nodes_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  int output_ = 0;
};

/// Indices (ascending) of the k largest values; lower index wins ties.
std::vector<std::size_t> kwta_winners(std::span<const double> z, std::size_t k);

/// Logits of the graph. Noise nodes draw from `rng`.
Tensor forward(const Graph& graph, const Tensor& input, Rng& rng);

/// Softmax cross-entropy of logits against `label`.
double cross_entropy(std::span<const double> logits, std::size_t label);
Tensor softmax(const Tensor& logits);

double loss(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng);

struct LossGradient {
  double loss = 0.0;
  Tensor gradient;  // d loss / d input
  Tensor logits;
};

LossGradient loss_and_gradient(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng);

/// Exact reverse-mode gradient of the cross-entropy loss w.r.t. the input.
Tensor input_gradient(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng);

/// Gradient of <cotangent, forward(input)> w.r.t. the input.
Tensor vjp(const Graph& graph, const Tensor& input, const Tensor& cotangent, Rng& rng);

struct ParameterGradients {
  double loss = 0.0;
  std::vector<Tensor> gradients;  // aligned with graph.parameters()
  Tensor logits;
};

ParameterGradients parameter_gradients(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng);

/// Central differences of the loss, one coordinate at a time. Both probes of
/// a coordinate see the same copy of `rng`, so stochastic nodes are frozen.
Tensor finite_diff_gradient(const Graph& graph, const Tensor& input, std::size_t label, double step,
                            const Rng& rng);

/// Central differences of an arbitrary scalar function.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& input, double step);

}  // namespace wtpgd
