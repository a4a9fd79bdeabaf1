#include "wtpgd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wtpgd {

std::string op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Affine: return "affine";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::Kwta: return "kwta";
    case OpKind::Noise: return "noise";
    case OpKind::Mean: return "mean";
  }
  return "unknown";
}

Graph::Graph(Shape input_shape) {
  Node in;
  in.kind = OpKind::Input;
  in.shape = std::move(input_shape);
  if (in.shape.empty() || shape_size(in.shape) == 0) throw ShapeError("graph input shape must be non-empty");
  nodes_.push_back(std::move(in));
}

const Node& Graph::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw Error("node id " + std::to_string(id) + " does not exist");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

int Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  output_ = static_cast<int>(nodes_.size()) - 1;
  return output_;
}

std::size_t Graph::add_parameter(const std::string& name, Tensor value) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw Error("duplicate parameter name '" + name + "'");
  }
  names_.push_back(name);
  params_.push_back(std::move(value));
  return params_.size() - 1;
}

int Graph::add_affine(int from, const std::string& name, Tensor weight, Tensor bias) {
  const auto in = shape_size(at(from).shape);
  if (weight.shape().size() != 2 || weight.shape()[1] != in) {
    throw ShapeError("affine '" + name + "': weight " + shape_string(weight.shape()) + " does not accept input of size " +
                     std::to_string(in));
  }
  const auto out = weight.shape()[0];
  if (bias.shape() != Shape{out}) {
    throw ShapeError("affine '" + name + "': bias must have shape (" + std::to_string(out) + ")");
  }
  Node n;
  n.kind = OpKind::Affine;
  n.input = from;
  n.weight = add_parameter(name + ".weight", std::move(weight));
  n.bias = add_parameter(name + ".bias", std::move(bias));
  n.shape = {out};
  return push(std::move(n));
}

int Graph::add_conv2d(int from, const std::string& name, Tensor kernel, Tensor bias) {
  const auto& in = at(from).shape;
  const auto& ks = kernel.shape();
  if (in.size() != 3) throw ShapeError("conv2d '" + name + "': input must be (C,H,W), got " + shape_string(in));
  if (ks.size() != 4 || ks[1] != in[0] || ks[2] % 2 == 0 || ks[3] % 2 == 0) {
    throw ShapeError("conv2d '" + name + "': kernel " + shape_string(ks) + " incompatible with input " +
                     shape_string(in));
  }
  if (bias.shape() != Shape{ks[0]}) throw ShapeError("conv2d '" + name + "': bias must match out channels");
  Node n;
  n.kind = OpKind::Conv2d;
  n.input = from;
  n.shape = {ks[0], in[1], in[2]};
  n.weight = add_parameter(name + ".weight", std::move(kernel));
  n.bias = add_parameter(name + ".bias", std::move(bias));
  return push(std::move(n));
}

int Graph::add_relu(int from) {
  Node n;
  n.kind = OpKind::Relu;
  n.input = from;
  n.shape = at(from).shape;
  return push(std::move(n));
}

int Graph::add_kwta(int from, std::size_t k) {
  const auto width = shape_size(at(from).shape);
  if (k == 0 || k > width) {
    throw Error("k-WTA k=" + std::to_string(k) + " must be in [1, " + std::to_string(width) + "]");
  }
  Node n;
  n.kind = OpKind::Kwta;
  n.input = from;
  n.k = k;
  n.shape = at(from).shape;
  return push(std::move(n));
}

int Graph::add_noise(int from, double scale) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw Error("noise scale must be finite and non-negative");
  Node n;
  n.kind = OpKind::Noise;
  n.input = from;
  n.scale = scale;
  n.shape = at(from).shape;
  return push(std::move(n));
}

int Graph::add_mean(int from) {
  Node n;
  n.kind = OpKind::Mean;
  n.input = from;
  n.shape = {1};
  at(from);
  return push(std::move(n));
}

void Graph::set_output(int id) {
  at(id);
  output_ = id;
}

Graph Graph::with_parameters(std::vector<Tensor> params) const {
  if (params.size() != params_.size()) {
    throw ShapeError("expected " + std::to_string(params_.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != params_[i].shape()) {
      throw ShapeError("parameter '" + names_[i] + "' expects shape " + shape_string(params_[i].shape()) + ", got " +
                       shape_string(params[i].shape()));
    }
  }
  Graph out = *this;
  out.params_ = std::move(params);
  return out;
}

bool Graph::stochastic() const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [](const Node& n) { return n.kind == OpKind::Noise && n.scale > 0.0; });
}

namespace {

struct Trace {
  std::vector<Tensor> values;
  std::vector<std::vector<std::size_t>> kept;  // k-WTA winners per node
};

void require_finite(const Tensor& t, const Node& node, const char* pass) {
  if (!all_finite(t.values())) {
    throw NumericError(std::string("non-finite value in ") + pass + " pass at " + op_name(node.kind) + " node");
  }
}

void conv_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias, Tensor& out) {
  const auto& ks = kernel.shape();
  const std::size_t oc = ks[0], ic = ks[1], kh = ks[2], kw = ks[3];
  const std::size_t h = in.shape()[1], w = in.shape()[2];
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);
  auto x = in.values();
  auto k = kernel.values();
  auto y = out.values();
  for (std::size_t o = 0; o < oc; ++o) {
    for (std::size_t i = 0; i < h * w; ++i) y[o * h * w + i] = bias[o];
    for (std::size_t c = 0; c < ic; ++c) {
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          const double kv = k[((o * ic + c) * kh + a) * kw + b];
          const auto dy = static_cast<std::ptrdiff_t>(a) - ph;
          const auto dx = static_cast<std::ptrdiff_t>(b) - pw;
          for (std::size_t r = 0; r < h; ++r) {
            const auto sr = static_cast<std::ptrdiff_t>(r) + dy;
            if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(h)) continue;
            const std::size_t c0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
            const std::size_t c1 = dx > 0 ? w - static_cast<std::size_t>(dx) : w;
            const double* src = x.data() + c * h * w + static_cast<std::size_t>(sr) * w;
            double* dst = y.data() + o * h * w + r * w;
            for (std::size_t col = c0; col < c1; ++col) {
              dst[col] += kv * src[static_cast<std::ptrdiff_t>(col) + dx];
            }
          }
        }
      }
    }
  }
}

// Accumulates into din and (optionally) dkernel/dbias.
void conv_backward(const Tensor& in, const Tensor& kernel, const Tensor& dout, Tensor& din, Tensor* dkernel,
                   Tensor* dbias) {
  const auto& ks = kernel.shape();
  const std::size_t oc = ks[0], ic = ks[1], kh = ks[2], kw = ks[3];
  const std::size_t h = in.shape()[1], w = in.shape()[2];
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);
  auto x = in.values();
  auto k = kernel.values();
  auto g = dout.values();
  auto dx_all = din.values();
  for (std::size_t o = 0; o < oc; ++o) {
    if (dbias != nullptr) {
      double s = 0.0;
      for (std::size_t i = 0; i < h * w; ++i) s += g[o * h * w + i];
      (*dbias)[o] += s;
    }
    for (std::size_t c = 0; c < ic; ++c) {
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          const std::size_t ki = ((o * ic + c) * kh + a) * kw + b;
          const double kv = k[ki];
          const auto dy = static_cast<std::ptrdiff_t>(a) - ph;
          const auto dx = static_cast<std::ptrdiff_t>(b) - pw;
          double kgrad = 0.0;
          for (std::size_t r = 0; r < h; ++r) {
            const auto sr = static_cast<std::ptrdiff_t>(r) + dy;
            if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(h)) continue;
            const std::size_t c0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
            const std::size_t c1 = dx > 0 ? w - static_cast<std::size_t>(dx) : w;
            const std::size_t src_row = c * h * w + static_cast<std::size_t>(sr) * w;
            const double* go = g.data() + o * h * w + r * w;
            for (std::size_t col = c0; col < c1; ++col) {
              const std::size_t si = src_row + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(col) + dx);
              dx_all[si] += kv * go[col];
              kgrad += x[si] * go[col];
            }
          }
          if (dkernel != nullptr) (*dkernel)[ki] += kgrad;
        }
      }
    }
  }
}

Trace run_forward(const Graph& graph, const Tensor& input, Rng& rng) {
  if (input.shape() != graph.input_shape()) {
    throw ShapeError("input shape mismatch: expected " + shape_string(graph.input_shape()) + ", got " +
                     shape_string(input.shape()));
  }
  const auto& nodes = graph.nodes();
  const auto& params = graph.parameters();
  const auto last = static_cast<std::size_t>(graph.output());
  Trace tr;
  tr.values.resize(last + 1);
  tr.kept.resize(last + 1);
  tr.values[0] = input;
  require_finite(input, nodes[0], "forward");
  for (std::size_t id = 1; id <= last; ++id) {
    const Node& n = nodes[id];
    const Tensor& x = tr.values[static_cast<std::size_t>(n.input)];
    Tensor y(n.shape);
    switch (n.kind) {
      case OpKind::Input:
        y = x;
        break;
      case OpKind::Affine: {
        const Tensor& wt = params[n.weight];
        const Tensor& b = params[n.bias];
        const std::size_t out = wt.shape()[0], in = wt.shape()[1];
        const double* w = wt.values().data();
        const double* xv = x.values().data();
        for (std::size_t o = 0; o < out; ++o) {
          double s = b[o];
          const double* row = w + o * in;
          for (std::size_t i = 0; i < in; ++i) s += row[i] * xv[i];
          y[o] = s;
        }
        break;
      }
      case OpKind::Conv2d:
        conv_forward(x, params[n.weight], params[n.bias], y);
        break;
      case OpKind::Relu:
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
        break;
      case OpKind::Kwta:
        tr.kept[id] = kwta_winners(x.values(), n.k);
        for (auto i : tr.kept[id]) y[i] = x[i];
        break;
      case OpKind::Noise:
        y = x;
        if (n.scale > 0.0) {
          for (auto& v : y.values()) v += n.scale * rng.normal();
        }
        break;
      case OpKind::Mean: {
        double s = 0.0;
        for (double v : x.values()) s += v;
        y[0] = s / static_cast<double>(x.size());
        break;
      }
    }
    require_finite(y, n, "forward");
    tr.values[id] = std::move(y);
  }
  return tr;
}

// Returns d/d input; fills param_grads when non-null.
Tensor run_backward(const Graph& graph, const Trace& tr, const Tensor& seed, std::vector<Tensor>* param_grads) {
  const auto& nodes = graph.nodes();
  const auto& params = graph.parameters();
  const auto last = static_cast<std::size_t>(graph.output());
  std::vector<Tensor> grads(last + 1);
  grads[last] = seed;
  if (param_grads != nullptr) {
    param_grads->clear();
    for (const auto& p : params) param_grads->emplace_back(p.shape());
  }
  for (std::size_t id = last; id >= 1; --id) {
    if (grads[id].empty()) continue;
    const Node& n = nodes[id];
    const auto src = static_cast<std::size_t>(n.input);
    const Tensor& x = tr.values[src];
    const Tensor& g = grads[id];
    if (grads[src].empty()) grads[src] = Tensor(x.shape());
    Tensor& dx = grads[src];
    switch (n.kind) {
      case OpKind::Input:
        add_scaled(dx, g, 1.0);
        break;
      case OpKind::Affine: {
        const Tensor& wt = params[n.weight];
        const std::size_t out = wt.shape()[0], in = wt.shape()[1];
        const double* w = wt.values().data();
        double* dxv = dx.values().data();
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[o];
          if (go == 0.0) continue;
          const double* row = w + o * in;
          for (std::size_t i = 0; i < in; ++i) dxv[i] += row[i] * go;
        }
        if (param_grads != nullptr) {
          Tensor& dw = (*param_grads)[n.weight];
          Tensor& db = (*param_grads)[n.bias];
          for (std::size_t o = 0; o < out; ++o) {
            db[o] += g[o];
            for (std::size_t i = 0; i < in; ++i) dw[o * in + i] += g[o] * x[i];
          }
        }
        break;
      }
      case OpKind::Conv2d:
        conv_backward(x, params[n.weight], g, dx, param_grads ? &(*param_grads)[n.weight] : nullptr,
                      param_grads ? &(*param_grads)[n.bias] : nullptr);
        break;
      case OpKind::Relu:
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (x[i] > 0.0) dx[i] += g[i];
        }
        break;
      case OpKind::Kwta:
        // Straight-through on the retained set.
        for (auto i : tr.kept[id]) dx[i] += g[i];
        break;
      case OpKind::Noise:
        add_scaled(dx, g, 1.0);
        break;
      case OpKind::Mean: {
        const double share = g[0] / static_cast<double>(x.size());
        for (auto& v : dx.values()) v += share;
        break;
      }
    }
    require_finite(dx, n, "backward");
  }
  if (grads[0].empty()) return Tensor(graph.input_shape());
  return std::move(grads[0]);
}

Tensor ce_logit_gradient(const Tensor& logits, std::size_t label) {
  Tensor g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

void check_label(const Graph& graph, std::size_t label) {
  const auto classes = shape_size(graph.output_shape());
  if (label >= classes) {
    throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(classes) + " classes");
  }
}

}  // namespace

std::vector<std::size_t> kwta_winners(std::span<const double> z, std::size_t k) {
  if (k == 0 || k > z.size()) {
    throw Error("k-WTA k=" + std::to_string(k) + " must be in [1, " + std::to_string(z.size()) + "]");
  }
  std::vector<std::size_t> idx(z.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Larger value first, lower index on ties.
  auto before = [&](std::size_t a, std::size_t b) { return z[a] > z[b] || (z[a] == z[b] && a < b); };
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor forward(const Graph& graph, const Tensor& input, Rng& rng) {
  auto tr = run_forward(graph, input, rng);
  return std::move(tr.values[static_cast<std::size_t>(graph.output())]);
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (logits.empty()) throw ShapeError("cross-entropy of empty logits");
  if (label >= logits.size()) {
    throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  const double out = std::log(s) + mx - logits[label];
  // log-sum-exp is never below the selected logit; clip rounding noise.
  return out < 0.0 ? 0.0 : out;
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const double mx = *std::max_element(logits.values().begin(), logits.values().end());
  double s = 0.0;
  for (auto& v : p.values()) {
    v = std::exp(v - mx);
    s += v;
  }
  for (auto& v : p.values()) v /= s;
  return p;
}

double loss(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng) {
  check_label(graph, label);
  const Tensor logits = forward(graph, input, rng);
  const double l = cross_entropy(logits.values(), label);
  if (!std::isfinite(l)) throw NumericError("non-finite loss");
  return l;
}

LossGradient loss_and_gradient(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng) {
  check_label(graph, label);
  auto tr = run_forward(graph, input, rng);
  Tensor& logits = tr.values[static_cast<std::size_t>(graph.output())];
  LossGradient out;
  out.loss = cross_entropy(logits.values(), label);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  out.gradient = run_backward(graph, tr, ce_logit_gradient(logits, label), nullptr);
  out.logits = std::move(logits);
  return out;
}

Tensor input_gradient(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng) {
  return loss_and_gradient(graph, input, label, rng).gradient;
}

Tensor vjp(const Graph& graph, const Tensor& input, const Tensor& cotangent, Rng& rng) {
  if (cotangent.size() != shape_size(graph.output_shape())) {
    throw ShapeError("cotangent size " + std::to_string(cotangent.size()) + " does not match output " +
                     shape_string(graph.output_shape()));
  }
  auto tr = run_forward(graph, input, rng);
  return run_backward(graph, tr, cotangent.reshaped(graph.output_shape()), nullptr);
}

ParameterGradients parameter_gradients(const Graph& graph, const Tensor& input, std::size_t label, Rng& rng) {
  check_label(graph, label);
  auto tr = run_forward(graph, input, rng);
  Tensor& logits = tr.values[static_cast<std::size_t>(graph.output())];
  ParameterGradients out;
  out.loss = cross_entropy(logits.values(), label);
  run_backward(graph, tr, ce_logit_gradient(logits, label), &out.gradients);
  out.logits = std::move(logits);
  return out;
}

Tensor finite_diff_gradient(const Graph& graph, const Tensor& input, std::size_t label, double step,
                            const Rng& rng) {
  if (!(step > 0.0)) throw Error("finite difference step must be positive");
  Tensor grad(input.shape());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    probe[i] = input[i] + step;
    Rng r_plus = rng;
    const double up = loss(graph, probe, label, r_plus);
    probe[i] = input[i] - step;
    Rng r_minus = rng;
    const double down = loss(graph, probe, label, r_minus);
    probe[i] = input[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& input, double step) {
  if (!(step > 0.0)) throw Error("finite difference step must be positive");
  Tensor grad(input.shape());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    probe[i] = input[i] + step;
    const double up = f(probe);
    probe[i] = input[i] - step;
    const double down = f(probe);
    probe[i] = input[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace wtpgd
