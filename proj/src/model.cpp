#include "wtpgd/model.hpp"

#include <cmath>

namespace wtpgd {

std::string to_string(DefenceKind kind) {
  switch (kind) {
    case DefenceKind::None: return "none";
    case DefenceKind::WeightNoise: return "weight-noise";
    case DefenceKind::PenultimateNoise: return "penultimate-noise";
    case DefenceKind::Kwta: return "kwta";
    case DefenceKind::AntiAdversary: return "anti-adversary";
  }
  return "none";
}

DefenceKind parse_defence_kind(const std::string& text) {
  for (auto k : {DefenceKind::None, DefenceKind::WeightNoise, DefenceKind::PenultimateNoise, DefenceKind::Kwta,
                 DefenceKind::AntiAdversary}) {
    if (to_string(k) == text) return k;
  }
  throw Error("unknown defence '" + text +
              "' (expected none, weight-noise, penultimate-noise, kwta or anti-adversary)");
}

DefenceSpec DefenceSpec::weight_noise(double scale) {
  DefenceSpec d;
  d.kind = DefenceKind::WeightNoise;
  d.noise_scale = scale;
  return d;
}

DefenceSpec DefenceSpec::penultimate_noise(double scale) {
  DefenceSpec d;
  d.kind = DefenceKind::PenultimateNoise;
  d.noise_scale = scale;
  return d;
}

DefenceSpec DefenceSpec::kwta(std::size_t k) {
  DefenceSpec d;
  d.kind = DefenceKind::Kwta;
  d.kwta_k = k;
  return d;
}

DefenceSpec DefenceSpec::anti_adversary(std::size_t steps, double step_size) {
  DefenceSpec d;
  d.kind = DefenceKind::AntiAdversary;
  d.aa_steps = steps;
  d.aa_step_size = step_size;
  return d;
}

void DefenceSpec::validate() const {
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw Error("noise-scale must be finite and >= 0");
  if (!(aa_step_size >= 0.0) || !std::isfinite(aa_step_size)) throw Error("aa-step-size must be finite and >= 0");
  if (kind == DefenceKind::Kwta && kwta_k == 0) throw Error("kwta defence requires kwta-k >= 1");
}

Architecture Architecture::mlp(std::vector<std::size_t> sizes) {
  Architecture a;
  a.family = Family::Mlp;
  a.sizes = std::move(sizes);
  a.validate();
  return a;
}

Architecture Architecture::cnn(std::size_t channels, std::size_t height, std::size_t width, std::size_t conv1,
                               std::size_t conv2, std::size_t classes) {
  Architecture a;
  a.family = Family::Cnn;
  a.sizes = {channels, height, width, conv1, conv2, classes};
  a.validate();
  return a;
}

std::string Architecture::name() const { return family == Family::Mlp ? "mlp" : "cnn"; }

Shape Architecture::input_shape() const {
  if (family == Family::Mlp) return {sizes.front()};
  return {sizes[0], sizes[1], sizes[2]};
}

std::vector<std::size_t> Architecture::activation_widths() const {
  if (family == Family::Mlp) return {sizes.begin() + 1, sizes.end() - 1};
  return {sizes[3] * sizes[1] * sizes[2], sizes[4] * sizes[1] * sizes[2]};
}

std::vector<std::string> Architecture::parameter_names() const {
  std::vector<std::string> names;
  auto layer = [&](const std::string& base) {
    names.push_back(base + ".weight");
    names.push_back(base + ".bias");
  };
  if (family == Family::Mlp) {
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layer("fc" + std::to_string(i));
  } else {
    layer("conv0");
    layer("conv1");
    layer("head");
  }
  return names;
}

std::vector<Shape> Architecture::parameter_shapes() const {
  std::vector<Shape> shapes;
  if (family == Family::Mlp) {
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      shapes.push_back({sizes[i + 1], sizes[i]});
      shapes.push_back({sizes[i + 1]});
    }
  } else {
    shapes.push_back({sizes[3], sizes[0], 3, 3});
    shapes.push_back({sizes[3]});
    shapes.push_back({sizes[4], sizes[3], 3, 3});
    shapes.push_back({sizes[4]});
    shapes.push_back({sizes[5], sizes[4] * sizes[1] * sizes[2]});
    shapes.push_back({sizes[5]});
  }
  return shapes;
}

void Architecture::validate() const {
  for (auto s : sizes) {
    if (s == 0) throw Error("architecture sizes must be positive");
  }
  if (family == Family::Mlp && sizes.size() < 2) throw Error("mlp needs at least input and output sizes");
  if (family == Family::Cnn && sizes.size() != 6) {
    throw Error("cnn sizes must be {channels, height, width, conv1, conv2, classes}");
  }
  if (sizes.back() < 2) throw Error("a classifier needs at least 2 classes");
}

namespace {

Graph build_graph(const Architecture& arch, std::vector<Tensor> params, const DefenceSpec& defence) {
  const auto shapes = arch.parameter_shapes();
  if (params.size() != shapes.size()) {
    throw ShapeError(arch.name() + " expects " + std::to_string(shapes.size()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  const auto names = arch.parameter_names();
  const bool kwta = defence.kind == DefenceKind::Kwta;
  if (kwta) {
    for (auto w : arch.activation_widths()) {
      if (defence.kwta_k > w) {
        throw Error("kwta-k=" + std::to_string(defence.kwta_k) + " exceeds layer width " + std::to_string(w));
      }
    }
  }
  Graph g(arch.input_shape());
  int cur = 0;
  auto activate = [&](int from) { return kwta ? g.add_kwta(from, defence.kwta_k) : g.add_relu(from); };
  auto strip = [](const std::string& n) { return n.substr(0, n.find('.')); };

  std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor& w = params[2 * l];
    Tensor& b = params[2 * l + 1];
    const bool last = l + 1 == layers;
    if (last && defence.kind == DefenceKind::PenultimateNoise) cur = g.add_noise(cur, defence.noise_scale);
    if (w.shape().size() == 4) {
      cur = g.add_conv2d(cur, strip(names[2 * l]), std::move(w), std::move(b));
    } else {
      cur = g.add_affine(cur, strip(names[2 * l]), std::move(w), std::move(b));
    }
    if (!last) cur = activate(cur);
  }
  return g;
}

}  // namespace

Model::Model(Architecture arch, std::vector<Tensor> params, DefenceSpec defence)
    : arch_(std::move(arch)), defence_(defence), graph_(Shape{1}) {
  arch_.validate();
  defence_.validate();
  graph_ = build_graph(arch_, std::move(params), defence_);
}

Model Model::initialize(const Architecture& arch, Rng& rng) {
  std::vector<Tensor> params;
  for (const auto& shape : arch.parameter_shapes()) {
    Tensor t(shape);
    if (shape.size() > 1) {
      const std::size_t fan_in = shape_size(shape) / shape[0];
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) v = sd * rng.normal();
    }
    params.push_back(std::move(t));
  }
  return Model(arch, std::move(params), DefenceSpec::none());
}

bool Model::stochastic() const {
  return defence_.kind == DefenceKind::WeightNoise || defence_.kind == DefenceKind::PenultimateNoise;
}

Model Model::with_defence(DefenceSpec defence) const { return Model(arch_, parameters(), defence); }

Model Model::with_parameters(std::vector<Tensor> params) const { return Model(arch_, std::move(params), defence_); }

Tensor kwta_activation(const Tensor& z, std::size_t k) {
  Tensor out(z.shape());
  for (auto i : kwta_winners(z.values(), k)) out[i] = z[i];
  return out;
}

Graph inject_weight_noise(const Model& model, Rng& rng) {
  if (model.defence().kind != DefenceKind::WeightNoise) throw Error("inject_weight_noise requires a weight-noise defence");
  const double scale = model.defence().noise_scale;
  if (scale == 0.0) return model.graph();
  std::vector<Tensor> params = model.parameters();
  for (auto& p : params) {
    for (auto& v : p.values()) v += scale * rng.normal();
  }
  return model.graph().with_parameters(std::move(params));
}

Tensor penultimate_noise_forward(const Model& model, const Tensor& input, Rng& rng) {
  if (model.defence().kind != DefenceKind::PenultimateNoise) {
    throw Error("penultimate_noise_forward requires a penultimate-noise defence");
  }
  return forward(model.graph(), input, rng);
}

namespace {

struct Transformed {
  Tensor point;
  std::vector<unsigned char> free;  // 1 where no clamp was ever active
};

Transformed anti_adversary(const Graph& graph, const DefenceSpec& d, const Tensor& input) {
  Transformed out{input, std::vector<unsigned char>(input.size(), 1)};
  if (d.aa_steps == 0) return out;
  Rng unused(0);
  const std::size_t predicted = argmax(forward(graph, input, unused).values());
  for (std::size_t s = 0; s < d.aa_steps; ++s) {
    const Tensor g = input_gradient(graph, out.point, predicted, unused);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double dir = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      double v = out.point[i] - d.aa_step_size * dir;
      if (v < 0.0 || v > 1.0) {
        out.free[i] = 0;
        v = v < 0.0 ? 0.0 : 1.0;
      }
      out.point[i] = v;
    }
  }
  return out;
}

}  // namespace

Tensor anti_adversary_transform(const Model& model, const Tensor& input) {
  if (model.defence().kind != DefenceKind::AntiAdversary) {
    throw Error("anti_adversary_transform requires an anti-adversary defence");
  }
  return anti_adversary(model.graph(), model.defence(), input).point;
}

Tensor model_logits(const Model& model, const Tensor& input, Rng& rng) {
  switch (model.defence().kind) {
    case DefenceKind::WeightNoise: {
      const Graph instance = inject_weight_noise(model, rng);
      return forward(instance, input, rng);
    }
    case DefenceKind::AntiAdversary:
      return forward(model.graph(), anti_adversary(model.graph(), model.defence(), input).point, rng);
    default:
      return forward(model.graph(), input, rng);
  }
}

Tensor predict(const Model& model, const Tensor& input, Rng& rng) {
  if (!in_unit_box(input)) throw Error("predict: input values must lie in [0, 1]");
  return model_logits(model, input, rng);
}

double model_loss(const Model& model, const Tensor& input, std::size_t label, Rng& rng) {
  if (label >= model.classes()) throw Error("label " + std::to_string(label) + " out of range");
  const Tensor logits = model_logits(model, input, rng);
  return cross_entropy(logits.values(), label);
}

LossGradient model_loss_and_gradient(const Model& model, const Tensor& input, std::size_t label, Rng& rng) {
  switch (model.defence().kind) {
    case DefenceKind::WeightNoise: {
      const Graph instance = inject_weight_noise(model, rng);
      return loss_and_gradient(instance, input, label, rng);
    }
    case DefenceKind::AntiAdversary: {
      auto t = anti_adversary(model.graph(), model.defence(), input);
      LossGradient out = loss_and_gradient(model.graph(), t.point, label, rng);
      for (std::size_t i = 0; i < out.gradient.size(); ++i) {
        if (t.free[i] == 0) out.gradient[i] = 0.0;
      }
      return out;
    }
    default:
      return loss_and_gradient(model.graph(), input, label, rng);
  }
}

}  // namespace wtpgd
