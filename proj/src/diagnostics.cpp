#include "wtpgd/diagnostics.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

namespace wtpgd {

namespace {

constexpr std::uint64_t kReferenceKey = 21;
constexpr std::uint64_t kTrialKey = 22;
constexpr std::uint64_t kAxisKey = 23;
constexpr std::uint64_t kDirectionKey = 24;
constexpr std::uint64_t kCellKey = 25;
constexpr std::uint64_t kPowerKey = 26;

constexpr std::size_t kSliceVotes = 11;
constexpr double kPowerTolerance = 1e-6;
constexpr std::size_t kPowerMaxIterations = 10000;

double frobenius(const Tensor& w) { return norm2(w); }

Graph linear_part(const Graph& graph, const Node& node) {
  const auto& params = graph.parameters();
  const Tensor& weight = params[node.weight];
  const Shape& in_shape = graph.nodes()[static_cast<std::size_t>(node.input)].shape;
  Graph g(in_shape);
  const Tensor zero_bias(params[node.bias].shape());
  if (node.kind == OpKind::Affine) {
    g.add_affine(0, "w", weight, zero_bias);
  } else {
    g.add_conv2d(0, "w", weight, zero_bias);
  }
  return g;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void check_slice_args(const Model& model, const Tensor& x, std::size_t c, std::size_t resolution,
                      double epsilon_max, const Rng& rng) {
  if (x.shape() != model.input_shape()) throw ShapeError("slice input shape does not match the model");
  if (c >= model.classes()) throw Error("class " + std::to_string(c) + " out of range");
  if (resolution < 3 || resolution % 2 == 0) throw Error("slice resolution must be odd and >= 3");
  if (!(epsilon_max >= 0.0) || !std::isfinite(epsilon_max)) throw Error("epsilon-max must be finite and >= 0");
  const std::size_t predicted = majority_vote_predict(model, x, kSliceVotes, vote_stream(rng));
  if (predicted != c) {
    throw Error("slice input is classified as " + std::to_string(predicted) + ", not " + std::to_string(c));
  }
}

void build_axes(const Model& model, const Tensor& x, std::size_t c, const Rng& rng, LandscapeSlice& slice) {
  Rng axis_rng = rng.derive(kAxisKey);
  slice.axis1 = model_loss_and_gradient(model, x, c, axis_rng).gradient;
  const double n1 = norm2(slice.axis1);
  Rng dir = rng.derive(kDirectionKey);
  Tensor g2(x.shape());
  for (auto& v : g2.values()) v = dir.normal();
  if (n1 > 0.0) {
    // Two Gram-Schmidt passes keep the residual overlap at rounding level.
    for (int pass = 0; pass < 2; ++pass) add_scaled(g2, slice.axis1, -dot(g2, slice.axis1) / (n1 * n1));
    slice.axis2 = scaled(g2, n1 / norm2(g2));
  } else {
    slice.axis2 = scaled(g2, 1.0 / norm2(g2));
  }
}

template <typename CellFn>
LandscapeSlice build_slice(const Model& model, const Tensor& x, std::size_t c, std::size_t resolution,
                           double epsilon_max, const Rng& rng, CellFn&& cell) {
  check_slice_args(model, x, c, resolution, epsilon_max, rng);
  LandscapeSlice slice;
  slice.resolution = resolution;
  slice.epsilon_max = epsilon_max;
  slice.seed = rng.seed();
  build_axes(model, x, c, rng, slice);
  const Tensor s1 = sign(slice.axis1);
  const Tensor s2 = sign(slice.axis2);
  const Rng cells = rng.derive(kCellKey);
  slice.center_stream = cells.derive((resolution / 2) * resolution + resolution / 2).stream();
  slice.grid.assign(resolution * resolution, 0.0);
  parallel_for(resolution * resolution, worker_count(), [&](std::size_t idx) {
    const std::size_t i = idx / resolution;
    const std::size_t j = idx % resolution;
    Tensor point = x;
    add_scaled(point, s1, slice.offset(i));
    add_scaled(point, s2, slice.offset(j));
    slice.grid[idx] = cell(point, cells.derive(idx));
  });
  return slice;
}

}  // namespace

void BoundParams::validate() const {
  if (!(lipschitz_k > 0.0) || !(lipschitz_l > 0.0)) throw Error("Lipschitz constants must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error("sigma must be finite and >= 0");
  if (dimension == 0 || samples == 0) throw Error("dimension and samples must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
}

double smoothing_error_bound(const BoundParams& bp) {
  bp.validate();
  const double kl = bp.lipschitz_k * bp.lipschitz_l;
  const double log_term = std::log(1.0 / bp.delta);
  const double m = static_cast<double>(bp.samples);
  const double d = static_cast<double>(bp.dimension);
  return kl * bp.sigma * std::sqrt(4.0 * d * log_term / m) + 2.0 * kl * log_term / (3.0 * m);
}

double BoundCheck::violation_rate() const {
  return trials == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(trials);
}

BoundCheck empirical_bound_check(const LossFunction& f, const Tensor& x, const BoundParams& bp, std::size_t trials,
                                 std::size_t oracle_samples, const Rng& rng) {
  bp.validate();
  if (f.stochastic()) throw Error("bound check needs a deterministic loss");
  if (trials == 0) throw Error("trials must be positive");
  if (oracle_samples <= bp.samples) throw Error("oracle samples must exceed the per-trial sample count");
  if (x.size() != bp.dimension) throw Error("bound dimension does not match the input");
  BoundCheck check;
  check.bound = smoothing_error_bound(bp);
  check.reference = smoothed_loss(f, x, oracle_samples, bp.sigma, rng.derive(kReferenceKey));
  check.trials = trials;
  const Rng trial_streams = rng.derive(kTrialKey);
  for (std::size_t t = 0; t < trials; ++t) {
    const double estimate = smoothed_loss(f, x, bp.samples, bp.sigma, trial_streams.derive(t));
    if (std::abs(estimate - check.reference) > check.bound) ++check.violations;
  }
  return check;
}

double operator_norm_bound(const Graph& graph, std::size_t node_index) {
  const Node& node = graph.nodes().at(node_index);
  if (node.kind != OpKind::Affine && node.kind != OpKind::Conv2d) {
    throw Error("node " + std::to_string(node_index) + " is not a linear layer");
  }
  const Graph lin = linear_part(graph, node);
  const double frob = frobenius(graph.parameters()[node.weight]);
  if (frob == 0.0) return 0.0;
  Rng unused(0);
  Rng init = Rng(0).derive({kPowerKey, node_index});
  Tensor v(lin.input_shape());
  for (auto& e : v.values()) e = init.normal();
  v = scaled(v, 1.0 / norm2(v));
  double bound = frob;
  for (std::size_t it = 0; it < kPowerMaxIterations; ++it) {
    const Tensor av = forward(lin, v, unused);
    const Tensor atav = vjp(lin, v, av, unused).reshaped(v.shape());
    const double lambda = dot(v, atav);  // Rayleigh quotient of A^T A
    Tensor residual = atav;
    add_scaled(residual, v, -lambda);
    const double r = norm2(residual);
    // lambda + ||A^T A v - lambda v|| bounds the top eigenvalue once v has
    // converged onto its eigenvector.
    bound = std::min(frob, std::sqrt(std::max(lambda, 0.0) + r));
    const double n = norm2(atav);
    if (r <= kPowerTolerance * std::max(lambda, 1.0) || n == 0.0) break;
    v = scaled(atav, 1.0 / n);
  }
  return bound;
}

double lipschitz_upper_bound(const Graph& graph) {
  double k = 1.0;
  const auto& nodes = graph.nodes();
  for (int id = graph.output(); id > 0; id = nodes[static_cast<std::size_t>(id)].input) {
    const Node& node = nodes[static_cast<std::size_t>(id)];
    switch (node.kind) {
      case OpKind::Affine:
      case OpKind::Conv2d:
        k *= operator_norm_bound(graph, static_cast<std::size_t>(id));
        break;
      case OpKind::Relu:
      case OpKind::Kwta:
      case OpKind::Noise:
        break;
      case OpKind::Mean: {
        const Shape& in = nodes[static_cast<std::size_t>(node.input)].shape;
        k /= std::sqrt(static_cast<double>(shape_size(in)));
        break;
      }
      default:
        throw Error("unsupported node kind " + op_name(node.kind) + " in Lipschitz audit");
    }
  }
  return k;
}

double LandscapeSlice::offset(std::size_t i) const {
  const double half = static_cast<double>(resolution - 1);
  return epsilon_max * (2.0 * static_cast<double>(i) - half) / half;
}

LandscapeSlice landscape_slice(const Model& model, const Tensor& x, std::size_t c, std::size_t resolution,
                               double epsilon_max, const Rng& rng) {
  const ClassifierLoss f(model, c);
  return build_slice(model, x, c, resolution, epsilon_max, rng, [&](const Tensor& point, Rng cell) {
    return f.value(point, cell);
  });
}

LandscapeSlice smoothed_landscape_slice(const Model& model, const Tensor& x, std::size_t c, std::size_t resolution,
                                        double epsilon_max, std::size_t m, std::size_t n, double sigma,
                                        const Rng& rng) {
  const ClassifierLoss f(model, c);
  return build_slice(model, x, c, resolution, epsilon_max, rng, [&](const Tensor& point, const Rng& cell) {
    return smoothed_loss(f, point, m, n, sigma, cell);
  });
}

double roughness(const LandscapeSlice& slice) {
  const std::size_t r = slice.resolution;
  if (r < 3 || slice.grid.size() != r * r) throw Error("roughness needs a grid of at least 3x3");
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < r; ++i) {
    for (std::size_t j = 1; j + 1 < r; ++j) {
      const double lap =
          slice.at(i - 1, j) + slice.at(i + 1, j) + slice.at(i, j - 1) + slice.at(i, j + 1) - 4.0 * slice.at(i, j);
      total += lap * lap;
    }
  }
  return total / static_cast<double>((r - 2) * (r - 2));
}

void write_slice(std::ostream& out, const LandscapeSlice& slice) {
  out << slice.resolution << ' ' << format_double(slice.epsilon_max) << ' ' << slice.seed << '\n';
  for (std::size_t i = 0; i < slice.resolution; ++i) {
    for (std::size_t j = 0; j < slice.resolution; ++j) {
      if (j > 0) out << ',';
      out << format_double(slice.at(i, j));
    }
    out << '\n';
  }
}

AttackFn smoothing_attack(const Model& model, const ThreatModel& tm, const AttackConfig& cfg) {
  if (cfg.wt_samples == 1 || cfg.sigma == 0.0) {
    return [&model, tm, cfg](const Tensor& x, std::size_t label, const Rng& rng) {
      return pgd(model, x, label, tm, cfg, rng);
    };
  }
  return [&model, tm, cfg](const Tensor& x, std::size_t label, const Rng& rng) {
    return wt_pgd(model, x, label, tm, cfg, rng);
  };
}

std::vector<SweepPoint> sigma_sweep(const Model& model, const Dataset& data, const ThreatModel& tm,
                                    const AttackConfig& base, const std::vector<double>& sigmas, const Rng& rng,
                                    std::size_t workers) {
  if (sigmas.empty()) throw Error("sigma list is empty");
  for (double s : sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error("sigma values must be finite and >= 0");
  }
  std::vector<SweepPoint> out;
  for (double s : sigmas) {
    AttackConfig cfg = base;
    cfg.sigma = s;
    out.push_back({s, evaluate_attack(model, data, tm, smoothing_attack(model, tm, cfg), cfg.votes, rng, workers)});
  }
  return out;
}

std::vector<AblationCell> ablation_grid(const Model& model, const Dataset& data, const ThreatModel& tm,
                                        const AttackConfig& base, const std::vector<std::size_t>& m_list,
                                        const std::vector<std::size_t>& n_list, const Rng& rng,
                                        std::size_t workers) {
  if (!model.stochastic()) throw Error("ablation needs a stochastic model: the EoT axis is meaningless otherwise");
  if (m_list.empty() || n_list.empty()) throw Error("ablation lists must be nonempty");
  for (auto v : m_list) {
    if (v == 0) throw Error("ablation sample counts must be positive");
  }
  for (auto v : n_list) {
    if (v == 0) throw Error("ablation sample counts must be positive");
  }
  std::vector<AblationCell> out;
  for (std::size_t m : m_list) {
    for (std::size_t n : n_list) {
      AttackConfig cfg = base;
      cfg.wt_samples = m;
      cfg.eot_samples = n;
      out.push_back({m, n, evaluate_attack(model, data, tm, smoothing_attack(model, tm, cfg), cfg.votes, rng, workers)});
    }
  }
  return out;
}

}  // namespace wtpgd
