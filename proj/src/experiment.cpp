#include "wtpgd/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

#include "wtpgd/checkpoint.hpp"
#include "wtpgd/dataset.hpp"
#include "wtpgd/diagnostics.hpp"
#include "wtpgd/oracle_channel.hpp"

namespace wtpgd {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt(values[i]);
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto end = text.find(sep, pos);
    parts.push_back(text.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return parts;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  return static_cast<std::size_t>(parse_u64(key, text));
}

double parse_real_key(const std::string& key, const std::string& text) {
  try {
    return parse_real(text);
  } catch (const Error& e) {
    throw Error(key + ": " + e.what());
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(key + ": expected true or false, got '" + text + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& text, Parse&& parse) {
  std::vector<T> out;
  for (const auto& part : split(text, ',')) out.push_back(parse(key, part));
  return out;
}

DefenceSpec make_defence(const ExperimentConfig& c) {
  DefenceSpec spec;
  spec.kind = parse_defence_kind(c.defence);
  spec.noise_scale = c.noise_scale;
  spec.kwta_k = c.kwta_k;
  spec.aa_steps = c.aa_steps;
  spec.aa_step_size = c.aa_step_size;
  if (spec.kind != DefenceKind::WeightNoise && spec.kind != DefenceKind::PenultimateNoise) spec.noise_scale = 0.0;
  spec.validate();
  return spec;
}

Model load_model(const ExperimentConfig& c) {
  Model model = load_checkpoint(c.model_path);
  if (c.defence != "model") model = model.with_defence(make_defence(c));
  return model;
}

Dataset load_eval_set(const ExperimentConfig& c, std::size_t input_size, std::size_t classes) {
  const Dataset data = read_dataset(c.dataset_path);
  if (data.dim != input_size) {
    throw Error(c.dataset_path.string() + ": points have " + std::to_string(data.dim) + " values, model expects " +
                std::to_string(input_size));
  }
  if (data.classes > classes) throw Error(c.dataset_path.string() + ": more classes than the model outputs");
  if (data.size() < c.eval_subset) {
    throw Error(c.dataset_path.string() + ": eval-subset " + std::to_string(c.eval_subset) + " exceeds the " +
                std::to_string(data.size()) + " available points");
  }
  return data.head(c.eval_subset);
}

ZooConfig zoo_config(const ExperimentConfig& c) {
  ZooConfig z = c.zoo;
  z.wt_samples = c.attack.wt_samples;
  z.eot_samples = c.attack.eot_samples;
  z.sigma = c.attack.sigma;
  z.votes = c.attack.votes;
  return z;
}

void add_records(Report& report, const Evaluation& ev) {
  report.summary.emplace_back("clean_accuracy", format_accuracy(ev.clean_accuracy));
  report.summary.emplace_back("robust_accuracy", format_accuracy(ev.robust_accuracy));
  report.summary.emplace_back("total_queries", fmt(ev.total_queries));
  report.summary.emplace_back("points", fmt(ev.records.size()));
  report.summary.emplace_back("all_contained", fmt(ev.all_contained()));
  report.table_header = "index,label,clean_prediction,adversarial_prediction,success,queries,linf_distance,l2_distance";
  for (const auto& r : ev.records) {
    report.table_rows.push_back(fmt(r.index) + ',' + fmt(r.label) + ',' + fmt(r.clean_prediction) + ',' +
                                fmt(r.adversarial_prediction) + ',' + (r.success ? "1" : "0") + ',' + fmt(r.queries) +
                                ',' + fmt(r.linf_distance) + ',' + fmt(r.l2_distance));
  }
  report.evaluation = ev;
}

void warn_collapsed_eot(Report& report, bool stochastic, std::size_t n) {
  if (!stochastic && n > 1) {
    report.warnings.push_back("eot-samples=" + std::to_string(n) +
                              " on a deterministic model; the EoT axis collapses to one evaluation");
  }
}

void run_train(const ExperimentConfig& c, Report& report) {
  const Dataset data = read_dataset(c.dataset_path);
  const Architecture arch = parse_architecture(c.architecture);
  if (data.dim != arch.input_size()) throw Error("dataset dimension does not match the architecture input");
  if (data.classes > arch.classes()) throw Error("dataset has more classes than the architecture outputs");
  Rng rng(c.seed);
  TrainResult res = train_baseline(arch, data, c.train, rng);
  Model model = c.defence == "model" ? res.model : res.model.with_defence(make_defence(c));
  const auto path = c.output_dir / "model.ckpt";
  save_checkpoint(model, path);
  report.summary.emplace_back("checkpoint", path.string());
  report.summary.emplace_back("train_accuracy", format_accuracy(100.0 * res.train_accuracy));
  report.summary.emplace_back("heldout_accuracy", format_accuracy(100.0 * res.heldout_accuracy));
  report.summary.emplace_back("underfit", fmt(res.underfit));
  if (res.underfit) report.warnings.push_back(res.report);
}

void run_attack(const ExperimentConfig& c, Report& report) {
  const Rng rng(c.seed);
  const ThreatModel tm = c.threat;
  if (c.variant == "zoo" || c.variant == "wt-zoo") {
    const ZooConfig zcfg = zoo_config(c);
    const bool wt = c.variant == "wt-zoo";
    auto attack_with = [wt, tm, zcfg](const PosteriorOracle& oracle) -> AttackFn {
      return [&oracle, wt, tm, zcfg](const Tensor& x, std::size_t label, const Rng& r) {
        return wt ? wt_zoo(oracle, x, label, tm, zcfg, r) : zoo(oracle, x, label, tm, zcfg, r);
      };
    };
    const Model model = load_model(c);
    const Dataset data = load_eval_set(c, shape_size(model.input_shape()), model.classes());
    if (!c.oracle_command.empty()) {
      ProcessChannel channel(c.oracle_command);
      const ChannelOracle oracle(channel, model.stochastic(), model.input_shape());
      warn_collapsed_eot(report, oracle.stochastic(), zcfg.eot_samples);
      add_records(report, evaluate_attack(oracle, model.input_shape(), data, tm, attack_with(oracle), zcfg.votes, rng));
    } else {
      const ModelOracle oracle(model);
      warn_collapsed_eot(report, oracle.stochastic(), zcfg.eot_samples);
      add_records(report, evaluate_attack(oracle, model.input_shape(), data, tm, attack_with(oracle), zcfg.votes, rng));
    }
    return;
  }
  const Model model = load_model(c);
  const Dataset data = load_eval_set(c, shape_size(model.input_shape()), model.classes());
  const AttackConfig cfg = c.attack;
  AttackFn attack;
  if (c.variant == "pgd") {
    attack = [&](const Tensor& x, std::size_t label, const Rng& r) { return pgd(model, x, label, tm, cfg, r); };
  } else if (c.variant == "wt-pgd") {
    attack = [&](const Tensor& x, std::size_t label, const Rng& r) { return wt_pgd(model, x, label, tm, cfg, r); };
  } else {
    attack = [&](const Tensor& x, std::size_t label, const Rng& r) {
      return fgsm(model, x, label, tm, r, cfg.votes);
    };
  }
  if (c.variant != "fgsm") warn_collapsed_eot(report, model.stochastic(), cfg.eot_samples);
  add_records(report, evaluate_attack(model, data, tm, attack, cfg.votes, rng));
}

void run_landscape(const ExperimentConfig& c, Report& report) {
  const Model model = load_model(c);
  const Dataset data = read_dataset(c.dataset_path);
  if (c.image >= data.size()) throw Error("image index " + std::to_string(c.image) + " out of range");
  if (data.dim != shape_size(model.input_shape())) throw Error("dataset dimension does not match the model");
  const Tensor x = data.input(c.image, model.input_shape());
  const std::size_t label = data.labels[c.image];
  const Rng rng(c.seed);
  const LandscapeSlice slice =
      c.variant == "raw"
          ? landscape_slice(model, x, label, c.resolution, c.epsilon_max, rng)
          : smoothed_landscape_slice(model, x, label, c.resolution, c.epsilon_max, c.attack.wt_samples,
                                     c.attack.eot_samples, c.attack.sigma, rng);
  const auto path = c.output_dir / "slice.txt";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_slice(out, slice);
  report.summary.emplace_back("slice", path.string());
  report.summary.emplace_back("roughness", fmt(roughness(slice)));
  report.summary.emplace_back("center_loss", fmt(slice.center()));
  report.summary.emplace_back("center_stream", std::to_string(slice.center_stream));
  report.summary.emplace_back("axis_cosine", fmt(cosine_similarity(slice.axis1, slice.axis2)));
}

void write_table(const std::filesystem::path& path, const Report& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << report.table_header << '\n';
  for (const auto& row : report.table_rows) out << row << '\n';
}

void run_sweep(const ExperimentConfig& c, Report& report) {
  const Model model = load_model(c);
  const Dataset data = load_eval_set(c, shape_size(model.input_shape()), model.classes());
  warn_collapsed_eot(report, model.stochastic(), c.attack.eot_samples);
  const auto points = sigma_sweep(model, data, c.threat, c.attack, c.sigmas, Rng(c.seed));
  report.table_header = "sigma,robust_accuracy,clean_accuracy,total_queries";
  bool contained = true;
  for (const auto& p : points) {
    report.table_rows.push_back(fmt(p.sigma) + ',' + format_accuracy(p.evaluation.robust_accuracy) + ',' +
                                format_accuracy(p.evaluation.clean_accuracy) + ',' + fmt(p.evaluation.total_queries));
    contained = contained && p.evaluation.all_contained();
  }
  report.summary.emplace_back("all_contained", fmt(contained));
  write_table(c.output_dir / "sweep.csv", report);
}

void run_ablation(const ExperimentConfig& c, Report& report) {
  const Model model = load_model(c);
  const Dataset data = load_eval_set(c, shape_size(model.input_shape()), model.classes());
  const auto cells = ablation_grid(model, data, c.threat, c.attack, c.m_list, c.n_list, Rng(c.seed));
  report.table_header = "m,n,robust_accuracy,clean_accuracy,total_queries";
  bool contained = true;
  for (const auto& cell : cells) {
    report.table_rows.push_back(fmt(cell.m) + ',' + fmt(cell.n) + ',' +
                                format_accuracy(cell.evaluation.robust_accuracy) + ',' +
                                format_accuracy(cell.evaluation.clean_accuracy) + ',' +
                                fmt(cell.evaluation.total_queries));
    contained = contained && cell.evaluation.all_contained();
  }
  report.summary.emplace_back("all_contained", fmt(contained));
  write_table(c.output_dir / "ablation.csv", report);
}

void run_bound_check(const ExperimentConfig& c, Report& report) {
  const Model model = load_model(c);
  if (model.stochastic()) throw Error("bound-check needs a deterministic model");
  if (model.defence().kind == DefenceKind::AntiAdversary) {
    throw Error("bound-check cannot audit the Lipschitz constant of the anti-adversary layer");
  }
  const Dataset data = read_dataset(c.dataset_path);
  if (c.image >= data.size()) throw Error("image index " + std::to_string(c.image) + " out of range");
  if (data.dim != shape_size(model.input_shape())) throw Error("dataset dimension does not match the model");
  const Tensor x = data.input(c.image, model.input_shape());
  const ClassifierLoss f(model, data.labels[c.image]);
  BoundParams bp;
  bp.lipschitz_k = lipschitz_upper_bound(model.graph());
  bp.lipschitz_l = kCrossEntropyLipschitz;
  bp.sigma = c.attack.sigma;
  bp.dimension = x.size();
  bp.samples = c.attack.wt_samples;
  bp.delta = c.delta;
  const BoundCheck check = empirical_bound_check(f, x, bp, c.trials, c.oracle_samples, Rng(c.seed));
  report.summary.emplace_back("lipschitz_k", fmt(bp.lipschitz_k));
  report.summary.emplace_back("lipschitz_l", fmt(bp.lipschitz_l));
  report.summary.emplace_back("bound", fmt(check.bound));
  report.summary.emplace_back("reference_loss", fmt(check.reference));
  report.summary.emplace_back("violations", fmt(check.violations));
  report.summary.emplace_back("trials", fmt(check.trials));
  report.summary.emplace_back("violation_rate", fmt(check.violation_rate()));
}

}  // namespace

double parse_real(const std::string& text) {
  auto parse_one = [&](const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error("expected a number or fraction, got '" + text + "'");
    }
    return v;
  };
  const auto slash = text.find('/');
  double v = 0.0;
  if (slash == std::string::npos) {
    v = parse_one(text);
  } else {
    const double den = parse_one(text.substr(slash + 1));
    if (den == 0.0) throw Error("zero denominator in '" + text + "'");
    v = parse_one(text.substr(0, slash)) / den;
  }
  if (!std::isfinite(v)) throw Error("non-finite value '" + text + "'");
  return v;
}

Architecture parse_architecture(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error("architecture must look like mlp:64,32,10 or cnn:1,16,16,8,8,10");
  const std::string family = text.substr(0, colon);
  const auto sizes = parse_list<std::size_t>("architecture", text.substr(colon + 1), parse_size);
  if (family == "mlp") return Architecture::mlp(sizes);
  if (family == "cnn") {
    if (sizes.size() != 6) throw Error("cnn architecture needs 6 sizes: channels,height,width,conv1,conv2,classes");
    return Architecture::cnn(sizes[0], sizes[1], sizes[2], sizes[3], sizes[4], sizes[5]);
  }
  throw Error("unknown architecture family '" + family + "'");
}

std::string format_architecture(const Architecture& arch) { return arch.name() + ':' + join(arch.sizes); }

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_pairs() const {
  return {
      {"command", command},
      {"variant", variant},
      {"model", model_path.string()},
      {"dataset", dataset_path.string()},
      {"output_dir", output_dir.string()},
      {"seed", std::to_string(seed)},
      {"eval_subset", fmt(eval_subset)},
      {"architecture", architecture},
      {"epochs", fmt(train.epochs)},
      {"learning_rate", fmt(train.learning_rate)},
      {"batch_size", fmt(train.batch_size)},
      {"holdout_fraction", fmt(train.holdout_fraction)},
      {"accuracy_floor", fmt(train.accuracy_floor)},
      {"defence", defence},
      {"noise_scale", fmt(noise_scale)},
      {"kwta_k", fmt(kwta_k)},
      {"aa_steps", fmt(aa_steps)},
      {"aa_step_size", fmt(aa_step_size)},
      {"norm", to_string(threat.norm)},
      {"epsilon", fmt(threat.epsilon)},
      {"iterations", fmt(attack.iterations)},
      {"alpha", fmt(attack.step_size)},
      {"wt_samples", fmt(attack.wt_samples)},
      {"eot_samples", fmt(attack.eot_samples)},
      {"sigma", fmt(attack.sigma)},
      {"random_start", fmt(attack.random_start)},
      {"votes", fmt(attack.votes)},
      {"zoo_iterations", fmt(zoo.iterations)},
      {"zoo_alpha", fmt(zoo.step_size)},
      {"coords_per_iter", fmt(zoo.coords_per_iter)},
      {"fd_step", fmt(zoo.fd_step)},
      {"kappa", fmt(zoo.kappa)},
      {"log_floor", fmt(zoo.log_floor)},
      {"curvature_floor", fmt(zoo.curvature_floor)},
      {"oracle_command", oracle_command},
      {"image", fmt(image)},
      {"resolution", fmt(resolution)},
      {"epsilon_max", fmt(epsilon_max)},
      {"sigmas", join(sigmas)},
      {"m_list", join(m_list)},
      {"n_list", join(n_list)},
      {"trials", fmt(trials)},
      {"oracle_samples", fmt(oracle_samples)},
      {"delta", fmt(delta)},
  };
}

void ExperimentConfig::set(const std::string& key, const std::string& v) {
  using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"command", [](auto& c, const auto& s) { c.command = s; }},
      {"variant", [](auto& c, const auto& s) { c.variant = s; }},
      {"model", [](auto& c, const auto& s) { c.model_path = s; }},
      {"dataset", [](auto& c, const auto& s) { c.dataset_path = s; }},
      {"output_dir", [](auto& c, const auto& s) { c.output_dir = s; }},
      {"seed", [](auto& c, const auto& s) { c.seed = parse_u64("seed", s); }},
      {"eval_subset", [](auto& c, const auto& s) { c.eval_subset = parse_size("eval_subset", s); }},
      {"architecture", [](auto& c, const auto& s) { c.architecture = s; }},
      {"epochs", [](auto& c, const auto& s) { c.train.epochs = parse_size("epochs", s); }},
      {"learning_rate", [](auto& c, const auto& s) { c.train.learning_rate = parse_real_key("learning_rate", s); }},
      {"batch_size", [](auto& c, const auto& s) { c.train.batch_size = parse_size("batch_size", s); }},
      {"holdout_fraction",
       [](auto& c, const auto& s) { c.train.holdout_fraction = parse_real_key("holdout_fraction", s); }},
      {"accuracy_floor", [](auto& c, const auto& s) { c.train.accuracy_floor = parse_real_key("accuracy_floor", s); }},
      {"defence", [](auto& c, const auto& s) { c.defence = s; }},
      {"noise_scale", [](auto& c, const auto& s) { c.noise_scale = parse_real_key("noise_scale", s); }},
      {"kwta_k", [](auto& c, const auto& s) { c.kwta_k = parse_size("kwta_k", s); }},
      {"aa_steps", [](auto& c, const auto& s) { c.aa_steps = parse_size("aa_steps", s); }},
      {"aa_step_size", [](auto& c, const auto& s) { c.aa_step_size = parse_real_key("aa_step_size", s); }},
      {"norm", [](auto& c, const auto& s) { c.threat.norm = parse_norm(s); }},
      {"epsilon", [](auto& c, const auto& s) { c.threat.epsilon = parse_real_key("epsilon", s); }},
      {"iterations", [](auto& c, const auto& s) { c.attack.iterations = parse_size("iterations", s); }},
      {"alpha", [](auto& c, const auto& s) { c.attack.step_size = parse_real_key("alpha", s); }},
      {"wt_samples", [](auto& c, const auto& s) { c.attack.wt_samples = parse_size("wt_samples", s); }},
      {"eot_samples", [](auto& c, const auto& s) { c.attack.eot_samples = parse_size("eot_samples", s); }},
      {"sigma", [](auto& c, const auto& s) { c.attack.sigma = parse_real_key("sigma", s); }},
      {"random_start", [](auto& c, const auto& s) { c.attack.random_start = parse_bool("random_start", s); }},
      {"votes", [](auto& c, const auto& s) { c.attack.votes = parse_size("votes", s); }},
      {"zoo_iterations", [](auto& c, const auto& s) { c.zoo.iterations = parse_size("zoo_iterations", s); }},
      {"zoo_alpha", [](auto& c, const auto& s) { c.zoo.step_size = parse_real_key("zoo_alpha", s); }},
      {"coords_per_iter", [](auto& c, const auto& s) { c.zoo.coords_per_iter = parse_size("coords_per_iter", s); }},
      {"fd_step", [](auto& c, const auto& s) { c.zoo.fd_step = parse_real_key("fd_step", s); }},
      {"kappa", [](auto& c, const auto& s) { c.zoo.kappa = parse_real_key("kappa", s); }},
      {"log_floor", [](auto& c, const auto& s) { c.zoo.log_floor = parse_real_key("log_floor", s); }},
      {"curvature_floor", [](auto& c, const auto& s) { c.zoo.curvature_floor = parse_real_key("curvature_floor", s); }},
      {"oracle_command", [](auto& c, const auto& s) { c.oracle_command = s; }},
      {"image", [](auto& c, const auto& s) { c.image = parse_size("image", s); }},
      {"resolution", [](auto& c, const auto& s) { c.resolution = parse_size("resolution", s); }},
      {"epsilon_max", [](auto& c, const auto& s) { c.epsilon_max = parse_real_key("epsilon_max", s); }},
      {"sigmas", [](auto& c, const auto& s) { c.sigmas = parse_list<double>("sigmas", s, parse_real_key); }},
      {"m_list", [](auto& c, const auto& s) { c.m_list = parse_list<std::size_t>("m_list", s, parse_size); }},
      {"n_list", [](auto& c, const auto& s) { c.n_list = parse_list<std::size_t>("n_list", s, parse_size); }},
      {"trials", [](auto& c, const auto& s) { c.trials = parse_size("trials", s); }},
      {"oracle_samples", [](auto& c, const auto& s) { c.oracle_samples = parse_size("oracle_samples", s); }},
      {"delta", [](auto& c, const auto& s) { c.delta = parse_real_key("delta", s); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw Error("unknown config key '" + key + "'");
  it->second(*this, v);
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_pairs()) out += k + '=' + v + '\n';
  return out;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
    try {
      c.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void ExperimentConfig::validate() const {
  static const std::vector<std::string> commands = {"train", "attack", "landscape", "sweep-sigma", "ablation",
                                                    "bound-check"};
  if (std::find(commands.begin(), commands.end(), command) == commands.end()) {
    throw Error("unknown command '" + command + "'");
  }
  if (command == "attack") {
    static const std::vector<std::string> kinds = {"pgd", "wt-pgd", "fgsm", "zoo", "wt-zoo"};
    if (std::find(kinds.begin(), kinds.end(), variant) == kinds.end()) {
      throw Error("attack kind must be one of pgd, wt-pgd, fgsm, zoo, wt-zoo (got '" + variant + "')");
    }
    if (variant == "fgsm" && threat.norm != Norm::Linf) throw Error("fgsm needs --norm linf");
  }
  if (command == "landscape" && variant != "raw" && variant != "smoothed") {
    throw Error("landscape kind must be raw or smoothed (got '" + variant + "')");
  }
  if (output_dir.empty()) throw Error("output directory is required");
  if (dataset_path.empty()) throw Error("dataset path is required");
  if (command != "train" && model_path.empty()) throw Error("model path is required for " + command);
  if (eval_subset == 0) throw Error("eval-subset must be positive");
  if (command == "train") {
    parse_architecture(architecture);
    if (train.batch_size == 0) throw Error("batch size must be positive");
    if (!(train.learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (!(train.holdout_fraction >= 0.0 && train.holdout_fraction < 1.0)) {
      throw Error("holdout fraction must lie in [0, 1)");
    }
  }
  if (defence != "model") make_defence(*this);
  threat.validate();
  attack.validate();
  zoo_config(*this).validate();
  if (command == "landscape") {
    if (resolution < 3 || resolution % 2 == 0) throw Error("resolution must be odd and >= 3");
    if (!(epsilon_max >= 0.0)) throw Error("epsilon-max must be >= 0");
  }
  if (command == "sweep-sigma") {
    if (sigmas.empty()) throw Error("sigma list is empty");
    for (double s : sigmas) {
      if (!(s >= 0.0)) throw Error("sigma values must be >= 0");
    }
  }
  if (command == "ablation") {
    for (auto v : m_list) {
      if (v == 0) throw Error("m-list entries must be positive");
    }
    for (auto v : n_list) {
      if (v == 0) throw Error("n-list entries must be positive");
    }
  }
  if (command == "bound-check") {
    if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
    if (trials == 0) throw Error("trials must be positive");
    if (oracle_samples <= attack.wt_samples) throw Error("oracle-samples must exceed wt-samples");
  }
}

std::string format_accuracy(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", percent);
  return buf;
}

std::string Report::body() const {
  std::ostringstream out;
  for (const auto& [k, v] : config.to_pairs()) out << "config." << k << '=' << v << '\n';
  for (const auto& [k, v] : summary) out << k << '=' << v << '\n';
  for (const auto& w : warnings) out << "warning=" << w << '\n';
  if (!table_header.empty()) {
    out << '\n' << table_header << '\n';
    for (const auto& row : table_rows) out << row << '\n';
  }
  return out.str();
}

void Report::write(std::ostream& out) const {
  out << "wall_time_seconds=" << fmt(wall_time_seconds) << '\n' << body();
}

std::string Report::value(const std::string& key) const {
  for (const auto& [k, v] : summary) {
    if (k == key) return v;
  }
  throw Error("report has no field '" + key + "'");
}

Report run(const ExperimentConfig& config) {
  config.validate();
  if (!std::filesystem::exists(config.dataset_path)) {
    throw Error("dataset not found: " + config.dataset_path.string());
  }
  if (config.command != "train" && !std::filesystem::exists(config.model_path)) {
    throw Error("model not found: " + config.model_path.string());
  }
  std::filesystem::create_directories(config.output_dir);
  {
    std::ofstream out(config.output_dir / "config.txt");
    if (!out) throw Error("cannot write into " + config.output_dir.string());
    out << config.to_text();
  }
  Report report;
  report.config = config;
  const auto start = std::chrono::steady_clock::now();
  if (config.command == "train") {
    run_train(config, report);
  } else if (config.command == "attack") {
    run_attack(config, report);
  } else if (config.command == "landscape") {
    run_landscape(config, report);
  } else if (config.command == "sweep-sigma") {
    run_sweep(config, report);
  } else if (config.command == "ablation") {
    run_ablation(config, report);
  } else {
    run_bound_check(config, report);
  }
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream out(config.output_dir / "report.txt");
  if (!out) throw Error("cannot write " + (config.output_dir / "report.txt").string());
  report.write(out);
  return report;
}

}  // namespace wtpgd
