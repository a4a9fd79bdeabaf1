#include <algorithm>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "wtpgd/checkpoint.hpp"
#include "wtpgd/experiment.hpp"
#include "wtpgd/oracle_channel.hpp"

namespace {

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw wtpgd::Error("cannot read config file " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Keys set from positional arguments or by dedicated subcommands.
bool is_flag_key(const std::string& key) { return key != "command" && key != "variant"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weierstrass-smoothed adversarial attacks on small classifiers"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "Start from a saved config.txt; flags override it");

  const wtpgd::ExperimentConfig defaults;
  std::map<std::string, std::string> flags;
  for (const auto& [key, value] : defaults.to_pairs()) {
    if (!is_flag_key(key)) continue;
    app.add_option(flag_name(key), flags[key], "default: " + (value.empty() ? std::string("none") : value));
  }

  std::string variant;
  auto* train = app.add_subcommand("train", "Train a baseline classifier and save a checkpoint");
  auto* attack = app.add_subcommand("attack", "Evaluate an attack over the eval subset");
  attack->add_option("kind", variant, "pgd | wt-pgd | fgsm | zoo | wt-zoo")->required();
  auto* landscape = app.add_subcommand("landscape", "Write a 2-D loss-landscape slice");
  landscape->add_option("kind", variant, "raw | smoothed")->required();
  auto* sweep = app.add_subcommand("sweep-sigma", "Robust accuracy of wt-pgd across sigma values");
  auto* ablation = app.add_subcommand("ablation", "Robust accuracy over the (m, n) grid");
  auto* bound = app.add_subcommand("bound-check", "Empirical check of the smoothing error bound");
  auto* serve = app.add_subcommand("serve-oracle", "Answer posterior queries on stdin/stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    wtpgd::ExperimentConfig config = config_file.empty() ? wtpgd::ExperimentConfig{}
                                                         : wtpgd::ExperimentConfig::from_text(read_file(config_file));
    for (const auto& [key, value] : flags) {
      if (app.count(flag_name(key)) > 0) config.set(key, value);
    }
    if (serve->parsed()) {
      if (config.model_path.empty()) throw wtpgd::Error("--model is required");
      wtpgd::Model model = wtpgd::load_checkpoint(config.model_path);
      if (config.defence != "model") {
        wtpgd::DefenceSpec spec;
        spec.kind = wtpgd::parse_defence_kind(config.defence);
        spec.noise_scale = config.noise_scale;
        spec.kwta_k = config.kwta_k;
        spec.aa_steps = config.aa_steps;
        spec.aa_step_size = config.aa_step_size;
        model = model.with_defence(spec);
      }
      wtpgd::serve_oracle(model, std::cin, std::cout, wtpgd::Rng(config.seed));
      return 0;
    }
    for (auto* sub : {train, attack, landscape, sweep, ablation, bound}) {
      if (sub->parsed()) config.command = sub->get_name();
    }
    config.variant = variant;
    const wtpgd::Report report = wtpgd::run(config);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& [k, v] : report.summary) std::cout << k << '=' << v << '\n';
    std::cout << "report=" << (config.output_dir / "report.txt").string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
