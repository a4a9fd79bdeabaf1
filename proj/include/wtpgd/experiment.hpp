#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wtpgd/evaluation.hpp"
#include "wtpgd/gradient_attacks.hpp"
#include "wtpgd/model.hpp"
#include "wtpgd/train.hpp"
#include "wtpgd/zoo.hpp"

namespace wtpgd {

/// Parses a real number, also accepting fractions such as `8/255`.
double parse_real(const std::string& text);

/// Everything a run needs, resolvable before any computation starts.
/// Serialized as `key=value` lines; unknown keys are rejected.
struct ExperimentConfig {
  std::string command;  // train, attack, landscape, sweep-sigma, ablation, bound-check
  std::string variant;  // attack kind or landscape kind
  std::filesystem::path model_path;
  std::filesystem::path dataset_path;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::size_t eval_subset = 200;

  // Training.
  std::string architecture = "mlp:64,32,10";
  TrainOptions train;

  // Defence applied on top of the loaded model; "model" keeps the checkpoint's.
  std::string defence = "model";
  double noise_scale = 0.0;
  std::size_t kwta_k = 0;
  std::size_t aa_steps = 2;
  double aa_step_size = 8.0 / 255.0;

  ThreatModel threat;
  AttackConfig attack;
  ZooConfig zoo;
  std::string oracle_command;  // external black box for zoo attacks

  // Diagnostics.
  std::size_t image = 0;
  std::size_t resolution = 41;
  double epsilon_max = 8.0 / 255.0;
  std::vector<double> sigmas{0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
  std::vector<std::size_t> m_list{1, 2, 4, 8, 16};
  std::vector<std::size_t> n_list{1, 2, 4, 8, 16};
  std::size_t trials = 1000;
  std::size_t oracle_samples = 1000000;
  double delta = 0.05;

  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  std::string to_text() const;
  static ExperimentConfig from_text(const std::string& text);
  /// Sets one field from its serialized key; throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Checks everything except file existence.
  void validate() const;
};

Architecture parse_architecture(const std::string& text);
std::string format_architecture(const Architecture& arch);

struct Report {
  ExperimentConfig config;
  std::vector<std::pair<std::string, std::string>> summary;
  std::vector<std::string> warnings;
  std::string table_header;
  std::vector<std::string> table_rows;
  std::optional<Evaluation> evaluation;
  double wall_time_seconds = 0.0;

  /// Config echo, summary, warnings, then the table. Excludes wall time.
  std::string body() const;
  void write(std::ostream& out) const;
  std::string value(const std::string& key) const;
};

std::string format_accuracy(double percent);

/// Validates, dispatches on config.command, and writes config.txt,
/// report.txt and any grid or table files into config.output_dir.
Report run(const ExperimentConfig& config);

}  // namespace wtpgd
