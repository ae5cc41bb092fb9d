#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/model.hpp"

namespace advlab {

/// Where a dataset comes from: the procedural generator, a saved container
/// file, or an IDX (MNIST layout) pair. Exactly one variant may be set.
struct DatasetSource {
  std::optional<DatasetConfig> generate;
  std::optional<std::string> path;
  std::optional<std::string> idx_images;
  std::optional<std::string> idx_labels;

  Dataset realize() const;
};

struct ModelConfig {
  std::string name;
  std::string arch;              // preset: mlp | cnn_small | cnn_wide | cnn_coarse
  std::vector<LayerSpec> layers; // explicit alternative to arch
  std::uint64_t seed = 0;
  std::string training = "standard";  // standard | adversarial
  int epochs = 18;
  double lr = 0.15;
  int batch = 32;
  double adv_epsilon = 8.0 / 255.0;
};

/// Layer stack for a named preset (or the explicit layers), wired to the
/// dataset dims and class count.
ModelSpec model_spec_from_config(const ModelConfig& cfg, const std::vector<int>& dims,
                                 int classes);

/// Directional acceptance check evaluated on aggregate black-box rows.
struct CheckConfig {
  std::string attack;
  std::string baseline;
  std::string surrogate;  // optional filter
  double min_gain_points = 2.0;
  double min_consistency = 2.0 / 3.0;
};

struct AblationConfig {
  std::string param = "P";  // P | S
  std::vector<double> grid;
};

struct EvaluationConfig {
  std::optional<DatasetSource> dataset;  // images to attack; defaults to the training source
  std::vector<std::string> surrogates;   // model names; '+' joins ensemble members
  std::vector<std::string> targets;
  std::vector<std::uint64_t> attack_seeds = {0};
  int max_images = 0;
  std::vector<int> defense_bits;
  std::vector<CheckConfig> checks;
  std::optional<AblationConfig> ablation;
  int diagnose_max_images = 32;
};

struct RunConfig {
  DatasetSource dataset;
  std::vector<ModelConfig> models;
  std::vector<AttackConfig> attacks;
  EvaluationConfig evaluation;
  std::string output_dir = "runs";
};

/// Strict parse: unknown keys are rejected with their path; every numeric
/// constraint of the referenced types is enforced. Exactly one of epsilon /
/// epsilon_255 may be set per attack (neither selects the 16/255 default).
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Canonical snapshot with every default filled in; parsing it back yields an
/// equivalent config.
std::string resolved_config_json(const RunConfig& cfg);

/// Stable 64-bit hash of the resolved snapshot, for run directory names.
std::uint64_t config_hash(const RunConfig& cfg);

/// Crafted-example archive: the exact resolved attack, plus per-image
/// adversarial tensors and iteration logs.
struct ArchiveEntry {
  std::uint64_t index = 0;  // dataset index; also the attack rng instance
  int label = 0;
  Tensor x_adv;
  std::vector<double> losses;
  std::vector<int> degenerate;
};

struct AttackArchive {
  std::string surrogate;
  AttackConfig attack;
  std::vector<ArchiveEntry> entries;
};

void save_archive(const AttackArchive& archive, const std::string& path);
AttackArchive load_archive(const std::string& path);

}  // namespace advlab
