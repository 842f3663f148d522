#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ptw/attacks.hpp"
#include "ptw/embed.hpp"
#include "ptw/gan.hpp"
#include "ptw/games.hpp"
#include "ptw/keygen.hpp"
#include "ptw/whitebox.hpp"

namespace ptw::harness {

/// One experiment. Parsed from a JSON document whose sections mirror the
/// fields below; every key is optional, unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  // generator
  GANConfig gan;
  std::int64_t corpus_size = 6000;

  KeygenConfig keygen;
  EmbedConfig embed;

  // attacks
  std::vector<std::pair<AttackKind, std::vector<double>>> attack_grids;
  std::vector<double> overwrite_weights = {0.5, 1.0, 1.5};
  RptConfig rpt;
  std::vector<std::int64_t> rpt_budgets = {25, 50, 100};
  std::int64_t rpt_max_steps = 1600;

  // games
  double kappa = 0.05;
  std::int64_t rounds = 2000;
  std::int64_t real_budget = 100;
  std::vector<std::int64_t> detect_budgets = {25, 100, 400};
  std::vector<double> detect_psi = {0.5, 0.75, 1.0};
  std::int64_t detect_trials = 1000;
  DetectorConfig detector;

  // metrics
  std::int64_t fid_images = 1000;
  std::int64_t capacity_images = 1000;
  std::vector<std::int64_t> sweep_n = {8, 16, 32, 64};
  std::vector<std::uint64_t> sweep_seeds = {0, 1, 2};

  // paths
  std::filesystem::path root = "runs";

  ExperimentConfig();

  /// Throws InvalidArgument on unknown keys, wrong types or invalid values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string hash() const;
  void validate() const;

  /// Sub-seed for a named stage, derived from the master seed.
  std::uint64_t seed_for(const std::string& stage) const;
};

/// Default artifact root: $PTW_ROOT if set, else the config's `paths.root`.
std::filesystem::path artifact_root(const ExperimentConfig& config);

}  // namespace ptw::harness
