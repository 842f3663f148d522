#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "ptw/attacks.hpp"
#include "ptw/classifier.hpp"
#include "ptw/embed.hpp"
#include "ptw/generator.hpp"
#include "ptw/keygen.hpp"
#include "ptw/message.hpp"
#include "ptw/perceptual.hpp"
#include "ptw/whitebox.hpp"

namespace ptw {

/// Output of KeyGen + message sampling + Embed on a clean generator.
struct WatermarkSetup {
  GeneratorParams clean;
  GeneratorParams watermarked;
  WatermarkKey key;
  Message message;
};

WatermarkSetup prepare_watermark(const GeneratorParams& clean, const KeygenConfig& keygen_config,
                                 const EmbedConfig& embed_config, std::uint64_t seed,
                                 const FeatureExtractor& fx);

/// Images from `g` for `count` Gaussian latents drawn from `seed`.
torch::Tensor sample_images(const GeneratorParams& g, std::int64_t count, std::uint64_t seed,
                            double psi = 1.0);

struct RobustnessGameConfig {
  double kappa = 0.05;
  /// Attacker's real-image budget; must satisfy R < K / 10.
  std::int64_t real_budget = 50;
  /// Number of rounds.
  std::int64_t rounds = 2000;
  AttackSpec attack;
  /// Used for white-box attacks only.
  RptConfig rpt;
  OverwriteConfig overwrite;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GameReport {
  /// Coin flips: 0 = attacked watermarked image, 1 = clean image.
  std::vector<std::uint8_t> coins;
  /// 1 when the verification decision was correct.
  std::vector<std::uint8_t> outcomes;
  std::vector<double> p_values;
  double evasion_rate = 0.0;
  /// FID of the attacked watermarked images against the reference corpus.
  double fid = 0.0;
  double succ_evasion = 0.0;
  nlohmann::json config = nlohmann::json::object();

  /// Evasion rate recomputed from the stored outcomes.
  double recompute_evasion_rate() const;
  /// One JSON record per round followed by a summary record.
  void write(const std::filesystem::path& path) const;
};

/// Robustness game on a prepared watermark. `attacker_real` supplies the
/// attacker's R real images; `reference` is the corpus for FID.
GameReport robustness_game(const WatermarkSetup& setup, const RobustnessGameConfig& config,
                           const torch::Tensor& attacker_real, const torch::Tensor& reference,
                           const FeatureExtractor& fx);

struct DetectorConfig {
  std::int64_t steps = 300;
  double lr = 1e-3;
  std::int64_t batch_size = 32;
  /// Skip training entirely (chance-level control).
  bool untrained = false;
};

struct DetectionGameConfig {
  std::int64_t clean_budget = 100;
  std::int64_t watermarked_budget = 100;
  /// Number of coin-flip rounds; each round decides on a single image.
  std::int64_t trials = 1000;
  /// Truncation applied to every image in the game.
  double psi = 1.0;
  DetectorConfig detector;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DetectionReport {
  double accuracy = 0.0;
  std::vector<std::uint8_t> coins;
  std::vector<std::uint8_t> correct;
  double train_accuracy = 0.0;
};

/// Trains a binary classifier on clean (label 0) and watermarked (label 1)
/// images and scores it on fresh coin-flipped images. Training and
/// evaluation latents never overlap.
DetectionReport detection_game(const GeneratorParams& clean, const GeneratorParams& watermarked,
                               const DetectionGameConfig& config);

struct SweepConfig {
  std::vector<std::int64_t> n_grid = {8, 16, 32, 64};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  KeygenConfig keygen;
  EmbedConfig embed;
  std::int64_t num_images = 1000;
  std::uint64_t eval_seed = 0;
};

struct SweepRow {
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  double capacity = 0.0;
  double fid = 0.0;
  double fid_clean = 0.0;
  double fid_degradation = 0.0;
};

nlohmann::json to_json(const SweepRow& row);

using SetupProvider = std::function<WatermarkSetup(std::int64_t n, std::uint64_t seed)>;

/// For each n and seed: watermark (through `provider` if given), then measure
/// capacity and FID on the same latents as the clean generator. Every sweep
/// also gets an n = 0 control row per seed with the clean generator's FID.
std::vector<SweepRow> capacity_utility_sweep(const GeneratorParams& g, const SweepConfig& config,
                                             const torch::Tensor& reference,
                                             const FeatureExtractor& fx,
                                             const SetupProvider& provider = {});

struct RptAblationConfig {
  std::vector<std::int64_t> real_budgets = {25, 50, 100};
  RptConfig rpt;
  /// Stage-2 step budget is doubled until the watermark is removed or the
  /// cumulative budget exceeds max_steps.
  std::int64_t max_steps = 1600;
  std::int64_t num_images = 1000;
  double kappa = 0.05;
  std::uint64_t eval_seed = 0;
};

struct RptRow {
  std::int64_t real_budget = 0;
  double capacity = 0.0;
  double fid = 0.0;
  double fid_degradation = 0.0;
  std::int64_t steps = 0;
  bool removed = false;
};

nlohmann::json to_json(const RptRow& row);

/// RPT with escalating budgets for each R. `real` must hold at least
/// max(real_budgets) images; the first R are used.
std::vector<RptRow> rpt_ablation(const WatermarkSetup& setup, const torch::Tensor& real,
                                 const RptAblationConfig& config, const torch::Tensor& reference,
                                 const FeatureExtractor& fx);

/// Capacity and FID cost of a generator relative to the clean one, on shared
/// latents. Used by the sweeps and the attack evaluation.
struct GeneratorScore {
  double capacity = 0.0;
  double fid = 0.0;
  double fid_clean = 0.0;
};

GeneratorScore score_generator(const GeneratorParams& g, const GeneratorParams& clean,
                               const WatermarkKey& key, const Message& m,
                               std::int64_t num_images, std::uint64_t seed,
                               const torch::Tensor& reference, const FeatureExtractor& fx);

struct AttackRow {
  AttackSpec spec;
  double capacity = 0.0;
  double fid = 0.0;
  /// FID increase over the unattacked watermarked images.
  double fid_degradation = 0.0;
  /// Fraction of attacked images still detected at kappa.
  double detection_rate = 0.0;
};

nlohmann::json to_json(const AttackRow& row);

/// Applies every black-box attack in `grids` to the same watermarked images
/// and scores residual capacity and FID.
std::vector<AttackRow> evaluate_black_box_attacks(
    const WatermarkSetup& setup, const std::vector<std::pair<AttackKind, std::vector<double>>>& grids,
    std::int64_t num_images, std::uint64_t seed, const torch::Tensor& reference,
    const FeatureExtractor& fx, double kappa = 0.05,
    const attacks::Upscaler& upscaler = attacks::bicubic_upscale);

}  // namespace ptw
