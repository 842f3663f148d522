#pragma once

#include <cstdint>
#include <vector>

#include <torch/types.h>

#include "ptw/embed.hpp"
#include "ptw/generator.hpp"
#include "ptw/keygen.hpp"
#include "ptw/message.hpp"
#include "ptw/perceptual.hpp"

namespace ptw {

struct InvertConfig {
  std::int64_t steps = 300;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

struct Inversion {
  /// Best latent found per image, [B, z_dim].
  torch::Tensor z;
  /// Perceptual distance of the best latent and of the initial latent, [B].
  torch::Tensor loss;
  torch::Tensor initial_loss;
  /// Mean loss per step.
  std::vector<double> trace;
};

/// Gradient descent on Z-space codes (one independent Adam problem per
/// image) minimizing the perceptual distance to `images`. Keeps the best
/// latent seen for each image. Throws InversionError if the loss becomes
/// non-finite.
Inversion invert(const torch::Tensor& images, const GeneratorParams& g, const InvertConfig& config,
                 const FeatureExtractor& fx);

struct RptConfig {
  std::int64_t steps = 200;
  double lr = 1e-4;
  std::int64_t batch_size = 8;
  InvertConfig inversion;
  std::uint64_t seed = 0;
};

struct RptResult {
  GeneratorParams generator;
  Inversion inversion;
  std::int64_t steps_run = 0;
};

/// Reverse pivotal tuning: inverts `real` into the watermarked generator,
/// then fine-tunes a copy so that Gen(z_i) matches real_i under the
/// perceptual distance.
RptResult rpt_attack(const GeneratorParams& g_wm, const torch::Tensor& real,
                     const RptConfig& config, const FeatureExtractor& fx);

/// Continues stage 2 of an earlier RPT run for `steps` more steps, reusing
/// its inverted latents.
void rpt_continue(RptResult& state, const torch::Tensor& real, const RptConfig& config,
                  std::int64_t steps, const FeatureExtractor& fx);

struct OverwriteConfig {
  /// Message-loss weight of the attacker's embedding.
  double lambda_m = 1.0;
  KeygenConfig keygen;
  EmbedConfig embed;
  std::uint64_t seed = 0;
};

struct OverwriteResult {
  GeneratorParams generator;
  WatermarkKey attacker_key;
  Message attacker_message;
};

/// Trains an attacker key against g_wm and embeds a random message with it.
OverwriteResult overwrite_attack(const GeneratorParams& g_wm, const OverwriteConfig& config,
                                 const FeatureExtractor& fx);

}  // namespace ptw
