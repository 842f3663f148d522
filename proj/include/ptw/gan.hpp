#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/types.h>

#include "ptw/generator.hpp"
#include "ptw/params.hpp"

namespace ptw {

struct DiscriminatorParams {
  ArchConfig arch;
  ParamSet params;
};

DiscriminatorParams init_discriminator(const ArchConfig& arch, std::uint64_t seed);

/// Real/fake logit per image, shape [B].
torch::Tensor discriminate(const DiscriminatorParams& d, const torch::Tensor& images);

struct GANConfig {
  ArchConfig arch = ArchConfig::desk();
  std::int64_t batch_size = 32;
  double lr_g = 2e-3;
  double lr_d = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  std::int64_t total_steps = 3000;
  std::uint64_t seed = 0;
  /// Lazy R1 gradient penalty on real images; 0 disables it.
  double r1_gamma = 0.5;
  std::int64_t r1_interval = 4;
  /// EMA decay of the running mean style.
  double w_avg_beta = 0.995;
  std::int64_t log_every = 100;
};

struct GanLogEntry {
  std::int64_t step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double real_logit = 0.0;
  double fake_logit = 0.0;
};

struct TrainedGan {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  std::vector<GanLogEntry> log;
};

/// Alternating discriminator/generator steps on the non-saturating logistic
/// loss. `dataset` is [N,3,H,W] at the configured resolution.
///
/// Throws InvalidArgument on an empty or mis-sized dataset and
/// TrainingDiverged (with the step index) on a non-finite loss.
TrainedGan train_gan(const torch::Tensor& dataset, const GANConfig& config,
                     const std::function<void(const GanLogEntry&)>& on_log = {});

}  // namespace ptw
