#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ptw/generator.hpp"
#include "ptw/keygen.hpp"
#include "ptw/message.hpp"
#include "ptw/perceptual.hpp"

namespace ptw {

struct EmbedConfig {
  std::int64_t steps = 1000;
  /// Weight of the message loss; the perceptual term has weight lambda_lpips.
  double lambda_r = 1.0;
  double lambda_lpips = 1.0;
  /// Adam learning rate for the trainable clone.
  double lr = 1e-4;
  std::int64_t batch_size = 16;
  /// Early stop once probe agreement reaches this for `patience`
  /// consecutive evaluations. Values above 1 disable early stopping.
  double target_agreement = 0.99;
  std::int64_t patience = 3;
  std::int64_t eval_every = 25;
  std::int64_t probe_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EmbedLogEntry {
  std::int64_t step = 0;
  double perceptual_loss = 0.0;
  double message_loss = 0.0;
  /// NaN on steps without a probe evaluation.
  double probe_agreement = 0.0;
};

struct EmbedLog {
  std::vector<EmbedLogEntry> entries;
  std::int64_t steps_run = 0;
  bool early_stopped = false;
  /// Mean agreement on the probe latents after the last step.
  double final_agreement = 0.0;
  /// Mean perceptual loss over the last evaluation window.
  double final_perceptual_loss = 0.0;

  /// One whitespace-separated line per entry:
  /// step perceptual_loss message_loss probe_agreement
  void write(const std::filesystem::path& path) const;
};

struct EmbedResult {
  GeneratorParams generator;
  EmbedLog log;
};

/// Pivotal tuning: clones `g` into a frozen pivot and a trainable copy, then
/// minimizes lambda_lpips * d(pivot(z), clone(z)) + lambda_r * BCE(decoder(clone(z)), m)
/// over the clone. `g` and `key` are not modified.
///
/// Throws InvalidArgument if len(m) != key.n or the key was trained for a
/// different output resolution, TrainingDiverged on a non-finite loss.
EmbedResult ptw_embed(const GeneratorParams& g, const WatermarkKey& key, const Message& m,
                      const EmbedConfig& config, const FeatureExtractor& fx,
                      const std::function<void(const EmbedLogEntry&)>& on_log = {});

/// One-shot embedding: adds the parameter mapper's perturbation for m to the
/// target parameters. Throws InvalidArgument on an architecture mismatch.
GeneratorParams direct_embed(const GeneratorParams& g, const ParameterMapper& p, const Message& m);

/// Mean agreement with m of the images rendered from `latents`.
double probe_agreement(const GeneratorParams& g, const WatermarkKey& key, const Message& m,
                       const LatentBatch& latents);

}  // namespace ptw
