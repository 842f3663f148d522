#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "ptw/classifier.hpp"
#include "ptw/generator.hpp"
#include "ptw/message.hpp"
#include "ptw/perceptual.hpp"

namespace ptw {

/// Maps a (+-1 encoded) message to additive perturbations of a fixed subset
/// of generator parameters. Two-layer MLP; each target gets a learnable
/// gain initialized to 1e-2.
struct ParameterMapper {
  std::int64_t n = 0;
  bool condition_on_latent = false;
  std::int64_t z_dim = 0;
  /// Generator parameter names, all 1-D so perturbations can be per-sample.
  std::vector<std::string> targets;
  std::vector<std::int64_t> target_sizes;
  ParamSet params;

  std::int64_t perturbed_numel() const;
};

/// Maps a message to a latent offset, clamped to `clamp` in L2 norm.
struct LatentMapper {
  std::int64_t n = 0;
  std::int64_t z_dim = 0;
  double clamp = 1.0;
  ParamSet params;
};

/// Default target subset: the per-channel noise strengths of the last two
/// synthesis conv blocks.
std::vector<std::string> default_mapper_targets(const GeneratorParams& g);

struct MapperInit {
  std::int64_t hidden = 128;
  /// Zero output head: the mapper starts as the identity perturbation.
  bool zero_head = false;
  bool condition_on_latent = false;
  double latent_clamp = 1.0;
  /// Initial per-target gain on the perturbation.
  double gain = 3e-2;
  /// Overrides default_mapper_targets when non-empty (1-D parameters only).
  std::vector<std::string> targets;
};

ParameterMapper init_parameter_mapper(const GeneratorParams& g, std::int64_t n,
                                      std::uint64_t seed, const MapperInit& init = {});
LatentMapper init_latent_mapper(const GeneratorParams& g, std::int64_t n, std::uint64_t seed,
                                const MapperInit& init = {});

/// Messages as a [B, n] float tensor of 0/1.
torch::Tensor message_batch(const std::vector<Message>& messages);

/// Generator view with the mapper's perturbation added on the target subset.
/// The base generator is referenced, never modified.
struct PerturbedGenerator {
  const GeneratorParams* base = nullptr;
  ParamSet overrides;

  torch::Tensor render(const LatentBatch& latents, double psi = 1.0) const;
};

/// Per-sample perturbation of the target subset, [B, perturbed_numel].
torch::Tensor parameter_perturbation(const ParameterMapper& p, const torch::Tensor& messages,
                                     const torch::Tensor& z = {});

/// theta_0 + mapper(m[, z]) on the target subset. `messages` is [B, n]; the
/// view renders sample i with perturbation i.
PerturbedGenerator apply_parameter_mapper(const ParameterMapper& p, const GeneratorParams& g,
                                          const torch::Tensor& messages,
                                          const torch::Tensor& z = {});

/// z + clamp(mapper(m)). Throws InvalidArgument on a latent dimension
/// mismatch.
torch::Tensor apply_latent_mapper(const LatentMapper& l, const torch::Tensor& messages,
                                  const torch::Tensor& z);

/// The secret watermarking key: a trained message decoder plus metadata.
struct WatermarkKey {
  ClassifierParams decoder;
  std::int64_t n = 0;
  /// Architecture of the generator the key was trained against.
  ArchConfig arch;
  double kappa = 0.05;
  nlohmann::json metadata = nlohmann::json::object();

  std::string arch_hash() const { return arch.hash(); }
};

/// Warns (does not throw) when the key was trained for another architecture.
void check_key_compatibility(const WatermarkKey& key, const GeneratorParams& g);

struct KeygenConfig {
  std::int64_t n = 16;
  std::int64_t steps = 1500;
  /// Weight of the message (bitwise cross-entropy) loss.
  double lambda_r = 1.0;
  double lambda_lpips = 1.0;
  /// The perceptual weight stays 0 until the running batch agreement reaches
  /// perceptual_gate (values <= 0.5 open it at step 0), then ramps linearly
  /// to lambda_lpips over perceptual_warmup steps.
  double perceptual_gate = 0.75;
  std::int64_t perceptual_warmup = 200;
  double lr_mappers = 1e-3;
  double lr_decoder = 1e-3;
  std::int64_t batch_size = 16;
  std::uint64_t seed = 0;
  double target_agreement = 0.95;
  std::int64_t holdout = 256;
  std::int64_t log_every = 50;
  std::int64_t decoder_resolution = 32;
  MapperInit mapper;

  void validate() const;
};

struct KeygenLogEntry {
  std::int64_t step = 0;
  double perceptual_loss = 0.0;
  double message_loss = 0.0;
  double batch_agreement = 0.0;
};

struct KeygenLog {
  std::vector<KeygenLogEntry> entries;
  double heldout_agreement = 0.0;
  bool target_met = false;
  /// Step at which the perceptual term switched on; -1 if it never did.
  std::int64_t gate_step = -1;
};

struct KeygenResult {
  WatermarkKey key;
  ParameterMapper parameter_mapper;
  LatentMapper latent_mapper;
  KeygenLog log;
};

/// Co-trains the parameter mapper, latent mapper and decoder against the
/// frozen generator `g`. Each step samples messages and latents, renders the
/// perturbed image x and the clean image x0 for the same latent, and
/// minimizes lambda_lpips * d(x0, x) + lambda_r * BCE(decoder(x), m).
///
/// `g` is never modified. Throws TrainingDiverged on a non-finite loss;
/// missing the target agreement only sets log.target_met = false.
KeygenResult keygen(const GeneratorParams& g, const KeygenConfig& config,
                    const FeatureExtractor& fx,
                    const std::function<void(const KeygenLogEntry&)>& on_log = {});

/// Mean agreement of the decoder on `count` mapper-perturbed images with
/// fresh messages and latents.
double mapper_agreement(const KeygenResult& r, const GeneratorParams& g, std::int64_t count,
                        std::uint64_t seed);

struct Checkpoint;
Checkpoint key_checkpoint(const WatermarkKey& key);
/// Throws IncompatibleCheckpoint unless `c` is a complete key.
WatermarkKey key_from_checkpoint(const Checkpoint& c);
void save_key(const WatermarkKey& key, const std::filesystem::path& path);
WatermarkKey load_key(const std::filesystem::path& path);

/// Mapper sidecar (parameter + latent mapper tensors) for direct embedding
/// and overwriting.
void save_mappers(const KeygenResult& r, const std::filesystem::path& path);
void load_mappers(const std::filesystem::path& path, ParameterMapper& p, LatentMapper& l);

}  // namespace ptw
