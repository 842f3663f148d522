#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <torch/types.h>

#include "ptw/params.hpp"

namespace ptw {

/// Shape of the miniature style-based generator.
///
/// Synthesis starts from a learned 4x4 constant and runs one style-modulated
/// 3x3 conv per resolution (4, 8, ..., resolution) followed by a modulated
/// 1x1 toRGB layer. Every conv layer and the toRGB layer consume one style
/// vector, so num_ws() = num_conv_layers() + 1.
struct ArchConfig {
  std::int64_t resolution = 32;
  std::int64_t z_dim = 64;
  std::int64_t w_dim = 64;
  std::int64_t mapping_layers = 2;
  /// Channel width of each conv block, lowest resolution first.
  std::vector<std::int64_t> widths = {32, 32, 32, 32};

  /// Default widths for a given resolution.
  static ArchConfig desk(std::int64_t resolution = 32, std::int64_t width = 32);

  /// Throws InvalidArgument unless resolution is a power of two >= 16 and
  /// the width list matches the number of blocks.
  void validate() const;
  std::int64_t num_conv_layers() const;
  std::int64_t num_ws() const { return num_conv_layers() + 1; }
  /// 4, 8, ..., resolution.
  std::vector<std::int64_t> block_resolutions() const;
  /// Hex digest of every field; identifies compatible checkpoints and keys.
  std::string hash() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Parameters of the generator plus its non-trainable buffers (running mean
/// style and the fixed per-layer noise maps).
class GeneratorParams {
 public:
  ArchConfig arch;
  ParamSet params;
  ParamSet buffers;

  bool frozen() const noexcept { return frozen_; }
  /// Tensors an optimizer may update. Throws FrozenParameters on a pivot.
  std::vector<torch::Tensor> trainable_tensors() const;

  /// Deep, trainable copy.
  GeneratorParams clone() const;

  /// Running mean of mapped styles, used by the truncation trick.
  const torch::Tensor& w_avg() const { return buffers.at("w_avg"); }

 private:
  friend GeneratorParams clone_pivot(const GeneratorParams& g);
  bool frozen_ = false;
};

GeneratorParams init_generator(const ArchConfig& arch, std::uint64_t seed);

/// Deep copy with the frozen flag set; the copy never shares storage with
/// the original.
GeneratorParams clone_pivot(const GeneratorParams& g);

/// A batch of latent codes: either Z-space codes [B, z_dim] or per-layer
/// W-space styles [B, num_ws, w_dim] (style mixing / pre-truncated codes).
struct LatentBatch {
  torch::Tensor z;
  torch::Tensor ws;

  std::int64_t size() const;
  LatentBatch slice(std::int64_t begin, std::int64_t end) const;
};

enum class NoiseMode { Const, Random, None };

struct GenerateOptions {
  NoiseMode noise = NoiseMode::Const;
  /// Seed for NoiseMode::Random.
  std::uint64_t noise_seed = 0;
  /// Replaces (or, for per-sample tensors, broadcasts over) named
  /// parameters; used to render perturbed views without copying weights.
  const ParamSet* overrides = nullptr;
};

/// Z -> W through the mapping MLP. z must be [B, z_dim].
torch::Tensor map_latents(const GeneratorParams& g, const torch::Tensor& z,
                          const ParamSet* overrides = nullptr);

/// Styles for every layer, [B, num_ws, w_dim], with truncation applied.
torch::Tensor styles_for(const GeneratorParams& g, const LatentBatch& latents, double psi,
                         const ParamSet* overrides = nullptr);

/// Synthesis network on explicit styles.
torch::Tensor synthesize(const GeneratorParams& g, const torch::Tensor& ws,
                         const GenerateOptions& opts = {});

/// Renders images in [-1,1]. psi = 1 disables truncation, psi = 0 collapses
/// every style to the running mean. Throws InvalidArgument on a latent
/// dimension mismatch or psi outside [0,1].
torch::Tensor generate(const GeneratorParams& g, const LatentBatch& latents, double psi = 1.0,
                       const GenerateOptions& opts = {});

/// Generates `count` images in chunks with gradients disabled.
torch::Tensor generate_images(const GeneratorParams& g, const LatentBatch& latents,
                              double psi = 1.0, std::int64_t chunk = 256);

namespace sampling {
struct Gaussian {};
struct Truncated {
  double psi = 0.7;
};
/// Evenly spaced points on the segment z1 -> z2 (both endpoints included).
/// Without explicit endpoints, random segments are drawn until `count`
/// points exist.
struct Interpolation {
  std::optional<torch::Tensor> z1;
  std::optional<torch::Tensor> z2;
  std::int64_t steps = 8;
};
/// Styles of z1 for layers [0, crossover_layer), z2 from there on.
struct StyleMix {
  std::optional<torch::Tensor> z1;
  std::optional<torch::Tensor> z2;
  std::int64_t crossover_layer = 2;
};
}  // namespace sampling

using SamplingStrategy = std::variant<sampling::Gaussian, sampling::Truncated,
                                      sampling::Interpolation, sampling::StyleMix>;

LatentBatch sample_latents(const GeneratorParams& g, std::int64_t count,
                           const SamplingStrategy& strategy, Rng& rng);

/// Convenience: `count` Gaussian Z codes.
LatentBatch gaussian_latents(const GeneratorParams& g, std::int64_t count, std::uint64_t seed);

}  // namespace ptw
