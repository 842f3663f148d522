#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/types.h>

namespace ptw {

/// Black-box image transforms. Every transform takes and returns a
/// [B,3,H,W] batch in [-1,1] and preserves resolution and value range.
namespace attacks {

/// Center crop to floor(ratio * H) pixels, resized back to H. ratio in (0,1].
torch::Tensor crop(const torch::Tensor& x, double ratio);

/// JPEG encode/decode at quality min(quality, 100). Throws AttackError if
/// the codec fails.
torch::Tensor jpeg(const torch::Tensor& x, double quality);

/// x + N(0, sigma^2), clamped to [-1,1].
torch::Tensor noise(const torch::Tensor& x, double sigma, std::uint64_t seed);

/// q * floor(p / q) on the [0,1] pixel scale p = (x + 1) / 2, mapped back.
torch::Tensor quantize(const torch::Tensor& x, double q);

/// Odd Gaussian kernel size covering 6 sigma; 1 means identity.
std::int64_t blur_kernel_size(double sigma);

/// Separable Gaussian blur with reflect padding.
torch::Tensor blur(const torch::Tensor& x, double sigma);

/// Maps an image batch to exactly 4x its resolution.
using Upscaler = std::function<torch::Tensor(const torch::Tensor&)>;

/// Bicubic 4x upscaling, clamped to [-1,1].
torch::Tensor bicubic_upscale(const torch::Tensor& x);

/// Resolutions visited by the super-resolution attack: the downscaled size,
/// each upscaler output, and finally the original resolution.
std::vector<std::int64_t> super_resolution_schedule(std::int64_t resolution, double ratio);

/// Downscale to floor(H * ratio), upscale while below H, resize back to H.
/// Throws InvalidArgument if the downscaled size is below 4 and AttackError
/// if the upscaler breaks its 4x contract.
torch::Tensor super_resolution(const torch::Tensor& x, double ratio,
                               const Upscaler& upscaler = bicubic_upscale);

}  // namespace attacks

enum class AttackKind { Crop, Jpeg, Noise, Quantize, Blur, SuperResolution, Overwrite, Rpt };

std::string to_string(AttackKind kind);
/// Throws InvalidArgument on an unknown name.
AttackKind attack_kind_from_string(const std::string& name);
bool is_black_box(AttackKind kind);

/// Admissible parameter interval of a black-box attack.
std::pair<double, double> parameter_range(AttackKind kind);

/// Default parameter grid, ordered from weakest to strongest.
std::vector<double> default_grid(AttackKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::Crop;
  double parameter = 1.0;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument if the parameter is outside parameter_range.
  void validate() const;
  std::string label() const;
};

/// Applies a black-box attack. Throws InvalidArgument for white-box kinds.
torch::Tensor apply_attack(const torch::Tensor& images, const AttackSpec& spec,
                           const attacks::Upscaler& upscaler = attacks::bicubic_upscale);

}  // namespace ptw
