#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/types.h>

namespace ptw {

// Images are float tensors of shape [B, 3, H, W] (or [3, H, W]) in [-1, 1].

/// Throws InvalidArgument unless `x` is a [B,3,H,W] batch.
void check_image_batch(const torch::Tensor& x, const char* what = "image");

/// Promotes [3,H,W] to [1,3,H,W]; validates the channel count.
torch::Tensor as_batch(const torch::Tensor& x);

/// The single resampling filter used for every resize in the library:
/// bilinear, half-pixel centres, no antialiasing. Differentiable.
torch::Tensor resize_bilinear(const torch::Tensor& x, std::int64_t size);

/// Quantizes to 8 bits and back, i.e. the exact pixels a lossless
/// PNG round trip preserves.
torch::Tensor quantize_to_8bit(const torch::Tensor& x);

void save_png(const torch::Tensor& image, const std::filesystem::path& path);
/// Loads any format OpenCV decodes into [1,3,H,W] in [-1,1].
torch::Tensor load_image(const std::filesystem::path& path);

/// Loads every decodable image under `dir`, resized to `resolution`.
torch::Tensor load_image_dir(const std::filesystem::path& dir, std::int64_t resolution,
                             std::int64_t limit = -1);

/// Writes a batch as numbered PNGs (000000.png, ...).
void save_image_dir(const torch::Tensor& images, const std::filesystem::path& dir);

}  // namespace ptw
