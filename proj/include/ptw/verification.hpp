#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "ptw/generator.hpp"
#include "ptw/keygen.hpp"
#include "ptw/message.hpp"

namespace ptw {

/// Decoded bits for a batch, [B, n] float 0/1. Images of any resolution are
/// resized to the key's decoding resolution.
torch::Tensor extract_bits(const torch::Tensor& images, const WatermarkKey& key);

/// Message hidden in a single image ([3,H,W] or [1,3,H,W]).
Message extract(const torch::Tensor& image, const WatermarkKey& key);

/// Extracts, counts matching bits and runs the one-sided binomial test.
/// Throws InvalidArgument if len(m) != key.n.
VerificationResult verify(const torch::Tensor& image, const WatermarkKey& key, const Message& m,
                          const ThresholdConfig& threshold = {});

std::vector<VerificationResult> verify_batch(const torch::Tensor& images, const WatermarkKey& key,
                                             const Message& m,
                                             const ThresholdConfig& threshold = {},
                                             std::int64_t chunk = 256);

/// Per-image agreement rate with m.
std::vector<double> agreement_rates(const torch::Tensor& images, const WatermarkKey& key,
                                    const Message& m, std::int64_t chunk = 256);

/// Fraction of images with p <= kappa.
double detection_rate(const std::vector<VerificationResult>& results);

/// Capacity n * (mean agreement - 0.5) over images rendered from
/// `num_images` freshly sampled latents.
double measure_capacity(const GeneratorParams& g, const WatermarkKey& key, const Message& m,
                        std::int64_t num_images, const SamplingStrategy& sampler,
                        std::uint64_t seed);

/// {k, n, p_value, detected, message_hex}
nlohmann::json to_json(const VerificationResult& r);

}  // namespace ptw
