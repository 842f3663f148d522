#pragma once

#include <cstdint>

#include <torch/types.h>

#include "ptw/params.hpp"

namespace ptw {

/// Four-block conv image classifier. Inputs are resized to
/// `input_resolution` with resize_bilinear, then pass through 3x3 convs with
/// 32, 64, 64 and 128 channels (the last three with stride 2) and a linear
/// head with `outputs` logits. Used as the watermark decoder (outputs = n)
/// and as the detection-game classifier (outputs = 1).
struct ClassifierParams {
  std::int64_t input_resolution = 32;
  std::int64_t outputs = 1;
  ParamSet params;
};

ClassifierParams init_classifier(std::int64_t outputs, std::uint64_t seed,
                                 std::int64_t input_resolution = 32);

/// Logits of shape [B, outputs].
torch::Tensor classify(const ClassifierParams& c, const torch::Tensor& images);

}  // namespace ptw
