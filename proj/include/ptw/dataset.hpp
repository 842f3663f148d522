#pragma once

#include <cstdint>

#include <torch/types.h>

namespace ptw {

/// Procedural "shapes" corpus: a two-colour gradient background with one to
/// three anti-aliased discs and rotated squares. Stands in for a real image
/// dataset at desk scale; deterministic in `seed`.
torch::Tensor synthetic_shapes(std::int64_t count, std::int64_t resolution, std::uint64_t seed);

}  // namespace ptw
