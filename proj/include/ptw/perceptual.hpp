#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <torch/types.h>

#include "ptw/params.hpp"

namespace ptw {

/// Fixed convolutional feature network shared by the perceptual distance
/// and the Fréchet distance. Four 3x3 conv stages at 32, 16, 8 and 4 pixels;
/// the first three are compared by the perceptual distance and the last is
/// average-pooled into a 128-d descriptor for FID.
///
/// Weights are drawn once from `seed` and never trained.
struct FeatureExtractor {
  static constexpr std::uint64_t kDefaultSeed = 0x5eed'f00dULL;

  std::int64_t input_resolution = 32;
  ParamSet params;

  std::int64_t feature_dim() const;
};

FeatureExtractor make_feature_extractor(std::uint64_t seed = FeatureExtractor::kDefaultSeed,
                                        std::int64_t input_resolution = 32);

struct FeatureTaps {
  std::vector<torch::Tensor> taps;
  torch::Tensor pooled;
};

/// Runs the extractor in the dtype of `images` (float or double).
FeatureTaps extract_features(const FeatureExtractor& fx, const torch::Tensor& images);

/// Per-image perceptual distance, shape [B]: channel-normalized squared
/// feature differences averaged over space and summed over taps, plus
/// 0.1 x pixel MSE. Differentiable in both arguments; exactly 0 on equal
/// inputs. Throws InvalidArgument if resolutions differ.
torch::Tensor perceptual_distance(const torch::Tensor& x, const torch::Tensor& y,
                                  const FeatureExtractor& fx);

/// Pooled descriptors for FID, [N, feature_dim] in double precision.
torch::Tensor fid_features(const FeatureExtractor& fx, const torch::Tensor& images,
                           std::int64_t chunk = 256);

struct FidStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::int64_t count = 0;
};

/// Mean and (unbiased) covariance of the descriptors. Needs >= 2 rows.
FidStats fid_stats(const torch::Tensor& features);
FidStats fid_stats(const FeatureExtractor& fx, const torch::Tensor& images);

struct MatrixSqrt {
  Eigen::MatrixXcd root;
  /// ||root^2 - A||_F / ||A||_F.
  double residual = 0.0;
};

/// Principal square root via complex Schur decomposition.
MatrixSqrt matrix_sqrt(const Eigen::MatrixXd& a);

/// Diagonal shrinkage applied to both covariances before the square root.
inline constexpr double kCovarianceShrinkage = 1e-6;
/// Largest tolerated relative residual of the matrix square root.
inline constexpr double kSqrtResidualTolerance = 1e-6;

/// ||mu_x - mu_y||^2 + Tr(S_x + S_y - 2 (S_x S_y)^1/2), clamped at 0.
/// Throws NumericalError (with the condition number) when the square root
/// residual exceeds kSqrtResidualTolerance.
double frechet_distance(const FidStats& a, const FidStats& b);

/// FID between two image sets; each needs at least 2 images.
double fid(const torch::Tensor& x, const torch::Tensor& y, const FeatureExtractor& fx);

}  // namespace ptw
