#include "ptw/perceptual.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>
#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/image.hpp"

namespace ptw {

namespace F = torch::nn::functional;

namespace {

constexpr std::int64_t kWidths[] = {16, 32, 64, 128};
constexpr double kPixelWeight = 0.1;

torch::Tensor normalize_channels(const torch::Tensor& f) {
  return f * torch::rsqrt(f.square().sum(1, true) + 1e-10);
}

}  // namespace

std::int64_t FeatureExtractor::feature_dim() const { return kWidths[3]; }

FeatureExtractor make_feature_extractor(std::uint64_t seed, std::int64_t input_resolution) {
  if (input_resolution < 16) throw InvalidArgument("extractor resolution must be >= 16");
  auto rng = make_rng(seed);
  FeatureExtractor fx;
  fx.input_resolution = input_resolution;
  std::int64_t cin = 3;
  for (int i = 0; i < 4; ++i) {
    const auto cout = kWidths[i];
    const auto prefix = "conv" + std::to_string(i);
    fx.params.set(prefix + ".weight", kaiming({cout, cin, 3, 3}, cin * 9, rng));
    fx.params.set(prefix + ".bias", randn({cout}, rng) * 0.05);
    cin = cout;
  }
  return fx;
}

FeatureTaps extract_features(const FeatureExtractor& fx, const torch::Tensor& images) {
  check_image_batch(images);
  auto x = resize_bilinear(images, fx.input_resolution);
  const auto dtype = x.scalar_type();
  FeatureTaps out;
  for (int i = 0; i < 4; ++i) {
    const auto prefix = "conv" + std::to_string(i);
    if (i > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    x = F::conv2d(x, fx.params.at(prefix + ".weight").to(dtype),
                  F::Conv2dFuncOptions().padding(1).bias(fx.params.at(prefix + ".bias").to(dtype)));
    x = F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
    if (i < 3) out.taps.push_back(x);
  }
  out.pooled = x.mean({2, 3});
  return out;
}

torch::Tensor perceptual_distance(const torch::Tensor& x, const torch::Tensor& y,
                                  const FeatureExtractor& fx) {
  check_image_batch(x);
  check_image_batch(y);
  if (x.sizes() != y.sizes()) {
    throw InvalidArgument("perceptual distance needs images of equal shape");
  }
  auto fx_x = extract_features(fx, x);
  auto fx_y = extract_features(fx, y);
  auto dist = (x - y).square().mean({1, 2, 3}) * kPixelWeight;
  for (std::size_t i = 0; i < fx_x.taps.size(); ++i) {
    auto diff = normalize_channels(fx_x.taps[i]) - normalize_channels(fx_y.taps[i]);
    dist = dist + diff.square().sum(1).mean({1, 2});
  }
  return dist;
}

torch::Tensor fid_features(const FeatureExtractor& fx, const torch::Tensor& images,
                           std::int64_t chunk) {
  check_image_batch(images);
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < images.size(0); i += chunk) {
    auto part = images.slice(0, i, std::min(images.size(0), i + chunk));
    parts.push_back(extract_features(fx, part).pooled.to(torch::kDouble));
  }
  return torch::cat(parts, 0);
}

FidStats fid_stats(const torch::Tensor& features) {
  if (features.dim() != 2 || features.size(0) < 2) {
    throw InvalidArgument("FID needs at least 2 images per set");
  }
  auto f = features.to(torch::kDouble).contiguous();
  const auto n = f.size(0);
  const auto d = f.size(1);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      f.data_ptr<double>(), n, d);
  FidStats s;
  s.count = n;
  s.mean = m.colwise().mean().transpose();
  Eigen::MatrixXd centered = m.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

FidStats fid_stats(const FeatureExtractor& fx, const torch::Tensor& images) {
  check_image_batch(images);
  if (images.size(0) < 2) throw InvalidArgument("FID needs at least 2 images per set");
  return fid_stats(fid_features(fx, images));
}

MatrixSqrt matrix_sqrt(const Eigen::MatrixXd& a) {
  MatrixSqrt out;
  Eigen::MatrixXcd ac = a.cast<std::complex<double>>();
  out.root = ac.sqrt();
  const double denom = std::max(a.norm(), 1e-300);
  out.residual = (out.root * out.root - ac).norm() / denom;
  return out;
}

double frechet_distance(const FidStats& a, const FidStats& b) {
  if (a.mean.size() != b.mean.size()) throw InvalidArgument("feature dimensions differ");
  const auto d = a.mean.size();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sa = a.cov + kCovarianceShrinkage * eye;
  const Eigen::MatrixXd sb = b.cov + kCovarianceShrinkage * eye;
  const Eigen::MatrixXd prod = sa * sb;
  const auto root = matrix_sqrt(prod);
  if (!(root.residual < kSqrtResidualTolerance)) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(prod);
    const auto& sv = svd.singularValues();
    std::ostringstream os;
    os << "matrix square root did not converge (residual " << root.residual
       << ", condition number " << sv(0) / std::max(sv(sv.size() - 1), 1e-300) << ")";
    throw NumericalError(os.str());
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * root.root.trace().real();
  return std::max(0.0, value);
}

double fid(const torch::Tensor& x, const torch::Tensor& y, const FeatureExtractor& fx) {
  return frechet_distance(fid_stats(fx, x), fid_stats(fx, y));
}

}  // namespace ptw
