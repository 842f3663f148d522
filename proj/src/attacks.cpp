#include "ptw/attacks.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/image.hpp"
#include "ptw/params.hpp"

namespace ptw {

namespace F = torch::nn::functional;

namespace attacks {

namespace {

torch::Tensor checked(const torch::Tensor& x) {
  auto b = as_batch(x);
  check_image_batch(b);
  return b;
}

}  // namespace

torch::Tensor crop(const torch::Tensor& x, double ratio) {
  auto b = checked(x);
  if (!(ratio > 0.0) || ratio > 1.0) throw InvalidArgument("crop ratio must lie in (0, 1]");
  const auto h = b.size(2);
  if (b.size(3) != h) throw InvalidArgument("crop expects square images");
  const auto side = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(ratio * h)));
  const auto off = (h - side) / 2;
  return resize_bilinear(b.slice(2, off, off + side).slice(3, off, off + side), h);
}

torch::Tensor jpeg(const torch::Tensor& x, double quality) {
  auto b = checked(x);
  if (!(quality >= 1.0)) throw InvalidArgument("jpeg quality must be >= 1");
  const int q = static_cast<int>(std::lround(std::min(quality, 100.0)));
  auto u8 = ((b.detach().to(torch::kFloat).clamp(-1, 1) + 1) * 127.5)
                .round()
                .to(torch::kUInt8)
                .permute({0, 2, 3, 1})
                .flip(3)
                .contiguous();
  const int h = static_cast<int>(b.size(2));
  const int w = static_cast<int>(b.size(3));
  auto out = torch::empty_like(u8);
  for (std::int64_t i = 0; i < u8.size(0); ++i) {
    cv::Mat img(h, w, CV_8UC3, u8[i].data_ptr<std::uint8_t>());
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".jpg", img, buf, {cv::IMWRITE_JPEG_QUALITY, q})) {
      throw AttackError("jpeg encoding failed");
    }
    cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (dec.empty() || dec.rows != h || dec.cols != w || dec.type() != CV_8UC3) {
      throw AttackError("jpeg decoding failed");
    }
    std::memcpy(out[i].data_ptr<std::uint8_t>(), dec.ptr(),
                static_cast<std::size_t>(h) * w * 3);
  }
  return (out.flip(3).permute({0, 3, 1, 2}).to(b.scalar_type()) / 127.5 - 1).contiguous();
}

torch::Tensor noise(const torch::Tensor& x, double sigma, std::uint64_t seed) {
  auto b = checked(x);
  if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
  auto rng = make_rng(seed);
  return (b + randn(b.sizes(), rng).to(b.scalar_type()) * sigma).clamp(-1, 1);
}

torch::Tensor quantize(const torch::Tensor& x, double q) {
  auto b = checked(x);
  if (!(q > 0.0)) throw InvalidArgument("quantization step must be positive");
  auto p = (b + 1) / 2;
  auto qp = torch::floor(p / q) * q;
  return (qp * 2 - 1).clamp(-1, 1);
}

std::int64_t blur_kernel_size(double sigma) {
  if (!(sigma >= 0.0)) throw InvalidArgument("blur sigma must be >= 0");
  auto k = static_cast<std::int64_t>(std::ceil(6.0 * sigma - 1e-9));
  if (k < 1) k = 1;
  if (k % 2 == 0) ++k;
  return k;
}

torch::Tensor blur(const torch::Tensor& x, double sigma) {
  auto b = checked(x);
  const auto k = blur_kernel_size(sigma);
  if (k == 1) return b.clone();
  const auto r = k / 2;
  if (r >= b.size(2) || r >= b.size(3)) throw InvalidArgument("blur kernel exceeds the image size");
  auto t = torch::arange(-r, r + 1, torch::TensorOptions().dtype(b.scalar_type()));
  auto g = torch::exp(-(t * t) / (2 * sigma * sigma));
  g = g / g.sum();
  const auto c = b.size(1);
  auto kx = g.view({1, 1, 1, k}).repeat({c, 1, 1, 1});
  auto ky = g.view({1, 1, k, 1}).repeat({c, 1, 1, 1});
  auto y = F::pad(b, F::PadFuncOptions({r, r, 0, 0}).mode(torch::kReflect));
  y = F::conv2d(y, kx, F::Conv2dFuncOptions().groups(c));
  y = F::pad(y, F::PadFuncOptions({0, 0, r, r}).mode(torch::kReflect));
  y = F::conv2d(y, ky, F::Conv2dFuncOptions().groups(c));
  return y.clamp(-1, 1);
}

torch::Tensor bicubic_upscale(const torch::Tensor& x) {
  auto b = checked(x);
  return F::interpolate(b, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{b.size(2) * 4, b.size(3) * 4})
                               .mode(torch::kBicubic)
                               .align_corners(false))
      .clamp(-1, 1);
}

std::vector<std::int64_t> super_resolution_schedule(std::int64_t resolution, double ratio) {
  if (!(ratio > 0.0) || ratio > 1.0) throw InvalidArgument("super-resolution ratio must lie in (0, 1]");
  const auto low = static_cast<std::int64_t>(std::floor(static_cast<double>(resolution) * ratio));
  if (low < 4) {
    throw InvalidArgument("super-resolution would downscale " + std::to_string(resolution) +
                          "px images to " + std::to_string(low) + "px (minimum 4)");
  }
  std::vector<std::int64_t> out{low};
  for (auto s = low; s < resolution;) {
    s *= 4;
    out.push_back(s);
  }
  out.push_back(resolution);
  return out;
}

torch::Tensor super_resolution(const torch::Tensor& x, double ratio, const Upscaler& upscaler) {
  auto b = checked(x);
  const auto res = b.size(2);
  if (b.size(3) != res) throw InvalidArgument("super-resolution expects square images");
  const auto schedule = super_resolution_schedule(res, ratio);
  auto y = resize_bilinear(b, schedule.front());
  while (y.size(2) < res) {
    const auto expected = y.size(2) * 4;
    y = upscaler(y);
    if (y.dim() != 4 || y.size(2) != expected || y.size(3) != expected) {
      throw AttackError("upscaler must return exactly 4x the input resolution");
    }
  }
  return resize_bilinear(y, res).clamp(-1, 1);
}

}  // namespace attacks

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::Crop: return "crop";
    case AttackKind::Jpeg: return "jpeg";
    case AttackKind::Noise: return "noise";
    case AttackKind::Quantize: return "quantize";
    case AttackKind::Blur: return "blur";
    case AttackKind::SuperResolution: return "super_resolution";
    case AttackKind::Overwrite: return "overwrite";
    case AttackKind::Rpt: return "rpt";
  }
  throw InternalError("unknown attack kind");
}

AttackKind attack_kind_from_string(const std::string& name) {
  for (auto k : {AttackKind::Crop, AttackKind::Jpeg, AttackKind::Noise, AttackKind::Quantize,
                 AttackKind::Blur, AttackKind::SuperResolution, AttackKind::Overwrite,
                 AttackKind::Rpt}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown attack '" + name + "'");
}

bool is_black_box(AttackKind kind) {
  return kind != AttackKind::Overwrite && kind != AttackKind::Rpt;
}

std::pair<double, double> parameter_range(AttackKind kind) {
  switch (kind) {
    case AttackKind::Crop: return {0.9, 1.0};
    case AttackKind::Jpeg: return {80.0, 200.0};
    case AttackKind::Noise: return {0.0, 0.05};
    case AttackKind::Quantize: return {0.5, 1.0};
    case AttackKind::Blur: return {0.25, 2.0};
    case AttackKind::SuperResolution: return {0.125, 0.5};
    case AttackKind::Overwrite: return {0.5, 1.5};
    case AttackKind::Rpt: return {1.0, 1e9};
  }
  throw InternalError("unknown attack kind");
}

std::vector<double> default_grid(AttackKind kind) {
  switch (kind) {
    case AttackKind::Crop: return {1.0, 0.975, 0.95, 0.925, 0.9};
    case AttackKind::Jpeg: return {100, 95, 90, 85, 80};
    case AttackKind::Noise: return {0.01, 0.02, 0.03, 0.04, 0.05};
    case AttackKind::Quantize: return {0.5, 0.625, 0.75, 0.875, 1.0};
    case AttackKind::Blur: return {0.25, 0.5, 1.0, 1.5, 2.0};
    case AttackKind::SuperResolution: return {0.5, 0.375, 0.25, 0.125};
    case AttackKind::Overwrite: return {0.5, 1.0, 1.5};
    case AttackKind::Rpt: return {25, 50, 100};
  }
  throw InternalError("unknown attack kind");
}

void AttackSpec::validate() const {
  const auto [lo, hi] = parameter_range(kind);
  if (!(parameter >= lo && parameter <= hi)) {
    std::ostringstream os;
    os << to_string(kind) << " parameter " << parameter << " outside [" << lo << ", " << hi << "]";
    throw InvalidArgument(os.str());
  }
}

std::string AttackSpec::label() const {
  std::ostringstream os;
  os << to_string(kind) << '@' << parameter;
  return os.str();
}

torch::Tensor apply_attack(const torch::Tensor& images, const AttackSpec& spec,
                           const attacks::Upscaler& upscaler) {
  spec.validate();
  torch::NoGradGuard no_grad;
  switch (spec.kind) {
    case AttackKind::Crop: return attacks::crop(images, spec.parameter);
    case AttackKind::Jpeg: return attacks::jpeg(images, spec.parameter);
    case AttackKind::Noise: return attacks::noise(images, spec.parameter, spec.seed);
    case AttackKind::Quantize: return attacks::quantize(images, spec.parameter);
    case AttackKind::Blur: return attacks::blur(images, spec.parameter);
    case AttackKind::SuperResolution:
      return attacks::super_resolution(images, spec.parameter, upscaler);
    case AttackKind::Overwrite:
    case AttackKind::Rpt:
      throw InvalidArgument(to_string(spec.kind) + " is a white-box attack on the generator");
  }
  throw InternalError("unknown attack kind");
}

}  // namespace ptw
