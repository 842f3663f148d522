#include "ptw/image.hpp"

#include <algorithm>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include "ptw/errors.hpp"

namespace ptw {

namespace F = torch::nn::functional;

void check_image_batch(const torch::Tensor& x, const char* what) {
  if (!x.defined() || x.dim() != 4 || x.size(1) != 3) {
    throw InvalidArgument(std::string(what) + " must be a [B,3,H,W] tensor");
  }
}

torch::Tensor as_batch(const torch::Tensor& x) {
  if (x.defined() && x.dim() == 3) {
    auto b = x.unsqueeze(0);
    check_image_batch(b);
    return b;
  }
  check_image_batch(x);
  return x;
}

torch::Tensor resize_bilinear(const torch::Tensor& x, std::int64_t size) {
  check_image_batch(x);
  if (size < 1) throw InvalidArgument("resize target must be >= 1");
  if (x.size(2) == size && x.size(3) == size) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{size, size})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor quantize_to_8bit(const torch::Tensor& x) {
  auto u = ((x.clamp(-1, 1) + 1) * 127.5).round();
  return u / 127.5 - 1;
}

namespace {

cv::Mat to_mat(const torch::Tensor& image) {
  auto img = image.dim() == 4 ? image[0] : image;
  auto u8 = ((img.detach().clamp(-1, 1) + 1) * 127.5)
                .round()
                .to(torch::kUInt8)
                .permute({1, 2, 0})
                .flip({2})  // RGB -> BGR
                .contiguous();
  cv::Mat m(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC3);
  std::memcpy(m.data, u8.data_ptr<std::uint8_t>(), static_cast<std::size_t>(u8.numel()));
  return m;
}

torch::Tensor from_mat(const cv::Mat& bgr) {
  cv::Mat m = bgr.isContinuous() ? bgr : bgr.clone();
  auto t = torch::from_blob(m.data, {m.rows, m.cols, 3}, torch::kUInt8).clone();
  return t.flip({2}).permute({2, 0, 1}).to(torch::kFloat).div(127.5).sub(1).unsqueeze(0);
}

}  // namespace

void save_png(const torch::Tensor& image, const std::filesystem::path& path) {
  auto b = as_batch(image);
  if (!cv::imwrite(path.string(), to_mat(b))) {
    throw InvalidArgument("could not write image " + path.string());
  }
}

torch::Tensor load_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw InvalidArgument("could not decode image " + path.string());
  return from_mat(m);
}

torch::Tensor load_image_dir(const std::filesystem::path& dir, std::int64_t resolution,
                             std::int64_t limit) {
  if (!std::filesystem::is_directory(dir)) {
    throw InvalidArgument("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<torch::Tensor> images;
  for (const auto& f : files) {
    if (limit >= 0 && static_cast<std::int64_t>(images.size()) >= limit) break;
    cv::Mat m = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (m.empty()) continue;
    images.push_back(resize_bilinear(from_mat(m), resolution));
  }
  if (images.empty()) throw InvalidArgument("no decodable images in " + dir.string());
  return torch::cat(images, 0);
}

void save_image_dir(const torch::Tensor& images, const std::filesystem::path& dir) {
  check_image_batch(images);
  std::filesystem::create_directories(dir);
  for (std::int64_t i = 0; i < images.size(0); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i));
    save_png(images[i], dir / name);
  }
}

}  // namespace ptw
