#include "ptw/classifier.hpp"

#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/image.hpp"

namespace ptw {

namespace F = torch::nn::functional;

namespace {
constexpr std::int64_t kWidths[] = {32, 64, 64, 128};
}

ClassifierParams init_classifier(std::int64_t outputs, std::uint64_t seed,
                                 std::int64_t input_resolution) {
  if (outputs < 1) throw InvalidArgument("classifier needs at least one output");
  if (input_resolution < 16 || input_resolution % 8 != 0) {
    throw InvalidArgument("classifier resolution must be a multiple of 8 and >= 16");
  }
  auto rng = make_rng(seed);
  ClassifierParams c;
  c.input_resolution = input_resolution;
  c.outputs = outputs;
  std::int64_t cin = 3;
  for (int i = 0; i < 4; ++i) {
    const auto prefix = "conv" + std::to_string(i);
    c.params.set(prefix + ".weight", kaiming({kWidths[i], cin, 3, 3}, cin * 9, rng));
    c.params.set(prefix + ".bias", torch::zeros({kWidths[i]}));
    cin = kWidths[i];
  }
  const auto spatial = input_resolution / 8;
  const auto flat = kWidths[3] * spatial * spatial;
  c.params.set("head.weight", kaiming({outputs, flat}, flat, rng, 1.0));
  c.params.set("head.bias", torch::zeros({outputs}));
  return c;
}

torch::Tensor classify(const ClassifierParams& c, const torch::Tensor& images) {
  check_image_batch(images);
  auto x = resize_bilinear(images, c.input_resolution);
  for (int i = 0; i < 4; ++i) {
    const auto prefix = "conv" + std::to_string(i);
    x = F::conv2d(x, c.params.at(prefix + ".weight"),
                  F::Conv2dFuncOptions().stride(i == 0 ? 1 : 2).padding(1).bias(
                      c.params.at(prefix + ".bias")));
    x = F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
  }
  return torch::matmul(x.flatten(1), c.params.at("head.weight").t()) + c.params.at("head.bias");
}

}  // namespace ptw
