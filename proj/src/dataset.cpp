#include "ptw/dataset.hpp"

#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/params.hpp"

namespace ptw {

torch::Tensor synthetic_shapes(std::int64_t count, std::int64_t resolution, std::uint64_t seed) {
  if (count < 1 || resolution < 4) throw InvalidArgument("invalid corpus size");
  torch::NoGradGuard no_grad;
  auto rng = make_rng(seed);
  const auto n = count;
  auto axis = torch::linspace(-1.0 + 1.0 / resolution, 1.0 - 1.0 / resolution, resolution);
  auto yy = axis.view({1, resolution, 1}).expand({n, resolution, resolution});
  auto xx = axis.view({1, 1, resolution}).expand({n, resolution, resolution});

  // Background gradient between two muted colours.
  auto c0 = rand({n, 3, 1, 1}, rng) * 1.2 - 0.9;
  auto c1 = rand({n, 3, 1, 1}, rng) * 1.2 - 0.9;
  auto angle = rand({n, 1, 1}, rng) * 2 * M_PI;
  auto t = ((xx * torch::cos(angle) + yy * torch::sin(angle)) * 0.5 + 0.5).clamp(0, 1);
  auto img = c0 + (c1 - c0) * t.unsqueeze(1);

  const double sharpness = static_cast<double>(resolution) / 2.0;
  for (int slot = 0; slot < 3; ++slot) {
    auto present = slot == 0 ? torch::ones({n, 1, 1}) : (rand({n, 1, 1}, rng) < 0.5).to(torch::kFloat);
    auto is_disc = (rand({n, 1, 1}, rng) < 0.5).to(torch::kFloat);
    auto cx = rand({n, 1, 1}, rng) * 1.2 - 0.6;
    auto cy = rand({n, 1, 1}, rng) * 1.2 - 0.6;
    auto radius = rand({n, 1, 1}, rng) * 0.3 + 0.15;
    auto theta = rand({n, 1, 1}, rng) * M_PI / 2;
    auto colour = rand({n, 3, 1, 1}, rng) * 2 - 1;

    auto dx = xx - cx;
    auto dy = yy - cy;
    auto disc = torch::sqrt(dx * dx + dy * dy);
    auto rx = dx * torch::cos(theta) + dy * torch::sin(theta);
    auto ry = -dx * torch::sin(theta) + dy * torch::cos(theta);
    auto square = torch::maximum(rx.abs(), ry.abs());
    auto dist = is_disc * disc + (1 - is_disc) * square;
    auto alpha = (torch::sigmoid((radius - dist) * sharpness * 2) * present).unsqueeze(1);
    img = img * (1 - alpha) + colour * alpha;
  }
  return img.clamp(-1, 1).contiguous();
}

}  // namespace ptw
