#include "ptw/generator.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/hash.hpp"

namespace ptw {

namespace F = torch::nn::functional;

namespace {

constexpr double kLreluGain = 1.4142135623730951;

std::string block_name(std::int64_t res) { return "synthesis.b" + std::to_string(res); }

const torch::Tensor& param(const GeneratorParams& g, const ParamSet* overrides,
                           const std::string& name) {
  if (overrides != nullptr && overrides->contains(name)) return overrides->at(name);
  return g.params.at(name);
}

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)) * kLreluGain;
}

// Style for one layer: affine(w) with an equalized-lr weight. The bias may
// be [Cin] or a per-sample [B, Cin] override.
torch::Tensor layer_style(const GeneratorParams& g, const ParamSet* overrides,
                          const std::string& prefix, const torch::Tensor& w) {
  const auto& a = param(g, overrides, prefix + ".affine.weight");
  const auto& b = param(g, overrides, prefix + ".affine.bias");
  return torch::matmul(w, a.t()) / std::sqrt(static_cast<double>(a.size(1))) + b;
}

// Modulated 3x3 conv with demodulation, computed by scaling activations so
// that the conv weight stays shared across the batch.
torch::Tensor modulated_conv(const torch::Tensor& x, const torch::Tensor& weight,
                             const torch::Tensor& style) {
  const auto cin = weight.size(1);
  const auto k = weight.size(2);
  auto wt = weight / std::sqrt(static_cast<double>(cin * k * k));
  auto y = F::conv2d(x * style.unsqueeze(-1).unsqueeze(-1),
                     wt, F::Conv2dFuncOptions().padding(k / 2));
  auto demod = torch::rsqrt(torch::matmul(style.square(), wt.square().sum({2, 3}).t()) + 1e-8);
  return y * demod.unsqueeze(-1).unsqueeze(-1);
}

void check_latents(const GeneratorParams& g, const LatentBatch& latents) {
  const auto& a = g.arch;
  if (latents.ws.defined()) {
    const auto& ws = latents.ws;
    if (ws.dim() != 3 || ws.size(1) != a.num_ws() || ws.size(2) != a.w_dim) {
      throw InvalidArgument("style codes must be [B, " + std::to_string(a.num_ws()) + ", " +
                            std::to_string(a.w_dim) + "]");
    }
    return;
  }
  if (!latents.z.defined() || latents.z.dim() != 2 || latents.z.size(1) != a.z_dim) {
    throw InvalidArgument("latent codes must be [B, " + std::to_string(a.z_dim) + "]");
  }
}

}  // namespace

ArchConfig ArchConfig::desk(std::int64_t resolution, std::int64_t width) {
  ArchConfig a;
  a.resolution = resolution;
  a.widths.clear();
  for (std::int64_t r = 4; r <= resolution; r *= 2) a.widths.push_back(width);
  return a;
}

void ArchConfig::validate() const {
  if (resolution < 16 || !std::has_single_bit(static_cast<std::uint64_t>(resolution))) {
    throw InvalidArgument("resolution must be a power of two >= 16, got " +
                          std::to_string(resolution));
  }
  if (z_dim < 1 || w_dim < 1 || mapping_layers < 1) {
    throw InvalidArgument("latent and mapping dimensions must be positive");
  }
  if (static_cast<std::int64_t>(widths.size()) != num_conv_layers()) {
    throw InvalidArgument("expected " + std::to_string(num_conv_layers()) +
                          " block widths for resolution " + std::to_string(resolution));
  }
  for (auto w : widths) {
    if (w < 1) throw InvalidArgument("block widths must be positive");
  }
}

std::int64_t ArchConfig::num_conv_layers() const {
  return static_cast<std::int64_t>(std::bit_width(static_cast<std::uint64_t>(resolution))) - 2;
}

std::vector<std::int64_t> ArchConfig::block_resolutions() const {
  std::vector<std::int64_t> out;
  for (std::int64_t r = 4; r <= resolution; r *= 2) out.push_back(r);
  return out;
}

std::string ArchConfig::hash() const {
  std::ostringstream os;
  os << "stylegan-lite/v1;res=" << resolution << ";z=" << z_dim << ";w=" << w_dim
     << ";map=" << mapping_layers << ";widths=";
  for (auto w : widths) os << w << ',';
  return sha256_hex(os.str()).substr(0, 16);
}

std::vector<torch::Tensor> GeneratorParams::trainable_tensors() const {
  if (frozen_) throw FrozenParameters("the pivot generator is frozen and rejects updates");
  return params.list();
}

GeneratorParams GeneratorParams::clone() const {
  GeneratorParams out;
  out.arch = arch;
  out.params = params.clone();
  out.buffers = buffers.clone();
  return out;
}

GeneratorParams clone_pivot(const GeneratorParams& g) {
  auto out = g.clone();
  out.frozen_ = true;
  return out;
}

GeneratorParams init_generator(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  auto rng = make_rng(seed);
  GeneratorParams g;
  g.arch = arch;
  auto& p = g.params;

  std::int64_t in = arch.z_dim;
  for (std::int64_t l = 0; l < arch.mapping_layers; ++l) {
    const auto prefix = "mapping.fc" + std::to_string(l);
    p.set(prefix + ".weight", randn({arch.w_dim, in}, rng));
    p.set(prefix + ".bias", torch::zeros({arch.w_dim}));
    in = arch.w_dim;
  }

  const auto res = arch.block_resolutions();
  p.set("synthesis.const", randn({arch.widths[0], 4, 4}, rng));
  std::int64_t cin = arch.widths[0];
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto prefix = block_name(res[i]);
    const auto cout = arch.widths[i];
    p.set(prefix + ".affine.weight", randn({cin, arch.w_dim}, rng));
    p.set(prefix + ".affine.bias", torch::ones({cin}));
    p.set(prefix + ".conv.weight", randn({cout, cin, 3, 3}, rng));
    p.set(prefix + ".conv.bias", torch::zeros({cout}));
    p.set(prefix + ".noise_strength", torch::zeros({cout}));
    g.buffers.set(prefix + ".noise_const", randn({1, cout, res[i], res[i]}, rng));
    cin = cout;
  }
  p.set("synthesis.torgb.affine.weight", randn({cin, arch.w_dim}, rng));
  p.set("synthesis.torgb.affine.bias", torch::ones({cin}));
  p.set("synthesis.torgb.weight", randn({3, cin, 1, 1}, rng));
  p.set("synthesis.torgb.bias", torch::zeros({3}));

  torch::NoGradGuard no_grad;
  g.buffers.set("w_avg", map_latents(g, randn({1024, arch.z_dim}, rng)).mean(0));
  return g;
}

torch::Tensor map_latents(const GeneratorParams& g, const torch::Tensor& z,
                          const ParamSet* overrides) {
  if (z.dim() != 2 || z.size(1) != g.arch.z_dim) {
    throw InvalidArgument("latent codes must be [B, " + std::to_string(g.arch.z_dim) + "]");
  }
  auto h = z * torch::rsqrt(z.square().mean(1, true) + 1e-8);
  for (std::int64_t l = 0; l < g.arch.mapping_layers; ++l) {
    const auto prefix = "mapping.fc" + std::to_string(l);
    const auto& w = param(g, overrides, prefix + ".weight");
    h = lrelu(torch::matmul(h, w.t()) / std::sqrt(static_cast<double>(w.size(1))) +
              param(g, overrides, prefix + ".bias"));
  }
  return h;
}

torch::Tensor styles_for(const GeneratorParams& g, const LatentBatch& latents, double psi,
                         const ParamSet* overrides) {
  if (!(psi >= 0.0 && psi <= 1.0)) throw InvalidArgument("truncation psi must lie in [0,1]");
  check_latents(g, latents);
  torch::Tensor ws;
  if (latents.ws.defined()) {
    ws = latents.ws;
  } else {
    ws = map_latents(g, latents.z, overrides).unsqueeze(1).expand({-1, g.arch.num_ws(), -1});
  }
  if (psi != 1.0) {
    const auto& avg = g.w_avg();
    ws = avg + (ws - avg) * psi;
  }
  return ws;
}

namespace {

/// [C] biases broadcast over the batch; per-sample [B, C] overrides apply
/// to their own image.
torch::Tensor channel_bias(const torch::Tensor& b) {
  return b.dim() == 2 ? b.view({b.size(0), b.size(1), 1, 1}) : b.view({1, -1, 1, 1});
}

}  // namespace

torch::Tensor synthesize(const GeneratorParams& g, const torch::Tensor& ws,
                         const GenerateOptions& opts) {
  const auto& a = g.arch;
  const auto* ov = opts.overrides;
  const auto batch = ws.size(0);
  std::optional<Rng> noise_rng;
  if (opts.noise == NoiseMode::Random) noise_rng = make_rng(opts.noise_seed);

  auto x = param(g, ov, "synthesis.const").unsqueeze(0).expand({batch, -1, -1, -1});
  const auto res = a.block_resolutions();
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto prefix = block_name(res[i]);
    if (i > 0) {
      x = F::interpolate(x, F::InterpolateFuncOptions()
                                .scale_factor(std::vector<double>{2.0, 2.0})
                                .mode(torch::kBilinear)
                                .align_corners(false));
    }
    auto style = layer_style(g, ov, prefix, ws.select(1, static_cast<std::int64_t>(i)));
    x = modulated_conv(x, param(g, ov, prefix + ".conv.weight"), style);
    if (opts.noise != NoiseMode::None) {
      torch::Tensor noise = opts.noise == NoiseMode::Const
                                ? g.buffers.at(prefix + ".noise_const")
                                : randn({batch, x.size(1), res[i], res[i]}, *noise_rng);
      x = x + noise * channel_bias(param(g, ov, prefix + ".noise_strength"));
    }
    x = lrelu(x + channel_bias(param(g, ov, prefix + ".conv.bias")));
  }

  auto style = layer_style(g, ov, "synthesis.torgb", ws.select(1, a.num_ws() - 1));
  const auto& w = param(g, ov, "synthesis.torgb.weight");
  auto rgb = F::conv2d(x * style.unsqueeze(-1).unsqueeze(-1),
                       w / std::sqrt(static_cast<double>(w.size(1)))) +
             channel_bias(param(g, ov, "synthesis.torgb.bias"));
  return torch::tanh(rgb);
}

torch::Tensor generate(const GeneratorParams& g, const LatentBatch& latents, double psi,
                       const GenerateOptions& opts) {
  return synthesize(g, styles_for(g, latents, psi, opts.overrides), opts);
}

torch::Tensor generate_images(const GeneratorParams& g, const LatentBatch& latents, double psi,
                              std::int64_t chunk) {
  torch::NoGradGuard no_grad;
  const auto n = latents.size();
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < n; i += chunk) {
    parts.push_back(generate(g, latents.slice(i, std::min(n, i + chunk)), psi));
  }
  return torch::cat(parts, 0);
}

std::int64_t LatentBatch::size() const {
  if (ws.defined()) return ws.size(0);
  if (z.defined()) return z.size(0);
  return 0;
}

LatentBatch LatentBatch::slice(std::int64_t begin, std::int64_t end) const {
  LatentBatch out;
  if (z.defined()) out.z = z.slice(0, begin, end);
  if (ws.defined()) out.ws = ws.slice(0, begin, end);
  return out;
}

namespace {

torch::Tensor endpoint(const std::optional<torch::Tensor>& given, const GeneratorParams& g,
                       std::int64_t count, Rng& rng) {
  if (!given) return randn({count, g.arch.z_dim}, rng);
  auto t = given->dim() == 1 ? given->unsqueeze(0) : *given;
  if (t.dim() != 2 || t.size(1) != g.arch.z_dim) {
    throw InvalidArgument("endpoint latent has the wrong dimension");
  }
  return t.to(torch::kFloat);
}

}  // namespace

LatentBatch sample_latents(const GeneratorParams& g, std::int64_t count,
                           const SamplingStrategy& strategy, Rng& rng) {
  if (count < 0) throw InvalidArgument("latent count must be non-negative");
  torch::NoGradGuard no_grad;
  LatentBatch out;
  if (std::holds_alternative<sampling::Gaussian>(strategy)) {
    out.z = randn({count, g.arch.z_dim}, rng);
  } else if (const auto* t = std::get_if<sampling::Truncated>(&strategy)) {
    if (!(t->psi >= 0.0 && t->psi <= 1.0)) throw InvalidArgument("truncation psi must lie in [0,1]");
    LatentBatch z{randn({count, g.arch.z_dim}, rng), {}};
    out.ws = styles_for(g, z, t->psi);
  } else if (const auto* ip = std::get_if<sampling::Interpolation>(&strategy)) {
    if (ip->steps < 2) throw InvalidArgument("interpolation needs at least 2 steps");
    const bool explicit_ends = ip->z1.has_value() && ip->z2.has_value();
    const std::int64_t segments =
        explicit_ends ? 1 : (count + ip->steps - 1) / ip->steps;
    auto z1 = endpoint(ip->z1, g, segments, rng);
    auto z2 = endpoint(ip->z2, g, segments, rng);
    if (z1.size(0) != z2.size(0)) throw InvalidArgument("endpoint batches differ in size");
    auto t = torch::linspace(0.0, 1.0, ip->steps).view({1, -1, 1});
    auto pts = z1.unsqueeze(1) + (z2 - z1).unsqueeze(1) * t;
    // Keep the endpoints bit-exact.
    pts.select(1, 0).copy_(z1);
    pts.select(1, ip->steps - 1).copy_(z2);
    out.z = pts.reshape({-1, g.arch.z_dim});
    if (!explicit_ends) out.z = out.z.slice(0, 0, count);
  } else {
    const auto& sm = std::get<sampling::StyleMix>(strategy);
    if (sm.crossover_layer < 0 || sm.crossover_layer >= g.arch.num_ws()) {
      throw InvalidArgument("crossover layer must lie in [0, " + std::to_string(g.arch.num_ws()) + ")");
    }
    const bool explicit_ends = sm.z1.has_value() && sm.z2.has_value();
    const std::int64_t n = explicit_ends ? -1 : count;
    auto z1 = endpoint(sm.z1, g, n, rng);
    auto z2 = endpoint(sm.z2, g, n, rng);
    auto w1 = styles_for(g, {z1, {}}, 1.0);
    auto w2 = styles_for(g, {z2, {}}, 1.0).clone();
    w2.slice(1, 0, sm.crossover_layer).copy_(w1.slice(1, 0, sm.crossover_layer));
    out.ws = w2;
  }
  return out;
}

LatentBatch gaussian_latents(const GeneratorParams& g, std::int64_t count, std::uint64_t seed) {
  auto rng = make_rng(seed);
  return sample_latents(g, count, sampling::Gaussian{}, rng);
}

}  // namespace ptw
