#include "ptw/gan.hpp"

#include <cmath>

#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/image.hpp"

namespace ptw {

namespace F = torch::nn::functional;

namespace {

constexpr double kLreluGain = 1.4142135623730951;

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)) * kLreluGain;
}

torch::Tensor eq_conv(const ParamSet& p, const std::string& prefix, const torch::Tensor& x) {
  const auto& w = p.at(prefix + ".weight");
  const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
  return F::conv2d(x, w / std::sqrt(fan_in),
                   F::Conv2dFuncOptions().padding(w.size(2) / 2).bias(p.at(prefix + ".bias")));
}

torch::Tensor eq_linear(const ParamSet& p, const std::string& prefix, const torch::Tensor& x) {
  const auto& w = p.at(prefix + ".weight");
  return torch::matmul(x, w.t()) / std::sqrt(static_cast<double>(w.size(1))) +
         p.at(prefix + ".bias");
}

std::vector<std::int64_t> disc_widths(const ArchConfig& arch) {
  // Mirrors the generator widths from high to low resolution.
  std::vector<std::int64_t> w(arch.widths.rbegin(), arch.widths.rend());
  return w;
}

}  // namespace

DiscriminatorParams init_discriminator(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  auto rng = make_rng(seed);
  DiscriminatorParams d;
  d.arch = arch;
  auto& p = d.params;
  const auto widths = disc_widths(arch);
  p.set("fromrgb.weight", randn({widths[0], 3, 1, 1}, rng));
  p.set("fromrgb.bias", torch::zeros({widths[0]}));
  std::int64_t res = arch.resolution;
  std::size_t i = 0;
  for (; res > 4; res /= 2, ++i) {
    const auto cin = widths[i];
    const auto cout = widths[std::min(i + 1, widths.size() - 1)];
    const auto prefix = "b" + std::to_string(res);
    p.set(prefix + ".conv0.weight", randn({cin, cin, 3, 3}, rng));
    p.set(prefix + ".conv0.bias", torch::zeros({cin}));
    p.set(prefix + ".conv1.weight", randn({cout, cin, 3, 3}, rng));
    p.set(prefix + ".conv1.bias", torch::zeros({cout}));
  }
  const auto c = widths.back();
  // +1 input channel for the minibatch standard deviation feature.
  p.set("b4.conv.weight", randn({c, c + 1, 3, 3}, rng));
  p.set("b4.conv.bias", torch::zeros({c}));
  p.set("b4.fc.weight", randn({c, c * 16}, rng));
  p.set("b4.fc.bias", torch::zeros({c}));
  p.set("b4.out.weight", randn({1, c}, rng));
  p.set("b4.out.bias", torch::zeros({1}));
  return d;
}

torch::Tensor discriminate(const DiscriminatorParams& d, const torch::Tensor& images) {
  check_image_batch(images);
  if (images.size(2) != d.arch.resolution || images.size(3) != d.arch.resolution) {
    throw InvalidArgument("discriminator input has the wrong resolution");
  }
  const auto& p = d.params;
  auto x = lrelu(eq_conv(p, "fromrgb", images));
  for (std::int64_t res = d.arch.resolution; res > 4; res /= 2) {
    const auto prefix = "b" + std::to_string(res);
    x = lrelu(eq_conv(p, prefix + ".conv0", x));
    x = lrelu(eq_conv(p, prefix + ".conv1", x));
    x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
  }
  auto stddev = torch::sqrt(x.var(0, /*unbiased=*/false) + 1e-8).mean();
  x = torch::cat({x, stddev.expand({x.size(0), 1, 4, 4})}, 1);
  x = lrelu(eq_conv(p, "b4.conv", x));
  x = lrelu(eq_linear(p, "b4.fc", x.flatten(1)));
  return eq_linear(p, "b4.out", x).squeeze(1);
}

TrainedGan train_gan(const torch::Tensor& dataset, const GANConfig& config,
                     const std::function<void(const GanLogEntry&)>& on_log) {
  config.arch.validate();
  if (!dataset.defined() || dataset.dim() != 4 || dataset.size(0) == 0) {
    throw InvalidArgument("training dataset is empty");
  }
  check_image_batch(dataset, "training dataset");
  if (dataset.size(2) != config.arch.resolution || dataset.size(3) != config.arch.resolution) {
    throw InvalidArgument("training images must be " + std::to_string(config.arch.resolution) +
                          "x" + std::to_string(config.arch.resolution));
  }
  if (config.batch_size < 1 || config.total_steps < 0) {
    throw InvalidArgument("batch size must be positive and steps non-negative");
  }

  TrainedGan out{init_generator(config.arch, derive_seed(config.seed, "generator")),
                 init_discriminator(config.arch, derive_seed(config.seed, "discriminator")),
                 {}};
  if (config.total_steps == 0) return out;

  auto& g = out.generator;
  auto& d = out.discriminator;
  g.params.requires_grad(true);
  d.params.requires_grad(true);
  auto adam = [&](const std::vector<torch::Tensor>& ps, double lr) {
    return torch::optim::Adam(
        ps, torch::optim::AdamOptions(lr).betas({config.beta1, config.beta2}).eps(1e-8));
  };
  auto opt_g = adam(g.trainable_tensors(), config.lr_g);
  auto opt_d = adam(d.params.list(), config.lr_d);

  auto rng = make_rng(derive_seed(config.seed, "train"));
  const auto n = dataset.size(0);
  const auto b = config.batch_size;
  GanLogEntry acc;
  std::int64_t acc_count = 0;

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    auto idx = randint(n, {b}, rng);
    auto real = dataset.index_select(0, idx);
    const auto noise_seed = derive_seed(config.seed, "noise" + std::to_string(step));

    // Discriminator step.
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = generate(g, {randn({b, config.arch.z_dim}, rng), {}}, 1.0,
                      {NoiseMode::Random, noise_seed, nullptr});
    }
    const bool do_r1 = config.r1_gamma > 0 && step % config.r1_interval == 0;
    auto real_in = do_r1 ? real.detach().requires_grad_(true) : real;
    auto real_logit = discriminate(d, real_in);
    auto fake_logit = discriminate(d, fake);
    auto d_loss = F::softplus(fake_logit).mean() + F::softplus(-real_logit).mean();
    auto d_total = d_loss;
    if (do_r1) {
      auto grad = torch::autograd::grad({real_logit.sum()}, {real_in}, {}, true, true)[0];
      auto r1 = grad.square().sum({1, 2, 3}).mean();
      d_total = d_total + r1 * (config.r1_gamma * 0.5 * static_cast<double>(config.r1_interval));
    }
    opt_d.zero_grad();
    d_total.backward();
    opt_d.step();

    // Generator step.
    auto z = randn({b, config.arch.z_dim}, rng);
    auto ws = styles_for(g, {z, {}}, 1.0);
    auto gen = synthesize(g, ws, {NoiseMode::Random, noise_seed + 1, nullptr});
    auto g_loss = F::softplus(-discriminate(d, gen)).mean();
    opt_g.zero_grad();
    g_loss.backward();
    opt_g.step();

    {
      torch::NoGradGuard no_grad;
      auto avg = g.buffers.at("w_avg");
      avg.copy_(ws.select(1, 0).detach().mean(0).lerp(avg, config.w_avg_beta));
    }

    const double dl = d_loss.item<double>();
    const double gl = g_loss.item<double>();
    if (!std::isfinite(dl) || !std::isfinite(gl)) throw TrainingDiverged("train_gan", step);
    acc.d_loss += dl;
    acc.g_loss += gl;
    acc.real_logit += real_logit.detach().mean().item<double>();
    acc.fake_logit += fake_logit.detach().mean().item<double>();
    ++acc_count;
    if ((step + 1) % config.log_every == 0 || step + 1 == config.total_steps) {
      GanLogEntry e{step + 1, acc.d_loss / acc_count, acc.g_loss / acc_count,
                    acc.real_logit / acc_count, acc.fake_logit / acc_count};
      out.log.push_back(e);
      if (on_log) on_log(e);
      acc = {};
      acc_count = 0;
    }
  }

  g.params.requires_grad(false);
  d.params.requires_grad(false);
  return out;
}

}  // namespace ptw
