#include "ptw/whitebox.hpp"

#include <cmath>

#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/image.hpp"

namespace ptw {

Inversion invert(const torch::Tensor& images, const GeneratorParams& g, const InvertConfig& config,
                 const FeatureExtractor& fx) {
  if (config.steps < 0 || !(config.lr > 0)) throw InvalidArgument("invalid inversion settings");
  auto target = as_batch(images).to(torch::kFloat);
  if (target.size(2) != g.arch.resolution || target.size(3) != g.arch.resolution) {
    target = resize_bilinear(target, g.arch.resolution);
  }
  target = target.detach();
  auto rng = make_rng(config.seed);
  Inversion out;
  auto z = randn({target.size(0), g.arch.z_dim}, rng);
  {
    torch::NoGradGuard no_grad;
    out.initial_loss = perceptual_distance(generate(g, {z, {}}), target, fx);
  }
  out.z = z.clone();
  out.loss = out.initial_loss.clone();
  if (config.steps == 0) return out;

  z.set_requires_grad(true);
  torch::optim::Adam opt({z}, torch::optim::AdamOptions(config.lr));
  for (std::int64_t step = 0; step < config.steps; ++step) {
    auto loss = perceptual_distance(generate(g, {z, {}}), target, fx);
    const double mean = loss.mean().item<double>();
    out.trace.push_back(mean);
    if (!std::isfinite(mean)) {
      throw InversionError("inversion diverged at step " + std::to_string(step) +
                           " after " + std::to_string(out.trace.size()) + " recorded losses");
    }
    {
      torch::NoGradGuard no_grad;
      auto better = loss.detach() < out.loss;
      out.loss = torch::where(better, loss.detach(), out.loss);
      out.z = torch::where(better.unsqueeze(1), z.detach(), out.z);
    }
    opt.zero_grad();
    loss.sum().backward();
    opt.step();
  }
  {
    torch::NoGradGuard no_grad;
    auto loss = perceptual_distance(generate(g, {z, {}}), target, fx);
    auto better = loss < out.loss;
    out.loss = torch::where(better, loss, out.loss);
    out.z = torch::where(better.unsqueeze(1), z.detach(), out.z);
  }
  return out;
}

void rpt_continue(RptResult& state, const torch::Tensor& real, const RptConfig& config,
                  std::int64_t steps, const FeatureExtractor& fx) {
  if (steps <= 0) return;
  auto target = as_batch(real).to(torch::kFloat);
  if (target.size(2) != state.generator.arch.resolution) {
    target = resize_bilinear(target, state.generator.arch.resolution);
  }
  const auto count = target.size(0);
  auto trainable = state.generator.trainable_tensors();
  for (auto& t : trainable) t.set_requires_grad(true);
  torch::optim::Adam opt(trainable, torch::optim::AdamOptions(config.lr));
  auto rng = make_rng(derive_seed(config.seed, "rpt-" + std::to_string(state.steps_run)));
  const auto batch = std::min(config.batch_size, count);
  for (std::int64_t step = 0; step < steps; ++step) {
    auto idx = randperm(count, rng).slice(0, 0, batch);
    auto x = generate(state.generator, {state.inversion.z.index_select(0, idx), {}});
    auto loss = perceptual_distance(x, target.index_select(0, idx), fx).mean();
    opt.zero_grad();
    loss.backward();
    const double l = loss.item<double>();
    if (!std::isfinite(l)) {
      for (auto& t : trainable) t.set_requires_grad(false);
      throw AttackError("reverse pivotal tuning diverged at step " +
                        std::to_string(state.steps_run + step));
    }
    opt.step();
  }
  state.steps_run += steps;
  for (auto& t : trainable) t.set_requires_grad(false);
}

RptResult rpt_attack(const GeneratorParams& g_wm, const torch::Tensor& real,
                     const RptConfig& config, const FeatureExtractor& fx) {
  auto target = as_batch(real);
  if (target.size(0) < 1) throw InvalidArgument("rpt needs at least one real image");
  if (config.steps < 0 || !(config.lr > 0) || config.batch_size < 1) {
    throw InvalidArgument("invalid rpt settings");
  }
  auto inv_cfg = config.inversion;
  inv_cfg.seed = derive_seed(config.seed, "rpt-invert");
  RptResult r{g_wm.clone(), invert(target, g_wm, inv_cfg, fx), 0};
  rpt_continue(r, target, config, config.steps, fx);
  return r;
}

OverwriteResult overwrite_attack(const GeneratorParams& g_wm, const OverwriteConfig& config,
                                 const FeatureExtractor& fx) {
  if (!(config.lambda_m >= 0)) throw InvalidArgument("overwrite weight must be non-negative");
  auto kcfg = config.keygen;
  kcfg.seed = derive_seed(config.seed, "overwrite-keygen");
  auto keys = keygen(g_wm, kcfg, fx);
  auto m = Message::random(static_cast<std::size_t>(kcfg.n), derive_seed(config.seed, "overwrite-message"));
  auto ecfg = config.embed;
  ecfg.lambda_r = config.lambda_m;
  ecfg.seed = derive_seed(config.seed, "overwrite-embed");
  auto embedded = ptw_embed(g_wm, keys.key, m, ecfg, fx);
  return {std::move(embedded.generator), std::move(keys.key), std::move(m)};
}

}  // namespace ptw
