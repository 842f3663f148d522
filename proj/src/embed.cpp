#include "ptw/embed.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <torch/torch.h>

#include "ptw/classifier.hpp"
#include "ptw/errors.hpp"
#include "ptw/verification.hpp"

namespace ptw {

namespace F = torch::nn::functional;

void EmbedConfig::validate() const {
  if (steps < 0) throw InvalidArgument("embed: steps must be >= 0");
  if (!(lr > 0)) throw InvalidArgument("embed: learning rate must be positive");
  if (!(lambda_r >= 0) || !(lambda_lpips >= 0)) {
    throw InvalidArgument("embed: loss weights must be non-negative");
  }
  if (batch_size < 1 || eval_every < 1 || probe_size < 1 || patience < 1) {
    throw InvalidArgument("embed: batch, probe and evaluation sizes must be positive");
  }
}

void EmbedLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write embed log to " + path.string());
  out << "# step perceptual_loss message_loss probe_agreement\n";
  out.precision(8);
  for (const auto& e : entries) {
    out << e.step << ' ' << e.perceptual_loss << ' ' << e.message_loss << ' '
        << e.probe_agreement << '\n';
  }
}

double probe_agreement(const GeneratorParams& g, const WatermarkKey& key, const Message& m,
                       const LatentBatch& latents) {
  auto rates = agreement_rates(generate_images(g, latents), key, m);
  return std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
}

EmbedResult ptw_embed(const GeneratorParams& g, const WatermarkKey& key, const Message& m,
                      const EmbedConfig& config, const FeatureExtractor& fx,
                      const std::function<void(const EmbedLogEntry&)>& on_log) {
  config.validate();
  if (static_cast<std::int64_t>(m.size()) != key.n) {
    throw InvalidArgument("message has " + std::to_string(m.size()) + " bits but the key decodes " +
                          std::to_string(key.n));
  }
  if (key.arch.resolution != g.arch.resolution) {
    throw InvalidArgument("key was trained on " + std::to_string(key.arch.resolution) +
                          "px images but the generator renders " +
                          std::to_string(g.arch.resolution) + "px");
  }
  check_key_compatibility(key, g);

  const auto pivot = clone_pivot(g);
  EmbedResult r{g.clone(), {}};
  const auto probe = gaussian_latents(g, config.probe_size, derive_seed(config.seed, "probe"));
  if (config.steps == 0) {
    r.log.final_agreement = probe_agreement(r.generator, key, m, probe);
    return r;
  }

  auto trainable = r.generator.trainable_tensors();
  for (auto& t : trainable) t.set_requires_grad(true);
  torch::optim::Adam opt(trainable, torch::optim::AdamOptions(config.lr));
  const auto target = m.to_tensor().unsqueeze(0).expand({config.batch_size, key.n});
  auto rng = make_rng(derive_seed(config.seed, "embed-loop"));

  double window_perceptual = 0.0;
  double window_message = 0.0;
  std::int64_t window = 0;
  std::int64_t streak = 0;
  for (std::int64_t step = 0; step < config.steps; ++step) {
    LatentBatch z{randn({config.batch_size, g.arch.z_dim}, rng), {}};
    torch::Tensor x0;
    {
      torch::NoGradGuard no_grad;
      x0 = generate(pivot, z);
    }
    auto x = generate(r.generator, z);
    auto perceptual = perceptual_distance(x0, x, fx).mean();
    auto message_loss = F::binary_cross_entropy_with_logits(classify(key.decoder, x), target);
    auto loss = perceptual * config.lambda_lpips + message_loss * config.lambda_r;
    opt.zero_grad();
    loss.backward();

    const double pl = perceptual.item<double>();
    const double ml = message_loss.item<double>();
    if (!std::isfinite(pl) || !std::isfinite(ml)) throw TrainingDiverged("embed", step);
    opt.step();
    window_perceptual += pl;
    window_message += ml;
    ++window;
    r.log.steps_run = step + 1;
    const bool last = step + 1 == config.steps;
    if ((step + 1) % config.eval_every == 0 || last) {
      EmbedLogEntry e{step + 1, window_perceptual / window, window_message / window,
                      probe_agreement(r.generator, key, m, probe)};
      r.log.entries.push_back(e);
      r.log.final_perceptual_loss = e.perceptual_loss;
      r.log.final_agreement = e.probe_agreement;
      if (on_log) on_log(e);
      window_perceptual = window_message = 0.0;
      window = 0;
      streak = e.probe_agreement >= config.target_agreement ? streak + 1 : 0;
      if (streak >= config.patience) {
        r.log.early_stopped = !last;
        break;
      }
    }
  }
  for (auto& t : trainable) t.set_requires_grad(false);
  return r;
}

GeneratorParams direct_embed(const GeneratorParams& g, const ParameterMapper& p, const Message& m) {
  if (static_cast<std::int64_t>(m.size()) != p.n) {
    throw InvalidArgument("message length does not match the mapper");
  }
  if (p.z_dim != g.arch.z_dim) throw InvalidArgument("mapper was trained for another architecture");
  for (std::size_t i = 0; i < p.targets.size(); ++i) {
    if (!g.params.contains(p.targets[i]) || g.params.at(p.targets[i]).numel() != p.target_sizes[i]) {
      throw InvalidArgument("mapper target '" + p.targets[i] + "' does not exist in the generator");
    }
  }
  if (p.condition_on_latent) {
    throw InvalidArgument("a latent-conditioned mapper cannot be summed into the weights");
  }
  torch::NoGradGuard no_grad;
  auto out = g.clone();
  auto view = apply_parameter_mapper(p, g, m.to_tensor().unsqueeze(0));
  for (const auto& name : p.targets) out.params.set(name, view.overrides.at(name)[0].clone());
  return out;
}

}  // namespace ptw
