#include "ptw/keygen.hpp"

#include <cmath>

#include <torch/torch.h>

#include "ptw/checkpoint.hpp"
#include "ptw/errors.hpp"
#include "ptw/log.hpp"

namespace ptw {

namespace F = torch::nn::functional;

namespace {

torch::Tensor mlp(const ParamSet& p, const torch::Tensor& x) {
  auto h = F::leaky_relu(torch::matmul(x, p.at("fc0.weight").t()) + p.at("fc0.bias"),
                         F::LeakyReLUFuncOptions().negative_slope(0.2));
  return torch::matmul(h, p.at("fc1.weight").t()) + p.at("fc1.bias");
}

void init_mlp(ParamSet& p, std::int64_t in, std::int64_t hidden, std::int64_t out, bool zero_head,
              Rng& rng) {
  p.set("fc0.weight", kaiming({hidden, in}, in, rng));
  p.set("fc0.bias", torch::zeros({hidden}));
  p.set("fc1.weight", zero_head ? torch::zeros({out, hidden}) : kaiming({out, hidden}, hidden, rng, 1.0));
  p.set("fc1.bias", torch::zeros({out}));
}

torch::Tensor signed_messages(const torch::Tensor& messages, std::int64_t n) {
  if (messages.dim() != 2 || messages.size(1) != n) {
    throw InvalidArgument("messages must be [B, " + std::to_string(n) + "]");
  }
  return messages.to(torch::kFloat) * 2 - 1;
}

}  // namespace

std::int64_t ParameterMapper::perturbed_numel() const {
  std::int64_t total = 0;
  for (auto s : target_sizes) total += s;
  return total;
}

std::vector<std::string> default_mapper_targets(const GeneratorParams& g) {
  const auto res = g.arch.block_resolutions();
  std::vector<std::string> out;
  for (std::size_t i = res.size() >= 2 ? res.size() - 2 : 0; i < res.size(); ++i) {
    out.push_back("synthesis.b" + std::to_string(res[i]) + ".noise_strength");
  }
  return out;
}

ParameterMapper init_parameter_mapper(const GeneratorParams& g, std::int64_t n,
                                      std::uint64_t seed, const MapperInit& init) {
  if (n < 1) throw InvalidArgument("message length must be >= 1");
  auto rng = make_rng(seed);
  ParameterMapper p;
  p.n = n;
  p.condition_on_latent = init.condition_on_latent;
  p.z_dim = g.arch.z_dim;
  p.targets = init.targets.empty() ? default_mapper_targets(g) : init.targets;
  for (const auto& name : p.targets) {
    if (!g.params.contains(name)) throw InvalidArgument("unknown mapper target '" + name + "'");
    const auto& t = g.params.at(name);
    if (t.dim() != 1) throw InvalidArgument("mapper target '" + name + "' is not 1-D");
    p.target_sizes.push_back(t.numel());
  }
  const auto in = n + (p.condition_on_latent ? p.z_dim : 0);
  init_mlp(p.params, in, init.hidden, p.perturbed_numel(), init.zero_head, rng);
  p.params.set("gain", torch::full({static_cast<std::int64_t>(p.targets.size())}, init.gain));
  return p;
}

LatentMapper init_latent_mapper(const GeneratorParams& g, std::int64_t n, std::uint64_t seed,
                                const MapperInit& init) {
  if (n < 1) throw InvalidArgument("message length must be >= 1");
  if (!(init.latent_clamp > 0)) throw InvalidArgument("latent clamp must be positive");
  auto rng = make_rng(seed);
  LatentMapper l;
  l.n = n;
  l.z_dim = g.arch.z_dim;
  l.clamp = init.latent_clamp;
  init_mlp(l.params, n, init.hidden, l.z_dim, init.zero_head, rng);
  return l;
}

torch::Tensor message_batch(const std::vector<Message>& messages) {
  if (messages.empty()) throw InvalidArgument("empty message batch");
  std::vector<torch::Tensor> rows;
  rows.reserve(messages.size());
  for (const auto& m : messages) {
    if (m.size() != messages.front().size()) throw InvalidArgument("message length mismatch");
    rows.push_back(m.to_tensor());
  }
  return torch::stack(rows);
}

torch::Tensor PerturbedGenerator::render(const LatentBatch& latents, double psi) const {
  return generate(*base, latents, psi, {NoiseMode::Const, 0, &overrides});
}

torch::Tensor parameter_perturbation(const ParameterMapper& p, const torch::Tensor& messages,
                                     const torch::Tensor& z) {
  auto x = signed_messages(messages, p.n);
  if (p.condition_on_latent) {
    if (!z.defined() || z.dim() != 2 || z.size(0) != x.size(0) || z.size(1) != p.z_dim) {
      throw InvalidArgument("latent-conditioned mapper needs z of shape [B, z_dim]");
    }
    x = torch::cat({x, z}, 1);
  }
  auto raw = mlp(p.params, x);
  std::vector<torch::Tensor> parts;
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < p.targets.size(); ++i) {
    parts.push_back(raw.slice(1, offset, offset + p.target_sizes[i]) *
                    p.params.at("gain")[static_cast<std::int64_t>(i)]);
    offset += p.target_sizes[i];
  }
  return torch::cat(parts, 1);
}

PerturbedGenerator apply_parameter_mapper(const ParameterMapper& p, const GeneratorParams& g,
                                          const torch::Tensor& messages, const torch::Tensor& z) {
  auto delta = parameter_perturbation(p, messages, z);
  PerturbedGenerator view;
  view.base = &g;
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < p.targets.size(); ++i) {
    const auto& base = g.params.at(p.targets[i]);
    if (base.numel() != p.target_sizes[i]) {
      throw InternalError("mapper target '" + p.targets[i] + "' changed shape");
    }
    view.overrides.set(p.targets[i],
                       base.unsqueeze(0) + delta.slice(1, offset, offset + p.target_sizes[i]));
    offset += p.target_sizes[i];
  }
  return view;
}

torch::Tensor apply_latent_mapper(const LatentMapper& l, const torch::Tensor& messages,
                                  const torch::Tensor& z) {
  if (!z.defined() || z.dim() != 2 || z.size(1) != l.z_dim) {
    throw InvalidArgument("latent codes must be [B, " + std::to_string(l.z_dim) + "]");
  }
  auto v = mlp(l.params, signed_messages(messages, l.n));
  auto norm = v.norm(2, 1, true);
  auto scale = l.clamp / torch::clamp_min(norm, l.clamp);
  return z + v * scale;
}

void check_key_compatibility(const WatermarkKey& key, const GeneratorParams& g) {
  if (key.arch_hash() != g.arch.hash()) {
    log_warning("watermarking key was trained for architecture " + key.arch_hash() +
                " but the generator is " + g.arch.hash() + "; decoding may be unreliable");
  }
}

void KeygenConfig::validate() const {
  if (n < 1) throw InvalidArgument("keygen: n must be >= 1");
  if (steps < 0) throw InvalidArgument("keygen: steps must be >= 0");
  if (!(lambda_r > 0) || !(lambda_lpips > 0) || !(lr_mappers > 0) || !(lr_decoder > 0)) {
    throw InvalidArgument("keygen: weights and learning rates must be positive");
  }
  if (batch_size < 1 || holdout < 1) throw InvalidArgument("keygen: batch sizes must be positive");
  if (perceptual_warmup < 0) throw InvalidArgument("keygen: warmup must be >= 0");
  if (!(perceptual_gate < 1.0)) throw InvalidArgument("keygen: perceptual gate must be < 1");
}

double mapper_agreement(const KeygenResult& r, const GeneratorParams& g, std::int64_t count,
                        std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto rng = make_rng(seed);
  double matches = 0.0;
  const std::int64_t chunk = 128;
  for (std::int64_t i = 0; i < count; i += chunk) {
    const auto b = std::min(chunk, count - i);
    auto msgs = randint(2, {b, r.key.n}, rng).to(torch::kFloat);
    auto z = randn({b, g.arch.z_dim}, rng);
    auto view = apply_parameter_mapper(r.parameter_mapper, g, msgs, z);
    auto x = view.render({apply_latent_mapper(r.latent_mapper, msgs, z), {}});
    auto bits = (classify(r.key.decoder, x) > 0).to(torch::kFloat);
    matches += (bits == msgs).to(torch::kDouble).sum().item<double>();
  }
  return matches / static_cast<double>(count * r.key.n);
}

KeygenResult keygen(const GeneratorParams& g, const KeygenConfig& config,
                    const FeatureExtractor& fx,
                    const std::function<void(const KeygenLogEntry&)>& on_log) {
  config.validate();
  KeygenResult r;
  const auto n = config.n;
  r.parameter_mapper = init_parameter_mapper(g, n, derive_seed(config.seed, "param-mapper"), config.mapper);
  r.latent_mapper = init_latent_mapper(g, n, derive_seed(config.seed, "latent-mapper"), config.mapper);
  r.key.decoder = init_classifier(n, derive_seed(config.seed, "decoder"), config.decoder_resolution);
  r.key.n = n;
  r.key.arch = g.arch;
  r.key.metadata = {{"seed", config.seed},
                    {"steps", config.steps},
                    {"lambda_r", config.lambda_r},
                    {"lambda_lpips", config.lambda_lpips},
                    {"batch_size", config.batch_size}};

  if (config.steps > 0) {
    r.parameter_mapper.params.requires_grad(true);
    r.latent_mapper.params.requires_grad(true);
    r.key.decoder.params.requires_grad(true);
    auto mapper_tensors = r.parameter_mapper.params.list();
    for (auto& t : r.latent_mapper.params.list()) mapper_tensors.push_back(t);
    torch::optim::Adam opt_mappers(mapper_tensors, torch::optim::AdamOptions(config.lr_mappers));
    torch::optim::Adam opt_decoder(r.key.decoder.params.list(),
                                   torch::optim::AdamOptions(config.lr_decoder));

    auto rng = make_rng(derive_seed(config.seed, "keygen-loop"));
    KeygenLogEntry acc;
    std::int64_t acc_count = 0;
    double running_agreement = 0.5;
    std::int64_t gate_step = config.perceptual_gate > 0.5 ? -1 : 0;
    r.log.gate_step = gate_step;
    for (std::int64_t step = 0; step < config.steps; ++step) {
      auto msgs = randint(2, {config.batch_size, n}, rng).to(torch::kFloat);
      auto z = randn({config.batch_size, g.arch.z_dim}, rng);
      torch::Tensor x0;
      {
        torch::NoGradGuard no_grad;
        x0 = generate(g, {z, {}});
      }
      auto view = apply_parameter_mapper(r.parameter_mapper, g, msgs,
                                         r.parameter_mapper.condition_on_latent ? z : torch::Tensor{});
      auto x = view.render({apply_latent_mapper(r.latent_mapper, msgs, z), {}});
      auto perceptual = perceptual_distance(x0, x, fx).mean();
      auto logits = classify(r.key.decoder, x);
      auto message_loss = F::binary_cross_entropy_with_logits(logits, msgs);
      double ramp = 0.0;
      if (gate_step >= 0) {
        ramp = config.perceptual_warmup > 0
                   ? std::min(1.0, static_cast<double>(step - gate_step) /
                                       static_cast<double>(config.perceptual_warmup))
                   : 1.0;
      }
      auto loss = perceptual * (config.lambda_lpips * ramp) + message_loss * config.lambda_r;

      opt_mappers.zero_grad();
      opt_decoder.zero_grad();
      loss.backward();
      opt_mappers.step();
      opt_decoder.step();

      const double pl = perceptual.item<double>();
      const double ml = message_loss.item<double>();
      if (!std::isfinite(pl) || !std::isfinite(ml)) throw TrainingDiverged("keygen", step);
      acc.perceptual_loss += pl;
      acc.message_loss += ml;
      const double batch_agreement =
          ((logits.detach() > 0).to(torch::kFloat) == msgs).to(torch::kDouble).mean().item<double>();
      acc.batch_agreement += batch_agreement;
      running_agreement = 0.95 * running_agreement + 0.05 * batch_agreement;
      if (gate_step < 0 && running_agreement >= config.perceptual_gate) {
        gate_step = step + 1;
        r.log.gate_step = gate_step;
      }
      ++acc_count;
      if ((step + 1) % config.log_every == 0 || step + 1 == config.steps) {
        KeygenLogEntry e{step + 1, acc.perceptual_loss / acc_count, acc.message_loss / acc_count,
                         acc.batch_agreement / acc_count};
        r.log.entries.push_back(e);
        if (on_log) on_log(e);
        acc = {};
        acc_count = 0;
      }
    }
    r.parameter_mapper.params.requires_grad(false);
    r.latent_mapper.params.requires_grad(false);
    r.key.decoder.params.requires_grad(false);
  }

  r.log.heldout_agreement = mapper_agreement(r, g, config.holdout, derive_seed(config.seed, "holdout"));
  r.log.target_met = r.log.heldout_agreement >= config.target_agreement;
  r.key.metadata["heldout_agreement"] = r.log.heldout_agreement;
  if (!r.log.target_met) {
    log_warning("keygen finished below the target agreement (" +
                std::to_string(r.log.heldout_agreement) + " < " +
                std::to_string(config.target_agreement) + ")");
  }
  return r;
}

Checkpoint key_checkpoint(const WatermarkKey& key) {
  Checkpoint c;
  c.kind = "key";
  c.arch = key.arch;
  c.metadata = {{"n", key.n},
                {"kappa", key.kappa},
                {"decoding_resolution", key.decoder.input_resolution},
                {"creation", key.metadata}};
  for (const auto& [name, t] : key.decoder.params.tensors()) c.tensors.set("decoder/" + name, t);
  return c;
}

WatermarkKey key_from_checkpoint(const Checkpoint& c) {
  if (c.kind != "key") throw IncompatibleCheckpoint("expected a key file, found '" + c.kind + "'");
  WatermarkKey key;
  try {
    key.n = c.metadata.at("n").get<std::int64_t>();
    key.kappa = c.metadata.at("kappa").get<double>();
    key.decoder.input_resolution = c.metadata.at("decoding_resolution").get<std::int64_t>();
    key.metadata = c.metadata.value("creation", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint(std::string("key header is incomplete: ") + e.what());
  }
  key.arch = c.arch;
  key.decoder.outputs = key.n;
  for (const auto& [name, t] : c.tensors.tensors()) {
    if (name.rfind("decoder/", 0) != 0) {
      throw IncompatibleCheckpoint("unexpected tensor '" + name + "' in key file");
    }
    key.decoder.params.set(name.substr(8), t);
  }
  if (!key.decoder.params.contains("head.weight") ||
      key.decoder.params.at("head.weight").size(0) != key.n) {
    throw IncompatibleCheckpoint("key decoder does not produce n logits");
  }
  return key;
}

void save_key(const WatermarkKey& key, const std::filesystem::path& path) {
  write_checkpoint(key_checkpoint(key), path);
}

WatermarkKey load_key(const std::filesystem::path& path) {
  return key_from_checkpoint(read_checkpoint(path, "key"));
}

void save_mappers(const KeygenResult& r, const std::filesystem::path& path) {
  Checkpoint c;
  c.kind = "mappers";
  c.arch = r.key.arch;
  const auto& p = r.parameter_mapper;
  c.metadata = {{"n", p.n},
                {"condition_on_latent", p.condition_on_latent},
                {"z_dim", p.z_dim},
                {"targets", p.targets},
                {"target_sizes", p.target_sizes},
                {"latent_clamp", r.latent_mapper.clamp}};
  for (const auto& [name, t] : p.params.tensors()) c.tensors.set("param_mapper/" + name, t);
  for (const auto& [name, t] : r.latent_mapper.params.tensors()) {
    c.tensors.set("latent_mapper/" + name, t);
  }
  write_checkpoint(c, path);
}

void load_mappers(const std::filesystem::path& path, ParameterMapper& p, LatentMapper& l) {
  auto c = read_checkpoint(path, "mappers");
  try {
    p.n = c.metadata.at("n").get<std::int64_t>();
    p.condition_on_latent = c.metadata.at("condition_on_latent").get<bool>();
    p.z_dim = c.metadata.at("z_dim").get<std::int64_t>();
    p.targets = c.metadata.at("targets").get<std::vector<std::string>>();
    p.target_sizes = c.metadata.at("target_sizes").get<std::vector<std::int64_t>>();
    l.n = p.n;
    l.z_dim = p.z_dim;
    l.clamp = c.metadata.at("latent_clamp").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint(std::string("mapper header is incomplete: ") + e.what());
  }
  p.params = {};
  l.params = {};
  for (const auto& [name, t] : c.tensors.tensors()) {
    if (name.rfind("param_mapper/", 0) == 0) {
      p.params.set(name.substr(13), t);
    } else if (name.rfind("latent_mapper/", 0) == 0) {
      l.params.set(name.substr(14), t);
    }
  }
}

}  // namespace ptw
