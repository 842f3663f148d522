#include "ptw/games.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <torch/torch.h>

#include "ptw/errors.hpp"
#include "ptw/log.hpp"
#include "ptw/verification.hpp"

namespace ptw {

namespace F = torch::nn::functional;

WatermarkSetup prepare_watermark(const GeneratorParams& clean, const KeygenConfig& keygen_config,
                                 const EmbedConfig& embed_config, std::uint64_t seed,
                                 const FeatureExtractor& fx) {
  auto kcfg = keygen_config;
  kcfg.seed = derive_seed(seed, "keygen");
  auto keys = keygen(clean, kcfg, fx);
  auto m = Message::random(static_cast<std::size_t>(kcfg.n), derive_seed(seed, "message"));
  auto ecfg = embed_config;
  ecfg.seed = derive_seed(seed, "embed");
  auto embedded = ptw_embed(clean, keys.key, m, ecfg, fx);
  return {clean, std::move(embedded.generator), std::move(keys.key), std::move(m)};
}

torch::Tensor sample_images(const GeneratorParams& g, std::int64_t count, std::uint64_t seed,
                            double psi) {
  return generate_images(g, gaussian_latents(g, count, seed), psi);
}

void RobustnessGameConfig::validate() const {
  if (!(kappa > 0 && kappa < 1)) throw InvalidArgument("kappa must lie in (0,1)");
  if (rounds < 1) throw InvalidArgument("the game needs at least one round");
  if (real_budget < 0 || real_budget * 10 >= rounds) {
    throw InvalidArgument("the attacker's budget R must satisfy R < K/10 (R=" +
                          std::to_string(real_budget) + ", K=" + std::to_string(rounds) + ")");
  }
  attack.validate();
}

double GameReport::recompute_evasion_rate() const {
  if (outcomes.empty()) return 0.0;
  double wrong = 0;
  for (auto y : outcomes) wrong += 1 - y;
  return wrong / static_cast<double>(outcomes.size());
}

void GameReport::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write game report to " + path.string());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    out << nlohmann::json{{"round", i}, {"coin", coins[i]}, {"p_value", p_values[i]},
                          {"correct", outcomes[i]}}
               .dump()
        << '\n';
  }
  out << nlohmann::json{{"summary",
                         {{"evasion_rate", evasion_rate},
                          {"fid", fid},
                          {"succ_evasion", succ_evasion},
                          {"rounds", outcomes.size()},
                          {"config", config}}}}
             .dump()
      << '\n';
}

GameReport robustness_game(const WatermarkSetup& setup, const RobustnessGameConfig& config,
                           const torch::Tensor& attacker_real, const torch::Tensor& reference,
                           const FeatureExtractor& fx) {
  config.validate();
  const auto k = config.rounds;
  if (!is_black_box(config.attack.kind) && attacker_real.size(0) < config.real_budget) {
    throw InvalidArgument("not enough real images for the attacker's budget");
  }

  // X^0: the attacker's images derived from the watermarked generator.
  torch::Tensor x0;
  const auto latent_seed = derive_seed(config.seed, "game-latents");
  try {
    switch (config.attack.kind) {
      case AttackKind::Rpt: {
        auto rcfg = config.rpt;
        rcfg.seed = derive_seed(config.seed, "rpt");
        auto attacked = rpt_attack(setup.watermarked, attacker_real.slice(0, 0, config.real_budget),
                                   rcfg, fx);
        x0 = sample_images(attacked.generator, k, latent_seed);
        break;
      }
      case AttackKind::Overwrite: {
        auto ocfg = config.overwrite;
        ocfg.lambda_m = config.attack.parameter;
        ocfg.seed = derive_seed(config.seed, "overwrite");
        x0 = sample_images(overwrite_attack(setup.watermarked, ocfg, fx).generator, k, latent_seed);
        break;
      }
      default: {
        auto spec = config.attack;
        spec.seed = derive_seed(config.seed, "attack");
        x0 = apply_attack(sample_images(setup.watermarked, k, latent_seed), spec);
      }
    }
  } catch (const InvalidArgument&) {
    throw;
  } catch (const Error& e) {
    throw AttackError(std::string("robustness game aborted during the attack: ") + e.what());
  }
  // X^1: clean images on independent latents.
  auto x1 = sample_images(setup.clean, k, derive_seed(config.seed, "game-clean"));

  GameReport r;
  auto rng = make_rng(derive_seed(config.seed, "coins"));
  auto coins = randint(2, {k}, rng).to(torch::kUInt8).contiguous();
  const ThresholdConfig threshold{config.kappa};
  auto v0 = verify_batch(x0, setup.key, setup.message, threshold);
  auto v1 = verify_batch(x1, setup.key, setup.message, threshold);
  const auto* c = coins.data_ptr<std::uint8_t>();
  for (std::int64_t i = 0; i < k; ++i) {
    const auto& v = c[i] == 0 ? v0[i] : v1[i];
    const bool correct = c[i] == 0 ? v.detected : !v.detected;
    r.coins.push_back(c[i]);
    r.outcomes.push_back(correct ? 1 : 0);
    r.p_values.push_back(v.p_value);
  }
  r.evasion_rate = r.recompute_evasion_rate();
  r.fid = fid(x0, reference, fx);
  r.succ_evasion = r.evasion_rate - r.fid;
  r.config = {{"kappa", config.kappa},
              {"R", config.real_budget},
              {"K", config.rounds},
              {"attack", config.attack.label()},
              {"seed", config.seed},
              {"n", setup.key.n}};
  return r;
}

void DetectionGameConfig::validate() const {
  if (clean_budget < 1 || watermarked_budget < 1) {
    throw InvalidArgument("detection game needs R1, R2 >= 1");
  }
  if (trials < 1) throw InvalidArgument("detection game needs at least one trial");
  if (!(psi >= 0 && psi <= 1)) throw InvalidArgument("psi must lie in [0,1]");
  if (detector.steps < 0 || !(detector.lr > 0) || detector.batch_size < 1) {
    throw InvalidArgument("invalid detector settings");
  }
}

DetectionReport detection_game(const GeneratorParams& clean, const GeneratorParams& watermarked,
                               const DetectionGameConfig& config) {
  config.validate();
  // Disjoint latent streams for the labelled sets and the challenge images.
  auto d1 = sample_images(clean, config.clean_budget, derive_seed(config.seed, "d1"), config.psi);
  auto d2 = sample_images(watermarked, config.watermarked_budget, derive_seed(config.seed, "d2"),
                          config.psi);
  auto train_x = torch::cat({d1, d2});
  auto train_y = torch::cat({torch::zeros({config.clean_budget}),
                             torch::ones({config.watermarked_budget})});

  auto detector = init_classifier(1, derive_seed(config.seed, "detector"), clean.arch.resolution);
  DetectionReport r;
  if (!config.detector.untrained && config.detector.steps > 0) {
    detector.params.requires_grad(true);
    torch::optim::Adam opt(detector.params.list(), torch::optim::AdamOptions(config.detector.lr));
    auto rng = make_rng(derive_seed(config.seed, "detector-batches"));
    const auto total = train_x.size(0);
    const auto batch = std::min(config.detector.batch_size, total);
    // Class-balanced sampling so unequal budgets do not bias the detector.
    for (std::int64_t step = 0; step < config.detector.steps; ++step) {
      auto i0 = randint(config.clean_budget, {batch / 2}, rng);
      auto i1 = randint(config.watermarked_budget, {batch - batch / 2}, rng) + config.clean_budget;
      auto idx = torch::cat({i0, i1});
      auto logits = classify(detector, train_x.index_select(0, idx)).squeeze(1);
      auto loss = F::binary_cross_entropy_with_logits(logits, train_y.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      if (!std::isfinite(loss.item<double>())) {
        throw TrainingDiverged("detector", step);
      }
      opt.step();
    }
    detector.params.requires_grad(false);
  }
  {
    torch::NoGradGuard no_grad;
    auto pred = (classify(detector, train_x).squeeze(1) > 0).to(torch::kFloat);
    r.train_accuracy = (pred == train_y).to(torch::kDouble).mean().item<double>();
  }

  auto rng = make_rng(derive_seed(config.seed, "challenge-coins"));
  auto coins = randint(2, {config.trials}, rng).to(torch::kUInt8);
  auto challenge_clean = sample_images(clean, config.trials, derive_seed(config.seed, "challenge"),
                                       config.psi);
  auto challenge_wm = sample_images(watermarked, config.trials,
                                    derive_seed(config.seed, "challenge"), config.psi);
  auto mask = coins.to(torch::kBool).view({-1, 1, 1, 1});
  auto challenge = torch::where(mask, challenge_wm, challenge_clean);
  torch::Tensor pred;
  {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (std::int64_t i = 0; i < config.trials; i += 256) {
      parts.push_back(classify(detector, challenge.slice(0, i, std::min(i + 256, config.trials)))
                          .squeeze(1) > 0);
    }
    pred = torch::cat(parts).to(torch::kUInt8).contiguous();
  }
  auto c = coins.contiguous();
  double hits = 0;
  for (std::int64_t i = 0; i < config.trials; ++i) {
    const bool ok = pred.data_ptr<std::uint8_t>()[i] == c.data_ptr<std::uint8_t>()[i];
    r.coins.push_back(c.data_ptr<std::uint8_t>()[i]);
    r.correct.push_back(ok ? 1 : 0);
    hits += ok ? 1 : 0;
  }
  r.accuracy = hits / static_cast<double>(config.trials);
  return r;
}

GeneratorScore score_generator(const GeneratorParams& g, const GeneratorParams& clean,
                               const WatermarkKey& key, const Message& m,
                               std::int64_t num_images, std::uint64_t seed,
                               const torch::Tensor& reference, const FeatureExtractor& fx) {
  GeneratorScore s;
  auto x = sample_images(g, num_images, seed);
  s.capacity = capacity(agreement_rates(x, key, m), static_cast<std::size_t>(key.n));
  s.fid = fid(x, reference, fx);
  s.fid_clean = fid(sample_images(clean, num_images, seed), reference, fx);
  return s;
}

nlohmann::json to_json(const SweepRow& row) {
  return {{"n", row.n},
          {"seed", row.seed},
          {"capacity", row.capacity},
          {"fid", row.fid},
          {"fid_clean", row.fid_clean},
          {"fid_degradation", row.fid_degradation}};
}

std::vector<SweepRow> capacity_utility_sweep(const GeneratorParams& g, const SweepConfig& config,
                                             const torch::Tensor& reference,
                                             const FeatureExtractor& fx,
                                             const SetupProvider& provider) {
  std::vector<SweepRow> rows;
  if (config.n_grid.empty()) return rows;
  if (config.num_images < 2) throw InvalidArgument("the sweep needs at least 2 images per point");
  const double fid_clean = fid(sample_images(g, config.num_images, config.eval_seed), reference, fx);
  for (auto seed : config.seeds) {
    rows.push_back({0, seed, 0.0, fid_clean, fid_clean, 0.0});
  }
  for (auto n : config.n_grid) {
    if (n < 1) throw InvalidArgument("message lengths in the sweep must be >= 1");
    for (auto seed : config.seeds) {
      WatermarkSetup setup;
      if (provider) {
        setup = provider(n, seed);
      } else {
        auto kcfg = config.keygen;
        kcfg.n = n;
        setup = prepare_watermark(g, kcfg, config.embed, seed, fx);
      }
      auto x = sample_images(setup.watermarked, config.num_images, config.eval_seed);
      SweepRow row{n, seed, capacity(agreement_rates(x, setup.key, setup.message),
                                     static_cast<std::size_t>(n)),
                   fid(x, reference, fx), fid_clean, 0.0};
      row.fid_degradation = row.fid - fid_clean;
      log_info("sweep n=" + std::to_string(n) + " seed=" + std::to_string(seed) +
               " capacity=" + std::to_string(row.capacity) +
               " fid_degradation=" + std::to_string(row.fid_degradation));
      rows.push_back(row);
    }
  }
  return rows;
}

nlohmann::json to_json(const RptRow& row) {
  return {{"R", row.real_budget},          {"capacity", row.capacity},
          {"fid", row.fid},                {"fid_degradation", row.fid_degradation},
          {"steps", row.steps},            {"removed", row.removed}};
}

std::vector<RptRow> rpt_ablation(const WatermarkSetup& setup, const torch::Tensor& real,
                                 const RptAblationConfig& config, const torch::Tensor& reference,
                                 const FeatureExtractor& fx) {
  const double threshold =
      detection_capacity_threshold(static_cast<std::size_t>(setup.key.n), config.kappa);
  const double fid_clean =
      fid(sample_images(setup.clean, config.num_images, config.eval_seed), reference, fx);
  std::vector<RptRow> rows;
  for (auto budget : config.real_budgets) {
    if (budget < 1) throw InvalidArgument("real-image budgets must be >= 1");
    if (budget > real.size(0)) {
      throw InvalidArgument("R=" + std::to_string(budget) + " exceeds the " +
                            std::to_string(real.size(0)) + " available real images");
    }
  }
  for (auto budget : config.real_budgets) {
    auto data = real.slice(0, 0, budget);
    auto rcfg = config.rpt;
    rcfg.steps = std::max<std::int64_t>(1, config.rpt.steps);
    auto state = rpt_attack(setup.watermarked, data, rcfg, fx);
    RptRow row{budget, 0, 0, 0, 0, false};
    while (true) {
      auto x = sample_images(state.generator, config.num_images, config.eval_seed);
      row.capacity = capacity(agreement_rates(x, setup.key, setup.message),
                              static_cast<std::size_t>(setup.key.n));
      row.steps = state.steps_run;
      row.removed = row.capacity < threshold;
      if (row.removed || state.steps_run * 2 > config.max_steps) {
        row.fid = fid(x, reference, fx);
        break;
      }
      rpt_continue(state, data, rcfg, state.steps_run, fx);
    }
    row.fid_degradation = row.fid - fid_clean;
    log_info("rpt R=" + std::to_string(budget) + " steps=" + std::to_string(row.steps) +
             " capacity=" + std::to_string(row.capacity) +
             " fid_degradation=" + std::to_string(row.fid_degradation));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(const AttackRow& row) {
  return {{"attack", to_string(row.spec.kind)},
          {"parameter", row.spec.parameter},
          {"capacity", row.capacity},
          {"fid", row.fid},
          {"fid_degradation", row.fid_degradation},
          {"detection_rate", row.detection_rate}};
}

std::vector<AttackRow> evaluate_black_box_attacks(
    const WatermarkSetup& setup, const std::vector<std::pair<AttackKind, std::vector<double>>>& grids,
    std::int64_t num_images, std::uint64_t seed, const torch::Tensor& reference,
    const FeatureExtractor& fx, double kappa, const attacks::Upscaler& upscaler) {
  auto x = sample_images(setup.watermarked, num_images, seed);
  const double base_fid = fid(x, reference, fx);
  const auto n = static_cast<std::size_t>(setup.key.n);
  std::vector<AttackRow> rows;
  for (const auto& [kind, grid] : grids) {
    if (!is_black_box(kind)) throw InvalidArgument(to_string(kind) + " is not a black-box attack");
    for (double parameter : grid) {
      AttackRow row;
      row.spec = {kind, parameter, derive_seed(seed, "attack-" + to_string(kind))};
      auto attacked = apply_attack(x, row.spec, upscaler);
      row.capacity = capacity(agreement_rates(attacked, setup.key, setup.message), n);
      row.fid = fid(attacked, reference, fx);
      row.fid_degradation = row.fid - base_fid;
      row.detection_rate =
          detection_rate(verify_batch(attacked, setup.key, setup.message, ThresholdConfig{kappa}));
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace ptw
