// Command-line front end: one subcommand per pipeline stage. Every command
// writes into a run directory with a manifest and prints a one-line JSON
// summary; failures print a JSON error record to stderr.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include "ptw/attacks.hpp"
#include "ptw/checkpoint.hpp"
#include "ptw/dataset.hpp"
#include "ptw/embed.hpp"
#include "ptw/errors.hpp"
#include "ptw/gan.hpp"
#include "ptw/games.hpp"
#include "ptw/harness/config.hpp"
#include "ptw/harness/key_store.hpp"
#include "ptw/harness/manifest.hpp"
#include "ptw/harness/report.hpp"
#include "ptw/image.hpp"
#include "ptw/keygen.hpp"
#include "ptw/log.hpp"
#include "ptw/perceptual.hpp"
#include "ptw/verification.hpp"
#include "ptw/whitebox.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ptw;
using namespace ptw::harness;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

struct Options {
  std::string config;
  std::string run;
  bool quiet = false;
  bool verbose = false;

  std::string generator;
  std::string watermarked;
  std::string key;
  std::string message;
  std::string image;
  std::string images;
  std::string real;
  std::string out;
  std::string kind;
  double parameter = 0.0;
  double kappa = 0.05;
  std::vector<std::string> runs;
};

ExperimentConfig load_config(const Options& o) {
  if (o.config.empty()) return ExperimentConfig{};
  return ExperimentConfig::load(o.config);
}

fs::path run_dir(const Options& o, const ExperimentConfig& c, const std::string& command) {
  if (!o.run.empty()) return o.run;
  return artifact_root(c) / (command + "-" + c.hash().substr(0, 8));
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InvalidArgument(std::string("missing required option ") + flag);
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw NotFound(std::string(what) + " " + path + " does not exist");
}

GeneratorParams load_gen(const std::string& path, const char* what) {
  require_file(path, what);
  return load_generator(path);
}

WatermarkKey load_key_file(const std::string& path) {
  require_file(path, "key");
  return load_key(path);
}

torch::Tensor reference_corpus(const ExperimentConfig& c) {
  return synthetic_shapes(c.fid_images, c.gan.arch.resolution, c.seed_for("reference"));
}

void summary(const std::string& command, json fields) {
  fields["command"] = command;
  fields["status"] = "ok";
  std::cout << fields.dump() << std::endl;
}

// --- commands ---------------------------------------------------------------

void cmd_train_gan(const Options& o) {
  auto c = load_config(o);
  auto dir = run_dir(o, c, "train-gan");
  auto m = RunManifest::create(dir, c, "train-gan");
  auto gcfg = c.gan;
  gcfg.seed = c.seed_for("gan");
  auto data = synthetic_shapes(c.corpus_size, gcfg.arch.resolution, c.seed_for("corpus"));
  std::vector<json> log;
  auto trained = train_gan(data, gcfg, [&](const GanLogEntry& e) {
    log.push_back({{"step", e.step}, {"d_loss", e.d_loss}, {"g_loss", e.g_loss},
                   {"real_logit", e.real_logit}, {"fake_logit", e.fake_logit}});
    log_info("gan step " + std::to_string(e.step) + " d=" + std::to_string(e.d_loss) +
             " g=" + std::to_string(e.g_loss));
  });
  save_generator(trained.generator, dir / "generator.ckpt");
  save_discriminator(trained.discriminator, dir / "discriminator.ckpt");
  write_jsonl(dir / "gan_log.jsonl", log);
  save_image_dir(sample_images(trained.generator, 16, c.seed_for("samples")), dir / "samples");
  m.add("generator", "generator.ckpt");
  m.add("discriminator", "discriminator.ckpt");
  m.add("gan_log", "gan_log.jsonl");
  auto fx = make_feature_extractor();
  const double f = fid(sample_images(trained.generator, c.fid_images, c.seed_for("fid")),
                       reference_corpus(c), fx);
  summary("train-gan", {{"run", dir.string()}, {"steps", gcfg.total_steps}, {"fid", f}});
}

void cmd_keygen(const Options& o) {
  auto c = load_config(o);
  auto g = load_gen(o.generator, "generator checkpoint");
  auto dir = run_dir(o, c, "keygen");
  auto m = RunManifest::create(dir, c, "keygen");
  auto kcfg = c.keygen;
  kcfg.seed = c.seed_for("keygen");
  std::vector<json> log;
  auto fx = make_feature_extractor();
  auto r = keygen(g, kcfg, fx, [&](const KeygenLogEntry& e) {
    log.push_back({{"step", e.step}, {"perceptual_loss", e.perceptual_loss},
                   {"message_loss", e.message_loss}, {"batch_agreement", e.batch_agreement}});
    log_info("keygen step " + std::to_string(e.step) + " agreement=" +
             std::to_string(e.batch_agreement));
  });
  KeyStore store(artifact_root(c) / "keys");
  const auto id = store.put(r.key);
  save_key(r.key, dir / "key.ptwkey");
  save_mappers(r, dir / "mappers.ckpt");
  write_jsonl(dir / "keygen_log.jsonl", log);
  m.add("key", "key.ptwkey");
  m.add("mappers", "mappers.ckpt");
  m.add("keygen_log", "keygen_log.jsonl");
  summary("keygen", {{"run", dir.string()},
                     {"key_id", id},
                     {"n", r.key.n},
                     {"heldout_agreement", r.log.heldout_agreement},
                     {"target_met", r.log.target_met}});
}

Message message_for(const Options& o, const ExperimentConfig& c, std::int64_t n) {
  if (!o.message.empty()) return Message::from_hex(o.message, static_cast<std::size_t>(n));
  return Message::random(static_cast<std::size_t>(n), c.seed_for("message"));
}

void cmd_embed(const Options& o) {
  auto c = load_config(o);
  auto g = load_gen(o.generator, "generator checkpoint");
  auto key = load_key_file(o.key);
  auto msg = message_for(o, c, key.n);
  auto dir = run_dir(o, c, "embed");
  auto m = RunManifest::create(dir, c, "embed");
  auto ecfg = c.embed;
  ecfg.seed = c.seed_for("embed");
  auto fx = make_feature_extractor();
  auto r = ptw_embed(g, key, msg, ecfg, fx, [](const EmbedLogEntry& e) {
    log_info("embed step " + std::to_string(e.step) + " agreement=" +
             std::to_string(e.probe_agreement));
  });
  save_generator(r.generator, dir / "watermarked.ckpt");
  r.log.write(dir / "embed_log.txt");
  m.add("watermarked", "watermarked.ckpt");
  m.add("embed_log", "embed_log.txt");
  summary("embed", {{"run", dir.string()},
                    {"message_hex", msg.to_hex()},
                    {"n", key.n},
                    {"steps_run", r.log.steps_run},
                    {"early_stopped", r.log.early_stopped},
                    {"agreement", r.log.final_agreement}});
}

void cmd_verify(const Options& o) {
  auto key = load_key_file(o.key);
  require(o.message, "--message");
  auto msg = Message::from_hex(o.message, static_cast<std::size_t>(key.n));
  ThresholdConfig threshold{o.kappa};
  threshold.validate();
  std::vector<fs::path> files;
  if (!o.image.empty()) {
    require_file(o.image, "image");
    files.push_back(o.image);
  } else {
    require(o.images, "--image or --images");
    require_file(o.images, "image directory");
    for (const auto& e : fs::directory_iterator(o.images)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  std::size_t detected = 0;
  for (const auto& f : files) {
    auto rec = to_json(verify(load_image(f), key, msg, threshold));
    detected += rec["detected"].get<bool>() ? 1 : 0;
    if (files.size() > 1) rec["image"] = f.filename().string();
    std::cout << rec.dump() << '\n';
  }
  if (files.size() > 1) summary("verify", {{"images", files.size()}, {"detected", detected}});
}

void cmd_attack(const Options& o) {
  auto c = load_config(o);
  require(o.kind, "--kind");
  const auto kind = attack_kind_from_string(o.kind);
  auto fx = make_feature_extractor();
  if (is_black_box(kind) && !o.images.empty()) {
    require(o.out, "--out");
    require_file(o.images, "image directory");
    AttackSpec spec{kind, o.parameter, c.seed_for("attack")};
    auto images = load_image_dir(o.images, c.gan.arch.resolution);
    save_image_dir(apply_attack(images, spec), o.out);
    summary("attack", {{"attack", spec.label()}, {"images", images.size(0)}, {"out", o.out}});
    return;
  }
  auto wm = load_gen(o.watermarked, "watermarked checkpoint");
  auto dir = run_dir(o, c, "attack");
  auto m = RunManifest::create(dir, c, "attack");
  if (kind == AttackKind::Rpt) {
    torch::Tensor real = o.real.empty()
                             ? synthetic_shapes(c.real_budget, wm.arch.resolution, c.seed_for("attacker-real"))
                             : load_image_dir(o.real, wm.arch.resolution, c.real_budget);
    auto rcfg = c.rpt;
    rcfg.seed = c.seed_for("rpt");
    auto r = rpt_attack(wm, real, rcfg, fx);
    save_generator(r.generator, dir / "attacked.ckpt");
    m.add("attacked", "attacked.ckpt");
    summary("attack", {{"attack", "rpt"}, {"R", real.size(0)}, {"steps", r.steps_run},
                       {"inversion_loss", r.inversion.loss.mean().item<double>()}});
  } else if (kind == AttackKind::Overwrite) {
    OverwriteConfig ocfg{o.parameter, c.keygen, c.embed, c.seed_for("overwrite")};
    auto r = overwrite_attack(wm, ocfg, fx);
    save_generator(r.generator, dir / "attacked.ckpt");
    save_key(r.attacker_key, dir / "attacker_key.ptwkey");
    m.add("attacked", "attacked.ckpt");
    m.add("attacker_key", "attacker_key.ptwkey");
    summary("attack", {{"attack", "overwrite"}, {"lambda_m", o.parameter},
                       {"attacker_message_hex", r.attacker_message.to_hex()}});
  } else {
    // Evaluate every configured black-box grid against the watermarked generator.
    auto key = load_key_file(o.key);
    auto clean = load_gen(o.generator, "generator checkpoint");
    auto msg = message_for(o, c, key.n);
    WatermarkSetup setup{clean, wm, key, msg};
    auto rows = evaluate_black_box_attacks(setup, c.attack_grids, c.capacity_images,
                                           c.seed_for("attack-eval"), reference_corpus(c), fx, c.kappa);
    std::vector<json> records;
    for (const auto& r : rows) records.push_back(to_json(r));
    write_jsonl(dir / kAttackFile, records);
    m.add("attacks", kAttackFile);
    summary("attack", {{"run", dir.string()}, {"rows", records.size()}});
  }
}

WatermarkSetup setup_from(const Options& o, const ExperimentConfig& c, const FeatureExtractor& fx) {
  auto clean = load_gen(o.generator, "generator checkpoint");
  if (!o.watermarked.empty()) {
    auto wm = load_gen(o.watermarked, "watermarked checkpoint");
    auto key = load_key_file(o.key);
    auto msg = message_for(o, c, key.n);
    return {clean, wm, key, msg};
  }
  return prepare_watermark(clean, c.keygen, c.embed, c.seed_for("setup"), fx);
}

void cmd_game_robustness(const Options& o) {
  auto c = load_config(o);
  require(o.kind, "--kind");
  auto fx = make_feature_extractor();
  auto setup = setup_from(o, c, fx);
  auto dir = run_dir(o, c, "game-robustness");
  auto m = RunManifest::create(dir, c, "game-robustness");
  RobustnessGameConfig g;
  g.kappa = c.kappa;
  g.real_budget = c.real_budget;
  g.rounds = c.rounds;
  g.attack = {attack_kind_from_string(o.kind), o.parameter, 0};
  g.rpt = c.rpt;
  g.overwrite = {o.parameter, c.keygen, c.embed, 0};
  g.seed = c.seed_for("robustness-game");
  auto real = synthetic_shapes(std::max<std::int64_t>(c.real_budget, 1), setup.clean.arch.resolution,
                               c.seed_for("attacker-real"));
  auto report = robustness_game(setup, g, real, reference_corpus(c), fx);
  const auto name = "game_" + to_string(g.attack.kind) + ".jsonl";
  report.write(dir / name);
  m.add("game_" + to_string(g.attack.kind), name);
  append_jsonl(dir / kGameSummaryFile, {{"attack", g.attack.label()},
                                        {"evasion_rate", report.evasion_rate},
                                        {"fid", report.fid},
                                        {"succ_evasion", report.succ_evasion}});
  m.add("games", kGameSummaryFile);
  summary("game-robustness", {{"run", dir.string()},
                              {"attack", g.attack.label()},
                              {"evasion_rate", report.evasion_rate},
                              {"fid", report.fid},
                              {"succ_evasion", report.succ_evasion}});
}

void cmd_game_detect(const Options& o) {
  auto c = load_config(o);
  auto clean = load_gen(o.generator, "generator checkpoint");
  auto wm = load_gen(o.watermarked, "watermarked checkpoint");
  auto dir = run_dir(o, c, "game-detect");
  auto m = RunManifest::create(dir, c, "game-detect");
  std::vector<json> records;
  auto run = [&](const std::string& axis, double value, DetectionGameConfig g) {
    auto r = detection_game(clean, wm, g);
    records.push_back({{"axis", axis}, {"value", value}, {"seed", g.seed}, {"accuracy", r.accuracy}});
    log_info("detect " + axis + "=" + std::to_string(value) + " accuracy=" + std::to_string(r.accuracy));
  };
  for (auto s : c.sweep_seeds) {
    DetectionGameConfig base;
    base.trials = c.detect_trials;
    base.detector = c.detector;
    base.seed = derive_seed(c.seed_for("detect"), std::to_string(s));
    auto untrained = base;
    untrained.detector.untrained = true;
    run("untrained", 0, untrained);
    for (auto b : c.detect_budgets) {
      auto g = base;
      g.clean_budget = g.watermarked_budget = b;
      run("budget", static_cast<double>(b), g);
    }
    for (auto psi : c.detect_psi) {
      auto g = base;
      g.psi = psi;
      run("psi", psi, g);
    }
  }
  write_jsonl(dir / kDetectFile, records);
  m.add("detect", kDetectFile);
  summary("game-detect", {{"run", dir.string()}, {"records", records.size()}});
}

void cmd_sweep(const Options& o) {
  auto c = load_config(o);
  auto g = load_gen(o.generator, "generator checkpoint");
  auto dir = run_dir(o, c, "sweep");
  auto m = RunManifest::create(dir, c, "sweep");
  SweepConfig s;
  s.n_grid = c.sweep_n;
  s.seeds = c.sweep_seeds;
  s.keygen = c.keygen;
  s.embed = c.embed;
  s.num_images = c.fid_images;
  s.eval_seed = c.seed_for("sweep-eval");
  auto fx = make_feature_extractor();
  std::vector<json> records;
  for (const auto& row : capacity_utility_sweep(g, s, reference_corpus(c), fx)) {
    records.push_back(to_json(row));
  }
  write_jsonl(dir / kSweepFile, records);
  m.add("sweep", kSweepFile);
  summary("sweep", {{"run", dir.string()}, {"rows", records.size()}});
}

void cmd_report(const Options& o) {
  if (o.runs.empty()) throw InvalidArgument("report needs at least one --runs directory");
  std::vector<fs::path> runs;
  for (const auto& r : o.runs) {
    require_file(r, "run directory");
    RunManifest::open(r);
    runs.emplace_back(r);
  }
  const fs::path out = o.out.empty() ? runs.front() / "report" : fs::path(o.out);
  auto files = write_report(build_report(runs), out);
  summary("report", {{"out", out.string()}, {"files", files}});
}

void emit_error(const std::string& code, const std::string& message, int exit_code) {
  std::cerr << json{{"error", code}, {"message", message}, {"exit_code", exit_code}}.dump()
            << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pivotal tuning watermarking lab"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Experiment config (JSON)");
  app.add_option("--run", o.run, "Run directory (default: $PTW_ROOT or paths.root)");
  app.add_flag("-q,--quiet", o.quiet, "Only print errors");
  app.add_flag("-v,--verbose", o.verbose, "Progress logging");

  auto* train = app.add_subcommand("train-gan", "Train the generator on the synthetic corpus");
  auto* kg = app.add_subcommand("keygen", "Train a watermarking key for a generator");
  kg->add_option("--generator", o.generator)->required();
  auto* emb = app.add_subcommand("embed", "Embed a message with pivotal tuning");
  emb->add_option("--generator", o.generator)->required();
  emb->add_option("--key", o.key)->required();
  emb->add_option("--message", o.message, "Hex message (default: random from the seed)");
  auto* ver = app.add_subcommand("verify", "Verify the watermark in images");
  ver->add_option("--image", o.image);
  ver->add_option("--images", o.images);
  ver->add_option("--key", o.key)->required();
  ver->add_option("--message", o.message)->required();
  ver->add_option("--kappa", o.kappa);
  auto* att = app.add_subcommand("attack", "Run a removal attack");
  att->add_option("--kind", o.kind)->required();
  att->add_option("--param", o.parameter);
  att->add_option("--images", o.images);
  att->add_option("--out", o.out);
  att->add_option("--generator", o.generator);
  att->add_option("--watermarked", o.watermarked);
  att->add_option("--key", o.key);
  att->add_option("--message", o.message);
  att->add_option("--real", o.real);
  auto* rob = app.add_subcommand("game-robustness", "Watermark robustness game");
  rob->add_option("--generator", o.generator)->required();
  rob->add_option("--watermarked", o.watermarked);
  rob->add_option("--key", o.key);
  rob->add_option("--message", o.message);
  rob->add_option("--kind", o.kind)->required();
  rob->add_option("--param", o.parameter);
  auto* det = app.add_subcommand("game-detect", "Watermark detection game");
  det->add_option("--generator", o.generator)->required();
  det->add_option("--watermarked", o.watermarked)->required();
  auto* sw = app.add_subcommand("sweep", "Capacity/utility sweep over message lengths");
  sw->add_option("--generator", o.generator)->required();
  auto* rep = app.add_subcommand("report", "Consolidate result files into tables and plots");
  rep->add_option("--runs", o.runs)->required();
  rep->add_option("--out", o.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what(), kExitUsage);
    return kExitUsage;
  }
  set_log_level(o.quiet ? LogLevel::Quiet : o.verbose ? LogLevel::Info : LogLevel::Warning);

  try {
    if (*train) cmd_train_gan(o);
    else if (*kg) cmd_keygen(o);
    else if (*emb) cmd_embed(o);
    else if (*ver) cmd_verify(o);
    else if (*att) cmd_attack(o);
    else if (*rob) cmd_game_robustness(o);
    else if (*det) cmd_game_detect(o);
    else if (*sw) cmd_sweep(o);
    else if (*rep) cmd_report(o);
  } catch (const NotFound& e) {
    emit_error(e.code(), e.what(), kExitUsage);
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    emit_error(e.code(), e.what(), kExitUsage);
    return kExitUsage;
  } catch (const Error& e) {
    emit_error(e.code(), e.what(), kExitRuntime);
    return kExitRuntime;
  } catch (const std::exception& e) {
    emit_error("internal", e.what(), kExitInternal);
    return kExitInternal;
  }
  return EXIT_SUCCESS;
}
