#include "ptw/harness/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "ptw/errors.hpp"
#include "ptw/hash.hpp"
#include "ptw/params.hpp"

namespace ptw::harness {

namespace {

/// Reads typed fields from one JSON object and rejects anything left over.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InvalidArgument("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument("config field '" + name_ + "." + key + "' has the wrong type");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::json& at(const std::string& key) const { return j_.at(key); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw InvalidArgument("unknown config field '" + name_ + "." + item.key() + "'");
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

const nlohmann::json kEmpty = nlohmann::json::object();

const nlohmann::json& section(Section& top, const std::string& key) {
  return top.has(key) ? top.at(key) : kEmpty;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (auto kind : {AttackKind::Crop, AttackKind::Jpeg, AttackKind::Noise, AttackKind::Quantize,
                    AttackKind::Blur, AttackKind::SuperResolution}) {
    attack_grids.emplace_back(kind, default_grid(kind));
  }
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  Section top(j, "config");
  top.read("seed", c.seed);

  {
    Section s(section(top, "generator"), "generator");
    auto& a = c.gan.arch;
    std::int64_t width = a.widths.empty() ? 32 : a.widths.front();
    s.read("resolution", a.resolution);
    s.read("z_dim", a.z_dim);
    s.read("w_dim", a.w_dim);
    s.read("mapping_layers", a.mapping_layers);
    s.read("width", width);
    a.widths = ArchConfig::desk(a.resolution, width).widths;
    s.read("widths", a.widths);
    s.read("corpus_size", c.corpus_size);
    s.read("steps", c.gan.total_steps);
    s.read("batch_size", c.gan.batch_size);
    s.read("lr_g", c.gan.lr_g);
    s.read("lr_d", c.gan.lr_d);
    s.read("r1_gamma", c.gan.r1_gamma);
    s.read("r1_interval", c.gan.r1_interval);
    s.read("w_avg_beta", c.gan.w_avg_beta);
    s.finish();
  }
  {
    Section s(section(top, "keygen"), "keygen");
    auto& k = c.keygen;
    s.read("n", k.n);
    s.read("steps", k.steps);
    s.read("lambda_r", k.lambda_r);
    s.read("lambda_lpips", k.lambda_lpips);
    s.read("lr_mappers", k.lr_mappers);
    s.read("lr_decoder", k.lr_decoder);
    s.read("batch_size", k.batch_size);
    s.read("target_agreement", k.target_agreement);
    s.read("holdout", k.holdout);
    s.read("decoder_resolution", k.decoder_resolution);
    s.read("hidden", k.mapper.hidden);
    s.read("condition_on_latent", k.mapper.condition_on_latent);
    s.read("latent_clamp", k.mapper.latent_clamp);
    s.read("gain", k.mapper.gain);
    s.read("targets", k.mapper.targets);
    s.read("perceptual_warmup", k.perceptual_warmup);
    s.read("perceptual_gate", k.perceptual_gate);
    s.finish();
  }
  {
    Section s(section(top, "embed"), "embed");
    auto& e = c.embed;
    s.read("steps", e.steps);
    s.read("lambda_r", e.lambda_r);
    s.read("lambda_lpips", e.lambda_lpips);
    s.read("lr", e.lr);
    s.read("batch_size", e.batch_size);
    s.read("target_agreement", e.target_agreement);
    s.read("patience", e.patience);
    s.read("eval_every", e.eval_every);
    s.read("probe_size", e.probe_size);
    s.finish();
  }
  {
    Section s(section(top, "attacks"), "attacks");
    for (auto& [kind, grid] : c.attack_grids) s.read(to_string(kind), grid);
    s.read("overwrite", c.overwrite_weights);
    Section r(section(s, "rpt"), "attacks.rpt");
    r.read("steps", c.rpt.steps);
    r.read("lr", c.rpt.lr);
    r.read("batch_size", c.rpt.batch_size);
    r.read("invert_steps", c.rpt.inversion.steps);
    r.read("invert_lr", c.rpt.inversion.lr);
    r.read("budgets", c.rpt_budgets);
    r.read("max_steps", c.rpt_max_steps);
    r.finish();
    s.finish();
  }
  {
    Section s(section(top, "games"), "games");
    s.read("kappa", c.kappa);
    s.read("K", c.rounds);
    s.read("R", c.real_budget);
    s.read("detect_budgets", c.detect_budgets);
    s.read("detect_psi", c.detect_psi);
    s.read("detect_trials", c.detect_trials);
    s.read("detector_steps", c.detector.steps);
    s.read("detector_lr", c.detector.lr);
    s.read("detector_batch_size", c.detector.batch_size);
    s.finish();
  }
  {
    Section s(section(top, "metrics"), "metrics");
    s.read("fid_images", c.fid_images);
    s.read("capacity_images", c.capacity_images);
    s.read("sweep_n", c.sweep_n);
    s.read("sweep_seeds", c.sweep_seeds);
    s.finish();
  }
  {
    Section s(section(top, "paths"), "paths");
    std::string root = c.root.string();
    s.read("root", root);
    c.root = root;
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("config file " + path.string() + " does not exist");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json attacks = nlohmann::json::object();
  for (const auto& [kind, grid] : attack_grids) attacks[to_string(kind)] = grid;
  attacks["overwrite"] = overwrite_weights;
  attacks["rpt"] = {{"steps", rpt.steps},
                    {"lr", rpt.lr},
                    {"batch_size", rpt.batch_size},
                    {"invert_steps", rpt.inversion.steps},
                    {"invert_lr", rpt.inversion.lr},
                    {"budgets", rpt_budgets},
                    {"max_steps", rpt_max_steps}};
  const auto& a = gan.arch;
  return {
      {"seed", seed},
      {"generator",
       {{"resolution", a.resolution},
        {"z_dim", a.z_dim},
        {"w_dim", a.w_dim},
        {"mapping_layers", a.mapping_layers},
        {"widths", a.widths},
        {"corpus_size", corpus_size},
        {"steps", gan.total_steps},
        {"batch_size", gan.batch_size},
        {"lr_g", gan.lr_g},
        {"lr_d", gan.lr_d},
        {"r1_gamma", gan.r1_gamma},
        {"r1_interval", gan.r1_interval},
        {"w_avg_beta", gan.w_avg_beta}}},
      {"keygen",
       {{"n", keygen.n},
        {"steps", keygen.steps},
        {"lambda_r", keygen.lambda_r},
        {"lambda_lpips", keygen.lambda_lpips},
        {"lr_mappers", keygen.lr_mappers},
        {"lr_decoder", keygen.lr_decoder},
        {"batch_size", keygen.batch_size},
        {"target_agreement", keygen.target_agreement},
        {"holdout", keygen.holdout},
        {"decoder_resolution", keygen.decoder_resolution},
        {"hidden", keygen.mapper.hidden},
        {"condition_on_latent", keygen.mapper.condition_on_latent},
        {"latent_clamp", keygen.mapper.latent_clamp},
        {"gain", keygen.mapper.gain},
        {"targets", keygen.mapper.targets},
        {"perceptual_warmup", keygen.perceptual_warmup},
        {"perceptual_gate", keygen.perceptual_gate}}},
      {"embed",
       {{"steps", embed.steps},
        {"lambda_r", embed.lambda_r},
        {"lambda_lpips", embed.lambda_lpips},
        {"lr", embed.lr},
        {"batch_size", embed.batch_size},
        {"target_agreement", embed.target_agreement},
        {"patience", embed.patience},
        {"eval_every", embed.eval_every},
        {"probe_size", embed.probe_size}}},
      {"attacks", attacks},
      {"games",
       {{"kappa", kappa},
        {"K", rounds},
        {"R", real_budget},
        {"detect_budgets", detect_budgets},
        {"detect_psi", detect_psi},
        {"detect_trials", detect_trials},
        {"detector_steps", detector.steps},
        {"detector_lr", detector.lr},
        {"detector_batch_size", detector.batch_size}}},
      {"metrics",
       {{"fid_images", fid_images},
        {"capacity_images", capacity_images},
        {"sweep_n", sweep_n},
        {"sweep_seeds", sweep_seeds}}},
      {"paths", {{"root", root.string()}}}};
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()); }

void ExperimentConfig::validate() const {
  gan.arch.validate();
  if (corpus_size < 2) throw InvalidArgument("generator.corpus_size must be >= 2");
  if (gan.total_steps < 0 || gan.batch_size < 1) throw InvalidArgument("invalid generator training settings");
  keygen.validate();
  embed.validate();
  for (const auto& [kind, grid] : attack_grids) {
    for (double p : grid) AttackSpec{kind, p, 0}.validate();
  }
  for (double w : overwrite_weights) AttackSpec{AttackKind::Overwrite, w, 0}.validate();
  ThresholdConfig{kappa}.validate();
  if (rounds < 1) throw InvalidArgument("games.K must be >= 1");
  if (real_budget < 0 || real_budget * 10 >= rounds) {
    throw InvalidArgument("games.R must satisfy R < K/10");
  }
  for (auto b : detect_budgets) {
    if (b < 1) throw InvalidArgument("games.detect_budgets must be >= 1");
  }
  for (auto p : detect_psi) {
    if (!(p >= 0 && p <= 1)) throw InvalidArgument("games.detect_psi must lie in [0,1]");
  }
  if (fid_images < 2 || capacity_images < 1) throw InvalidArgument("invalid metric image budgets");
  for (auto n : sweep_n) {
    if (n < 1) throw InvalidArgument("metrics.sweep_n entries must be >= 1");
  }
}

std::uint64_t ExperimentConfig::seed_for(const std::string& stage) const {
  return derive_seed(seed, stage);
}

std::filesystem::path artifact_root(const ExperimentConfig& config) {
  if (const char* env = std::getenv("PTW_ROOT"); env != nullptr && *env != '\0') return env;
  return config.root;
}

}  // namespace ptw::harness
