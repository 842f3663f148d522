#include "doctest_torch.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "ptw/classifier.hpp"
#include "ptw/dataset.hpp"
#include "ptw/errors.hpp"
#include "ptw/games.hpp"
#include "ptw/generator.hpp"

using namespace ptw;
namespace fs = std::filesystem;

namespace {

WatermarkSetup constant_setup(std::int64_t n) {
  WatermarkSetup s;
  s.clean = init_generator(ArchConfig::desk(32, 8), 1);
  s.watermarked = s.clean.clone();
  s.message = Message::random(static_cast<std::size_t>(n), 2);
  s.key.n = n;
  s.key.arch = s.clean.arch;
  s.key.decoder = init_classifier(n, 1);
  s.key.decoder.params.set("head.weight",
                           torch::zeros_like(s.key.decoder.params.at("head.weight")));
  s.key.decoder.params.set("head.bias", s.message.to_tensor() * 2 - 1);
  return s;
}

}  // namespace

TEST_SUITE("games") {

TEST_CASE("real-image budget must stay below a tenth of the rounds") {
  RobustnessGameConfig c;
  c.rounds = 100;
  c.real_budget = 10;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.real_budget = 9;
  CHECK_NOTHROW(c.validate());
  c.attack = AttackSpec{AttackKind::Jpeg, 10, 0};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("robustness game bookkeeping") {
  // The constant decoder detects every image, so exactly the clean-coin
  // rounds are wrong.
  const auto setup = constant_setup(16);
  const auto fx = make_feature_extractor();
  RobustnessGameConfig c;
  c.rounds = 60;
  c.real_budget = 2;
  c.attack = AttackSpec{AttackKind::Crop, 0.9, 0};
  const auto reference = synthetic_shapes(60, 32, 1);
  const auto r = robustness_game(setup, c, torch::Tensor{}, reference, fx);
  REQUIRE(r.coins.size() == 60);
  REQUIRE(r.outcomes.size() == 60);
  std::size_t heads = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    heads += r.coins[i];
    CHECK(r.outcomes[i] == (r.coins[i] == 0 ? 1 : 0));
  }
  CHECK(r.evasion_rate == doctest::Approx(heads / 60.0));
  CHECK(r.recompute_evasion_rate() == r.evasion_rate);
  CHECK(r.succ_evasion == doctest::Approx(r.evasion_rate - r.fid));

  const auto dir = fs::temp_directory_path() / "ptw_unit_game";
  fs::create_directories(dir);
  r.write(dir / "game.jsonl");
  std::ifstream in(dir / "game.jsonl");
  std::string line;
  std::size_t lines = 0;
  nlohmann::json last;
  while (std::getline(in, line)) {
    ++lines;
    last = nlohmann::json::parse(line);
  }
  CHECK(lines == 61);
  CHECK(last.at("summary").at("evasion_rate").get<double>() == r.evasion_rate);

  // Same seed, same game.
  const auto again = robustness_game(setup, c, torch::Tensor{}, reference, fx);
  CHECK(again.coins == r.coins);
  CHECK(again.p_values == r.p_values);
}

TEST_CASE("untrained detector is at chance") {
  const auto clean = init_generator(ArchConfig::desk(32, 8), 1);
  auto wm = clean.clone();
  wm.params.at("synthesis.const").add_(0.5);
  DetectionGameConfig c;
  c.clean_budget = 8;
  c.watermarked_budget = 8;
  c.trials = 1000;
  c.detector.untrained = true;
  const auto r = detection_game(clean, wm, c);
  CHECK(r.coins.size() == 1000);
  CHECK(std::abs(r.accuracy - 0.5) <= 0.05);
}

TEST_CASE("a trained detector separates visibly different generators") {
  const auto clean = init_generator(ArchConfig::desk(32, 8), 1);
  auto wm = clean.clone();
  wm.params.at("synthesis.torgb.bias").add_(0.5);
  DetectionGameConfig c;
  c.clean_budget = 32;
  c.watermarked_budget = 32;
  c.trials = 200;
  c.detector.steps = 40;
  const auto r = detection_game(clean, wm, c);
  CHECK(r.accuracy > 0.9);
  c.clean_budget = 0;
  CHECK_THROWS_AS(detection_game(clean, wm, c), InvalidArgument);
}

TEST_CASE("sweep emits control rows and uses the provider") {
  const auto fx = make_feature_extractor();
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  SweepConfig c;
  c.n_grid = {8, 16};
  c.seeds = {0, 1};
  c.num_images = 16;
  int calls = 0;
  const auto rows = capacity_utility_sweep(g, c, synthetic_shapes(32, 32, 1), fx,
                                           [&](std::int64_t n, std::uint64_t) {
                                             ++calls;
                                             return constant_setup(n);
                                           });
  CHECK(calls == 4);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].n == 0);
  CHECK(rows[0].fid_degradation == 0.0);
  for (std::size_t i = 2; i < rows.size(); ++i) {
    CHECK(rows[i].capacity == doctest::Approx(rows[i].n / 2.0));
  }
}

}
