#include "doctest_torch.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "ptw/classifier.hpp"
#include "ptw/errors.hpp"
#include "ptw/harness/config.hpp"
#include "ptw/harness/key_store.hpp"
#include "ptw/harness/manifest.hpp"
#include "ptw/harness/plot.hpp"
#include "ptw/harness/report.hpp"
#include "ptw/keygen.hpp"
#include "ptw/params.hpp"

using namespace ptw;
using namespace ptw::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ptw_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

WatermarkKey small_key(std::uint64_t seed) {
  WatermarkKey key;
  key.n = 8;
  key.arch = ArchConfig::desk(32, 8);
  key.decoder = init_classifier(8, seed);
  return key;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config defaults round trip through JSON") {
  const ExperimentConfig c;
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(c.keygen.n == 16);
  CHECK(c.kappa == 0.05);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"sed", 1}}), InvalidArgument);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"keygen", {{"lamda_r", 1}}}}), InvalidArgument);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"keygen", {{"n", "sixteen"}}}}), InvalidArgument);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"games", {{"K", 100}, {"R", 10}}}}),
                  InvalidArgument);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/ptw.json"), NotFound);

  const auto c = ExperimentConfig::from_json(json{{"seed", 7}, {"keygen", {{"n", 32}}}});
  CHECK(c.keygen.n == 32);
  CHECK(c.hash() != ExperimentConfig().hash());
  CHECK(c.seed_for("keygen") == c.seed_for("keygen"));
  CHECK(c.seed_for("keygen") != c.seed_for("embed"));
}

TEST_CASE("key store is content addressed") {
  const auto dir = scratch("keys");
  KeyStore store(dir);
  const auto a = small_key(1);
  const auto id = store.put(a);
  CHECK(id.size() == 64);
  CHECK(store.put(a) == id);
  const auto b = small_key(2);
  const auto id2 = store.put(b);
  CHECK(id2 != id);
  auto ids = store.list();
  REQUIRE(ids.size() == 2);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  CHECK(store.get(id).decoder.params.equal(a.decoder.params));
  CHECK_THROWS_AS(store.get(std::string(64, '0')), NotFound);
  CHECK_THROWS_AS(store.get("../etc"), InvalidArgument);

  // Flip one byte of the stored file.
  {
    std::fstream f(store.path_of(id), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(store.get(id), IncompatibleCheckpoint);
}

TEST_CASE("run manifest") {
  const auto dir = scratch("run");
  ExperimentConfig c;
  auto m = RunManifest::create(dir, c, "test");
  CHECK(m.config_hash() == c.hash());
  {
    std::ofstream f(dir / "a.txt");
    f << "hello";
  }
  m.add("a", "a.txt");
  m.save();
  auto back = RunManifest::open(dir);
  CHECK(back.has("a"));
  CHECK(back.artifacts().front().sha256 ==
        "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
  CHECK(back.path_of("a") == dir / "a.txt");
  CHECK_THROWS_AS(back.path_of("b"), NotFound);
  CHECK(back.config().hash() == c.hash());

  auto other = c;
  other.seed = 99;
  CHECK_THROWS_AS(RunManifest::create(dir, other, "test"), InvalidArgument);
  CHECK_THROWS_AS(RunManifest::open(scratch("empty_run")), NotFound);

  {
    std::ofstream f(dir / "config.json");
    f << other.to_json().dump();
  }
  CHECK_THROWS_AS(RunManifest::open(dir), InvalidArgument);
}

TEST_CASE("pareto front agrees with a direct dominance scan") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ParetoPoint> pts;
    for (int i = 0; i < 30; ++i) {
      // Coarse grid so that ties occur.
      pts.push_back({std::round(u(rng) * 5), std::round(u(rng) * 5), std::to_string(i)});
    }
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        const auto& a = pts[j];
        const auto& b = pts[i];
        if (a.capacity <= b.capacity && a.fid <= b.fid &&
            (a.capacity < b.capacity || a.fid < b.fid)) {
          dominated = true;
        }
      }
      if (!dominated) expect.push_back(i);
    }
    CHECK(pareto_front(pts) == expect);
  }
  CHECK(dominates({1, 1, ""}, {1, 2, ""}));
  CHECK_FALSE(dominates({1, 1, ""}, {1, 1, ""}));
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS_AS(median({}), InvalidArgument);
}

TEST_CASE("jsonl and report are deterministic") {
  const auto run = scratch("report_run");
  write_jsonl(run / kSweepFile, {json{{"n", 0}, {"seed", 0}, {"capacity", 0.0}, {"fid", 1.0},
                                      {"fid_clean", 1.0}, {"fid_degradation", 0.0}},
                                 json{{"n", 8}, {"seed", 0}, {"capacity", 3.5}, {"fid", 1.2},
                                      {"fid_clean", 1.0}, {"fid_degradation", 0.2}}});
  append_jsonl(run / kSweepFile, json{{"n", 8}, {"seed", 1}, {"capacity", 3.7}, {"fid", 1.3},
                                      {"fid_clean", 1.0}, {"fid_degradation", 0.3}});
  CHECK(read_jsonl(run / kSweepFile).size() == 3);

  const auto a = build_report({run});
  const auto b = build_report({run});
  CHECK(a.tables == b.tables);
  CHECK(a.markdown == b.markdown);
  CHECK_FALSE(a.markdown.empty());

  const auto out1 = scratch("report_out1");
  const auto out2 = scratch("report_out2");
  const auto files = write_report(a, out1);
  write_report(b, out2);
  for (const auto& f : files) {
    CAPTURE(f);
    CHECK(file_sha256(out1 / f) == file_sha256(out2 / f));
  }
}

TEST_CASE("svg plot") {
  const auto svg = svg_plot("t", "x", "y", {Series{"a", {0, 1, 2}, {1, 3, 2}, true}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
}

}
