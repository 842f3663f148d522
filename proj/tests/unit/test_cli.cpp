#include "doctest_torch.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>
#include <torch/torch.h>

#include "ptw/classifier.hpp"
#include "ptw/dataset.hpp"
#include "ptw/image.hpp"
#include "ptw/keygen.hpp"
#include "ptw/message.hpp"

using namespace ptw;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const auto dir = fs::temp_directory_path() / "ptw_unit_cli";
  fs::create_directories(dir);
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(PTW_CLI_PATH) + " " + args + " >" + out.string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2 and a JSON record") {
  for (const char* args : {"", "no-such-command", "verify --message 00",
                           "attack --kind rotate --images /tmp --out /tmp/x"}) {
    CAPTURE(args);
    const auto r = run(args);
    CHECK(r.code == 2);
    const auto j = nlohmann::json::parse(r.err, nullptr, false);
    REQUIRE_FALSE(j.is_discarded());
    CHECK(j.at("exit_code") == 2);
    CHECK(j.contains("error"));
    CHECK(j.contains("message"));
  }
}

TEST_CASE("missing files and bad configs are usage errors") {
  CHECK(run("verify --key /nonexistent.ptwkey --message 00 --image /nonexistent.png").code == 2);
  const auto dir = fs::temp_directory_path() / "ptw_unit_cli";
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "bad.json");
    f << R"({"keygen": {"lamda_r": 1}})";
  }
  const auto r = run("--config " + (dir / "bad.json").string() + " train-gan");
  CHECK(r.code == 2);
  CHECK(r.err.find("lamda_r") != std::string::npos);
}

TEST_CASE("corrupt key is a runtime error") {
  const auto dir = fs::temp_directory_path() / "ptw_unit_cli";
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "junk.ptwkey");
    f << "not a key";
  }
  save_png(synthetic_shapes(1, 32, 1)[0], dir / "a.png");
  const auto r = run("verify --key " + (dir / "junk.ptwkey").string() + " --message 00 --image " +
                     (dir / "a.png").string());
  CHECK(r.code == 1);
}

TEST_CASE("verify prints one record per image") {
  const auto dir = fs::temp_directory_path() / "ptw_unit_cli";
  fs::create_directories(dir);
  const auto m = Message::random(16, 1);
  WatermarkKey key;
  key.n = 16;
  key.arch = ArchConfig::desk(32, 8);
  key.decoder = init_classifier(16, 1);
  key.decoder.params.set("head.weight", torch::zeros_like(key.decoder.params.at("head.weight")));
  key.decoder.params.set("head.bias", m.to_tensor() * 2 - 1);
  save_key(key, dir / "k.ptwkey");
  save_png(synthetic_shapes(1, 32, 1)[0], dir / "a.png");
  const auto r = run("-q verify --key " + (dir / "k.ptwkey").string() + " --message " +
                     m.to_hex() + " --image " + (dir / "a.png").string());
  CHECK(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  REQUIRE(std::getline(lines, line));
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("k") == 16);
  CHECK(j.at("detected") == true);
  CHECK(j.at("p_value").get<double>() == std::ldexp(1.0, -16));
}

}
