#include "ptw/harness/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ptw/errors.hpp"
#include "ptw/hash.hpp"

namespace ptw::harness {

namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
    if (!out) throw InvalidArgument("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound(path.string() + " does not exist");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound(path.string() + " does not exist");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

RunManifest RunManifest::create(const std::filesystem::path& dir, const ExperimentConfig& config,
                                const std::string& command) {
  std::filesystem::create_directories(dir);
  RunManifest m;
  if (std::filesystem::exists(dir / "manifest.json")) {
    m = open(dir);
    if (m.config_hash_ != config.hash()) {
      throw InvalidArgument("run directory " + dir.string() + " belongs to a different config");
    }
    m.command_ = command;
    m.save();
    return m;
  }
  m.dir_ = dir;
  m.config_hash_ = config.hash();
  m.command_ = command;
  m.created_ = now_utc();
  m.run_id_ = dir.filename().string() + "-" + m.config_hash_.substr(0, 12);
  write_json(dir / "config.json", config.to_json());
  m.save();
  return m;
}

RunManifest RunManifest::open(const std::filesystem::path& dir) {
  const auto j = read_json(dir / "manifest.json");
  RunManifest m;
  m.dir_ = dir;
  try {
    m.run_id_ = j.at("run_id").get<std::string>();
    m.config_hash_ = j.at("config_hash").get<std::string>();
    m.command_ = j.value("command", "");
    m.created_ = j.value("created", "");
    m.updated_ = j.value("updated", "");
    for (const auto& a : j.at("artifacts")) {
      m.artifacts_.push_back({a.at("name").get<std::string>(), a.at("path").get<std::string>(),
                              a.at("sha256").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (m.config().hash() != m.config_hash_) {
    throw InvalidArgument("config.json in " + dir.string() + " does not match the manifest hash");
  }
  return m;
}

ExperimentConfig RunManifest::config() const {
  return ExperimentConfig::from_json(read_json(dir_ / "config.json"));
}

void RunManifest::add(const std::string& name, const std::filesystem::path& relative) {
  Artifact a{name, relative, file_sha256(dir_ / relative)};
  for (auto& existing : artifacts_) {
    if (existing.name == name) {
      existing = a;
      save();
      return;
    }
  }
  artifacts_.push_back(a);
  save();
}

std::filesystem::path RunManifest::path_of(const std::string& name) const {
  for (const auto& a : artifacts_) {
    if (a.name == name) return dir_ / a.path;
  }
  throw NotFound("run " + run_id_ + " has no artifact '" + name + "'");
}

bool RunManifest::has(const std::string& name) const {
  for (const auto& a : artifacts_) {
    if (a.name == name) return true;
  }
  return false;
}

void RunManifest::save() const {
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : artifacts_) {
    artifacts.push_back({{"name", a.name}, {"path", a.path.string()}, {"sha256", a.sha256}});
  }
  write_json(dir_ / "manifest.json", {{"run_id", run_id_},
                                      {"config_hash", config_hash_},
                                      {"command", command_},
                                      {"created", created_},
                                      {"updated", now_utc()},
                                      {"library_version", kLibraryVersion},
                                      {"artifacts", artifacts}});
}

}  // namespace ptw::harness
