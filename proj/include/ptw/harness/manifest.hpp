#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptw/harness/config.hpp"

namespace ptw::harness {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct Artifact {
  std::string name;
  /// Relative to the run directory.
  std::filesystem::path path;
  std::string sha256;
};

/// Index of one run directory: the config copy, its hash and every artifact
/// written into the directory.
class RunManifest {
 public:
  /// Creates (or reopens) `dir`, writes config.json and manifest.json.
  static RunManifest create(const std::filesystem::path& dir, const ExperimentConfig& config,
                            const std::string& command);
  /// Throws NotFound if the directory has no manifest, InvalidArgument if the
  /// stored config no longer matches its recorded hash.
  static RunManifest open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  const std::string& run_id() const { return run_id_; }
  const std::string& config_hash() const { return config_hash_; }
  const std::vector<Artifact>& artifacts() const { return artifacts_; }
  ExperimentConfig config() const;

  /// Hashes the file and records it (replacing an entry of the same name).
  void add(const std::string& name, const std::filesystem::path& relative);
  std::filesystem::path path_of(const std::string& name) const;
  bool has(const std::string& name) const;
  void save() const;

 private:
  std::filesystem::path dir_;
  std::string run_id_;
  std::string config_hash_;
  std::string command_;
  std::string created_;
  std::string updated_;
  std::vector<Artifact> artifacts_;
};

std::string file_sha256(const std::filesystem::path& path);

}  // namespace ptw::harness
