#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ptw/generator.hpp"
#include "ptw/keygen.hpp"

namespace ptw::harness {

/// Directory of keys addressed by the SHA-256 of their serialized bytes.
class KeyStore {
 public:
  explicit KeyStore(std::filesystem::path dir);

  /// Stores the key and returns its id. Storing the same key twice is a
  /// no-op that returns the same id.
  std::string put(const WatermarkKey& key);

  /// Loads and validates a key. Warns when `generator` is given and its
  /// architecture differs from the one the key was trained for. Throws
  /// NotFound for an unknown id.
  WatermarkKey get(const std::string& id, const GeneratorParams* generator = nullptr) const;

  std::filesystem::path path_of(const std::string& id) const;
  /// Stored ids in lexicographic order.
  std::vector<std::string> list() const;

 private:
  std::filesystem::path dir_;
};

}  // namespace ptw::harness
