#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ptw/gan.hpp"
#include "ptw/generator.hpp"
#include "ptw/params.hpp"

namespace ptw {

/// Binary container shared by generator, discriminator, extractor and key
/// files.
///
///   magic "PTWCKPT\0" | u32 format version | kind | architecture hash |
///   resolution, z_dim, w_dim, mapping layers, block widths |
///   metadata (JSON text) | named tensors (name, dtype, shape, raw data)
///
/// All integers are little-endian; strings are u32-length prefixed.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string kind;
  ArchConfig arch;
  nlohmann::json metadata = nlohmann::json::object();
  ParamSet tensors;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);

/// Throws IncompatibleCheckpoint on bad magic, unknown version, truncation
/// or an architecture hash that does not match the stored fields.
Checkpoint read_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// As above, and additionally requires `kind` and `expected` architecture.
Checkpoint read_checkpoint(const std::filesystem::path& path, const std::string& kind,
                           const ArchConfig* expected = nullptr);

void save_generator(const GeneratorParams& g, const std::filesystem::path& path);
GeneratorParams load_generator(const std::filesystem::path& path,
                               const ArchConfig* expected = nullptr);

void save_discriminator(const DiscriminatorParams& d, const std::filesystem::path& path);
DiscriminatorParams load_discriminator(const std::filesystem::path& path,
                                       const ArchConfig* expected = nullptr);

}  // namespace ptw
