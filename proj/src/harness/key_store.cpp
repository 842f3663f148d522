#include "ptw/harness/key_store.hpp"

#include <algorithm>
#include <fstream>

#include "ptw/checkpoint.hpp"
#include "ptw/errors.hpp"
#include "ptw/hash.hpp"

namespace ptw::harness {

namespace {
constexpr const char* kSuffix = ".ptwkey";
}

KeyStore::KeyStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path KeyStore::path_of(const std::string& id) const {
  if (id.empty() || id.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw InvalidArgument("malformed key id '" + id + "'");
  }
  return dir_ / (id + kSuffix);
}

std::string KeyStore::put(const WatermarkKey& key) {
  const auto bytes = serialize_checkpoint(key_checkpoint(key));
  const auto id = sha256_hex(bytes);
  const auto path = path_of(id);
  if (!std::filesystem::exists(path)) {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw InvalidArgument("cannot write key to " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }
  return id;
}

WatermarkKey KeyStore::get(const std::string& id, const GeneratorParams* generator) const {
  const auto path = path_of(id);
  if (!std::filesystem::exists(path)) throw NotFound("no key with id " + id);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (sha256_hex(bytes) != id) throw IncompatibleCheckpoint("key " + id + " is corrupted");
  auto key = key_from_checkpoint(deserialize_checkpoint(bytes));
  if (generator != nullptr) check_key_compatibility(key, *generator);
  return key;
}

std::vector<std::string> KeyStore::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == kSuffix) {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace ptw::harness
