#include "ptw/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include "ptw/errors.hpp"

namespace ptw {

namespace {

constexpr char kMagic[8] = {'P', 'T', 'W', 'C', 'K', 'P', 'T', '\0'};

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1, Int64 = 2 };

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  const char* raw(std::size_t n) {
    need(n);
    const char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw IncompatibleCheckpoint("checkpoint is truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

DType dtype_of(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat: return DType::Float32;
    case torch::kDouble: return DType::Float64;
    case torch::kLong: return DType::Int64;
    default: throw InvalidArgument("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType scalar_of(DType d) {
  switch (d) {
    case DType::Float32: return torch::kFloat;
    case DType::Float64: return torch::kDouble;
    case DType::Int64: return torch::kLong;
  }
  throw IncompatibleCheckpoint("unknown tensor dtype tag");
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(Checkpoint::kFormatVersion);
  w.str(ckpt.kind);
  w.str(ckpt.arch.hash());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.arch.resolution));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.arch.z_dim));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.arch.w_dim));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.arch.mapping_layers));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.arch.widths.size()));
  for (auto width : ckpt.arch.widths) w.pod<std::uint32_t>(static_cast<std::uint32_t>(width));
  w.str(ckpt.metadata.dump());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors.tensors()) {
    auto c = t.detach().to(torch::kCPU).contiguous();
    w.str(name);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(dtype_of(c)));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.dim()));
    for (auto s : c.sizes()) w.pod<std::int64_t>(s);
    w.raw(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size());
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.raw(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw IncompatibleCheckpoint("not a checkpoint file (bad magic bytes)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kFormatVersion) {
    throw IncompatibleCheckpoint("unsupported checkpoint format version " +
                                 std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.kind = r.str();
  const auto stored_hash = r.str();
  ckpt.arch.resolution = r.pod<std::uint32_t>();
  ckpt.arch.z_dim = r.pod<std::uint32_t>();
  ckpt.arch.w_dim = r.pod<std::uint32_t>();
  ckpt.arch.mapping_layers = r.pod<std::uint32_t>();
  const auto nwidths = r.pod<std::uint32_t>();
  if (nwidths > 64) throw IncompatibleCheckpoint("implausible block count");
  ckpt.arch.widths.resize(nwidths);
  for (auto& width : ckpt.arch.widths) width = r.pod<std::uint32_t>();
  if (ckpt.arch.hash() != stored_hash) {
    throw IncompatibleCheckpoint("architecture hash does not match the stored fields");
  }
  try {
    ckpt.metadata = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str();
    const auto dtype = scalar_of(static_cast<DType>(r.pod<std::uint8_t>()));
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) throw IncompatibleCheckpoint("implausible tensor rank");
    std::vector<std::int64_t> shape(ndim);
    std::int64_t numel = 1;
    for (auto& s : shape) {
      s = r.pod<std::int64_t>();
      if (s < 0) throw IncompatibleCheckpoint("negative tensor dimension");
      numel *= s;
    }
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    const auto nbytes = static_cast<std::size_t>(numel) * t.element_size();
    std::memcpy(t.data_ptr(), r.raw(nbytes), nbytes);
    ckpt.tensors.set(name, t);
  }
  if (!r.done()) throw IncompatibleCheckpoint("trailing bytes after the last tensor");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidArgument("cannot open " + path.string() + " for writing");
  const auto bytes = serialize_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InvalidArgument("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFound("checkpoint not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

Checkpoint read_checkpoint(const std::filesystem::path& path, const std::string& kind,
                           const ArchConfig* expected) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.kind != kind) {
    throw IncompatibleCheckpoint("expected a '" + kind + "' checkpoint, found '" + ckpt.kind + "'");
  }
  if (expected != nullptr && !(ckpt.arch == *expected)) {
    throw IncompatibleCheckpoint("checkpoint architecture " + ckpt.arch.hash() +
                                 " does not match the expected " + expected->hash());
  }
  return ckpt;
}

void save_generator(const GeneratorParams& g, const std::filesystem::path& path) {
  Checkpoint c;
  c.kind = "generator";
  c.arch = g.arch;
  c.metadata["frozen"] = g.frozen();
  for (const auto& [name, t] : g.params.tensors()) c.tensors.set("params/" + name, t);
  for (const auto& [name, t] : g.buffers.tensors()) c.tensors.set("buffers/" + name, t);
  write_checkpoint(c, path);
}

GeneratorParams load_generator(const std::filesystem::path& path, const ArchConfig* expected) {
  auto c = read_checkpoint(path, "generator", expected);
  GeneratorParams g;
  g.arch = c.arch;
  for (const auto& [name, t] : c.tensors.tensors()) {
    if (name.rfind("params/", 0) == 0) {
      g.params.set(name.substr(7), t);
    } else if (name.rfind("buffers/", 0) == 0) {
      g.buffers.set(name.substr(8), t);
    } else {
      throw IncompatibleCheckpoint("unexpected tensor '" + name + "' in generator checkpoint");
    }
  }
  try {
    g.arch.validate();
  } catch (const InvalidArgument& e) {
    throw IncompatibleCheckpoint(std::string("invalid generator architecture: ") + e.what());
  }
  const auto reference = init_generator(g.arch, 0);
  for (const auto& [name, t] : reference.params.tensors()) {
    if (!g.params.contains(name) || !g.params.at(name).sizes().equals(t.sizes())) {
      throw IncompatibleCheckpoint("generator checkpoint lacks a valid '" + name + "'");
    }
  }
  if (c.metadata.value("frozen", false)) return clone_pivot(g);
  return g;
}

void save_discriminator(const DiscriminatorParams& d, const std::filesystem::path& path) {
  Checkpoint c;
  c.kind = "discriminator";
  c.arch = d.arch;
  c.tensors = d.params;
  write_checkpoint(c, path);
}

DiscriminatorParams load_discriminator(const std::filesystem::path& path,
                                       const ArchConfig* expected) {
  auto c = read_checkpoint(path, "discriminator", expected);
  return DiscriminatorParams{c.arch, c.tensors};
}

}  // namespace ptw
