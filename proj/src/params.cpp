#include "ptw/params.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "ptw/errors.hpp"

namespace ptw {

void ParamSet::set(const std::string& name, torch::Tensor t) {
  tensors_[name] = std::move(t);
}

const torch::Tensor& ParamSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InternalError("missing parameter '" + name + "'");
  return it->second;
}

std::int64_t ParamSet::numel() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.numel();
  return n;
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : tensors_) out.tensors_[name] = t.detach().clone();
  return out;
}

void ParamSet::requires_grad(bool on) {
  for (auto& [_, t] : tensors_) t.requires_grad_(on);
}

std::vector<torch::Tensor> ParamSet::list() const {
  std::vector<torch::Tensor> out;
  out.reserve(tensors_.size());
  for (const auto& [_, t] : tensors_) out.push_back(t);
  return out;
}

bool ParamSet::all_finite() const {
  for (const auto& [_, t] : tensors_) {
    if (!torch::isfinite(t).all().item<bool>()) return false;
  }
  return true;
}

bool ParamSet::equal(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (const auto& [name, t] : tensors_) {
    auto it = other.tensors_.find(name);
    if (it == other.tensors_.end()) return false;
    if (!t.sizes().equals(it->second.sizes())) return false;
    if (!torch::equal(t.detach(), it->second.detach())) return false;
  }
  return true;
}

Rng make_rng(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  // FNV-1a over the tag, folded into the seed through splitmix64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

torch::Tensor randn(torch::IntArrayRef shape, Rng& rng) {
  return at::randn(shape, rng, torch::TensorOptions().dtype(torch::kFloat));
}

torch::Tensor rand(torch::IntArrayRef shape, Rng& rng) {
  return at::rand(shape, rng, torch::TensorOptions().dtype(torch::kFloat));
}

torch::Tensor randint(std::int64_t high, torch::IntArrayRef shape, Rng& rng) {
  return at::randint(high, shape, rng, torch::TensorOptions().dtype(torch::kLong));
}

torch::Tensor randperm(std::int64_t n, Rng& rng) {
  return at::randperm(n, rng, torch::TensorOptions().dtype(torch::kLong));
}

torch::Tensor kaiming(torch::IntArrayRef shape, std::int64_t fan_in, Rng& rng, double gain) {
  return randn(shape, rng) * (gain / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace ptw
