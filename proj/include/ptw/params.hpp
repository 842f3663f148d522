#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <ATen/core/Generator.h>
#include <torch/types.h>

namespace ptw {

/// Named tensors of one network. Networks in this library are written as
/// free functions over a ParamSet so that views (e.g. pivot + perturbation)
/// can be built by swapping individual entries.
class ParamSet {
 public:
  using Map = std::map<std::string, torch::Tensor>;

  void set(const std::string& name, torch::Tensor t);
  const torch::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const Map& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::int64_t numel() const;

  /// Deep copy; gradients are not carried over.
  ParamSet clone() const;
  void requires_grad(bool on);
  /// Tensors in name order, for handing to an optimizer.
  std::vector<torch::Tensor> list() const;

  bool all_finite() const;
  /// Bit-exact comparison of names, shapes and values.
  bool equal(const ParamSet& other) const;

 private:
  Map tensors_;
};

using Rng = at::Generator;

Rng make_rng(std::uint64_t seed);

/// Deterministic child seed for a named sub-task; the same (seed, tag) pair
/// always yields the same value.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);

/// Draws with an explicit generator so that no global RNG state is touched.
torch::Tensor randn(torch::IntArrayRef shape, Rng& rng);
torch::Tensor rand(torch::IntArrayRef shape, Rng& rng);
torch::Tensor randint(std::int64_t high, torch::IntArrayRef shape, Rng& rng);

/// Returns a tensor of shape [n] with a random permutation of 0..n-1.
torch::Tensor randperm(std::int64_t n, Rng& rng);

/// Kaiming-normal conv/linear weight with the given fan-in.
torch::Tensor kaiming(torch::IntArrayRef shape, std::int64_t fan_in, Rng& rng,
                      double gain = 1.4142135623730951);

}  // namespace ptw
