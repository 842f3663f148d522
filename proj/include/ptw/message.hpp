#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <torch/types.h>

namespace ptw {

/// Fixed-length bit vector hidden in generated images.
class Message {
 public:
  Message() = default;
  /// Throws InvalidArgument if any element is not 0 or 1.
  explicit Message(std::vector<std::uint8_t> bits);

  /// Uniform message of length n drawn from `seed`; n == 0 is rejected.
  static Message random(std::size_t n, std::uint64_t seed);
  /// Hex string, most significant nibble first; `n` trims the padding bits.
  static Message from_hex(const std::string& hex, std::size_t n);
  /// Thresholds logits at zero (logit > 0 means bit 1).
  static Message from_logits(const torch::Tensor& logits);

  std::size_t size() const noexcept { return bits_.size(); }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::uint8_t operator[](std::size_t i) const { return bits_.at(i); }

  Message complement() const;
  std::string to_hex() const;
  /// Float tensor of shape [n] holding 0/1.
  torch::Tensor to_tensor() const;

  friend bool operator==(const Message&, const Message&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Number of positions where a and b agree; throws on length mismatch.
std::size_t matching_bits(const Message& a, const Message& b);

/// Agreement rate (1 - bit error rate) in [0,1].
double bit_agreement(const Message& a, const Message& b);

/// Exact upper binomial tail sum_{i=k}^{n} C(n,i) 2^-n.
///
/// Integer accumulation for n <= 64 and log-sum-exp beyond, so n = 100 does
/// not underflow to zero.
double binomial_p_value(std::size_t n, std::size_t k);

/// n * (mean(agreement) - 0.5). May be negative.
double capacity(std::span<const double> agreement_rates, std::size_t n);

/// Smallest k with binomial_p_value(n, k) <= kappa, or n + 1 when even a
/// perfect match is not significant.
std::size_t min_matching_bits(std::size_t n, double kappa);

/// Capacity needed for the mean extraction to be significant at kappa,
/// i.e. min_matching_bits(n, kappa) - n / 2. For n = 40 this is 6.
double detection_capacity_threshold(std::size_t n, double kappa);

struct ThresholdConfig {
  double kappa = 0.05;

  /// Throws InvalidArgument unless 0 < kappa < 1.
  void validate() const;
};

struct VerificationResult {
  Message extracted;
  std::size_t matching_bits = 0;
  double p_value = 1.0;
  bool detected = false;
};

}  // namespace ptw
