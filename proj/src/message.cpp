#include "ptw/message.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ptw/errors.hpp"

namespace ptw {

Message::Message(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_) {
    if (b > 1) throw InvalidArgument("message bits must be 0 or 1");
  }
}

Message Message::random(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("message length must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return Message(std::move(bits));
}

Message Message::from_hex(const std::string& hex, std::size_t n) {
  if (n == 0) throw InvalidArgument("message length must be >= 1");
  if (hex.size() * 4 < n) {
    throw InvalidArgument("hex string too short for a " + std::to_string(n) +
                          "-bit message");
  }
  std::vector<std::uint8_t> bits;
  bits.reserve(hex.size() * 4);
  for (char c : hex) {
    int v;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      v = c - 'A' + 10;
    } else {
      throw InvalidArgument(std::string("invalid hex digit '") + c + "'");
    }
    for (int s = 3; s >= 0; --s) bits.push_back(static_cast<std::uint8_t>((v >> s) & 1));
  }
  bits.resize(n);
  return Message(std::move(bits));
}

Message Message::from_logits(const torch::Tensor& logits) {
  auto flat = logits.detach().to(torch::kCPU, torch::kDouble).contiguous().view(-1);
  const auto* p = flat.data_ptr<double>();
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(flat.numel()));
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = p[i] > 0.0 ? 1 : 0;
  return Message(std::move(bits));
}

Message Message::complement() const {
  auto bits = bits_;
  for (auto& b : bits) b ^= 1;
  return Message(std::move(bits));
}

std::string Message::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bits_.size(); i += 4) {
    int v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      v <<= 1;
      if (i + j < bits_.size()) v |= bits_[i + j];
    }
    out.push_back(kDigits[v]);
  }
  return out;
}

torch::Tensor Message::to_tensor() const {
  auto t = torch::empty({static_cast<std::int64_t>(bits_.size())}, torch::kFloat);
  auto* p = t.data_ptr<float>();
  for (std::size_t i = 0; i < bits_.size(); ++i) p[i] = bits_[i];
  return t;
}

std::size_t matching_bits(const Message& a, const Message& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("message length mismatch: " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < a.size(); ++i) k += a[i] == b[i];
  return k;
}

double bit_agreement(const Message& a, const Message& b) {
  if (a.size() == 0) throw InvalidArgument("empty message");
  return static_cast<double>(matching_bits(a, b)) / static_cast<double>(a.size());
}

namespace {

double tail_exact(std::size_t n, std::size_t k) {
  // C(n, i) for n <= 64 fits in 64 bits; the running sum fits in 128.
  unsigned __int128 sum = 0;
  unsigned __int128 c = 1;  // C(n, 0)
  for (std::size_t i = 0; i <= n; ++i) {
    if (i >= k) sum += c;
    c = c * (n - i) / (i + 1);
  }
  const auto hi = static_cast<std::uint64_t>(sum >> 64);
  const auto lo = static_cast<std::uint64_t>(sum);
  const long double v = std::ldexp(static_cast<long double>(hi), 64) +
                        static_cast<long double>(lo);
  return static_cast<double>(std::ldexp(v, -static_cast<int>(n)));
}

double tail_log_space(std::size_t n, std::size_t k) {
  const double nd = static_cast<double>(n);
  std::vector<double> terms;
  terms.reserve(n - k + 1);
  for (std::size_t i = k; i <= n; ++i) {
    const double id = static_cast<double>(i);
    terms.push_back(std::lgamma(nd + 1) - std::lgamma(id + 1) -
                    std::lgamma(nd - id + 1) - nd * std::log(2.0));
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return std::min(1.0, std::exp(mx + std::log(acc)));
}

}  // namespace

double binomial_p_value(std::size_t n, std::size_t k) {
  if (k > n) {
    throw InvalidArgument("matching bits k=" + std::to_string(k) +
                          " exceeds message length n=" + std::to_string(n));
  }
  if (k == 0) return 1.0;
  return n <= 64 ? tail_exact(n, k) : tail_log_space(n, k);
}

double capacity(std::span<const double> agreement_rates, std::size_t n) {
  if (agreement_rates.empty()) throw InvalidArgument("capacity of an empty set");
  double sum = 0.0;
  for (double r : agreement_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("agreement rate outside [0,1]");
    sum += r;
  }
  const double mean = sum / static_cast<double>(agreement_rates.size());
  return static_cast<double>(n) * (mean - 0.5);
}

std::size_t min_matching_bits(std::size_t n, double kappa) {
  for (std::size_t k = 0; k <= n; ++k) {
    if (binomial_p_value(n, k) <= kappa) return k;
  }
  return n + 1;
}

double detection_capacity_threshold(std::size_t n, double kappa) {
  return static_cast<double>(min_matching_bits(n, kappa)) - static_cast<double>(n) / 2.0;
}

void ThresholdConfig::validate() const {
  if (!(kappa > 0.0 && kappa < 1.0)) {
    throw InvalidArgument("kappa must lie strictly between 0 and 1");
  }
}

}  // namespace ptw
