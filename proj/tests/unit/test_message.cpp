#include "doctest_torch.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "ptw/errors.hpp"
#include "ptw/message.hpp"

using namespace ptw;
namespace mp = boost::multiprecision;

namespace {

// Tail sum with exact integers, divided in 50-digit decimal floating point.
double big_tail(unsigned n, unsigned k) {
  mp::cpp_int sum = 0;
  mp::cpp_int c = 1;
  for (unsigned i = 0; i <= n; ++i) {
    if (i >= k) sum += c;
    c = c * (n - i) / (i + 1);
  }
  mp::cpp_dec_float_50 num(sum);
  mp::cpp_dec_float_50 den(mp::cpp_int(1) << n);
  return static_cast<double>(num / den);
}

// Counts bit patterns of length n with at least k ones.
double brute_tail(unsigned n, unsigned k) {
  std::uint64_t hits = 0;
  for (std::uint64_t v = 0; v < (std::uint64_t{1} << n); ++v) {
    if (static_cast<unsigned>(std::popcount(v)) >= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::uint64_t{1} << n);
}

}  // namespace

TEST_SUITE("message") {

TEST_CASE("26 of 40 bits is the smallest significant match at 0.05") {
  CHECK(binomial_p_value(40, 26) <= 0.05);
  CHECK(binomial_p_value(40, 25) > 0.05);
  CHECK(min_matching_bits(40, 0.05) == 26);
  CHECK(detection_capacity_threshold(40, 0.05) == doctest::Approx(6.0));
}

TEST_CASE("p-values match a big-integer oracle") {
  for (unsigned n : {1u, 8u, 16u, 32u, 40u, 63u, 64u, 65u, 100u, 128u, 200u}) {
    for (unsigned k = 0; k <= n; ++k) {
      const double expect = big_tail(n, k);
      const double got = binomial_p_value(n, k);
      CAPTURE(n);
      CAPTURE(k);
      CHECK(std::abs(got - expect) <= 1e-12 * expect);
    }
  }
}

TEST_CASE("p-values match brute-force enumeration for n <= 20") {
  for (unsigned n = 1; n <= 20; ++n) {
    for (unsigned k = 0; k <= n; ++k) {
      CAPTURE(n);
      CAPTURE(k);
      CHECK(binomial_p_value(n, k) == brute_tail(n, k));
    }
  }
}

TEST_CASE("p-value is monotone and bounded") {
  for (std::size_t n : {16u, 40u, 100u}) {
    CHECK(binomial_p_value(n, 0) == 1.0);
    CHECK(binomial_p_value(n, n) == doctest::Approx(std::ldexp(1.0, -static_cast<int>(n))));
    for (std::size_t k = 1; k <= n; ++k) {
      const double prev = binomial_p_value(n, k - 1);
      CHECK(binomial_p_value(n, k) <= prev);
      // Far below the mean the tail rounds to 1 in double precision.
      if (prev < 0.999) CHECK(binomial_p_value(n, k) < prev);
    }
    CHECK(binomial_p_value(n, n) > 0.0);
  }
  CHECK_THROWS_AS(binomial_p_value(8, 9), InvalidArgument);
}

TEST_CASE("min_matching_bits edge cases") {
  CHECK(min_matching_bits(16, 0.05) == 12);
  CHECK(detection_capacity_threshold(16, 0.05) == doctest::Approx(4.0));
  // Two bits can never reach 0.05.
  CHECK(min_matching_bits(2, 0.05) == 3);
}

TEST_CASE("capacity") {
  std::vector<double> perfect(10, 1.0);
  CHECK(capacity(perfect, 16) == doctest::Approx(8.0));
  std::vector<double> chance(10, 0.5);
  CHECK(capacity(chance, 16) == doctest::Approx(0.0));
  std::vector<double> worse = {0.25, 0.25};
  CHECK(capacity(worse, 8) == doctest::Approx(-2.0));
}

TEST_CASE("capacity is linear in mean agreement") {
  for (double delta : {0.01, 0.1, 0.25}) {
    std::vector<double> a = {0.6, 0.7, 0.5};
    std::vector<double> b = a;
    for (auto& v : b) v += delta;
    CHECK(capacity(b, 40) - capacity(a, 40) == doctest::Approx(40 * delta));
  }
}

TEST_CASE("independent uniform messages agree on half their bits") {
  double sum = 0;
  const int pairs = 10000;
  for (int i = 0; i < pairs; ++i) {
    sum += bit_agreement(Message::random(16, 2 * i), Message::random(16, 2 * i + 1));
  }
  CHECK(std::abs(sum / pairs - 0.5) <= 0.01);
}

TEST_CASE("hex round trip and complement") {
  const auto m = Message::random(37, 11);
  CHECK(m.size() == 37);
  CHECK(Message::from_hex(m.to_hex(), 37) == m);
  const auto c = m.complement();
  CHECK(matching_bits(m, c) == 0);
  CHECK(bit_agreement(m, m) == 1.0);
  CHECK_THROWS_AS(matching_bits(m, Message::random(36, 1)), InvalidArgument);
  CHECK_THROWS_AS(Message(std::vector<std::uint8_t>{0, 2}), InvalidArgument);
  CHECK_THROWS_AS(Message::random(0, 1), InvalidArgument);
}

TEST_CASE("random messages are roughly uniform") {
  std::size_t ones = 0;
  const std::size_t trials = 2000;
  for (std::size_t s = 0; s < trials; ++s) {
    const auto m = Message::random(16, s);
    for (auto b : m.bits()) ones += b;
  }
  const double mean = static_cast<double>(ones) / (trials * 16.0);
  // 4 sigma for 32000 fair bits.
  CHECK(std::abs(mean - 0.5) < 4 * 0.5 / std::sqrt(32000.0));
}

TEST_CASE("threshold validation") {
  CHECK_NOTHROW(ThresholdConfig{0.05}.validate());
  CHECK_THROWS_AS(ThresholdConfig{0.0}.validate(), InvalidArgument);
  CHECK_THROWS_AS(ThresholdConfig{1.0}.validate(), InvalidArgument);
}

}
