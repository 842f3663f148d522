#include "ptw/verification.hpp"

#include <torch/torch.h>

#include "ptw/classifier.hpp"
#include "ptw/errors.hpp"
#include "ptw/image.hpp"

namespace ptw {

namespace {

void check_length(const WatermarkKey& key, const Message& m) {
  if (static_cast<std::int64_t>(m.size()) != key.n) {
    throw InvalidArgument("message has " + std::to_string(m.size()) + " bits but the key decodes " +
                          std::to_string(key.n));
  }
}

}  // namespace

torch::Tensor extract_bits(const torch::Tensor& images, const WatermarkKey& key) {
  auto x = as_batch(images);
  torch::NoGradGuard no_grad;
  return (classify(key.decoder, x.to(torch::kFloat)) > 0).to(torch::kFloat);
}

Message extract(const torch::Tensor& image, const WatermarkKey& key) {
  auto x = as_batch(image);
  if (x.size(0) != 1) throw InvalidArgument("extract expects a single image");
  return Message::from_logits(extract_bits(x, key)[0] - 0.5);
}

VerificationResult verify(const torch::Tensor& image, const WatermarkKey& key, const Message& m,
                          const ThresholdConfig& threshold) {
  check_length(key, m);
  threshold.validate();
  VerificationResult r;
  r.extracted = extract(image, key);
  r.matching_bits = matching_bits(r.extracted, m);
  r.p_value = binomial_p_value(key.n, r.matching_bits);
  r.detected = r.p_value <= threshold.kappa;
  return r;
}

std::vector<VerificationResult> verify_batch(const torch::Tensor& images, const WatermarkKey& key,
                                             const Message& m, const ThresholdConfig& threshold,
                                             std::int64_t chunk) {
  check_length(key, m);
  threshold.validate();
  auto x = as_batch(images);
  std::vector<VerificationResult> out;
  out.reserve(x.size(0));
  for (std::int64_t i = 0; i < x.size(0); i += chunk) {
    auto bits = extract_bits(x.slice(0, i, std::min(i + chunk, x.size(0))), key);
    for (std::int64_t j = 0; j < bits.size(0); ++j) {
      VerificationResult r;
      r.extracted = Message::from_logits(bits[j] - 0.5);
      r.matching_bits = matching_bits(r.extracted, m);
      r.p_value = binomial_p_value(key.n, r.matching_bits);
      r.detected = r.p_value <= threshold.kappa;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<double> agreement_rates(const torch::Tensor& images, const WatermarkKey& key,
                                    const Message& m, std::int64_t chunk) {
  check_length(key, m);
  auto x = as_batch(images);
  auto target = m.to_tensor().unsqueeze(0);
  std::vector<double> out;
  out.reserve(x.size(0));
  for (std::int64_t i = 0; i < x.size(0); i += chunk) {
    auto bits = extract_bits(x.slice(0, i, std::min(i + chunk, x.size(0))), key);
    auto rates = (bits == target).to(torch::kDouble).mean(1).contiguous();
    const auto* p = rates.data_ptr<double>();
    out.insert(out.end(), p, p + rates.numel());
  }
  return out;
}

double detection_rate(const std::vector<VerificationResult>& results) {
  if (results.empty()) throw InvalidArgument("no verification results");
  double hits = 0;
  for (const auto& r : results) hits += r.detected ? 1 : 0;
  return hits / static_cast<double>(results.size());
}

double measure_capacity(const GeneratorParams& g, const WatermarkKey& key, const Message& m,
                        std::int64_t num_images, const SamplingStrategy& sampler,
                        std::uint64_t seed) {
  check_length(key, m);
  if (num_images < 1) throw InvalidArgument("measure_capacity needs at least one image");
  auto rng = make_rng(seed);
  auto latents = sample_latents(g, num_images, sampler, rng);
  auto images = generate_images(g, latents);
  return capacity(agreement_rates(images, key, m), key.n);
}

nlohmann::json to_json(const VerificationResult& r) {
  return {{"k", r.matching_bits},
          {"n", r.extracted.size()},
          {"p_value", r.p_value},
          {"detected", r.detected},
          {"message_hex", r.extracted.to_hex()}};
}

}  // namespace ptw
