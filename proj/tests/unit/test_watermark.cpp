#include "doctest_torch.hpp"

#include <cmath>
#include <filesystem>

#include <torch/torch.h>

#include "ptw/checkpoint.hpp"
#include "ptw/classifier.hpp"
#include "ptw/embed.hpp"
#include "ptw/errors.hpp"
#include "ptw/generator.hpp"
#include "ptw/keygen.hpp"
#include "ptw/message.hpp"
#include "ptw/params.hpp"
#include "ptw/verification.hpp"

using namespace ptw;
namespace fs = std::filesystem;

namespace {

// Decoder whose logits ignore the image: the head weight is zero and the
// bias encodes a fixed message as +-1.
WatermarkKey constant_key(const Message& m, const ArchConfig& arch) {
  WatermarkKey key;
  key.n = static_cast<std::int64_t>(m.size());
  key.arch = arch;
  key.decoder = init_classifier(key.n, 1);
  key.decoder.params.set("head.weight", torch::zeros_like(key.decoder.params.at("head.weight")));
  key.decoder.params.set("head.bias", m.to_tensor() * 2 - 1);
  return key;
}

KeygenConfig tiny_keygen() {
  KeygenConfig c;
  c.n = 8;
  c.steps = 3;
  c.batch_size = 4;
  c.holdout = 8;
  c.log_every = 1;
  return c;
}

}  // namespace

TEST_SUITE("watermark") {

TEST_CASE("verification with a constant decoder") {
  const auto arch = ArchConfig::desk(32, 8);
  const auto m = Message::random(40, 3);
  const auto key = constant_key(m, arch);
  const auto images = torch::zeros({3, 3, 32, 32});

  const auto r = verify(images[0], key, m);
  CHECK(r.extracted == m);
  CHECK(r.matching_bits == 40);
  CHECK(r.p_value == std::ldexp(1.0, -40));
  CHECK(r.detected);

  const auto rc = verify(images[0], key, m.complement());
  CHECK(rc.matching_bits == 0);
  CHECK(rc.p_value == 1.0);
  CHECK_FALSE(rc.detected);

  const auto batch = verify_batch(images, key, m, {}, 2);
  REQUIRE(batch.size() == 3);
  CHECK(detection_rate(batch) == 1.0);
  for (double a : agreement_rates(images, key, m)) CHECK(a == 1.0);

  // Any input resolution is resized to the decoding resolution.
  CHECK(extract(torch::zeros({3, 64, 64}), key) == m);
  CHECK_THROWS_AS(verify(images[0], key, Message::random(39, 1)), InvalidArgument);

  const auto j = to_json(r);
  CHECK(j.at("k") == 40);
  CHECK(j.at("n") == 40);
  CHECK(j.at("detected") == true);
  CHECK(j.at("message_hex") == m.to_hex());
}

TEST_CASE("verify decision follows the 26-of-40 threshold") {
  const auto arch = ArchConfig::desk(32, 8);
  const auto m = Message::random(40, 5);
  std::vector<std::uint8_t> bits(m.bits().begin(), m.bits().end());
  for (int i = 0; i < 14; ++i) bits[i] ^= 1;
  const auto key26 = constant_key(Message(bits), arch);
  CHECK(verify(torch::zeros({3, 32, 32}), key26, m).detected);
  bits[14] ^= 1;
  const auto key25 = constant_key(Message(bits), arch);
  CHECK_FALSE(verify(torch::zeros({3, 32, 32}), key25, m).detected);
}

TEST_CASE("an untrained decoder is at chance") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  const auto x = generate_images(g, gaussian_latents(g, 1000, 3));
  WatermarkKey key;
  key.n = 16;
  key.arch = g.arch;
  key.decoder = init_classifier(16, 4);
  const auto bits = extract_bits(x, key);
  auto rng = make_rng(5);
  const auto msgs = randint(2, {1000, 16}, rng).to(torch::kFloat);
  const double agreement = (bits == msgs).to(torch::kDouble).mean().item<double>();
  CHECK(agreement >= 0.45);
  CHECK(agreement <= 0.55);
}

TEST_CASE("verification is a pure function of its inputs") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  const auto x = generate_images(g, gaussian_latents(g, 8, 3));
  WatermarkKey key;
  key.n = 16;
  key.arch = g.arch;
  key.decoder = init_classifier(16, 4);
  const auto m = Message::random(16, 1);
  const auto a = verify_batch(x, key, m);
  const auto b = verify_batch(x.clone(), key, m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].extracted == b[i].extracted);
    CHECK(a[i].p_value == b[i].p_value);
  }
}

TEST_CASE("zero-head mapper is the identity perturbation") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  MapperInit init;
  init.zero_head = true;
  const auto p = init_parameter_mapper(g, 8, 2, init);
  const auto l = init_latent_mapper(g, 8, 2, init);
  auto rng = make_rng(3);
  const auto msgs = randint(2, {4, 8}, rng).to(torch::kFloat);
  const auto z = randn({4, g.arch.z_dim}, rng);
  CHECK(parameter_perturbation(p, msgs).abs().max().item<double>() == 0.0);
  CHECK(torch::equal(apply_latent_mapper(l, msgs, z), z));
  const auto view = apply_parameter_mapper(p, g, msgs);
  CHECK(torch::allclose(view.render({z, {}}), generate(g, {z, {}}), 1e-5, 1e-6));
  const auto direct = direct_embed(g, p, Message::random(8, 1));
  CHECK(direct.params.equal(g.params));
}

TEST_CASE("latent mapper perturbation is clamped") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  MapperInit init;
  init.latent_clamp = 0.25;
  const auto l = init_latent_mapper(g, 8, 2, init);
  auto rng = make_rng(3);
  const auto msgs = randint(2, {16, 8}, rng).to(torch::kFloat);
  const auto z = randn({16, g.arch.z_dim}, rng);
  const auto d = (apply_latent_mapper(l, msgs, z) - z).norm(2, 1);
  CHECK(d.max().item<double>() <= 0.25 + 1e-6);
  CHECK_THROWS_AS(apply_latent_mapper(l, msgs, torch::zeros({16, 3})), InvalidArgument);
}

TEST_CASE("mapper targets") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  CHECK(default_mapper_targets(g).size() == 2);
  MapperInit init;
  init.targets = {"no.such.param"};
  CHECK_THROWS_AS(init_parameter_mapper(g, 8, 1, init), InvalidArgument);
  init.targets = {"synthesis.const"};
  CHECK_THROWS_AS(init_parameter_mapper(g, 8, 1, init), InvalidArgument);
  CHECK_THROWS_AS(init_parameter_mapper(g, 0, 1), InvalidArgument);
}

TEST_CASE("keygen leaves the generator untouched and logs") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  const auto before = g.params.clone();
  const auto fx = make_feature_extractor();
  int logged = 0;
  const auto r = keygen(g, tiny_keygen(), fx, [&](const KeygenLogEntry&) { ++logged; });
  CHECK(g.params.equal(before));
  CHECK(logged == 3);
  CHECK(r.key.n == 8);
  CHECK(r.key.arch == g.arch);
  CHECK(r.log.heldout_agreement >= 0.0);
  CHECK(r.log.heldout_agreement <= 1.0);

  auto bad = tiny_keygen();
  bad.lambda_r = 0;
  CHECK_THROWS_AS(keygen(g, bad, fx), InvalidArgument);
}

TEST_CASE("perceptual gate") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  const auto fx = make_feature_extractor();
  auto c = tiny_keygen();
  c.perceptual_gate = 0.5;
  CHECK(keygen(g, c, fx).log.gate_step == 0);
  c.perceptual_gate = 0.999;
  CHECK(keygen(g, c, fx).log.gate_step == -1);
  c.perceptual_gate = 1.0;
  CHECK_THROWS_AS(keygen(g, c, fx), InvalidArgument);
}

TEST_CASE("key and mapper files round trip") {
  const auto dir = fs::temp_directory_path() / "ptw_unit_key";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  const auto fx = make_feature_extractor();
  const auto r = keygen(g, tiny_keygen(), fx);
  save_key(r.key, dir / "k.ptwkey");
  const auto back = load_key(dir / "k.ptwkey");
  CHECK(back.n == r.key.n);
  CHECK(back.arch == r.key.arch);
  CHECK(back.decoder.params.equal(r.key.decoder.params));
  CHECK(back.decoder.input_resolution == r.key.decoder.input_resolution);
  CHECK(serialize_checkpoint(key_checkpoint(back)) == serialize_checkpoint(key_checkpoint(r.key)));

  save_mappers(r, dir / "m.ckpt");
  ParameterMapper p;
  LatentMapper l;
  load_mappers(dir / "m.ckpt", p, l);
  CHECK(p.params.equal(r.parameter_mapper.params));
  CHECK(l.params.equal(r.latent_mapper.params));
  CHECK(p.targets == r.parameter_mapper.targets);

  save_generator(g, dir / "g.ckpt");
  CHECK_THROWS_AS(load_key(dir / "g.ckpt"), IncompatibleCheckpoint);
}

TEST_CASE("embedding clones the generator and keeps the pivot and key fixed") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  const auto before = g.params.clone();
  const auto fx = make_feature_extractor();
  const auto r = keygen(g, tiny_keygen(), fx);
  const auto key_before = r.key.decoder.params.clone();
  const auto m = Message::random(8, 4);

  EmbedConfig c;
  c.steps = 0;
  c.probe_size = 8;
  const auto zero = ptw_embed(g, r.key, m, c, fx);
  CHECK(zero.generator.params.equal(g.params));
  CHECK_FALSE(zero.generator.frozen());
  CHECK(zero.log.steps_run == 0);

  c.steps = 4;
  c.batch_size = 4;
  c.eval_every = 2;
  const auto e = ptw_embed(g, r.key, m, c, fx);
  CHECK(g.params.equal(before));
  CHECK(r.key.decoder.params.equal(key_before));
  CHECK_FALSE(e.generator.params.equal(g.params));
  CHECK(e.log.steps_run == 4);
  REQUIRE(e.log.entries.size() == 2);
  CHECK(e.log.entries[1].step == 4);
  CHECK(e.log.final_agreement == e.log.entries[1].probe_agreement);

  CHECK_THROWS_AS(ptw_embed(g, r.key, Message::random(9, 1), c, fx), InvalidArgument);
  const auto g16 = init_generator(ArchConfig::desk(16, 8), 1);
  CHECK_THROWS_AS(ptw_embed(g16, r.key, m, c, fx), InvalidArgument);
  auto bad = c;
  bad.lr = -1;
  CHECK_THROWS_AS(ptw_embed(g, r.key, m, bad, fx), InvalidArgument);
}

TEST_CASE("capacity of a constant decoder") {
  const auto g = init_generator(ArchConfig::desk(32, 8), 1);
  const auto m = Message::random(16, 2);
  const auto key = constant_key(m, g.arch);
  CHECK(measure_capacity(g, key, m, 10, sampling::Gaussian{}, 1) == doctest::Approx(8.0));
  CHECK(measure_capacity(g, key, m.complement(), 10, sampling::Truncated{0.5}, 1) ==
        doctest::Approx(-8.0));
}

}
