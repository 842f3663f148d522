#include "doctest_torch.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "ptw/dataset.hpp"
#include "ptw/errors.hpp"
#include "ptw/params.hpp"
#include "ptw/perceptual.hpp"

using namespace ptw;

TEST_SUITE("perceptual") {

TEST_CASE("fid of a set with itself is zero") {
  const auto fx = make_feature_extractor();
  const auto x = synthetic_shapes(300, 32, 3);
  CHECK(fid(x, x, fx) <= 1e-6);
}

TEST_CASE("fid separates different distributions") {
  const auto fx = make_feature_extractor();
  const auto a = synthetic_shapes(300, 32, 1);
  const auto b = synthetic_shapes(300, 32, 2);
  auto rng = make_rng(9);
  const auto noise = rand({300, 3, 32, 32}, rng) * 2 - 1;
  const double same = fid(a, b, fx);
  const double diff = fid(a, noise, fx);
  CHECK(same >= 0.0);
  CHECK(diff > 10 * same);
}

TEST_CASE("fid is symmetric") {
  const auto fx = make_feature_extractor();
  const auto a = synthetic_shapes(200, 32, 1);
  const auto b = synthetic_shapes(200, 32, 2) * 0.8;
  CHECK(fid(a, b, fx) == doctest::Approx(fid(b, a, fx)).epsilon(1e-6));
}

TEST_CASE("fid ignores the order of images") {
  const auto fx = make_feature_extractor();
  const auto a = synthetic_shapes(200, 32, 1);
  const auto b = synthetic_shapes(200, 32, 2);
  auto rng = make_rng(4);
  const auto perm = randperm(200, rng);
  CHECK(fid(a.index_select(0, perm), b, fx) == doctest::Approx(fid(a, b, fx)).epsilon(1e-9));
}

TEST_CASE("square root of a product of covariances") {
  Eigen::MatrixXd r1 = Eigen::MatrixXd::Random(8, 8);
  Eigen::MatrixXd r2 = Eigen::MatrixXd::Random(8, 8);
  Eigen::MatrixXd a = r1 * r1.transpose() + 0.1 * Eigen::MatrixXd::Identity(8, 8);
  Eigen::MatrixXd b = r2 * r2.transpose() + 0.1 * Eigen::MatrixXd::Identity(8, 8);
  Eigen::MatrixXd prod = a * b;
  const auto s = matrix_sqrt(prod);
  CHECK(s.residual < 1e-6);
}

TEST_CASE("frechet distance of shifted gaussians is the mean shift") {
  FidStats a, b;
  a.mean = Eigen::VectorXd::Zero(4);
  b.mean = Eigen::VectorXd::Constant(4, 0.5);
  a.cov = b.cov = Eigen::MatrixXd::Identity(4, 4) * 2.0;
  a.count = b.count = 100;
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("frechet distance of scaled covariances") {
  // Tr(I + 4I - 2 * 2I) = d for S_x = I, S_y = 4I.
  FidStats a, b;
  a.mean = b.mean = Eigen::VectorXd::Zero(3);
  a.cov = Eigen::MatrixXd::Identity(3, 3);
  b.cov = Eigen::MatrixXd::Identity(3, 3) * 4.0;
  a.count = b.count = 10;
  CHECK(frechet_distance(a, b) == doctest::Approx(3.0).epsilon(1e-5));
}

TEST_CASE("matrix square root of an SPD matrix") {
  Eigen::MatrixXd r = Eigen::MatrixXd::Random(6, 6);
  Eigen::MatrixXd a = r * r.transpose() + Eigen::MatrixXd::Identity(6, 6);
  const auto s = matrix_sqrt(a);
  CHECK(s.residual < 1e-10);
  Eigen::MatrixXd back = (s.root * s.root).real();
  CHECK((back - a).norm() / a.norm() < 1e-10);
}

TEST_CASE("fid_stats needs two rows") {
  CHECK_THROWS_AS(fid_stats(torch::zeros({1, 8}, torch::kDouble)), InvalidArgument);
}

TEST_CASE("perceptual distance is zero on equal inputs and positive otherwise") {
  const auto fx = make_feature_extractor();
  const auto x = synthetic_shapes(4, 32, 5);
  const auto d0 = perceptual_distance(x, x, fx);
  CHECK(d0.sizes() == torch::IntArrayRef{4});
  CHECK(d0.abs().max().item<double>() == 0.0);
  const auto d1 = perceptual_distance(x, x.flip(3), fx);
  CHECK(d1.min().item<double>() > 0.0);
  CHECK_THROWS_AS(perceptual_distance(x, synthetic_shapes(4, 16, 5), fx), InvalidArgument);
}

TEST_CASE("perceptual distance gradient matches central differences") {
  const auto fx = make_feature_extractor();
  const auto y = synthetic_shapes(2, 32, 7).to(torch::kDouble);
  auto rng = make_rng(3);
  const auto x0 = (y + 0.1 * randn({2, 3, 32, 32}, rng).to(torch::kDouble)).clamp(-1, 1);

  auto x = x0.clone().requires_grad_(true);
  perceptual_distance(x, y, fx).sum().backward();
  const auto grad = x.grad();

  const auto flat_size = x0.numel();
  auto pick = randint(flat_size, {24}, rng);
  const double h = 1e-5;
  for (std::int64_t i = 0; i < pick.size(0); ++i) {
    const auto idx = pick[i].item<std::int64_t>();
    auto xp = x0.clone();
    auto xm = x0.clone();
    xp.view({-1})[idx] += h;
    xm.view({-1})[idx] -= h;
    const double fp = perceptual_distance(xp, y, fx).sum().item<double>();
    const double fm = perceptual_distance(xm, y, fx).sum().item<double>();
    const double fd = (fp - fm) / (2 * h);
    const double an = grad.view({-1})[idx].item<double>();
    CAPTURE(idx);
    CHECK(std::abs(an - fd) <= 1e-3 * std::max(std::abs(fd), 1e-6));
  }
}

TEST_CASE("feature extractor is deterministic in its seed") {
  const auto a = make_feature_extractor(5);
  const auto b = make_feature_extractor(5);
  const auto c = make_feature_extractor(6);
  CHECK(a.params.equal(b.params));
  CHECK_FALSE(a.params.equal(c.params));
}

}
