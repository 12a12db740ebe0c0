#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dacount/checkpoint.hpp"
#include "dacount/density.hpp"
#include "dacount/errors.hpp"
#include "dacount/models.hpp"
#include "dacount/ops.hpp"
#include "dacount/rng.hpp"

using namespace dacount;
namespace fs = std::filesystem;

namespace {

Tensor<float> random_image(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<float>(rng.uniform());
  return t;
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "dacount_test_models";
  fs::create_directories(dir);
  return dir / name;
}

bool bit_identical(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

const EstimatorConfig kSmall{3, 2, 4};

}  // namespace

TEST_CASE("estimator preserves spatial size") {
  auto psi = init_estimator<float>(kSmall, 1);
  for (std::size_t s : {32, 64, 96}) {
    Tape<float> tape;
    auto y = estimator_forward(tape, kSmall, psi.frozen(), random_image({3, s, s}, s));
    CHECK(y.shape() == Shape{s, s});
  }
  Tape<float> tape;
  auto yb = estimator_forward(tape, kSmall, psi.frozen(), random_image({2, 3, 32, 48}, 2));
  CHECK(yb.shape() == Shape{2, 32, 48});
}

TEST_CASE("default estimator maps 3x64x64 to 64x64 non-negative finite values") {
  EstimatorConfig cfg;
  auto psi = init_estimator<float>(cfg, 3);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Tape<float> tape;
    auto y = estimator_forward(tape, cfg, psi.frozen(), random_image({3, 64, 64}, seed));
    CHECK(y.shape() == Shape{64, 64});
    for (float v : y.data()) {
      CHECK(v >= 0.0f);
      CHECK(std::isfinite(v));
    }
    CHECK(std::isfinite(predict_count(y)));
  }
}

TEST_CASE("estimator rejects indivisible sizes with the required divisor") {
  auto psi = init_estimator<float>(kSmall, 1);
  Tape<float> tape;
  try {
    estimator_forward(tape, kSmall, psi.frozen(), random_image({3, 30, 32}, 1));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find('4') != std::string::npos);
  }
  CHECK_THROWS_AS((EstimatorConfig{3, 0, 4}.validate()), ConfigError);
}

TEST_CASE("discriminator output shape and range") {
  auto theta = init_discriminator<float>(DiscriminatorConfig{}, 4);
  Tape<float> tape;
  auto p64 = discriminator_forward(tape, theta.frozen(), random_image({1, 64, 64}, 5));
  CHECK(p64.shape() == Shape{1, 2, 2});
  auto p32 = discriminator_forward(tape, theta.frozen(), random_image({1, 32, 32}, 6));
  CHECK(p32.shape() == Shape{1, 1, 1});
  auto pb = discriminator_forward(tape, theta.frozen(), random_image({3, 1, 96, 64}, 7));
  CHECK(pb.shape() == Shape{3, 1, 3, 2});
  for (const auto* t : {&p64, &p32, &pb}) {
    for (float v : t->data()) CHECK((v > 0.0f && v < 1.0f));
  }
  CHECK_THROWS_AS(discriminator_forward(tape, theta.frozen(), random_image({1, 48, 40}, 8)), ConfigError);
}

TEST_CASE("discriminator layer shapes and parameter count") {
  auto theta = init_discriminator<float>(DiscriminatorConfig{}, 0);
  CHECK(theta.at("disc.conv1.weight").shape() == Shape{64, 1, 4, 4});
  CHECK(theta.at("disc.conv5.weight").shape() == Shape{1, 512, 4, 4});
  // 64*16+64 + 128*64*16+128 + 256*128*16+256 + 512*256*16+512 + 512*16+1
  CHECK(discriminator_parameter_count() == 2762689);
  CHECK(theta.parameter_count() == 2762689);
}

TEST_CASE("initialization: deterministic, zero biases, bounded weights") {
  auto a = init_estimator<float>(kSmall, 11);
  auto b = init_estimator<float>(kSmall, 11);
  auto c = init_estimator<float>(kSmall, 12);
  REQUIRE(a.names() == b.names());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ea = a.entries()[i];
    CHECK(bit_identical(ea.value, b.entries()[i].value));
    any_diff = any_diff || !bit_identical(ea.value, c.entries()[i].value);
    if (ea.name.ends_with(".bias")) {
      for (float v : ea.value.data()) CHECK(v == 0.0f);
    } else {
      const double fan_in = static_cast<double>(ea.value.numel() / ea.value.dim(0));
      const double bound = std::sqrt(6.0 / fan_in);
      for (float v : ea.value.data()) CHECK(std::abs(v) <= bound);
    }
    CHECK(ea.value.requires_grad());
  }
  CHECK(any_diff);
  auto t = init_discriminator<float>(DiscriminatorConfig{}, 3);
  for (float v : t.at("disc.conv3.bias").data()) CHECK(v == 0.0f);
}

TEST_CASE("predict_count examples") {
  CHECK(predict_count(Tensor<float>(Shape{8, 8})) == 0.0);
  auto m = generate_density_map({{3, 3, 4, 4}, {10, 12, 6, 3}, {15, 1, 5, 5}}, 16, 16);
  CHECK(std::abs(predict_count(m.grid) - 3.0) <= 3e-4);
  auto a = random_image({8, 8}, 1), b = random_image({8, 8}, 2);
  Tape<double> tape;
  auto ad = a.cast<double>(), bd = b.cast<double>();
  const double lhs = predict_count(tape, ops::add(tape, ad, bd)).item();
  const double rhs = predict_count(tape, ad).item() + predict_count(tape, bd).item();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("estimator config is recovered from parameter names") {
  EstimatorConfig cfg{1, 3, 6};
  auto psi = init_estimator<float>(cfg, 1);
  auto got = infer_estimator_config(psi);
  CHECK(got.in_channels == 1);
  CHECK(got.depth == 3);
  CHECK(got.base_channels == 6);
  CHECK_THROWS_AS(infer_estimator_config(init_discriminator<float>(DiscriminatorConfig{}, 0)), CheckpointError);
}

TEST_CASE("checkpoint round trip is bit-identical, moments included") {
  auto psi = init_estimator<float>(kSmall, 21);
  psi.adam_step = 7;
  for (auto& e : psi.entries()) {
    e.m.assign(e.value.numel(), 0.25f);
    e.v.assign(e.value.numel(), 0.5f);
  }
  auto path = temp_path("psi.ckpt");
  save_checkpoint(psi, path);
  auto [cfg, back] = load_estimator(path);
  CHECK(cfg.depth == kSmall.depth);
  CHECK(back.adam_step == 7);
  REQUIRE(back.names() == psi.names());
  for (std::size_t i = 0; i < psi.size(); ++i) {
    CHECK(bit_identical(psi.entries()[i].value, back.entries()[i].value));
    CHECK(back.entries()[i].m == psi.entries()[i].m);
    CHECK(back.entries()[i].v == psi.entries()[i].v);
  }
  auto image = random_image({3, 32, 32}, 9);
  Tape<float> t1, t2;
  CHECK(bit_identical(estimator_forward(t1, kSmall, psi.frozen(), image),
                      estimator_forward(t2, cfg, back.frozen(), image)));
}

TEST_CASE("checkpoint corruption and strict-load errors") {
  auto psi = init_estimator<float>(kSmall, 1);
  auto path = temp_path("trunc.ckpt");
  save_checkpoint(psi, path, false);
  fs::resize_file(path, fs::file_size(path) - 10);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  auto good = temp_path("good.ckpt");
  save_checkpoint(psi, good, false);
  CHECK_THROWS_AS(load_discriminator(good), CheckpointError);

  auto theta_path = temp_path("theta.ckpt");
  save_checkpoint(init_discriminator<float>(DiscriminatorConfig{}, 0), theta_path, false);
  CHECK_NOTHROW(load_discriminator(theta_path));
  CHECK_THROWS_AS(load_estimator(theta_path), CheckpointError);

  auto bad = temp_path("bad.ckpt");
  std::ofstream(bad) << "CKPT 9 0\n";
  CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.ckpt")), CheckpointError);
}
