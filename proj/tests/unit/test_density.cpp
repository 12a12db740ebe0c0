#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "dacount/density.hpp"
#include "dacount/errors.hpp"
#include "dacount/rng.hpp"

using namespace dacount;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "dacount_test_density";
  std::filesystem::create_directories(dir);
  return dir / name;
}

double min_value(const DensityMap& m) {
  double lo = 1e300;
  for (float v : m.grid.data()) lo = std::min(lo, static_cast<double>(v));
  return lo;
}

}  // namespace

TEST_CASE("one centered box has unit mass") {
  auto m = generate_density_map({{8, 8, 4, 4}}, 16, 16);
  CHECK(m.height() == 16);
  CHECK(m.width() == 16);
  CHECK(m.count() == doctest::Approx(1.0).epsilon(1e-5));
  // the kernel is symmetric about the box center, which sits on a pixel corner
  const auto g = m.grid.data();
  CHECK(g[7 * 16 + 7] == doctest::Approx(g[8 * 16 + 8]).epsilon(1e-6));
  CHECK(g[7 * 16 + 8] == doctest::Approx(g[8 * 16 + 7]).epsilon(1e-6));
}

TEST_CASE("empty box list gives an all-zero map") {
  auto m = generate_density_map({}, 16, 16);
  CHECK(m.count() == 0.0);
  for (float v : m.grid.data()) CHECK(v == 0.0f);
}

TEST_CASE("corner box keeps unit mass; values match a numerically integrated normalizer") {
  const double w = 16.0;
  const double sigma = 0.25 * w;
  auto m = generate_density_map({{0, 0, w, w}}, 32, 32);
  CHECK(m.count() == doctest::Approx(1.0).epsilon(1e-5));

  // Only a quarter of the Gaussian falls inside the image. Integrate the
  // in-image quadrant on a fine grid (truncated at 4 sigma) and compare
  // the renormalized pixel-center samples against it.
  const int sub = 20;
  const double h = 1.0 / sub;
  double integral = 0.0;
  for (int i = 0; i < 32 * sub; ++i)
    for (int j = 0; j < 32 * sub; ++j) {
      const double x = (i + 0.5) * h, y = (j + 0.5) * h;
      if (x * x + y * y <= 16.0 * sigma * sigma) integral += std::exp(-(x * x + y * y) / (2 * sigma * sigma)) * h * h;
    }
  CHECK(integral == doctest::Approx(std::numbers::pi * sigma * sigma / 2.0).epsilon(1e-3));
  for (auto [x, y] : {std::pair{0, 0}, {3, 1}, {5, 7}, {10, 2}}) {
    const double px = x + 0.5, py = y + 0.5;
    const double expect = std::exp(-(px * px + py * py) / (2 * sigma * sigma)) / integral;
    CHECK(m.grid.data()[y * 32 + x] == doctest::Approx(expect).epsilon(5e-3));
  }
}

TEST_CASE("mass is conserved over random box configurations") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(8, 64));
    const auto w = static_cast<std::size_t>(rng.uniform_int(8, 64));
    const int n = static_cast<int>(rng.uniform_int(0, 15));
    std::vector<BoundingBox> boxes;
    for (int i = 0; i < n; ++i) {
      // a third of the boxes sit on borders or corners
      double cx = rng.uniform(-4.0, w + 4.0), cy = rng.uniform(-4.0, h + 4.0);
      if (rng.uniform() < 0.33) cx = rng.uniform() < 0.5 ? 0.0 : static_cast<double>(w);
      if (rng.uniform() < 0.33) cy = rng.uniform() < 0.5 ? 0.0 : static_cast<double>(h);
      boxes.push_back({cx, cy, rng.uniform(1.0, 20.0), rng.uniform(1.0, 20.0)});
    }
    auto m = generate_density_map(boxes, h, w);
    INFO("trial " << trial);
    CHECK(std::abs(m.count() - n) < 1e-4 * std::max(1, n));
    CHECK(min_value(m) >= 0.0);
  }
}

TEST_CASE("a box whose support is entirely out of frame still counts once") {
  auto m = generate_density_map({{-100, 5, 4, 4}}, 16, 16);
  CHECK(m.count() == doctest::Approx(1.0));
  CHECK(m.grid.data()[5 * 16 + 0] == 1.0f);
}

TEST_CASE("sigma follows the longer box side") {
  DensityKernelSpec spec;
  CHECK(spec.sigma_for({0, 0, 8, 4}) == 2.0);
  CHECK(spec.sigma_for({0, 0, 3, 12}) == 3.0);
  CHECK_THROWS_AS((DensityKernelSpec{0.0, 4.0}.validate()), ConfigError);
  CHECK_THROWS_AS((DensityKernelSpec{0.25, 2.0}.validate()), ConfigError);
  CHECK_THROWS_AS(generate_density_map({{4, 4, 0, 3}}, 8, 8), DataError);
}

TEST_CASE("DMAP files round-trip bit-exactly") {
  auto m = generate_density_map({{3, 4, 5, 6}, {10, 2, 3, 3}}, 12, 20);
  auto path = temp_path("a.dmap");
  write_dmap(path, m.grid);
  auto back = read_dmap(path);
  CHECK(back.shape() == m.grid.shape());
  for (std::size_t i = 0; i < back.numel(); ++i) CHECK(back.data()[i] == m.grid.data()[i]);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(read_dmap(path), DataError);
}
