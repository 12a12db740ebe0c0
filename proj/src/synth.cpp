#include "dacount/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "dacount/errors.hpp"
#include "dacount/rng.hpp"

namespace dacount {

namespace {

constexpr int kPlacementRetries = 200;

double overlap_fraction(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  return ix * iy / std::min(a.w * a.h, b.w * b.h);
}

struct Wave {
  double fx, fy, phase, amp;
};

}  // namespace

void SceneDomainParams::validate() const {
  if (min_objects < 0 || min_objects > max_objects) throw ConfigError("object count range must satisfy 0 <= min <= max");
  if (base_object_size < 2.0) throw ConfigError("base_object_size must be >= 2 pixels");
  if (!(luminance >= 0.0 && luminance <= 1.0)) throw ConfigError("luminance must lie in [0, 1]");
  if (height < 1 || width < 1) throw ConfigError("scene size must be positive");
  if (!(max_overlap > 0.0 && max_overlap <= 1.0)) throw ConfigError("max_overlap must lie in (0, 1]");
}

double SceneDomainParams::scale_at_row(double cy) const {
  return std::max(0.1, 1.0 + perspective_strength * (cy / static_cast<double>(height) - 0.5));
}

AnnotatedImage synth_scene(const SceneDomainParams& params, std::uint64_t rng_seed, Domain domain) {
  params.validate();
  const std::size_t H = params.height, W = params.width, plane = H * W;

  // Background: fixed per domain (texture seed), plus per-image sensor noise.
  Rng tex(derive_seed(params.background_texture_seed, "texture"));
  std::array<double, 3> base{};
  const double grey = tex.uniform(0.35, 0.55);
  for (auto& b : base) b = grey + tex.uniform(-0.05, 0.05);
  std::array<Wave, 3> waves{};
  for (auto& wv : waves) {
    wv = {tex.uniform(0.5, 3.0) * 2 * std::numbers::pi / static_cast<double>(W),
          tex.uniform(0.5, 3.0) * 2 * std::numbers::pi / static_cast<double>(H), tex.uniform(0.0, 2 * std::numbers::pi),
          tex.uniform(0.02, 0.06)};
  }

  Rng rng(derive_seed(rng_seed, "scene"));
  std::vector<double> img(3 * plane);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double t = 0.0;
      for (const auto& wv : waves) {
        t += wv.amp * std::sin(wv.fx * static_cast<double>(x) + wv.fy * static_cast<double>(y) + wv.phase);
      }
      for (std::size_t c = 0; c < 3; ++c) img[c * plane + y * W + x] = base[c] + t + rng.uniform(-0.03, 0.03);
    }
  }

  AnnotatedImage out;
  out.camera_id = params.name;
  out.domain = domain;
  const auto n = rng.uniform_int(params.min_objects, params.max_objects);
  for (std::int64_t i = 0; i < n; ++i) {
    BoundingBox box;
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      box.cx = rng.uniform(0.0, static_cast<double>(W));
      box.cy = rng.uniform(0.0, static_cast<double>(H));
      box.w = params.base_object_size * params.scale_at_row(box.cy);
      box.h = box.w / kObjectAspect;
      placed = std::none_of(out.boxes.begin(), out.boxes.end(),
                            [&](const BoundingBox& o) { return overlap_fraction(box, o) > params.max_overlap; });
    }
    if (!placed) {
      throw DataError("synth_scene: cannot place object " + std::to_string(i + 1) + " of " + std::to_string(n) +
                      " within max_overlap " + std::to_string(params.max_overlap) + "; lower the object count range");
    }
    std::array<double, 3> color{};
    const bool dark = rng.uniform() < 0.5;
    for (auto& c : color) c = dark ? rng.uniform(0.0, 0.2) : rng.uniform(0.65, 1.0);

    const double rx = box.w / 2, ry = box.h / 2;
    const auto x0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(box.cx - rx)));
    const auto x1 = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(W), std::ceil(box.cx + rx)));
    const auto y0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(box.cy - ry)));
    const auto y1 = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(H), std::ceil(box.cy + ry)));
    for (std::ptrdiff_t y = y0; y < y1; ++y) {
      for (std::ptrdiff_t x = x0; x < x1; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - box.cx) / rx;
        const double dy = (static_cast<double>(y) + 0.5 - box.cy) / ry;
        if (dx * dx + dy * dy > 1.0) continue;
        const auto idx = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
        for (std::size_t c = 0; c < 3; ++c) img[c * plane + idx] = color[c];
      }
    }
    out.boxes.push_back(box);
  }

  out.image = Tensor<float>(Shape{3, H, W});
  auto d = out.image.mutable_data();
  for (std::size_t i = 0; i < img.size(); ++i) {
    d[i] = static_cast<float>(std::clamp(img[i] * params.luminance, 0.0, 1.0));
  }
  return out;
}

std::vector<AnnotatedImage> synth_dataset(const SceneDomainParams& params, std::size_t n, std::uint64_t seed,
                                          Domain domain) {
  std::vector<AnnotatedImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_scene(params, derive_seed(seed, params.name, i), domain));
  return out;
}

}  // namespace dacount
