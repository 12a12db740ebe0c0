#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dacount/dataset.hpp"

namespace dacount {

// Rendering parameters of one synthetic "camera". Object scale varies with
// image row as 1 + perspective_strength * (cy / H - 0.5).
struct SceneDomainParams {
  std::string name = "cam";
  double perspective_strength = 0.0;
  double base_object_size = 10.0;  // pixels, object width at mid-height
  double luminance = 1.0;          // global brightness multiplier in [0, 1]
  std::uint64_t background_texture_seed = 0;
  int min_objects = 0;
  int max_objects = 10;
  std::size_t height = 64;
  std::size_t width = 64;
  // Largest tolerated intersection / smaller-box area between two objects.
  double max_overlap = 0.9;

  void validate() const;
  double scale_at_row(double cy) const;
};

// Width-to-height ratio of rendered objects' boxes.
inline constexpr double kObjectAspect = 1.6;

// Renders a textured background plus n ~ U{min,max} filled ellipses.
// Deterministic in (params, rng_seed). Boxes keep their full extent even
// when an object is partly out of frame. Throws DataError when an object
// cannot be placed within max_overlap after bounded retries.
AnnotatedImage synth_scene(const SceneDomainParams& params, std::uint64_t rng_seed,
                           Domain domain = Domain::source);

// n scenes with per-image seeds derived from `seed`.
std::vector<AnnotatedImage> synth_dataset(const SceneDomainParams& params, std::size_t n, std::uint64_t seed,
                                          Domain domain = Domain::source);

}  // namespace dacount
