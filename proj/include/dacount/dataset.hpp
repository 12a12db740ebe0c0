#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dacount/density.hpp"
#include "dacount/tensor.hpp"

namespace dacount {

enum class Domain { source, target };

const char* to_string(Domain d);

struct AnnotatedImage {
  Tensor<float> image;  // [C, H, W], values in [0, 1]
  std::vector<BoundingBox> boxes;
  std::string camera_id;
  Domain domain = Domain::source;

  std::size_t count() const { return boxes.size(); }
};

// JSON-lines annotations, one image per line:
//   {"image": "<path relative to the file>", "camera": "<id>", "boxes": [[cx,cy,w,h], ...]}
// Errors carry the 1-based line number; blank lines are ignored.
std::vector<AnnotatedImage> load_annotations(const std::filesystem::path& path, Domain domain = Domain::source);

struct AnnotationRecord {
  std::string image;  // relative path as stored in the file
  std::string camera;
  std::vector<BoundingBox> boxes;
};

std::string annotation_line(const AnnotationRecord& record);
void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

// Images of one dataset must agree on [C, H, W]; throws DataError otherwise.
void check_consistent_shapes(const std::vector<AnnotatedImage>& images);

enum class SplitMode { random, per_camera };

struct SplitSpec {
  SplitMode mode = SplitMode::random;
  // random mode: fraction of images that go to validation.
  double val_fraction = 0.0;
  // per_camera mode: cameras whose images all go to validation.
  std::vector<std::string> holdout_cameras;
};

struct Split {
  std::vector<AnnotatedImage> train;
  std::vector<AnnotatedImage> val;
};

Split make_split(const std::vector<AnnotatedImage>& images, const SplitSpec& spec, std::uint64_t seed);

std::vector<std::string> camera_ids(const std::vector<AnnotatedImage>& images);

}  // namespace dacount
