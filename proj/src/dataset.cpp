#include "dacount/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>

#include "dacount/errors.hpp"
#include "dacount/image_io.hpp"
#include "dacount/rng.hpp"

namespace dacount {

const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

namespace {

BoundingBox parse_box(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be [cx,cy,w,h]");
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError("box entries must be numbers");
  }
  BoundingBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!(b.w > 0.0) || !(b.h > 0.0)) throw DataError("box extents must be positive");
  return b;
}

}  // namespace

std::vector<AnnotatedImage> load_annotations(const std::filesystem::path& path, Domain domain) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open annotation file '" + path.string() + "'");
  const auto base = path.parent_path();
  std::vector<AnnotatedImage> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    AnnotatedImage item;
    std::filesystem::path image_path;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("image") || !j["image"].is_string()) {
        throw DataError("missing string field \"image\"");
      }
      if (!j.contains("boxes") || !j["boxes"].is_array()) throw DataError("missing array field \"boxes\"");
      image_path = base / j["image"].get<std::string>();
      item.camera_id = j.contains("camera") && j["camera"].is_string() ? j["camera"].get<std::string>() : "";
      for (const auto& b : j["boxes"]) item.boxes.push_back(parse_box(b));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!std::filesystem::exists(image_path)) {
      throw DataError(where + "missing image file '" + image_path.string() + "'");
    }
    item.image = read_ppm(image_path);
    item.domain = domain;
    out.push_back(std::move(item));
  }
  return out;
}

std::string annotation_line(const AnnotationRecord& record) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : record.boxes) boxes.push_back({b.cx, b.cy, b.w, b.h});
  nlohmann::ordered_json j;
  j["image"] = record.image;
  j["camera"] = record.camera;
  j["boxes"] = boxes;
  return j.dump();
}

void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) os << annotation_line(r) << '\n';
  if (!os) throw DataError("failed writing '" + path.string() + "'");
}

void check_consistent_shapes(const std::vector<AnnotatedImage>& images) {
  for (const auto& im : images) {
    if (im.image.shape() != images.front().image.shape()) {
      throw DataError("inconsistent image shapes in dataset: " + shape_str(images.front().image.shape()) + " vs " +
                      shape_str(im.image.shape()));
    }
  }
}

std::vector<std::string> camera_ids(const std::vector<AnnotatedImage>& images) {
  std::set<std::string> ids;
  for (const auto& im : images) ids.insert(im.camera_id);
  return {ids.begin(), ids.end()};
}

Split make_split(const std::vector<AnnotatedImage>& images, const SplitSpec& spec, std::uint64_t seed) {
  Split out;
  if (spec.mode == SplitMode::random) {
    if (!(spec.val_fraction >= 0.0 && spec.val_fraction <= 1.0)) {
      throw ConfigError("validation fraction must lie in [0, 1]");
    }
    const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(images.size())));
    Rng rng(derive_seed(seed, "split"));
    const auto perm = rng.permutation(images.size());
    for (std::size_t i = 0; i < perm.size(); ++i) (i < n_val ? out.val : out.train).push_back(images[perm[i]]);
    return out;
  }

  const auto available = camera_ids(images);
  if (available.size() < 2) throw ConfigError("per-camera split needs at least 2 distinct cameras");
  for (const auto& cam : spec.holdout_cameras) {
    if (!std::binary_search(available.begin(), available.end(), cam)) {
      std::string list;
      for (const auto& a : available) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("holdout camera '" + cam + "' not present; available cameras: " + list);
    }
  }
  const std::set<std::string> holdout(spec.holdout_cameras.begin(), spec.holdout_cameras.end());
  for (const auto& im : images) (holdout.count(im.camera_id) ? out.val : out.train).push_back(im);
  return out;
}

}  // namespace dacount
