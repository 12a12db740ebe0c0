#include "dacount/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "dacount/errors.hpp"

namespace dacount {

namespace {

void write_floats(std::ostream& os, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void read_floats(std::istream& is, std::span<float> out, const std::string& where) {
  std::vector<unsigned char> bytes(out.size() * 4);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw CheckpointError("corrupt checkpoint: truncated data in " + where);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
}

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path, bool include_moments) {
  const bool moments = include_moments && params.adam_step > 0;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  os << "CKPT 1 " << params.size();
  if (moments) os << " adam " << params.adam_step;
  os << '\n';
  for (const auto& e : params.entries()) {
    os << e.name << '\n';
    for (std::size_t i = 0; i < e.value.rank(); ++i) os << (i ? " " : "") << e.value.dim(i);
    os << '\n';
    write_floats(os, e.value.data());
  }
  if (moments) {
    for (const auto& e : params.entries()) {
      write_floats(os, e.m);
      write_floats(os, e.v);
    }
  }
  if (!os) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string header;
  if (!std::getline(is, header)) throw CheckpointError("corrupt checkpoint: empty file '" + path.string() + "'");
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  std::size_t n = 0;
  if (!(hs >> magic) || magic != "CKPT") throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  if (!(hs >> version >> n)) throw CheckpointError("corrupt checkpoint: malformed header in '" + path.string() + "'");
  if (version != 1) {
    throw CheckpointError("checkpoint version mismatch: file has version " + std::to_string(version) +
                          ", expected 1");
  }
  std::string flag;
  std::int64_t step = 0;
  const bool moments = static_cast<bool>(hs >> flag);
  if (moments && (flag != "adam" || !(hs >> step) || step < 1)) {
    throw CheckpointError("corrupt checkpoint: malformed moment flag in header");
  }

  ModelParams<float> params;
  for (std::size_t i = 0; i < n; ++i) {
    std::string name, dims;
    if (!std::getline(is, name) || !std::getline(is, dims) || name.empty()) {
      throw CheckpointError("corrupt checkpoint: truncated after " + std::to_string(i) + " of " + std::to_string(n) +
                            " parameters");
    }
    Shape shape;
    std::istringstream ds(dims);
    for (std::size_t d; ds >> d;) shape.push_back(d);
    if (shape.empty() || !ds.eof() || shape_numel(shape) == 0 || shape_numel(shape) > (std::size_t{1} << 32)) {
      throw CheckpointError("corrupt checkpoint: bad shape line for '" + name + "'");
    }
    Tensor<float> t(shape);
    read_floats(is, t.mutable_data(), "'" + name + "'");
    try {
      params.add(name, std::move(t));
    } catch (const UsageError& e) {
      throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    }
  }
  if (moments) {
    for (auto& e : params.entries()) {
      e.m.resize(e.value.numel());
      e.v.resize(e.value.numel());
      read_floats(is, e.m, "moments of '" + e.name + "'");
      read_floats(is, e.v, "moments of '" + e.name + "'");
    }
    params.adam_step = step;
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("corrupt checkpoint: trailing bytes in '" + path.string() + "'");
  }
  return params;
}

std::pair<EstimatorConfig, ModelParams<float>> load_estimator(const std::filesystem::path& path) {
  auto params = load_checkpoint(path);
  const EstimatorConfig cfg = infer_estimator_config(params);
  return {cfg, std::move(params)};
}

ModelParams<float> load_discriminator(const std::filesystem::path& path) {
  auto params = load_checkpoint(path);
  check_same_structure(init_discriminator<float>(DiscriminatorConfig{}, 0), params, "discriminator checkpoint");
  return params;
}

}  // namespace dacount
