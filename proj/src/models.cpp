#include "dacount/models.hpp"

#include <cmath>
#include <string>

#include "dacount/errors.hpp"
#include "dacount/ops.hpp"
#include "dacount/rng.hpp"

namespace dacount {

void EstimatorConfig::validate() const {
  if (in_channels < 1) throw ConfigError("estimator in_channels must be >= 1");
  if (depth < 1 || depth > 8) throw ConfigError("estimator depth must lie in [1, 8]");
  if (base_channels < 1) throw ConfigError("estimator base_channels must be >= 1");
}

void EstimatorConfig::check_input_size(std::size_t height, std::size_t width) const {
  if (height % divisor() != 0 || width % divisor() != 0) {
    throw ConfigError("estimator input " + std::to_string(height) + "x" + std::to_string(width) +
                      " must have height and width divisible by 2^depth = " + std::to_string(divisor()));
  }
}

void DiscriminatorConfig::check_input_size(std::size_t height, std::size_t width) const {
  if (height % downsample != 0 || width % downsample != 0) {
    throw ConfigError("discriminator input " + std::to_string(height) + "x" + std::to_string(width) +
                      " must have height and width divisible by 32");
  }
}

namespace {

struct ConvSpec {
  std::string name;
  std::size_t in, out, k;
};

std::vector<ConvSpec> estimator_layers(const EstimatorConfig& cfg) {
  std::vector<ConvSpec> layers;
  auto ch = [&](std::size_t level) { return cfg.base_channels << level; };
  std::size_t prev = cfg.in_channels;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    layers.push_back({p + ".conv1", prev, ch(l), 3});
    layers.push_back({p + ".conv2", ch(l), ch(l), 3});
    prev = ch(l);
  }
  layers.push_back({"bottleneck.conv1", prev, ch(cfg.depth), 3});
  layers.push_back({"bottleneck.conv2", ch(cfg.depth), ch(cfg.depth), 3});
  for (std::size_t l = cfg.depth; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    layers.push_back({p + ".up", ch(l + 1), ch(l), 3});
    layers.push_back({p + ".conv1", 2 * ch(l), ch(l), 3});
    layers.push_back({p + ".conv2", ch(l), ch(l), 3});
  }
  layers.push_back({"head", ch(0), 1, 1});
  return layers;
}

std::vector<ConvSpec> discriminator_layers(const DiscriminatorConfig& cfg) {
  std::vector<ConvSpec> layers;
  std::size_t prev = cfg.in_channels;
  for (std::size_t i = 0; i < DiscriminatorConfig::channels.size(); ++i) {
    layers.push_back({"disc.conv" + std::to_string(i + 1), prev, DiscriminatorConfig::channels[i],
                      DiscriminatorConfig::kernel});
    prev = DiscriminatorConfig::channels[i];
  }
  return layers;
}

template <typename T>
ModelParams<T> init_layers(const std::vector<ConvSpec>& layers, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  ModelParams<T> params;
  for (const auto& l : layers) {
    Tensor<T> w(Shape{l.out, l.in, l.k, l.k});
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in * l.k * l.k));
    for (T& v : w.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
    params.add(l.name + ".weight", std::move(w));
    params.add(l.name + ".bias", Tensor<T>(Shape{l.out}));
  }
  return params;
}

template <typename T>
Tensor<T> conv(Tape<T>& tape, const ModelParams<T>& p, const std::string& name, const Tensor<T>& x,
               std::size_t stride, std::size_t padding) {
  return ops::conv2d(tape, x, p.at(name + ".weight"), p.at(name + ".bias"), stride, padding);
}

}  // namespace

template <typename T>
ModelParams<T> init_estimator(const EstimatorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return init_layers<T>(estimator_layers(cfg), seed);
}

template <typename T>
ModelParams<T> init_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  return init_layers<T>(discriminator_layers(cfg), seed);
}

template <typename T>
Tensor<T> estimator_forward(Tape<T>& tape, const EstimatorConfig& cfg, const ModelParams<T>& params,
                            const Tensor<T>& image) {
  cfg.validate();
  const bool batched = image.rank() == 4;
  if (image.rank() != 3 && !batched) {
    throw DimensionError("estimator expects [C,H,W] or [N,C,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t c = image.dim(batched ? 1 : 0);
  const std::size_t h = image.dim(batched ? 2 : 1);
  const std::size_t w = image.dim(batched ? 3 : 2);
  if (c != cfg.in_channels) {
    throw DimensionError("estimator expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                         shape_str(image.shape()));
  }
  cfg.check_input_size(h, w);

  std::vector<Tensor<T>> skips;
  Tensor<T> x = image;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    x = ops::relu(tape, conv(tape, params, p + ".conv1", x, 1, 1));
    x = ops::relu(tape, conv(tape, params, p + ".conv2", x, 1, 1));
    skips.push_back(x);
    x = ops::max_pool2d(tape, x, 2, 2);
  }
  x = ops::relu(tape, conv(tape, params, "bottleneck.conv1", x, 1, 1));
  x = ops::relu(tape, conv(tape, params, "bottleneck.conv2", x, 1, 1));
  for (std::size_t l = cfg.depth; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    Tensor<T> up = conv(tape, params, p + ".up", ops::upsample_nearest2x(tape, x), 1, 1);
    x = ops::concat_channels(tape, skips[l], up);
    x = ops::relu(tape, conv(tape, params, p + ".conv1", x, 1, 1));
    x = ops::relu(tape, conv(tape, params, p + ".conv2", x, 1, 1));
  }
  x = ops::relu(tape, conv(tape, params, "head", x, 1, 0));
  return ops::reshape(tape, x, batched ? Shape{image.dim(0), h, w} : Shape{h, w});
}

template <typename T>
Tensor<T> discriminator_forward(Tape<T>& tape, const ModelParams<T>& params, const Tensor<T>& density) {
  const bool batched = density.rank() == 4;
  if (density.rank() != 3 && !batched) {
    throw DimensionError("discriminator expects [1,H,W] or [N,1,H,W], got " + shape_str(density.shape()));
  }
  const DiscriminatorConfig cfg;
  if (density.dim(batched ? 1 : 0) != cfg.in_channels) {
    throw DimensionError("discriminator expects a single-channel map, got " + shape_str(density.shape()));
  }
  cfg.check_input_size(density.dim(batched ? 2 : 1), density.dim(batched ? 3 : 2));
  Tensor<T> x = density;
  const auto slope = static_cast<T>(DiscriminatorConfig::leaky_slope);
  for (std::size_t i = 1; i <= DiscriminatorConfig::channels.size(); ++i) {
    x = conv(tape, params, "disc.conv" + std::to_string(i), x, DiscriminatorConfig::stride,
             DiscriminatorConfig::padding);
    x = i < DiscriminatorConfig::channels.size() ? ops::leaky_relu(tape, x, slope) : ops::sigmoid(tape, x);
  }
  return x;
}

template <typename T>
Tensor<T> predict_count(Tape<T>& tape, const Tensor<T>& density) {
  return ops::sum(tape, density);
}

double predict_count(const Tensor<float>& density) {
  double s = 0.0;
  for (float v : density.data()) s += v;
  return s;
}

void check_same_structure(const ModelParams<float>& expected, const ModelParams<float>& actual,
                          const std::string& what) {
  const auto& e = expected.entries();
  const auto& a = actual.entries();
  for (std::size_t i = 0; i < std::max(e.size(), a.size()); ++i) {
    if (i >= e.size()) throw CheckpointError(what + ": unexpected parameter '" + a[i].name + "'");
    if (i >= a.size()) throw CheckpointError(what + ": missing parameter '" + e[i].name + "'");
    if (e[i].name != a[i].name) {
      throw CheckpointError(what + ": parameter name mismatch, expected '" + e[i].name + "', found '" + a[i].name +
                            "'");
    }
    if (e[i].value.shape() != a[i].value.shape()) {
      throw CheckpointError(what + ": parameter '" + e[i].name + "' has shape " + shape_str(a[i].value.shape()) +
                            ", expected " + shape_str(e[i].value.shape()));
    }
  }
}

EstimatorConfig infer_estimator_config(const ModelParams<float>& params) {
  if (!params.contains("enc0.conv1.weight")) {
    throw CheckpointError("not an estimator checkpoint: parameter 'enc0.conv1.weight' is missing");
  }
  EstimatorConfig cfg;
  const auto& w0 = params.at("enc0.conv1.weight");
  cfg.base_channels = w0.dim(0);
  cfg.in_channels = w0.dim(1);
  cfg.depth = 0;
  while (params.contains("enc" + std::to_string(cfg.depth) + ".conv1.weight")) ++cfg.depth;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid estimator checkpoint: ") + e.what());
  }
  check_same_structure(init_estimator<float>(cfg, 0), params, "estimator checkpoint");
  return cfg;
}

#define DACOUNT_INSTANTIATE_MODELS(T)                                                                        \
  template ModelParams<T> init_estimator<T>(const EstimatorConfig&, std::uint64_t);                          \
  template ModelParams<T> init_discriminator<T>(const DiscriminatorConfig&, std::uint64_t);                  \
  template Tensor<T> estimator_forward(Tape<T>&, const EstimatorConfig&, const ModelParams<T>&,              \
                                       const Tensor<T>&);                                                    \
  template Tensor<T> discriminator_forward(Tape<T>&, const ModelParams<T>&, const Tensor<T>&);               \
  template Tensor<T> predict_count(Tape<T>&, const Tensor<T>&);

DACOUNT_INSTANTIATE_MODELS(float)
DACOUNT_INSTANTIATE_MODELS(double)

#undef DACOUNT_INSTANTIATE_MODELS

}  // namespace dacount
