#include "dacount/gradcheck_suites.hpp"

#include <cmath>

#include "dacount/losses.hpp"
#include "dacount/models.hpp"
#include "dacount/ops.hpp"
#include "dacount/rng.hpp"

namespace dacount {

namespace {

using T64 = Tensor<double>;
using Inputs = std::vector<T64>;

T64 random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  T64 t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero, for ops with a kink at the origin.
T64 away_from_zero(Rng& rng, Shape shape) {
  T64 t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(0.05, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return t;
}

// Parameter set over the harness's inputs [first, end). ModelParams::add
// forces requires_grad on; the harness's own flag is restored afterwards.
ModelParams<double> bind_params(const std::vector<std::string>& names, const Inputs& x, std::size_t first) {
  ModelParams<double> p;
  for (std::size_t i = first; i < x.size(); ++i) {
    Tensor<double> v = x[i];
    const bool rg = v.requires_grad();
    p.add(names[i], v);
    v.set_requires_grad(rg);
  }
  return p;
}

GradcheckOptions options_for(GradcheckScope scope, std::uint64_t seed) {
  GradcheckOptions o;
  o.tolerance = gradcheck_tolerance(scope);
  o.seed = seed;
  return o;
}

std::vector<GradcheckReport> ops_suite(std::uint64_t seed) {
  const auto opt = options_for(GradcheckScope::ops, seed);
  Rng rng(derive_seed(seed, "gradcheck.ops"));
  std::vector<GradcheckReport> out;
  auto check = [&](const std::string& name, const GradcheckFn& fn, const Inputs& in,
                   const std::vector<std::string>& names) { out.push_back(gradcheck(name, fn, in, names, opt)); };

  {
    const auto cin = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto cout = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto stride = static_cast<std::size_t>(rng.uniform_int(1, 2));
    const auto pad = static_cast<std::size_t>(rng.uniform_int(0, 1));
    const auto h = static_cast<std::size_t>(rng.uniform_int(5, 8));
    const auto w = static_cast<std::size_t>(rng.uniform_int(5, 8));
    auto fn = [stride, pad](Tape<double>& t, const Inputs& x) { return ops::conv2d(t, x[0], x[1], x[2], stride, pad); };
    check("conv2d", fn, {random_tensor(rng, {cin, h, w}), random_tensor(rng, {cout, cin, k, k}), random_tensor(rng, {cout})},
          {"input", "weight", "bias"});
    check("conv2d[batched]", fn,
          {random_tensor(rng, {2, cin, h, w}), random_tensor(rng, {cout, cin, k, k}), random_tensor(rng, {cout})},
          {"input", "weight", "bias"});
    auto disc_like = [](Tape<double>& t, const Inputs& x) { return ops::conv2d(t, x[0], x[1], x[2], 2, 1); };
    check("conv2d[k4,s2,p1]", disc_like, {random_tensor(rng, {2, 8, 8}), random_tensor(rng, {3, 2, 4, 4}), random_tensor(rng, {3})},
          {"input", "weight", "bias"});
  }
  check("max_pool2d", [](Tape<double>& t, const Inputs& x) { return ops::max_pool2d(t, x[0], 2, 2); },
        {random_tensor(rng, {3, 8, 8})}, {"input"});
  check("upsample_nearest2x", [](Tape<double>& t, const Inputs& x) { return ops::upsample_nearest2x(t, x[0]); },
        {random_tensor(rng, {2, 3, 4})}, {"input"});
  check("concat_channels", [](Tape<double>& t, const Inputs& x) { return ops::concat_channels(t, x[0], x[1]); },
        {random_tensor(rng, {2, 3, 3}), random_tensor(rng, {1, 3, 3})}, {"a", "b"});
  check("slice_channels", [](Tape<double>& t, const Inputs& x) { return ops::slice_channels(t, x[0], 1, 3); },
        {random_tensor(rng, {4, 3, 3})}, {"input"});
  check("leaky_relu", [](Tape<double>& t, const Inputs& x) { return ops::leaky_relu(t, x[0], 0.2); },
        {away_from_zero(rng, {4, 5})}, {"input"});
  check("relu", [](Tape<double>& t, const Inputs& x) { return ops::relu(t, x[0]); }, {away_from_zero(rng, {4, 5})},
        {"input"});
  check("sigmoid", [](Tape<double>& t, const Inputs& x) { return ops::sigmoid(t, x[0]); },
        {random_tensor(rng, {4, 5}, -4.0, 4.0)}, {"input"});
  check("add", [](Tape<double>& t, const Inputs& x) { return ops::add(t, x[0], x[1]); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, {"a", "b"});
  check("sub", [](Tape<double>& t, const Inputs& x) { return ops::sub(t, x[0], x[1]); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, {"a", "b"});
  check("mul", [](Tape<double>& t, const Inputs& x) { return ops::mul(t, x[0], x[1]); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, {"a", "b"});
  check("affine", [](Tape<double>& t, const Inputs& x) { return ops::affine(t, x[0], -1.5, 0.25); },
        {random_tensor(rng, {3, 4})}, {"input"});
  check("square", [](Tape<double>& t, const Inputs& x) { return ops::square(t, x[0]); }, {random_tensor(rng, {3, 4})},
        {"input"});
  check("log_clamped", [](Tape<double>& t, const Inputs& x) { return ops::log_clamped(t, x[0], kLogClamp); },
        {random_tensor(rng, {3, 4}, 0.05, 2.0)}, {"input"});
  check("sum", [](Tape<double>& t, const Inputs& x) { return ops::sum(t, x[0]); }, {random_tensor(rng, {3, 4})},
        {"input"});
  check("mean", [](Tape<double>& t, const Inputs& x) { return ops::mean(t, x[0]); }, {random_tensor(rng, {3, 4})},
        {"input"});
  check("sum_per_sample", [](Tape<double>& t, const Inputs& x) { return ops::sum_per_sample(t, x[0]); },
        {random_tensor(rng, {3, 2, 2})}, {"input"});
  check("reshape", [](Tape<double>& t, const Inputs& x) { return ops::reshape(t, x[0], Shape{2, 6}); },
        {random_tensor(rng, {3, 4})}, {"input"});
  check("mse_loss", [](Tape<double>& t, const Inputs& x) { return ops::mse_loss(t, x[0], x[1]); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, {"pred", "target"});
  return out;
}

std::vector<GradcheckReport> losses_suite(std::uint64_t seed) {
  const auto opt = options_for(GradcheckScope::losses, seed);
  Rng rng(derive_seed(seed, "gradcheck.losses"));
  std::vector<GradcheckReport> out;
  out.push_back(gradcheck(
      "density_loss", [](Tape<double>& t, const Inputs& x) { return density_loss(t, x[0], x[1]); },
      Inputs{random_tensor(rng, {2, 8, 8}, 0.0, 0.1), random_tensor(rng, {2, 8, 8}, 0.0, 0.1)}, {"pred", "gt"}, opt));
  out.push_back(gradcheck(
      "density_loss[single]", [](Tape<double>& t, const Inputs& x) { return density_loss(t, x[0], x[1]); },
      Inputs{random_tensor(rng, {8, 8}, 0.0, 0.1), random_tensor(rng, {8, 8}, 0.0, 0.1)}, {"pred", "gt"}, opt));
  for (auto red : {PixelReduction::sum, PixelReduction::mean}) {
    const std::string suffix = red == PixelReduction::sum ? "[sum]" : "[mean]";
    out.push_back(gradcheck(
        "adversarial_loss" + suffix, [red](Tape<double>& t, const Inputs& x) { return adversarial_loss(t, x[0], red); },
        Inputs{random_tensor(rng, {2, 1, 2, 2}, 0.05, 0.95)}, {"p"}, opt));
    for (auto label : {Domain::source, Domain::target}) {
      out.push_back(gradcheck(
          std::string("discriminator_loss[") + to_string(label) + "]" + suffix,
          [label, red](Tape<double>& t, const Inputs& x) { return discriminator_loss(t, x[0], label, red); },
          Inputs{random_tensor(rng, {2, 1, 2, 2}, 0.05, 0.95)}, {"p"}, opt));
    }
  }
  return out;
}

std::vector<GradcheckReport> psi_suite(std::uint64_t seed) {
  auto opt = options_for(GradcheckScope::psi, seed);
  opt.max_samples_per_input = 12;
  Rng rng(derive_seed(seed, "gradcheck.psi"));
  const EstimatorConfig cfg{3, 2, 2};
  const ModelParams<double> params = init_estimator<double>(cfg, derive_seed(seed, "gradcheck.psi.init"));
  const Tensor<double> image = random_tensor(rng, {3, 32, 32}, 0.0, 1.0);
  Inputs inputs{image, Tensor<double>(Shape{32, 32})};
  std::vector<std::string> names{"image", "gt"};
  for (const auto& e : params.entries()) {
    inputs.push_back(e.value.detach().clone());
    names.push_back(e.name);
    // Zero biases leave many ReLUs sitting exactly on their kink.
    if (e.name.ends_with(".bias")) {
      for (double& v : inputs.back().mutable_data()) v = rng.uniform(0.0, 0.1);
    }
  }
  // Ground truth within +-20% of the prediction keeps the loss O(1); with a
  // large count mismatch, round-off in the differences swamps small gradients.
  Tensor<double>& gt = inputs[1];
  {
    Tape<double> t;
    gt = estimator_forward(t, cfg, bind_params(names, inputs, 2), image).clone();
  }
  for (double& v : gt.mutable_data()) v *= rng.uniform(0.8, 1.2);
  auto fn = [cfg, names](Tape<double>& t, const Inputs& x) {
    return density_loss(t, estimator_forward(t, cfg, bind_params(names, x, 2), x[0]), x[1]);
  };
  return {gradcheck("psi[depth2,base2,32x32]+density_loss", fn, inputs, names, opt)};
}

std::vector<GradcheckReport> theta_suite(std::uint64_t seed) {
  auto opt = options_for(GradcheckScope::theta, seed);
  opt.max_samples_per_input = 8;
  Rng rng(derive_seed(seed, "gradcheck.theta"));
  const ModelParams<double> params = init_discriminator<double>(DiscriminatorConfig{}, derive_seed(seed, "gradcheck.theta.init"));
  Inputs inputs{random_tensor(rng, {1, 32, 32}, 0.0, 0.1)};
  std::vector<std::string> names{"density"};
  for (const auto& e : params.entries()) {
    inputs.push_back(e.value.detach().clone());
    names.push_back(e.name);
    if (e.name.ends_with(".bias")) {
      for (double& v : inputs.back().mutable_data()) v = rng.uniform(-0.1, 0.1);
    }
  }
  std::vector<GradcheckReport> out;
  for (auto label : {Domain::source, Domain::target}) {
    auto fn = [names, label](Tape<double>& t, const Inputs& x) {
      return discriminator_loss(t, discriminator_forward(t, bind_params(names, x, 1), x[0]), label);
    };
    out.push_back(gradcheck(std::string("theta[32x32]+discriminator_loss[") + to_string(label) + "]", fn, inputs,
                            names, opt));
  }
  return out;
}

}  // namespace

std::optional<GradcheckScope> parse_gradcheck_scope(std::string_view name) {
  if (name == "ops") return GradcheckScope::ops;
  if (name == "losses") return GradcheckScope::losses;
  if (name == "psi") return GradcheckScope::psi;
  if (name == "theta") return GradcheckScope::theta;
  return std::nullopt;
}

const char* to_string(GradcheckScope scope) {
  switch (scope) {
    case GradcheckScope::ops: return "ops";
    case GradcheckScope::losses: return "losses";
    case GradcheckScope::psi: return "psi";
    case GradcheckScope::theta: return "theta";
  }
  return "?";
}

double gradcheck_tolerance(GradcheckScope scope) {
  return scope == GradcheckScope::psi || scope == GradcheckScope::theta ? 1e-4 : 1e-6;
}

std::vector<GradcheckReport> run_gradcheck_suite(GradcheckScope scope, std::uint64_t seed) {
  switch (scope) {
    case GradcheckScope::ops: return ops_suite(seed);
    case GradcheckScope::losses: return losses_suite(seed);
    case GradcheckScope::psi: return psi_suite(seed);
    case GradcheckScope::theta: return theta_suite(seed);
  }
  return {};
}

}  // namespace dacount
