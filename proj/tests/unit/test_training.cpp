#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "dacount/batch.hpp"
#include "dacount/errors.hpp"
#include "dacount/ops.hpp"
#include "dacount/synth.hpp"
#include "dacount/trainer.hpp"

using namespace dacount;

namespace {

SceneDomainParams small_scene(const std::string& name, double perspective, double luminance) {
  SceneDomainParams p;
  p.name = name;
  p.perspective_strength = perspective;
  p.luminance = luminance;
  p.base_object_size = 6.0;
  p.min_objects = 1;
  p.max_objects = 5;
  p.height = p.width = 32;
  return p;
}

struct Fixture {
  std::vector<AnnotatedImage> source = synth_dataset(small_scene("src", 0.3, 1.0), 8, 1);
  std::vector<AnnotatedImage> target = synth_dataset(small_scene("tgt", 0.9, 0.7), 8, 2, Domain::target);
  TrainConfig cfg = [] {
    TrainConfig c;
    c.estimator = {3, 2, 4};
    c.batch_size = 2;
    c.seed = 5;
    return c;
  }();

  Batch batch() const {
    BatchStream stream(source, target, cfg.batch_size, cfg.kernel_spec());
    return *stream.epoch(0, 0).next();
  }
};

template <typename T>
std::vector<std::vector<T>> grads_of(const ModelParams<T>& p) {
  std::vector<std::vector<T>> out;
  for (const auto& e : p.entries()) {
    if (e.value.has_grad()) {
      out.emplace_back(e.value.grad().begin(), e.value.grad().end());
    } else {
      out.emplace_back();
    }
  }
  return out;
}

template <typename T>
std::vector<std::vector<T>> values_of(const ModelParams<T>& p) {
  std::vector<std::vector<T>> out;
  for (const auto& e : p.entries()) out.emplace_back(e.value.data().begin(), e.value.data().end());
  return out;
}

}  // namespace

TEST_CASE("lambda 0: estimator gradient equals the supervised-only gradient bit-exactly") {
  Fixture f;
  f.cfg.lambda_adv = 0.0;
  const Batch batch = f.batch();
  auto theta = init_discriminator<float>(DiscriminatorConfig{}, 2);

  auto psi_a = init_estimator<float>(f.cfg.estimator, 1);
  StepReport r;
  accumulate_estimator_gradients(psi_a, theta, batch, f.cfg, r);
  CHECK(r.l_adv > 0.0);  // still logged

  auto psi_b = init_estimator<float>(f.cfg.estimator, 1);
  Tape<float> tape;
  auto pred = estimator_forward(tape, f.cfg.estimator, psi_b, batch.source_images);
  backward(density_loss(tape, pred, batch.source_density));

  CHECK(grads_of(psi_a) == grads_of(psi_b));
  for (const auto& e : theta.entries()) CHECK_FALSE(e.value.has_grad());
}

TEST_CASE("estimator gradient is linear in lambda") {
  Fixture f;
  const Batch batch = f.batch();
  const auto psi0 = init_estimator<double>(f.cfg.estimator, 3);
  const auto theta = init_discriminator<double>(DiscriminatorConfig{}, 4);

  auto grad_at = [&](double lambda) {
    auto psi = psi0.clone();
    TrainConfig cfg = f.cfg;
    cfg.lambda_adv = lambda;
    StepReport r;
    accumulate_estimator_gradients(psi, theta, batch, cfg, r);
    return grads_of(psi);
  };
  auto psi = psi0.clone();
  {
    Tape<double> tape;
    auto target = batch.target_images.cast<double>();
    auto maps = estimator_forward(tape, f.cfg.estimator, psi, target);
    auto shaped = ops::reshape(tape, maps, Shape{maps.dim(0), 1, maps.dim(1), maps.dim(2)});
    backward(adversarial_loss(tape, discriminator_forward(tape, theta.frozen(), shaped)));
  }
  const auto g_adv = grads_of(psi);
  const auto g_sup = grad_at(0.0);
  for (double a : {0.005, 0.3, 2.0}) {
    const auto g = grad_at(a);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = 0; j < g[i].size(); ++j) {
        const double expect = g_sup[i][j] + a * g_adv[i][j];
        const double scale = std::max({std::abs(expect), std::abs(g_sup[i][j]), 1e-12});
        worst = std::max(worst, std::abs(g[i][j] - expect) / scale);
      }
    }
    INFO("lambda " << a);
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("alternation: each sub-step leaves the other network bit-identical") {
  Fixture f;
  f.cfg.lambda_adv = 0.01;
  auto psi = init_estimator<float>(f.cfg.estimator, 7);
  auto theta = init_discriminator<float>(DiscriminatorConfig{}, 8);
  auto psi_ref = psi.clone();
  auto theta_ref = theta.clone();
  BatchStream stream(f.source, f.target, f.cfg.batch_size, f.cfg.kernel_spec());
  const AdamConfig adam_psi{f.cfg.lr_psi}, adam_theta{f.cfg.lr_theta};

  std::size_t step = 0;
  for (std::size_t epoch = 0; step < 20; ++epoch) {
    auto it = stream.epoch(1, epoch);
    while (auto batch = it.next()) {
      if (++step > 20) break;
      auto theta_before = values_of(theta);
      StepReport r;
      accumulate_estimator_gradients(psi, theta, *batch, f.cfg, r);
      adam_step(psi, adam_psi);
      CHECK(values_of(theta) == theta_before);
      for (const auto& e : theta.entries()) CHECK_FALSE(e.value.has_grad());

      auto psi_before = values_of(psi);
      accumulate_discriminator_gradients(psi, theta, *batch, f.cfg, r);
      for (const auto& e : psi.entries()) CHECK_FALSE(e.value.has_grad());
      adam_step(theta, adam_theta);
      CHECK(values_of(psi) == psi_before);

      // train_step is exactly this composition
      auto ref = train_step(psi_ref, theta_ref, *batch, f.cfg, step);
      CHECK(values_of(psi_ref) == values_of(psi));
      CHECK(values_of(theta_ref) == values_of(theta));
      CHECK(ref.l_disc == r.l_disc);
    }
  }
}

TEST_CASE("2 epochs over 4 source images with batch 2 run 4 steps") {
  Fixture f;
  std::vector<AnnotatedImage> four(f.source.begin(), f.source.begin() + 4);
  f.cfg.epochs = 2;
  auto result = train(four, f.target, f.cfg);
  REQUIRE(result.history.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(result.history[i].step == i + 1);
    const auto& h = result.history[i];
    CHECK(std::isfinite(h.l_density_map));
    CHECK(std::isfinite(h.l_regression));
    CHECK(std::isfinite(h.l_adv));
    CHECK(std::isfinite(h.l_disc));
  }
  f.cfg.max_steps = 3;
  CHECK(train(four, f.target, f.cfg).history.size() == 3);
}

TEST_CASE("training is deterministic in the seed") {
  Fixture f;
  f.cfg.epochs = 2;
  auto a = train(f.source, f.target, f.cfg);
  auto b = train(f.source, f.target, f.cfg);
  std::ostringstream ha, hb;
  write_history_csv(ha, a.history);
  write_history_csv(hb, b.history);
  CHECK(ha.str() == hb.str());
  CHECK(values_of(a.psi) == values_of(b.psi));
  f.cfg.seed = 6;
  std::ostringstream hc;
  write_history_csv(hc, train(f.source, f.target, f.cfg).history);
  CHECK(hc.str() != ha.str());
}

TEST_CASE("history CSV layout") {
  CHECK(history_csv_header() == "step,l_density_map,l_regression,l_adv,l_disc,source_count_mae");
  StepReport r{3, 0.5, 2.0, 1.25, 0.75, 0.1};
  CHECK(history_csv_row(r) == "3,0.5,2,1.25,0.75,0.1");
}

TEST_CASE("configuration errors") {
  Fixture f;
  CHECK_THROWS_AS(train(f.source, {}, f.cfg), ConfigError);
  f.cfg.lambda_adv = 0.0;
  CHECK(train(f.source, {}, f.cfg).history.size() == 4);
  f.cfg.lambda_adv = -1.0;
  CHECK_THROWS_AS(train(f.source, f.target, f.cfg), ConfigError);
  f.cfg.lambda_adv = 0.01;
  f.cfg.lr_psi = 0.0;
  CHECK_THROWS_AS(train(f.source, f.target, f.cfg), ConfigError);
}

TEST_CASE("a non-finite loss aborts with a state dump") {
  Fixture f;
  f.source[0].image.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  Batch batch;
  BatchStream stream(f.source, f.target, 8, f.cfg.kernel_spec());
  batch = *stream.epoch(0, 0).next();
  auto psi = init_estimator<float>(f.cfg.estimator, 1);
  auto theta = init_discriminator<float>(DiscriminatorConfig{}, 1);
  try {
    train_step(psi, theta, batch, f.cfg, 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find("enc0.conv1.weight") != std::string::npos);
  }
}

TEST_CASE("periodic evaluation writes checkpoints") {
  Fixture f;
  f.cfg.epochs = 2;
  f.cfg.eval_every = 3;
  f.cfg.checkpoint_dir = std::filesystem::temp_directory_path() / "dacount_test_training_ckpt";
  std::filesystem::remove_all(f.cfg.checkpoint_dir);
  ValidationSets val{f.source, f.target};
  auto result = train(f.source, f.target, f.cfg, val);
  REQUIRE(result.evals.size() == 3);  // steps 3, 6 and the final step 8
  CHECK(result.evals[0].step == 3);
  CHECK(result.evals[2].step == 8);
  CHECK(result.evals[0].source_val.has_value());
  CHECK(result.evals[0].target_val->n_images == 8);
  for (auto name : {"psi_3.ckpt", "theta_3.ckpt", "psi_6.ckpt", "psi_8.ckpt", "theta_8.ckpt"}) {
    CHECK(std::filesystem::exists(f.cfg.checkpoint_dir / name));
  }
}

TEST_CASE("learning smoke test: density-map loss halves within 200 steps") {
  Fixture f;
  f.cfg.estimator = {3, 2, 8};
  f.cfg.lr_psi = 1e-3;
  f.cfg.batch_size = 4;
  f.cfg.epochs = 100;
  f.cfg.max_steps = 200;
  auto result = train(f.source, f.target, f.cfg);
  REQUIRE(result.history.size() == 200);
  const double first = result.history.front().l_density_map;
  double last = 0.0;
  for (std::size_t i = 190; i < 200; ++i) last += result.history[i].l_density_map / 10.0;
  INFO("initial " << first << " final " << last);
  CHECK(last <= 0.5 * first);
}
