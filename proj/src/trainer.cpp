#include "dacount/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <type_traits>

#include "dacount/checkpoint.hpp"
#include "dacount/errors.hpp"
#include "dacount/ops.hpp"
#include "dacount/rng.hpp"

namespace dacount {

void TrainConfig::validate() const {
  if (!(lambda_adv >= 0.0) || !std::isfinite(lambda_adv)) throw ConfigError("lambda_adv must be finite and >= 0");
  if (!(lr_psi > 0.0) || !(lr_theta > 0.0)) throw ConfigError("learning rates must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  kernel_spec().validate();
  estimator.validate();
}

namespace {

template <typename T>
Tensor<T> as_type(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<T>();
  }
}

// [N,H,W] -> [N,1,H,W]
template <typename T>
Tensor<T> as_maps(Tape<T>& tape, const Tensor<T>& density) {
  return ops::reshape(tape, density, Shape{density.dim(0), 1, density.dim(1), density.dim(2)});
}

template <typename T>
double count_mae(const Tensor<T>& pred, const std::vector<double>& counts) {
  const std::size_t n = pred.dim(0), plane = pred.numel() / n;
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += static_cast<double>(pred.data()[i * plane + j]);
    err += std::abs(s - counts[i]);
  }
  return err / static_cast<double>(n);
}

std::string dump_state(const StepReport& r, const ModelParams<float>& psi, const ModelParams<float>& theta) {
  std::ostringstream os;
  os << "non-finite loss at step " << r.step << ": l_density_map=" << r.l_density_map
     << " l_regression=" << r.l_regression << " l_adv=" << r.l_adv << " l_disc=" << r.l_disc << "\n";
  for (const auto* p : {&psi, &theta}) {
    for (const auto& e : p->entries()) {
      double max_abs = 0.0;
      bool finite = true;
      for (float v : e.value.data()) {
        finite = finite && std::isfinite(v);
        max_abs = std::max(max_abs, static_cast<double>(std::abs(v)));
      }
      os << "  " << e.name << " max|w|=" << max_abs << (finite ? "" : " (contains non-finite values)") << "\n";
    }
  }
  return os.str();
}

bool all_finite(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

template <typename T>
void accumulate_estimator_gradients(ModelParams<T>& psi, const ModelParams<T>& theta, const Batch& batch,
                                    const TrainConfig& cfg, StepReport& report) {
  const Tensor<T> source = as_type<T>(batch.source_images);
  const Tensor<T> target = as_type<T>(batch.target_images);
  const Tensor<T> gt = as_type<T>(batch.source_density);
  const ModelParams<T> theta_frozen = theta.frozen();

  Tape<T> tape;
  const Tensor<T> pred = estimator_forward(tape, cfg.estimator, psi, source);
  const DensityLossTerms<T> terms = density_loss_terms(tape, pred, gt);
  report.l_density_map = static_cast<double>(terms.density_map.item());
  report.l_regression = static_cast<double>(terms.regression.item());
  report.source_count_mae = count_mae(pred, batch.source_counts);

  Tensor<T> total = terms.total;
  if (cfg.lambda_adv > 0.0) {
    const Tensor<T> target_maps = estimator_forward(tape, cfg.estimator, psi, target);
    const Tensor<T> adv =
        adversarial_loss(tape, discriminator_forward(tape, theta_frozen, as_maps(tape, target_maps)), cfg.reduction);
    report.l_adv = static_cast<double>(adv.item());
    total = ops::add(tape, total, ops::scale(tape, adv, static_cast<T>(cfg.lambda_adv)));
  } else {
    // Logged only; nothing from this branch reaches psi.
    Tape<T> scratch;
    const Tensor<T> target_maps = estimator_forward(scratch, cfg.estimator, psi.frozen(), target);
    report.l_adv = static_cast<double>(
        adversarial_loss(scratch, discriminator_forward(scratch, theta_frozen, as_maps(scratch, target_maps)),
                         cfg.reduction)
            .item());
  }
  if (!all_finite({report.l_density_map, report.l_regression, report.l_adv})) return;
  backward(total);
}

template <typename T>
void accumulate_discriminator_gradients(const ModelParams<T>& psi, ModelParams<T>& theta, const Batch& batch,
                                        const TrainConfig& cfg, StepReport& report) {
  const ModelParams<T> psi_frozen = psi.frozen();
  Tape<T> tape;
  const Tensor<T> source_maps = cfg.disc_on_gt_maps
                                    ? as_type<T>(batch.source_density)
                                    : estimator_forward(tape, cfg.estimator, psi_frozen, as_type<T>(batch.source_images));
  const Tensor<T> target_maps = estimator_forward(tape, cfg.estimator, psi_frozen, as_type<T>(batch.target_images));
  const Tensor<T> ls =
      discriminator_loss(tape, discriminator_forward(tape, theta, as_maps(tape, source_maps)), Domain::source,
                         cfg.reduction);
  const Tensor<T> lt =
      discriminator_loss(tape, discriminator_forward(tape, theta, as_maps(tape, target_maps)), Domain::target,
                         cfg.reduction);
  const double ns = static_cast<double>(source_maps.dim(0));
  const double nt = static_cast<double>(target_maps.dim(0));
  const Tensor<T> loss = ops::add(tape, ops::scale(tape, ls, static_cast<T>(ns / (ns + nt))),
                                  ops::scale(tape, lt, static_cast<T>(nt / (ns + nt))));
  report.l_disc = static_cast<double>(loss.item());
  if (!std::isfinite(report.l_disc)) return;
  backward(loss);
}

StepReport train_step(ModelParams<float>& psi, ModelParams<float>& theta, const Batch& batch,
                      const TrainConfig& cfg, std::size_t step) {
  StepReport r;
  r.step = step;
  accumulate_estimator_gradients(psi, theta, batch, cfg, r);
  if (!all_finite({r.l_density_map, r.l_regression, r.l_adv})) throw TrainingError(dump_state(r, psi, theta));
  adam_step(psi, AdamConfig{cfg.lr_psi, cfg.beta1, cfg.beta2, cfg.adam_eps});

  accumulate_discriminator_gradients(psi, theta, batch, cfg, r);
  if (!std::isfinite(r.l_disc)) throw TrainingError(dump_state(r, psi, theta));
  adam_step(theta, AdamConfig{cfg.lr_theta, cfg.beta1, cfg.beta2, cfg.adam_eps});
  return r;
}

TrainResult train(const std::vector<AnnotatedImage>& source, const std::vector<AnnotatedImage>& target,
                  const TrainConfig& cfg, const ValidationSets& validation, const StepCallback& on_step) {
  cfg.validate();
  if (source.empty()) throw ConfigError("source training set is empty");
  if (target.empty() && cfg.lambda_adv > 0.0) {
    throw ConfigError("a target training set is required when lambda_adv > 0");
  }
  const auto& second = target.empty() ? source : target;
  const std::size_t h = source.front().image.dim(1), w = source.front().image.dim(2);
  cfg.estimator.check_input_size(h, w);
  DiscriminatorConfig{}.check_input_size(h, w);

  BatchStream stream(source, second, cfg.batch_size, cfg.kernel_spec());
  TrainResult result;
  result.config = cfg.estimator;
  result.psi = init_estimator<float>(cfg.estimator, derive_seed(cfg.seed, "init.psi"));
  result.theta = init_discriminator<float>(DiscriminatorConfig{}, derive_seed(cfg.seed, "init.theta"));
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "shuffle");

  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
  const std::size_t total =
      cfg.max_steps > 0 ? std::min(cfg.max_steps, cfg.epochs * stream.steps_per_epoch()) : cfg.epochs * stream.steps_per_epoch();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
    auto it = stream.epoch(shuffle_seed, epoch);
    while (step < total) {
      auto batch = it.next();
      if (!batch) break;
      ++step;
      result.history.push_back(train_step(result.psi, result.theta, *batch, cfg, step));
      if (on_step) on_step(result.history.back());
      if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == total)) {
        EvalRecord rec;
        rec.step = step;
        if (!validation.source.empty()) rec.source_val = evaluate(cfg.estimator, result.psi, validation.source);
        if (!validation.target.empty()) rec.target_val = evaluate(cfg.estimator, result.psi, validation.target);
        result.evals.push_back(std::move(rec));
        if (!cfg.checkpoint_dir.empty()) {
          save_checkpoint(result.psi, cfg.checkpoint_dir / ("psi_" + std::to_string(step) + ".ckpt"));
          save_checkpoint(result.theta, cfg.checkpoint_dir / ("theta_" + std::to_string(step) + ".ckpt"));
        }
      }
    }
  }
  return result;
}

std::string history_csv_header() { return "step,l_density_map,l_regression,l_adv,l_disc,source_count_mae"; }

std::string history_csv_row(const StepReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g", r.step, r.l_density_map, r.l_regression, r.l_adv,
                r.l_disc, r.source_count_mae);
  return buf;
}

void write_history_csv(std::ostream& os, const std::vector<StepReport>& history) {
  os << history_csv_header() << '\n';
  for (const auto& r : history) os << history_csv_row(r) << '\n';
}

template void accumulate_estimator_gradients<float>(ModelParams<float>&, const ModelParams<float>&, const Batch&,
                                                    const TrainConfig&, StepReport&);
template void accumulate_estimator_gradients<double>(ModelParams<double>&, const ModelParams<double>&, const Batch&,
                                                     const TrainConfig&, StepReport&);
template void accumulate_discriminator_gradients<float>(const ModelParams<float>&, ModelParams<float>&, const Batch&,
                                                        const TrainConfig&, StepReport&);
template void accumulate_discriminator_gradients<double>(const ModelParams<double>&, ModelParams<double>&,
                                                         const Batch&, const TrainConfig&, StepReport&);

}  // namespace dacount
