#pragma once

// Alternating optimization of the density estimator (psi) and the output-space
// discriminator (theta).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dacount/batch.hpp"
#include "dacount/losses.hpp"
#include "dacount/metrics.hpp"
#include "dacount/models.hpp"
#include "dacount/params.hpp"

namespace dacount {

struct TrainConfig {
  // Weight of the adversarial term in the estimator objective. 0 trains the
  // supervised-only baseline (the discriminator is still trained and logged).
  double lambda_adv = 0.01;
  double lr_psi = 1e-4;
  double lr_theta = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 1;
  std::size_t batch_size = 4;
  // Optional cap on the total number of steps; 0 = no cap.
  std::size_t max_steps = 0;
  double sigma_ratio = 0.25;
  std::uint64_t seed = 0;
  // Evaluate and checkpoint every this many steps; 0 disables both.
  std::size_t eval_every = 0;
  std::filesystem::path checkpoint_dir;
  PixelReduction reduction = PixelReduction::sum;
  // Train the discriminator on ground-truth source maps instead of predicted ones.
  bool disc_on_gt_maps = false;
  EstimatorConfig estimator;

  void validate() const;
  DensityKernelSpec kernel_spec() const { return {sigma_ratio, 4.0}; }
};

struct StepReport {
  std::size_t step = 0;
  double l_density_map = 0.0;
  double l_regression = 0.0;
  double l_adv = 0.0;
  double l_disc = 0.0;
  double source_count_mae = 0.0;
};

struct EvalRecord {
  std::size_t step = 0;
  std::optional<MetricsReport> source_val;
  std::optional<MetricsReport> target_val;
};

// Gradient of L_density + lambda_adv * L_adv with respect to psi, accumulated
// into psi; theta is used through a frozen view and never receives gradients.
// Fills the density/adversarial fields and the count MAE of `report`.
template <typename T>
void accumulate_estimator_gradients(ModelParams<T>& psi, const ModelParams<T>& theta, const Batch& batch,
                                    const TrainConfig& cfg, StepReport& report);

// Gradient of the discriminator loss over both domains (mean over all samples),
// accumulated into theta. Density maps come from a frozen psi and are
// detached, so psi never receives gradients. Fills report.l_disc.
template <typename T>
void accumulate_discriminator_gradients(const ModelParams<T>& psi, ModelParams<T>& theta, const Batch& batch,
                                        const TrainConfig& cfg, StepReport& report);

// One psi update followed by one theta update. Throws TrainingError with a
// state dump when a loss is not finite.
StepReport train_step(ModelParams<float>& psi, ModelParams<float>& theta, const Batch& batch,
                      const TrainConfig& cfg, std::size_t step);

struct ValidationSets {
  std::vector<AnnotatedImage> source;
  std::vector<AnnotatedImage> target;
};

struct TrainResult {
  EstimatorConfig config;
  ModelParams<float> psi;
  ModelParams<float> theta;
  std::vector<StepReport> history;
  std::vector<EvalRecord> evals;
};

using StepCallback = std::function<void(const StepReport&)>;

// Runs epochs x steps_per_epoch train_step calls (capped by max_steps).
// With an empty target list and lambda_adv == 0 the source images stand in
// as the discriminator's second domain.
TrainResult train(const std::vector<AnnotatedImage>& source, const std::vector<AnnotatedImage>& target,
                  const TrainConfig& cfg, const ValidationSets& validation = {}, const StepCallback& on_step = {});

std::string history_csv_header();
std::string history_csv_row(const StepReport& r);
void write_history_csv(std::ostream& os, const std::vector<StepReport>& history);

}  // namespace dacount
