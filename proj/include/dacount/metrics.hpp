#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dacount/dataset.hpp"
#include "dacount/density.hpp"
#include "dacount/models.hpp"

namespace dacount {

struct MetricsReport {
  double mae = 0.0;
  double mse = 0.0;
  // Derived convenience column, sqrt(mse).
  double rmse = 0.0;
  // Undefined (nullopt) when every image has a true count of zero.
  std::optional<double> are;
  std::size_t n_images = 0;
  // Zero-count images left out of the ARE average.
  std::size_t n_zero_count_excluded = 0;
  std::vector<std::pair<double, double>> per_image;  // (true count, predicted count)
};

// MAE, MSE and ARE of predicted counts against true counts. Counts are
// compared as real numbers; ARE averages |pred - true| / true over images
// with true > 0.
MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> predicted);

// Estimated count (density sum) per image, in dataset order.
std::vector<double> predict_counts(const EstimatorConfig& cfg, const ModelParams<float>& psi,
                                   const std::vector<AnnotatedImage>& dataset, std::size_t batch_size = 8);

// The kernel spec is accepted for interface symmetry with training; counts
// come from box lists, so it does not affect the result.
MetricsReport evaluate(const EstimatorConfig& cfg, const ModelParams<float>& psi,
                       const std::vector<AnnotatedImage>& dataset, const DensityKernelSpec& spec = {});

struct DomainGapReport {
  MetricsReport source;
  MetricsReport target;
  // target / source per metric; 1 when both are equal (including 0 / 0).
  double mae_ratio = 1.0;
  double mse_ratio = 1.0;
  std::optional<double> are_ratio;
};

DomainGapReport compare_domains(const EstimatorConfig& cfg, const ModelParams<float>& psi,
                                const std::vector<AnnotatedImage>& source_val,
                                const std::vector<AnnotatedImage>& target_val, const DensityKernelSpec& spec = {});

double metric_ratio(double target, double source);

// Human-readable table of one or more named reports.
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);
// CSV with columns split,metric,value,n_images,n_zero_count_excluded.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace dacount
