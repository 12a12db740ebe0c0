#include "dacount/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dacount/errors.hpp"

namespace dacount {

MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size()) throw DimensionError("compute_metrics: count vectors differ in length");
  if (truth.empty()) throw ConfigError("cannot compute metrics over an empty dataset");
  MetricsReport r;
  r.n_images = truth.size();
  double abs_sum = 0.0, sq_sum = 0.0, rel_sum = 0.0;
  std::size_t rel_n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double err = predicted[i] - truth[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (truth[i] > 0.0) {
      rel_sum += std::abs(err) / truth[i];
      ++rel_n;
    } else {
      ++r.n_zero_count_excluded;
    }
    r.per_image.emplace_back(truth[i], predicted[i]);
  }
  const auto n = static_cast<double>(truth.size());
  r.mae = abs_sum / n;
  r.mse = sq_sum / n;
  r.rmse = std::sqrt(r.mse);
  if (rel_n > 0) r.are = rel_sum / static_cast<double>(rel_n);
  return r;
}

std::vector<double> predict_counts(const EstimatorConfig& cfg, const ModelParams<float>& psi,
                                   const std::vector<AnnotatedImage>& dataset, std::size_t batch_size) {
  check_consistent_shapes(dataset);
  const ModelParams<float> frozen = psi.frozen();
  std::vector<double> out;
  out.reserve(dataset.size());
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, dataset.size() - start);
    Shape shape = dataset[start].image.shape();
    shape.insert(shape.begin(), b);
    Tensor<float> batch(shape);
    const std::size_t stride = dataset[start].image.numel();
    for (std::size_t i = 0; i < b; ++i) {
      std::copy_n(dataset[start + i].image.data().data(), stride, batch.mutable_data().data() + i * stride);
    }
    Tape<float> tape;
    const Tensor<float> maps = estimator_forward(tape, cfg, frozen, batch);
    const std::size_t plane = maps.numel() / b;
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < plane; ++j) s += maps.data()[i * plane + j];
      out.push_back(s);
    }
  }
  return out;
}

MetricsReport evaluate(const EstimatorConfig& cfg, const ModelParams<float>& psi,
                       const std::vector<AnnotatedImage>& dataset, const DensityKernelSpec& spec) {
  spec.validate();
  if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
  const std::vector<double> pred = predict_counts(cfg, psi, dataset);
  std::vector<double> truth;
  truth.reserve(dataset.size());
  for (const auto& im : dataset) truth.push_back(static_cast<double>(im.count()));
  return compute_metrics(truth, pred);
}

double metric_ratio(double target, double source) { return target == source ? 1.0 : target / source; }

DomainGapReport compare_domains(const EstimatorConfig& cfg, const ModelParams<float>& psi,
                                const std::vector<AnnotatedImage>& source_val,
                                const std::vector<AnnotatedImage>& target_val, const DensityKernelSpec& spec) {
  DomainGapReport r;
  r.source = evaluate(cfg, psi, source_val, spec);
  r.target = evaluate(cfg, psi, target_val, spec);
  r.mae_ratio = metric_ratio(r.target.mae, r.source.mae);
  r.mse_ratio = metric_ratio(r.target.mse, r.source.mse);
  if (r.source.are && r.target.are) r.are_ratio = metric_ratio(*r.target.are, *r.source.are);
  return r;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-12s %10s %10s %10s %10s %8s %8s\n", "split", "MAE", "MSE", "ARE", "RMSE*",
                "images", "ARE-excl");
  os << buf;
  for (const auto& [name, r] : rows) {
    const std::string are = r.are ? [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.4f", *r.are);
      return std::string(b);
    }()
                                  : std::string("undefined");
    std::snprintf(buf, sizeof buf, "%-12s %10.4f %10.4f %10s %10.4f %8zu %8zu\n", name.c_str(), r.mae, r.mse,
                  are.c_str(), r.rmse, r.n_images, r.n_zero_count_excluded);
    os << buf;
  }
  os << "(* RMSE is a derived convenience column)\n";
  return os.str();
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "split,metric,value,n_images,n_zero_count_excluded\n";
  char buf[64];
  auto emit = [&](const std::string& split, const char* metric, const std::string& value, const MetricsReport& r) {
    os << split << ',' << metric << ',' << value << ',' << r.n_images << ',' << r.n_zero_count_excluded << '\n';
  };
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& [name, r] : rows) {
    emit(name, "mae", num(r.mae), r);
    emit(name, "mse", num(r.mse), r);
    emit(name, "are", r.are ? num(*r.are) : "undefined", r);
    emit(name, "rmse", num(r.rmse), r);
  }
  return os.str();
}

}  // namespace dacount
