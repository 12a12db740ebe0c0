#pragma once

// Finite-difference verification of analytic gradients (64-bit).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dacount/tensor.hpp"

namespace dacount {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // 0 checks every element; otherwise a seeded random subset per input.
  std::size_t max_samples_per_input = 0;
  std::uint64_t seed = 0;
};

struct InputGradcheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Elements skipped because the function is not smooth within +-2 steps
  // (ReLU kinks, max-pool ties).
  std::size_t skipped = 0;
};

struct GradcheckReport {
  std::string op;
  double tolerance = 0.0;
  std::vector<InputGradcheck> inputs;

  double max_rel_error() const;
  bool passed() const;
};

// The function under test. Non-scalar outputs are reduced internally with a
// fixed random projection so every output element contributes.
using GradcheckFn = std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

// Checks d(fn)/d(inputs[i]) for every input. Inputs are cloned; the
// originals are left untouched.
GradcheckReport gradcheck(const std::string& op, const GradcheckFn& fn, const std::vector<Tensor<double>>& inputs,
                          const std::vector<std::string>& input_names, const GradcheckOptions& options);

// Same, with standard-normal inputs of the given shapes drawn from options.seed.
GradcheckReport gradcheck(const std::string& op, const GradcheckFn& fn, const std::vector<Shape>& input_shapes,
                          const GradcheckOptions& options);

std::string format_report(const GradcheckReport& report);

}  // namespace dacount
