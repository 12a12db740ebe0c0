#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dacount/gradcheck.hpp"

namespace dacount {

enum class GradcheckScope { ops, losses, psi, theta };

std::optional<GradcheckScope> parse_gradcheck_scope(std::string_view name);
const char* to_string(GradcheckScope scope);

// Tolerance each scope is held to (elementwise/conv/losses vs. whole networks).
double gradcheck_tolerance(GradcheckScope scope);

// Runs every check of a scope at 64-bit with inputs drawn from `seed`.
std::vector<GradcheckReport> run_gradcheck_suite(GradcheckScope scope, std::uint64_t seed);

}  // namespace dacount
