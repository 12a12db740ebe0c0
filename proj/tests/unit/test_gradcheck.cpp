#include <doctest.h>

#include "dacount/gradcheck.hpp"
#include "dacount/gradcheck_suites.hpp"
#include "dacount/ops.hpp"

using namespace dacount;

namespace {

// y = x^2 with a deliberately wrong backward rule (3x instead of 2x).
Tensor<double> bad_square(Tape<double>& tape, const Tensor<double>& x) {
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.mutable_data()[i] = x.data()[i] * x.data()[i];
  tape.record(out, {&x}, [](auto& node) {
    auto& in = *node.inputs[0];
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * (*in.data)[i] * node.output->grad[i];
  });
  return out;
}

void check_all_pass(const std::vector<GradcheckReport>& reports) {
  REQUIRE_FALSE(reports.empty());
  for (const auto& r : reports) {
    INFO(format_report(r));
    CHECK(r.passed());
  }
}

}  // namespace

TEST_CASE("gradcheck accepts a correct gradient") {
  GradcheckOptions opt;
  opt.seed = 3;
  auto report = gradcheck(
      "square", [](Tape<double>& t, const auto& in) { return ops::square(t, in[0]); }, {Shape{3, 4}}, opt);
  CHECK(report.passed());
  CHECK(report.inputs.size() == 1);
  CHECK(report.inputs[0].checked == 12);
  CHECK(report.max_rel_error() < 1e-6);
}

TEST_CASE("gradcheck reports a wrong gradient without throwing") {
  GradcheckOptions opt;
  opt.seed = 4;
  GradcheckReport report;
  CHECK_NOTHROW(report = gradcheck(
                    "bad_square", [](Tape<double>& t, const auto& in) { return bad_square(t, in[0]); },
                    {Shape{5}}, opt));
  CHECK_FALSE(report.passed());
  CHECK(report.max_rel_error() > 0.1);
  CHECK(format_report(report).find("bad_square") != std::string::npos);
}

TEST_CASE("samples straddling a ReLU kink are skipped, smooth ones are checked") {
  // 3e-6 lies within one step of 0; the others are far from it
  Tensor<double> x(Shape{3}, {3e-6, 0.4, -0.9}, true);
  GradcheckOptions opt;
  auto report =
      gradcheck("relu", [](Tape<double>& t, const auto& in) { return ops::relu(t, in[0]); }, {x}, {"x"}, opt);
  CHECK(report.passed());
  CHECK(report.inputs[0].skipped == 1);
  CHECK(report.inputs[0].checked == 2);
}

TEST_CASE("gradcheck leaves the caller's inputs untouched") {
  Tensor<double> x(Shape{3}, {0.3, -0.7, 1.1}, true);
  GradcheckOptions opt;
  gradcheck("sigmoid", [](Tape<double>& t, const auto& in) { return ops::sigmoid(t, in[0]); }, {x}, {"x"}, opt);
  CHECK(x.data()[0] == 0.3);
  CHECK(x.data()[1] == -0.7);
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("scope names parse") {
  CHECK(parse_gradcheck_scope("ops") == GradcheckScope::ops);
  CHECK(parse_gradcheck_scope("losses") == GradcheckScope::losses);
  CHECK(parse_gradcheck_scope("psi") == GradcheckScope::psi);
  CHECK(parse_gradcheck_scope("theta") == GradcheckScope::theta);
  CHECK_FALSE(parse_gradcheck_scope("all").has_value());
  CHECK(gradcheck_tolerance(GradcheckScope::ops) == 1e-6);
  CHECK(gradcheck_tolerance(GradcheckScope::psi) == 1e-4);
}

TEST_CASE("ops suite passes across three seeds") {
  for (std::uint64_t seed : {1, 2, 3}) check_all_pass(run_gradcheck_suite(GradcheckScope::ops, seed));
}

TEST_CASE("losses suite passes across three seeds") {
  for (std::uint64_t seed : {1, 2, 3}) check_all_pass(run_gradcheck_suite(GradcheckScope::losses, seed));
}

TEST_CASE("whole-network suites pass") {
  check_all_pass(run_gradcheck_suite(GradcheckScope::psi, 1));
  check_all_pass(run_gradcheck_suite(GradcheckScope::theta, 1));
}
