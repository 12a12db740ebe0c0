#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dacount/errors.hpp"
#include "dacount/losses.hpp"

using namespace dacount;

TEST_CASE("density loss vanishes when prediction equals ground truth") {
  Tape<double> tape;
  Tensor<double> gt(Shape{4, 4}, std::vector<double>(16, 0.1));
  auto terms = density_loss_terms(tape, gt, gt);
  CHECK(terms.density_map.item() == 0.0);
  CHECK(terms.regression.item() == 0.0);
  CHECK(terms.total.item() == 0.0);
}

TEST_CASE("density loss: a uniform 1/(HW) offset means one missing object") {
  const std::size_t h = 8, w = 16;
  const double off = 1.0 / static_cast<double>(h * w);
  Tensor<double> gt(Shape{h, w}), pred(Shape{h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    gt.mutable_data()[i] = 0.01 * static_cast<double>(i % 7);
    pred.mutable_data()[i] = gt.data()[i] + off;
  }
  Tape<double> tape;
  auto terms = density_loss_terms(tape, pred, gt);
  CHECK(terms.regression.item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(terms.density_map.item() == doctest::Approx(off * off).epsilon(1e-9));
  CHECK(terms.total.item() == doctest::Approx(1.0 + off * off).epsilon(1e-12));
}

TEST_CASE("density loss averages the regression term over the batch") {
  Tensor<double> gt(Shape{2, 2, 2}), pred(Shape{2, 2, 2});
  pred.mutable_data()[0] = 2.0;  // sample 0 over-counts by 2, sample 1 exact
  Tape<double> tape;
  auto terms = density_loss_terms(tape, pred, gt);
  CHECK(terms.regression.item() == doctest::Approx(2.0));
  CHECK(terms.density_map.item() == doctest::Approx(4.0 / 8.0));
  CHECK_THROWS_AS(density_loss(tape, pred, Tensor<double>(Shape{2, 2})), DimensionError);
}

TEST_CASE("adversarial loss values") {
  Tape<double> tape;
  CHECK(adversarial_loss(tape, Tensor<double>::full({1, 2, 2}, 1.0)).item() == 0.0);
  CHECK(adversarial_loss(tape, Tensor<double>::full({1, 2, 2}, 0.5)).item() ==
        doctest::Approx(4.0 * std::numbers::ln2));
  CHECK(adversarial_loss(tape, Tensor<double>::full({1, 2, 2}, 0.5), PixelReduction::mean).item() ==
        doctest::Approx(std::numbers::ln2));
  // batch of two samples is averaged over samples
  CHECK(adversarial_loss(tape, Tensor<double>::full({2, 1, 2, 2}, 0.5)).item() ==
        doctest::Approx(4.0 * std::numbers::ln2));
}

TEST_CASE("adversarial loss gradient is -1/p per pixel") {
  Tape<double> tape;
  Tensor<double> p(Shape{1, 1, 3}, {0.2, 0.5, 0.9}, true);
  backward(adversarial_loss(tape, p));
  CHECK(p.grad()[0] == doctest::Approx(-5.0));
  CHECK(p.grad()[1] == doctest::Approx(-2.0));
  CHECK(p.grad()[2] == doctest::Approx(-1.0 / 0.9));
}

TEST_CASE("discriminator loss values and clamping") {
  Tape<double> tape;
  auto ones = Tensor<double>::full({1, 2, 2}, 1.0);
  auto half = Tensor<double>::full({1, 2, 2}, 0.5);
  CHECK(discriminator_loss(tape, ones, Domain::source).item() == 0.0);
  CHECK(discriminator_loss(tape, half, Domain::source).item() == doctest::Approx(4.0 * std::numbers::ln2));
  CHECK(discriminator_loss(tape, half, Domain::target).item() == doctest::Approx(4.0 * std::numbers::ln2));
  CHECK(discriminator_loss(tape, ones, Domain::target).item() == doctest::Approx(4.0 * std::log(1e7)));
  CHECK(discriminator_loss(tape, Tensor<double>(Shape{1, 2, 2}), Domain::target).item() == 0.0);
  CHECK(std::isfinite(adversarial_loss(tape, Tensor<double>(Shape{1, 2, 2})).item()));
}
