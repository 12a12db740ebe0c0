#include <doctest.h>

#include "dacount/errors.hpp"
#include "dacount/ops.hpp"
#include "dacount/params.hpp"
#include "dacount/tensor.hpp"

using namespace dacount;

TEST_CASE("tensor construction checks shape against data") {
  Tensor<float> t(Shape{2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  for (float v : t.data()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
}

TEST_CASE("tensor without requires_grad never gets a grad buffer") {
  Tape<double> tape;
  Tensor<double> a(Shape{3}, {1, 2, 3});
  Tensor<double> w(Shape{3}, {1, 1, 1}, true);
  backward(ops::sum(tape, ops::mul(tape, a, w)));
  CHECK_FALSE(a.has_grad());
  CHECK(w.has_grad());
  CHECK(w.grad().size() == w.numel());
}

TEST_CASE("backward of sum(w*x) gives x") {
  Tape<double> tape;
  Tensor<double> x(Shape{4}, {0.5, -1.0, 2.0, 3.0});
  Tensor<double> w(Shape{4}, {1.0, 2.0, 3.0, 4.0}, true);
  backward(ops::sum(tape, ops::mul(tape, w, x)));
  for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == x.data()[i]);
}

TEST_CASE("backward twice on one tape is a usage error") {
  Tape<double> tape;
  Tensor<double> w(Shape{2}, {1.0, 2.0}, true);
  auto loss = ops::sum(tape, ops::square(tape, w));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), UsageError);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(ops::sum(tape, w), UsageError);
}

TEST_CASE("backward needs a scalar loss on a live tape") {
  Tape<double> tape;
  Tensor<double> w(Shape{2}, {1.0, 2.0}, true);
  auto y = ops::square(tape, w);
  CHECK_THROWS_AS(backward(y), UsageError);
  Tensor<double> leaf = Tensor<double>::scalar(1.0, true);
  CHECK_THROWS_AS(backward(leaf), UsageError);
}

TEST_CASE("gradients of two losses accumulate") {
  Tensor<double> w(Shape{2}, {1.0, -2.0}, true);
  {
    Tape<double> tape;
    backward(ops::sum(tape, ops::scale(tape, w, 3.0)));
  }
  {
    Tape<double> tape;
    backward(ops::sum(tape, ops::square(tape, w)));
  }
  CHECK(w.grad()[0] == doctest::Approx(3.0 + 2.0));
  CHECK(w.grad()[1] == doctest::Approx(3.0 - 4.0));
}

TEST_CASE("a tensor reused twice in one graph sums both paths") {
  Tape<double> tape;
  Tensor<double> w(Shape{1}, {3.0}, true);
  auto y = ops::add(tape, ops::mul(tape, w, w), w);  // w^2 + w
  backward(ops::sum(tape, y));
  CHECK(w.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("every reachable requires_grad tensor gets a grad after backward") {
  Tape<double> tape;
  Tensor<double> a(Shape{2}, {1.0, 2.0}, true);
  Tensor<double> b(Shape{2}, {3.0, 4.0}, true);
  Tensor<double> unused(Shape{2}, {5.0, 6.0}, true);
  auto h = ops::mul(tape, a, b);
  auto side = ops::square(tape, unused);
  backward(ops::sum(tape, ops::sigmoid(tape, h)));
  CHECK(a.has_grad());
  CHECK(b.has_grad());
  CHECK_FALSE(unused.has_grad());
  (void)side;
}

TEST_CASE("operations on tensors from two live tapes are rejected") {
  Tape<double> t1;
  Tape<double> t2;
  Tensor<double> w(Shape{2}, {1.0, 2.0}, true);
  auto y1 = ops::square(t1, w);
  CHECK_THROWS_AS(ops::square(t2, y1), UsageError);
  CHECK_NOTHROW(ops::square(t2, y1.detach()));
}

TEST_CASE("detach shares data and drops the graph") {
  Tape<double> tape;
  Tensor<double> w(Shape{2}, {1.0, 2.0}, true);
  auto y = ops::square(tape, w);
  auto d = y.detach();
  CHECK_FALSE(d.requires_grad());
  CHECK(d.is_leaf());
  CHECK(d.data().data() == y.data().data());
  auto c = y.clone();
  CHECK(c.data().data() != y.data().data());
  CHECK(c.data()[1] == 4.0);
}

TEST_CASE("set_requires_grad only on leaves; false clears the grad") {
  Tape<double> tape;
  Tensor<double> w(Shape{1}, {2.0}, true);
  auto y = ops::square(tape, w);
  CHECK_THROWS_AS(y.set_requires_grad(false), UsageError);
  backward(ops::sum(tape, y));
  CHECK(w.has_grad());
  w.set_requires_grad(false);
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("cast between precisions preserves values") {
  Tensor<double> d(Shape{3}, {0.5, -1.25, 3.0});
  auto f = d.cast<float>();
  CHECK(f.data()[1] == -1.25f);
  CHECK(f.shape() == d.shape());
}

TEST_CASE("adam: w = 1, g = 1, lr = 0.1 moves to 0.9") {
  ModelParams<double> p;
  p.add("w", Tensor<double>::scalar(1.0));
  p.at("w").mutable_grad()[0] = 1.0;
  adam_step(p, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  CHECK(p.at("w").item() == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.adam_step == 1);
  CHECK_FALSE(p.at("w").has_grad());
}

TEST_CASE("adam: a zero gradient leaves the parameter unchanged") {
  ModelParams<float> p;
  p.add("w", Tensor<float>(Shape{3}, {1.0f, -2.0f, 0.5f}));
  p.at("w").mutable_grad();
  adam_step(p, AdamConfig{});
  CHECK(p.at("w").data()[0] == 1.0f);
  CHECK(p.at("w").data()[1] == -2.0f);
  CHECK(p.at("w").data()[2] == 0.5f);
}

TEST_CASE("adam: a parameter without a gradient is reported by name") {
  ModelParams<float> p;
  p.add("a", Tensor<float>::scalar(1.0f));
  p.add("layer.bias", Tensor<float>::scalar(1.0f));
  p.at("a").mutable_grad()[0] = 1.0f;
  try {
    adam_step(p, AdamConfig{});
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("layer.bias") != std::string::npos);
  }
}

TEST_CASE("adam: identical runs are bit-identical") {
  auto run = [] {
    ModelParams<float> p;
    p.add("w", Tensor<float>(Shape{4}, {0.1f, 0.2f, -0.3f, 0.4f}));
    for (int step = 0; step < 25; ++step) {
      Tape<float> tape;
      backward(ops::sum(tape, ops::square(tape, ops::affine(tape, p.at("w"), 2.0f, -0.1f))));
      adam_step(p, AdamConfig{0.01});
    }
    return std::vector<float>(p.at("w").data().begin(), p.at("w").data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("params: duplicate names and frozen views") {
  ModelParams<float> p;
  p.add("w", Tensor<float>(Shape{2}, {1.0f, 2.0f}));
  CHECK_THROWS_AS(p.add("w", Tensor<float>::scalar(0.0f)), UsageError);
  CHECK(p.at("w").requires_grad());
  auto f = p.frozen();
  CHECK_FALSE(f.at("w").requires_grad());
  CHECK(f.at("w").data().data() == p.at("w").data().data());
  auto c = p.clone();
  c.at("w").mutable_data()[0] = 5.0f;
  CHECK(p.at("w").data()[0] == 1.0f);
  CHECK(p.parameter_count() == 2);
}
