#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pipmn/gradcheck.hpp"
#include "pipmn/gradcheck_suite.hpp"
#include "pipmn/losses.hpp"
#include "pipmn/model.hpp"
#include "pipmn/ops.hpp"

using namespace pipmn;

TEST_CASE("finite differences confirm every op, block and the tiny model") {
  const auto results = run_gradcheck_suite(42);
  CHECK(results.size() >= 16);
  for (const auto& r : results) {
    INFO(r.op, " max rel err ", r.report.max_rel_err);
    CHECK(r.report.pass(kGradCheckTolerance));
  }
}

TEST_CASE("a second seed passes too") {
  const auto results = run_gradcheck_suite(20260809);
  CHECK(suite_max_rel_err(results) < kGradCheckTolerance);
}

namespace {

// Intentionally wrong backward (claims dy/dx = 3 for y = 2x); the checker
// must flag it.
Tensor<double> bad_double(Tape<double>* tape, const Tensor<double>& x) {
  Tensor<double> y(x.shape(), tape != nullptr && x.requires_grad());
  for (long i = 0; i < x.size(); ++i) y.data()[i] = 2.0 * x.data()[i];
  if (y.requires_grad()) {
    tape->record([x, y]() mutable {
      for (long i = 0; i < x.size(); ++i) x.grad()[i] += 3.0 * y.grad()[i];
    });
  }
  return y;
}

}  // namespace

TEST_CASE("grad_check flags a corrupted backward pass") {
  Parameter<double> p("x", Tensor<double>({4}, {0.5, -1.0, 2.0, 0.25}));
  GradCheckReport report = grad_check(
      [&p](Tape<double>* t) { return ops::sum(t, bad_double(t, p.value)); }, {&p}, 1);
  CHECK_FALSE(report.pass(kGradCheckTolerance));
  CHECK(report.max_rel_err > 0.1);
  CHECK(report.worst.param == "x");
}

TEST_CASE("grad_check reports the worst coordinate") {
  Rng rng(31);
  Parameter<double> w("w", Tensor<double>({3, 2}));
  for (long i = 0; i < w.value.size(); ++i) w.value.data()[i] = rng.uniform(-1, 1);
  Parameter<double> b("b", Tensor<double>({2}, {0.1, -0.2}));
  Tensor<double> x({2, 3}, {0.3, -0.5, 0.9, 1.2, 0.0, -0.7});
  GradCheckReport report = grad_check(
      [&](Tape<double>* t) {
        Tensor<double> y = ops::linear(t, x, w.value, b.value);
        return ops::sum(t, ops::hadamard(t, y, y));
      },
      {&w, &b}, 3);
  CHECK(report.pass(1e-4));
  CHECK(report.coords_checked == 8);
  CHECK(report.worst.index >= 0);
}

TEST_CASE("every trainable parameter can receive a nonzero gradient") {
  PipConfig cfg;
  cfg.n = 2;
  cfg.kappas = {2, 3};
  cfg.time_length = 3;
  cfg.in_dim = 6;
  cfg.alpha = 2;
  cfg.num_classes = 3;
  PipmnModel<double> model(cfg, 99);

  std::vector<bool> saw_nonzero(model.parameters().size(), false);
  Rng rng(111);
  for (int trial = 0; trial < 10; ++trial) {
    model.zero_grads();
    Tensor<double> x({2, 8, 6});
    for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
    Tape<double> tape;
    Tensor<double> loss =
        cross_entropy_smoothed(&tape, model.forward(&tape, x),
                               {static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))},
                               0.1);
    tape.backward(loss);
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (long j = 0; j < params[i]->value.size(); ++j)
        if (params[i]->value.grad()[j] != 0.0) {
          saw_nonzero[i] = true;
          break;
        }
    }
  }
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    INFO("parameter ", params[i]->name);
    CHECK(saw_nonzero[i]);
  }
}
