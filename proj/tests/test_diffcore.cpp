#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "artic/rng.hpp"
#include "artic/tape.hpp"
#include "artic/tensor.hpp"

using namespace artic;
using namespace artic::diff;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& x : t.data) x = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("tensor construction and shape validation") {
  Tensor t = build_tensor({2, 2}, {1, 2, 3, 4});
  CHECK(t.data == std::vector<double>{1, 2, 3, 4});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 2);

  Tensor z = build_tensor({3}, {0, 0, 0});
  CHECK(z.data == std::vector<double>{0, 0, 0});

  CHECK_THROWS_WITH_AS(build_tensor({2}, {1, 2, 3}), doctest::Contains("length mismatch"),
                       std::invalid_argument);
}

TEST_CASE("eager op values: matmul, softmax, layer norm, gelu") {
  Tape t;
  Var a = t.constant(build_tensor({2, 2}, {1, 2, 3, 4}));
  Var b = t.constant(build_tensor({2, 2}, {5, 6, 7, 8}));
  CHECK(t.value(matmul(t, a, b)).data == std::vector<double>{19, 22, 43, 50});

  Var s = softmax_lastaxis(t, t.constant(build_tensor({1, 3}, {0, 0, 0})));
  for (double v : t.value(s).data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // shift invariance
  Var s1 = softmax_lastaxis(t, t.constant(build_tensor({1, 3}, {0.4, -1.0, 2.2})));
  Var s2 = softmax_lastaxis(t, t.constant(build_tensor({1, 3}, {5.4, 4.0, 7.2})));
  for (int i = 0; i < 3; ++i) {
    CHECK(t.value(s1).data[i] == doctest::Approx(t.value(s2).data[i]).epsilon(1e-12));
  }

  // stability at extreme logits
  Var s3 = softmax_lastaxis(t, t.constant(build_tensor({1, 2}, {1000.0, 0.0})));
  CHECK(t.value(s3).data[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(t.value(s3).data[1]));

  // layer norm: zero mean, unit variance (population), then gain/bias map.
  // eps must stay positive, so pick one far below the comparison tolerance.
  const double kTinyEps = 1e-12;
  Var x = t.constant(build_tensor({1, 3}, {1, 2, 3}));
  Var gain = t.constant(build_tensor({3}, {1, 1, 1}));
  Var bias = t.constant(build_tensor({3}, {0, 0, 0}));
  Var ln = layer_norm(t, x, gain, bias, kTinyEps);
  // copy: later ops may grow the tape and invalidate value references
  const std::vector<double> y = t.value(ln).data;
  double expect = 1.0 / std::sqrt(2.0 / 3.0);  // (3-2)/sd, population sd of {1,2,3}
  CHECK(y[0] == doctest::Approx(-expect).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(0.0));
  CHECK(y[2] == doctest::Approx(expect).epsilon(1e-9));

  // shift invariance and zero gain
  Var xs = t.constant(build_tensor({1, 3}, {1 + 9.0, 2 + 9.0, 3 + 9.0}));
  Var lns = layer_norm(t, xs, gain, bias, kTinyEps);
  for (int i = 0; i < 3; ++i) {
    CHECK(t.value(lns).data[i] == doctest::Approx(y[i]).epsilon(1e-9));
  }
  Var zg = t.constant(build_tensor({3}, {0, 0, 0}));
  Var bb = t.constant(build_tensor({3}, {4, 5, 6}));
  const std::vector<double> zb = t.value(layer_norm(t, x, zg, bb, kTinyEps)).data;
  CHECK(zb[0] == doctest::Approx(4.0));
  CHECK(zb[1] == doctest::Approx(5.0));
  CHECK(zb[2] == doctest::Approx(6.0));

  // gelu anchor points
  Var g = gelu(t, t.constant(build_tensor({3}, {0.0, 10.0, -10.0})));
  CHECK(t.value(g).data[0] == 0.0);
  CHECK(t.value(g).data[1] == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(t.value(g).data[2] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("backward: linear and quadratic hand gradients") {
  Tape t;
  Var x = t.leaf(build_tensor({3}, {1, 2, 3}, true), "x");
  auto grads = t.backward(sum_all(t, x));
  CHECK(grads.at("x").data == std::vector<double>{1, 1, 1});

  Tape t2;
  Var x2 = t2.leaf(build_tensor({2}, {1, 2}, true), "x");
  auto g2 = t2.backward(sum_all(t2, mul(t2, x2, x2)));
  CHECK(g2.at("x").data == std::vector<double>{2, 4});
}

TEST_CASE("backward: gradients accumulate over every path") {
  Tape t;
  Var x = t.leaf(build_tensor({2}, {3, 4}, true), "x");
  // loss = sum(x + x) -> dx = 2
  auto g = t.backward(sum_all(t, add(t, x, x)));
  CHECK(g.at("x").data == std::vector<double>{2, 2});
}

TEST_CASE("backward rejects non-scalar losses and foreign handles") {
  Tape t;
  Var x = t.leaf(build_tensor({2}, {1, 2}, true), "x");
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);

  Tape other;
  Var y = other.leaf(build_tensor({1}, {1}, true), "y");
  CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
  CHECK_THROWS_AS(t.value(y), std::invalid_argument);
}

TEST_CASE("grad_check on every tape operation") {
  Rng rng(11);
  struct Case {
    const char* name;
    ScalarFn fn;
    std::vector<Tensor> inputs;
  };
  auto t34 = [&] { return random_tensor({3, 4}, rng); };
  std::vector<Case> cases;
  cases.push_back({"add", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, mul(t, add(t, v[0], v[1]), v[0]));
                   },
                   {t34(), t34()}});
  cases.push_back({"sub", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, mul(t, sub(t, v[0], v[1]), v[1]));
                   },
                   {t34(), t34()}});
  cases.push_back({"mul", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, mul(t, v[0], v[1]));
                   },
                   {t34(), t34()}});
  cases.push_back({"scale", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, scale(t, mul(t, v[0], v[0]), -1.7));
                   },
                   {t34()}});
  cases.push_back({"add_rowvec", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, mul(t, add_rowvec(t, v[0], v[1]), v[0]));
                   },
                   {t34(), random_tensor({4}, rng)}});
  cases.push_back({"matmul", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, mul(t, matmul(t, v[0], v[1]), matmul(t, v[0], v[1])));
                   },
                   {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}});
  cases.push_back({"transpose", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, matmul(t, v[0], transpose(t, v[0])));
                   },
                   {t34()}});
  cases.push_back({"slice_rows", [](Tape& t, const std::vector<Var>& v) {
                     Var s = slice_rows(t, v[0], 1, 2);
                     return sum_all(t, mul(t, s, s));
                   },
                   {t34()}});
  cases.push_back({"slice_cols", [](Tape& t, const std::vector<Var>& v) {
                     Var s = slice_cols(t, v[0], 1, 2);
                     return sum_all(t, mul(t, s, s));
                   },
                   {t34()}});
  cases.push_back({"concat_cols", [](Tape& t, const std::vector<Var>& v) {
                     Var c = concat_cols(t, {v[0], v[1]});
                     return sum_all(t, mul(t, c, c));
                   },
                   {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)}});
  cases.push_back({"softmax", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, mul(t, softmax_lastaxis(t, v[0]), v[1]));
                   },
                   {t34(), t34()}});
  cases.push_back({"log_softmax", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, mul(t, log_softmax_lastaxis(t, v[0]), v[1]));
                   },
                   {t34(), t34()}});
  cases.push_back({"layer_norm", [](Tape& t, const std::vector<Var>& v) {
                     Var ln = layer_norm(t, v[0], v[1], v[2]);
                     return sum_all(t, mul(t, ln, v[0]));
                   },
                   {t34(), random_tensor({4}, rng), random_tensor({4}, rng)}});
  cases.push_back({"gelu", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, gelu(t, v[0]));
                   },
                   {t34()}});
  cases.push_back({"exp", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, exp_elem(t, scale(t, v[0], 0.5)));
                   },
                   {t34()}});
  cases.push_back({"abs", [](Tape& t, const std::vector<Var>& v) {
                     return sum_all(t, abs_elem(t, v[0]));
                   },
                   {random_tensor({3, 4}, rng)}});  // normal draws: never exactly 0
  cases.push_back({"sum", [](Tape& t, const std::vector<Var>& v) {
                     Var s = sum_all(t, v[0]);
                     return mul(t, s, s);
                   },
                   {t34()}});
  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(grad_check(c.fn, c.inputs) < 1e-4);
  }
}

TEST_CASE("grad_check accuracy tiers: exact linear, smooth composite, negative control") {
  Rng rng(12);
  Tensor x = random_tensor({2, 3}, rng);
  CHECK(grad_check([](Tape& t, const std::vector<Var>& v) { return sum_all(t, v[0]); }, {x}) <
        1e-10);

  // softmax cross-entropy against a fixed one-hot target
  ScalarFn xent = [](Tape& t, const std::vector<Var>& v) {
    Var lp = log_softmax_lastaxis(t, v[0]);
    Var pick = slice_cols(t, lp, 1, 1);
    return scale(t, sum_all(t, pick), -1.0);
  };
  CHECK(grad_check(xent, {random_tensor({2, 3}, rng)}) < 1e-6);

  // negative control: a wrong backward rule (here, sum(x*x) with the gradient
  // of sum(x)) must blow well past the acceptance threshold
  Tensor probe = random_tensor({2, 2}, rng);
  double err = 0.0;
  double h = 1e-5;
  for (size_t i = 0; i < probe.data.size(); ++i) {
    Tensor plus = probe, minus = probe;
    plus.data[i] += h;
    minus.data[i] -= h;
    auto f = [](const Tensor& in) {
      double s = 0.0;
      for (double v : in.data) s += v * v;
      return s;
    };
    double numeric = (f(plus) - f(minus)) / (2 * h);
    double wrong_analytic = 1.0;
    err = std::max(err, std::abs(wrong_analytic - numeric) / std::max(1.0, std::abs(numeric)));
  }
  CHECK(err > 1e-2);
}

TEST_CASE("matmul gradients match finite differences at tight tolerance") {
  Rng rng(13);
  ScalarFn f = [](Tape& t, const std::vector<Var>& v) {
    return sum_all(t, matmul(t, v[0], v[1]));
  };
  CHECK(grad_check(f, {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}) < 1e-6);
}

TEST_CASE("visit_nodes walks recording order") {
  Tape t;
  Var a = t.leaf(build_tensor({1}, {2}, true), "a");
  sum_all(t, mul(t, a, a));
  std::vector<std::string> ops;
  t.visit_nodes([&](const std::string& op, const Tensor&) { ops.push_back(op); });
  CHECK(ops == std::vector<std::string>{"leaf", "mul", "sum"});
}
