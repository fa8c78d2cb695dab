#include "doctest.h"

#include "planval/ad/adam.hpp"
#include "planval/ad/checkpoint.hpp"
#include "planval/ad/gradcheck.hpp"
#include "planval/ad/nn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

using namespace planval;
using namespace planval::ad;

namespace {

/// Straight-line forward pass written with scalar loops only.
Matrix reference_forward(const ParamStore& store, const Mlp& mlp, const Matrix& x) {
  Matrix h = x;
  for (Index l = 0; l < mlp.spec.n_layers(); ++l) {
    const Matrix& w = store.value(mlp.weight_index(l));
    const Matrix& b = store.value(mlp.bias_index(l));
    Matrix out(h.rows(), w.cols());
    const bool last = l + 1 == mlp.spec.n_layers();
    for (Index i = 0; i < h.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) {
        double acc = 0.0;
        for (Index p = 0; p < h.cols(); ++p) acc += h(i, p) * w(p, j);
        acc += b(0, j);
        if (!last) acc = acc / (1.0 + std::exp(-acc));
        out(i, j) = acc;
      }
    }
    h = out;
  }
  return h;
}

ParamStore random_store(std::initializer_list<std::pair<const char*, std::pair<Index, Index>>> entries, Rng& rng) {
  ParamStore s;
  for (const auto& [name, shape] : entries) s.add(name, standard_normal(shape.first, shape.second, rng));
  return s;
}

}  // namespace

TEST_CASE("mlp_forward examples") {
  Rng rng(1);
  SUBCASE("zero weights and biases give zero pre-activation output") {
    ParamStore store;
    const Mlp mlp = add_mlp(store, "net", {{3, 5, 2}, Activation::Silu, Activation::Identity}, rng);
    for (Index i = 0; i < store.size(); ++i) store.mutable_value(i).setZero();
    Tape tape;
    const Var y = mlp_forward(tape, store, mlp, tape.constant(standard_normal(4, 3, rng)));
    CHECK(y.value().isZero(0.0));
  }
  SUBCASE("identity single layer returns its input") {
    ParamStore store;
    const Mlp mlp = add_mlp(store, "lin", {{3, 3}, Activation::Silu, Activation::Identity}, rng);
    store.set_value(mlp.weight_index(0), Matrix::Identity(3, 3));
    store.set_value(mlp.bias_index(0), Matrix::Zero(1, 3));
    Tape tape;
    const Matrix x = standard_normal(5, 3, rng);
    CHECK(mlp_forward(tape, store, mlp, tape.constant(x)).value() == x);
  }
  SUBCASE("random 2-4-1 net agrees with a scalar-loop forward pass") {
    ParamStore store;
    const Mlp mlp = add_mlp(store, "net", {{2, 4, 1}, Activation::Silu, Activation::Identity}, rng);
    const Matrix x = standard_normal(6, 2, rng);
    Tape tape;
    const Matrix y = mlp_forward(tape, store, mlp, tape.constant(x)).value();
    CHECK((y - reference_forward(store, mlp, x)).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("errors") {
    ParamStore store;
    const Mlp mlp = add_mlp(store, "net", {{2, 4, 1}}, rng);
    Tape tape;
    CHECK_THROWS_AS(mlp_forward(tape, store, mlp, tape.constant(Matrix::Zero(1, 3))), ShapeError);
    Matrix bad = Matrix::Zero(1, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(mlp_forward(tape, store, mlp, tape.constant(bad)), NumericError);
  }
}

TEST_CASE("backward examples") {
  SUBCASE("w^2 at 3 has gradient 6") {
    ParamStore store;
    store.add("w", Matrix::Constant(1, 1, 3.0));
    Tape tape;
    const Var w = tape.param(store, 0);
    tape.backward(square(w));
    CHECK(tape.gradients(store)[0](0, 0) == 6.0);
  }
  SUBCASE("linear layer with squared error") {
    Rng rng(3);
    ParamStore store;
    store.add("w", standard_normal(3, 1, rng));
    const Matrix x = standard_normal(1, 3, rng);
    const double target = 0.7;
    Tape tape;
    const Var pred = matmul(tape.constant(x), tape.param(store, 0));
    tape.backward(sum(square(pred - tape.constant(Matrix::Constant(1, 1, target)))));
    const Matrix expected = 2.0 * (pred.scalar() - target) * x.transpose();
    CHECK((tape.gradients(store)[0] - expected).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("random small net agrees with central differences") {
    Rng rng(11);
    ParamStore store;
    const Mlp mlp = add_mlp(store, "net", {{3, 6, 6, 2}, Activation::Silu, Activation::Identity}, rng);
    const Matrix x = standard_normal(5, 3, rng);
    const auto report = finite_diff_check(
        [&](Tape& tape, const ParamStore& p) { return mean(square(mlp_forward(tape, p, mlp, tape.constant(x)))); },
        store, 1e-5);
    CHECK(report.max_relative_error < 1e-6);
  }
  SUBCASE("gradient queries before backward raise a state error") {
    ParamStore store;
    store.add("w", Matrix::Ones(1, 1));
    Tape tape;
    const Var w = tape.param(store, 0);
    CHECK_THROWS_AS(tape.gradients(store), StateError);
    CHECK_THROWS_AS(tape.grad(w), StateError);
    CHECK_THROWS_AS(tape.backward(Var{}), StateError);
  }
}

TEST_CASE("every primitive agrees with central differences") {
  Rng rng(5);
  ParamStore p = random_store({{"a", {3, 4}}, {"b", {3, 4}}, {"m", {4, 2}}, {"r", {1, 4}}, {"c", {3, 1}}, {"s", {1, 1}}},
                              rng);
  // keep log and atan2 away from their singular points
  p.mutable_value(1).array() = p.value(1).array().abs() + 0.5;
  using Fn = std::function<Var(Tape&, Var, Var, Var, Var, Var, Var)>;
  const std::vector<std::pair<const char*, Fn>> cases = {
      {"matmul", [](Tape&, Var a, Var, Var m, Var, Var, Var) { return matmul(a, m); }},
      {"add_row", [](Tape&, Var a, Var, Var, Var r, Var, Var) { return add_row(a, r); }},
      {"add/sub/mul", [](Tape&, Var a, Var b, Var, Var, Var, Var) { return (a + b) * (a - b) * b; }},
      {"scalars", [](Tape&, Var a, Var, Var, Var, Var, Var) { return 2.0 - (3.0 * a + 1.0) * 0.5; }},
      {"scale", [](Tape&, Var a, Var, Var, Var, Var, Var s) { return scale(s, a); }},
      {"mul_col", [](Tape&, Var a, Var, Var, Var, Var c, Var) { return mul_col(a, c); }},
      {"tanh", [](Tape&, Var a, Var, Var, Var, Var, Var) { return tanh(a); }},
      {"silu", [](Tape&, Var a, Var, Var, Var, Var, Var) { return silu(a); }},
      {"exp/log", [](Tape&, Var a, Var b, Var, Var, Var, Var) { return exp(a) + log(b); }},
      {"softplus", [](Tape&, Var a, Var, Var, Var, Var, Var) { return softplus(3.0 * a); }},
      {"sin/cos", [](Tape&, Var a, Var b, Var, Var, Var, Var) { return sin(a) * cos(b); }},
      {"atan2", [](Tape&, Var a, Var b, Var, Var, Var, Var) { return atan2(a, b); }},
      {"minimum", [](Tape&, Var a, Var b, Var, Var, Var, Var) { return minimum(a, b); }},
      {"soft bounds", [](Tape&, Var a, Var, Var, Var r, Var, Var) { return soft_lower(soft_upper(a, r), r - 2.0); }},
      {"concat/slice", [](Tape&, Var a, Var b, Var, Var, Var, Var) { return slice_cols(concat_cols({a, b}), 2, 4); }},
      {"gather/assemble",
       [](Tape&, Var a, Var b, Var, Var, Var, Var) {
         const std::vector<Index> r0{2, 0}, r1{1};
         const std::vector<std::vector<Index>> where{r0, r1};
         const std::vector<Var> parts{gather_rows(a, r0), gather_rows(b, r1)};
         return assemble_rows(parts, where, 3);
       }},
      {"row_sum/mean", [](Tape&, Var a, Var, Var, Var, Var, Var) { return scale(mean(a), square(row_sum(a))); }},
  };
  for (const auto& [name, fn] : cases) {
    const std::string op = name;
    CAPTURE(op);
    const Matrix weights = standard_normal(3, 4, rng);
    const auto report = finite_diff_check(
        [&](Tape& tape, const ParamStore& ps) {
          const Var out = fn(tape, tape.param(ps, 0), tape.param(ps, 1), tape.param(ps, 2), tape.param(ps, 3),
                             tape.param(ps, 4), tape.param(ps, 5));
          // contract the output with fixed weights so every entry matters
          const Matrix w = weights.topLeftCorner(out.rows(), std::min<Index>(out.cols(), 4));
          Var o = out.cols() > 4 ? slice_cols(out, 0, 4) : out;
          return sum(o * tape.constant(w));
        },
        p, 1e-6);
    CHECK(report.max_relative_error < 1e-6);
  }
}

TEST_CASE("variables receive input gradients and frozen params pass gradients through") {
  ParamStore frozen;
  frozen.add("w", Matrix::Constant(1, 1, 2.0));
  Tape tape;
  const Var x = tape.variable(Matrix::Constant(1, 1, 3.0));
  const Var w = tape.param(frozen, 0, false);
  tape.backward(square(x * w));
  CHECK(tape.grad(x)(0, 0) == doctest::Approx(2.0 * 6.0 * 2.0));
  CHECK(tape.gradients(frozen)[0](0, 0) == 0.0);
  CHECK_THROWS_AS(tape.param(frozen, 0, true), PreconditionError);
}

TEST_CASE("tape replay reproduces forward values bit-exactly") {
  Rng rng(8);
  ParamStore store;
  const Mlp mlp = add_mlp(store, "net", {{3, 8, 8, 2}}, rng);
  Tape tape;
  const Var y = mlp_forward(tape, store, mlp, tape.constant(standard_normal(7, 3, rng)));
  const auto g = gaussian_head(slice_cols(y, 0, 1), slice_cols(y, 1, 1), standard_normal(7, 1, rng));
  const Var out = sum(g.log_prob) + sum(g.value);
  CHECK(tape.replay(out) == out.value());
}

TEST_CASE("finite_diff_check: exact quadratic, epsilon range") {
  ParamStore p;
  p.add("x", (Matrix(1, 3) << 0.3, -1.2, 2.0).finished());
  const LossBuilder quad = [](Tape& t, const ParamStore& ps) { return sum(square(t.param(ps, 0) - 0.5)); };
  CHECK(finite_diff_check(quad, p, 1e-4).max_relative_error < 1e-9);
  CHECK_THROWS_AS(finite_diff_check(quad, p, 1e-2), PreconditionError);
  CHECK_THROWS_AS(finite_diff_check(quad, p, 1e-8), PreconditionError);
}

TEST_CASE("adam_step examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Rng rng(2);
    ParamStore p = random_store({{"a", {2, 3}}}, rng);
    const ParamStore before = p;
    Adam opt(p);
    opt.step(p, zero_gradients(p));
    CHECK(p.value(0) == before.value(0));
    CHECK(p.step() == 1);
  }
  SUBCASE("first step on a scalar with g = 1 and lr = 0.1") {
    ParamStore p;
    p.add("x", Matrix::Constant(1, 1, 1.0));
    Adam opt(p, {0.1, 0.9, 0.999, 1e-8});
    opt.step(p, {Matrix::Constant(1, 1, 1.0)});
    // m_hat = 1, v_hat = 1 after bias correction
    const double expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
    CHECK(p.value(0)(0, 0) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(p.value(0)(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
  }
  SUBCASE("second step matches the hand-evaluated recursion") {
    ParamStore p;
    p.add("x", Matrix::Constant(1, 1, 0.0));
    Adam opt(p, {0.01, 0.9, 0.999, 1e-8});
    opt.step(p, {Matrix::Constant(1, 1, 2.0)});
    opt.step(p, {Matrix::Constant(1, 1, -1.0)});
    double m = 0, v = 0, x = 0;
    const double gs[2] = {2.0, -1.0};
    for (int t = 1; t <= 2; ++t) {
      m = 0.9 * m + 0.1 * gs[t - 1];
      v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
      x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(p.value(0)(0, 0) == doctest::Approx(x).epsilon(1e-14));
  }
  SUBCASE("non-finite gradient names the entry and leaves the store untouched") {
    ParamStore p;
    p.add("alpha", Matrix::Zero(1, 1));
    p.add("beta", Matrix::Zero(2, 2));
    Adam opt(p);
    Gradients g = zero_gradients(p);
    g[1](1, 0) = std::numeric_limits<double>::infinity();
    try {
      opt.step(p, g);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("beta") != std::string::npos);
    }
    CHECK(p.value(1).isZero(0.0));
    CHECK(opt.steps() == 0);
  }
  SUBCASE("two identical runs are bit-identical") {
    auto run = [] {
      Rng rng(42);
      ParamStore p;
      const Mlp mlp = add_mlp(p, "net", {{2, 5, 1}}, rng);
      Adam opt(p, {1e-2});
      const Matrix x = standard_normal(8, 2, rng);
      for (int i = 0; i < 20; ++i) {
        Tape t;
        t.backward(mean(square(mlp_forward(t, p, mlp, t.constant(x)))));
        opt.step(p, t.gradients(p));
      }
      return p.flatten();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("gaussian_head examples") {
  Tape tape;
  SUBCASE("zero noise gives the squashed mean") {
    const Matrix mu = (Matrix(2, 2) << 0.3, -2.0, 1.5, 0.0).finished();
    const auto s = gaussian_head(tape.constant(mu), tape.constant(Matrix::Constant(2, 2, -0.7)), Matrix::Zero(2, 2));
    CHECK((s.value.value() - Matrix(mu.array().tanh())).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("standard normal at zero in one dimension") {
    const auto s = gaussian_head(tape.constant(Matrix::Zero(1, 1)), tape.constant(Matrix::Zero(1, 1)), Matrix::Zero(1, 1));
    CHECK(s.log_prob.scalar() == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  }
  SUBCASE("log-density matches the change-of-variables formula") {
    Rng rng(9);
    const Matrix mu = standard_normal(4, 3, rng), ls = 0.3 * standard_normal(4, 3, rng), eps = standard_normal(4, 3, rng);
    const auto s = gaussian_head(tape.constant(mu), tape.constant(ls), eps);
    for (Index i = 0; i < 4; ++i) {
      double lp = 0.0, lp_first = 0.0;
      for (Index j = 0; j < 3; ++j) {
        const double sd = std::exp(ls(i, j));
        const double u = mu(i, j) + sd * eps(i, j);
        const double gauss = -0.5 * std::pow((u - mu(i, j)) / sd, 2) - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
        const double term = gauss - std::log(1.0 - std::pow(std::tanh(u), 2));
        lp += term;
        if (j == 0) lp_first = term;
      }
      CHECK(s.log_prob.value()(i, 0) == doctest::Approx(lp).epsilon(1e-10));
      // additivity: the first dimension alone
      Tape t2;
      const auto one = gaussian_head(t2.constant(mu.block(i, 0, 1, 1)), t2.constant(ls.block(i, 0, 1, 1)),
                                     eps.block(i, 0, 1, 1));
      CHECK(one.log_prob.scalar() == doctest::Approx(lp_first).epsilon(1e-12));
    }
  }
  SUBCASE("clamped log_std keeps densities finite for extreme inputs") {
    const Matrix mu = (Matrix(1, 3) << 50.0, -50.0, 0.0).finished();
    const Matrix ls = (Matrix(1, 3) << -1e3, 1e3, 40.0).finished();
    const auto s = gaussian_head(tape.constant(mu), tape.constant(ls), Matrix::Constant(1, 3, 3.0));
    CHECK(std::isfinite(s.log_prob.scalar()));
    CHECK((s.value.value().array().abs() < 1.0).all());
    CHECK(s.log_std.value()(0, 0) == kLogStdMin);
    CHECK(s.log_std.value()(0, 1) == kLogStdMax);
  }
  SUBCASE("sample and log-prob are differentiable through the mean and log-std") {
    Rng rng(13);
    ParamStore p;
    p.add("mu", standard_normal(3, 2, rng));
    p.add("ls", 0.2 * standard_normal(3, 2, rng));
    const Matrix eps = standard_normal(3, 2, rng);
    const auto report = finite_diff_check(
        [&](Tape& t, const ParamStore& ps) {
          const auto s = gaussian_head(t.param(ps, 0), t.param(ps, 1), eps);
          return sum(s.log_prob) + sum(square(s.value));
        },
        p, 1e-6);
    CHECK(report.max_relative_error < 1e-6);
  }
}

TEST_CASE("ParamStore invariants and polyak interpolation") {
  ParamStore a;
  a.add("w", Matrix::Ones(2, 2));
  CHECK_THROWS_AS(a.add("w", Matrix::Ones(1, 1)), PreconditionError);
  CHECK_THROWS_AS(a.set_value(0, Matrix::Ones(3, 3)), ShapeError);
  Rng rng(4);
  a.add("b", standard_normal(1, 3, rng));
  const Vector flat = a.flatten();
  ParamStore b = a;
  b.assign(Vector::Zero(flat.size()));
  b.assign(flat);
  CHECK(b.flatten() == flat);

  ParamStore online, target;
  online.add("x", Matrix::Constant(1, 1, 1.0));
  target.add("x", Matrix::Constant(1, 1, 0.0));
  target.interpolate_from(online, 0.005);
  CHECK(target.value(0)(0, 0) == 0.005);
  target.interpolate_from(online, 1.0);
  CHECK(target.value(0) == online.value(0));
  ParamStore same = a;
  same.interpolate_from(a, 0.37);
  CHECK(same.flatten() == a.flatten());
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
  Rng rng(21);
  Checkpoint c;
  c.meta["seed"] = "21";
  c.meta["config_digest"] = "abc def";
  Matrix odd = standard_normal(3, 2, rng);
  odd(0, 0) = -0.0;
  odd(1, 0) = std::numeric_limits<double>::denorm_min();
  odd(2, 1) = std::numeric_limits<double>::max();
  c.put("odd", odd);
  ParamStore store;
  add_mlp(store, "actor", {{3, 4, 2}}, rng);
  store.set_step(17);
  c.put_store("actor/", store);
  std::stringstream ss;
  write_checkpoint(ss, c);
  const Checkpoint back = read_checkpoint(ss);
  CHECK(back.meta == c.meta);
  const Matrix& o = back.get("odd");
  CHECK(o == odd);
  CHECK(std::signbit(o(0, 0)));
  ParamStore restored = store;
  restored.assign(Vector::Zero(store.total_size()));
  restored.set_step(0);
  back.load_store("actor/", restored);
  CHECK(restored.flatten() == store.flatten());
  CHECK(restored.step() == 17);

  std::stringstream bad("planval-ckpt v2\n");
  CHECK_THROWS_AS(read_checkpoint(bad), ConfigError);
  CHECK_THROWS_AS(back.get("missing"), ConfigError);
}
