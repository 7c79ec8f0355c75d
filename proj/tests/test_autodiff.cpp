#include <doctest.h>

#include <functional>

#include "oracles.hpp"
#include "tigflow/autodiff.hpp"
#include "tigflow/params.hpp"
#include "tigflow/rng.hpp"

using namespace tigflow;
namespace ad = tigflow::ad;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Builds a scalar loss from the parameter blocks and checks its tape gradient
// against central differences.
double check_op(ParamSet& ps, const std::function<ad::Var(ParamBinding&)>& f) {
  auto loss = [&] {
    ad::Tape tape;
    ParamBinding b(tape, ps);
    return f(b).scalar();
  };
  ad::Tape tape;
  ParamBinding b(tape, ps);
  ad::Var out = f(b);
  tape.backward(out);
  ParamSet g = ps.zeros_like();
  b.accumulate_grads(g);
  return oracle::fd_max_rel_error(ps, g, loss);
}

// Weighted sum so every output entry gets a distinct cotangent.
ad::Var reduce(ad::Tape& tape, const ad::Var& x) {
  Matrix w(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return ad::sum(ad::mul(x, tape.constant(w)));
}

}  // namespace

TEST_CASE("every tape op matches finite differences") {
  Rng rng(7);
  ParamSet ps;
  const auto a = ps.add("a", random_matrix(rng, 3, 4));
  const auto b = ps.add("b", random_matrix(rng, 4, 5));
  const auto c = ps.add("c", random_matrix(rng, 3, 4));
  const auto row = ps.add("row", random_matrix(rng, 1, 4));
  const auto col = ps.add("col", random_matrix(rng, 3, 1));
  const auto s = ps.add("s", random_matrix(rng, 1, 1));
  Matrix pos = random_matrix(rng, 3, 4).cwiseAbs().array() + 0.5;
  const auto p = ps.add("p", pos);

  const std::vector<std::pair<const char*, std::function<ad::Var(ParamBinding&)>>> cases = {
      {"matmul", [&](ParamBinding& B) { return reduce(B.tape(), ad::matmul(B(a), B(b))); }},
      {"add", [&](ParamBinding& B) { return reduce(B.tape(), B(a) + B(c)); }},
      {"sub", [&](ParamBinding& B) { return reduce(B.tape(), B(a) - B(c)); }},
      {"mul", [&](ParamBinding& B) { return reduce(B.tape(), ad::mul(B(a), B(c))); }},
      {"div", [&](ParamBinding& B) { return reduce(B.tape(), ad::div(B(a), B(p))); }},
      {"add_row", [&](ParamBinding& B) { return reduce(B.tape(), ad::add_row(B(a), B(row))); }},
      {"mul_col", [&](ParamBinding& B) { return reduce(B.tape(), ad::mul_col(B(a), B(col))); }},
      {"mul_scalar", [&](ParamBinding& B) { return reduce(B.tape(), ad::mul_scalar(B(a), B(s))); }},
      {"scale_shift", [&](ParamBinding& B) { return reduce(B.tape(), ad::shift(ad::scale(B(a), -1.7), 0.4)); }},
      {"tanh", [&](ParamBinding& B) { return reduce(B.tape(), ad::tanh(B(a))); }},
      {"sigmoid", [&](ParamBinding& B) { return reduce(B.tape(), ad::sigmoid(B(a))); }},
      {"exp", [&](ParamBinding& B) { return reduce(B.tape(), ad::exp(B(a))); }},
      {"square", [&](ParamBinding& B) { return reduce(B.tape(), ad::square(B(a))); }},
      {"row_sum", [&](ParamBinding& B) { return reduce(B.tape(), ad::row_sum(B(a))); }},
      {"row_mean", [&](ParamBinding& B) { return reduce(B.tape(), ad::row_mean(B(a))); }},
      {"mean", [&](ParamBinding& B) { return ad::mean(ad::square(B(a))); }},
      {"concat_slice",
       [&](ParamBinding& B) {
         return reduce(B.tape(), ad::slice_cols(ad::concat_cols({B(a), B(c), B(col)}), 2, 6));
       }},
      {"gather_rows", [&](ParamBinding& B) { return reduce(B.tape(), ad::gather_rows(B(a), {2, 0, 2, 1})); }},
      {"segment_sum", [&](ParamBinding& B) { return reduce(B.tape(), ad::segment_sum(B(a), {1, 1, 0}, 3)); }},
      {"layer_norm", [&](ParamBinding& B) { return reduce(B.tape(), ad::layer_norm(B(a), B(row), B(row))); }},
      {"attention",
       [&](ParamBinding& B) {
         return reduce(B.tape(), ad::attention(B(a), B(c), ad::tanh(B(c)), {{0, 2}, {2, 1}}));
       }},
      {"clip", [&](ParamBinding& B) { return reduce(B.tape(), ad::clip(B(a), -0.5, 0.5)); }},
      {"minimum", [&](ParamBinding& B) { return reduce(B.tape(), ad::minimum(B(a), B(c))); }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    CHECK(check_op(ps, fn) < 1e-6);
  }
}

TEST_CASE("constants receive no gradient and shape errors throw") {
  ad::Tape tape;
  ad::Var x = tape.variable(Matrix::Ones(2, 2));
  ad::Var k = tape.constant(Matrix::Constant(2, 2, 3.0));
  ad::Var y = ad::sum(ad::mul(x, k));
  tape.backward(y);
  CHECK(tape.grad(x).isApprox(Matrix::Constant(2, 2, 3.0)));
  CHECK(tape.grad(k).isZero());
  CHECK_THROWS_AS((void)ad::matmul(x, tape.constant(Matrix::Ones(3, 1))), std::invalid_argument);
  CHECK_THROWS_AS((void)ad::add(x, tape.constant(Matrix::Ones(1, 2))), std::invalid_argument);
}

TEST_CASE("attention rows only see their own range") {
  ad::Tape tape;
  Matrix q = Matrix::Zero(3, 2);
  Matrix v(3, 2);
  v << 1, 2, 3, 4, 10, 20;
  ad::Var out = ad::attention(tape.constant(q), tape.constant(q), tape.constant(v), {{0, 2}, {2, 1}});
  // zero logits -> uniform weights inside each range
  CHECK(out.value()(0, 0) == doctest::Approx(2.0));
  CHECK(out.value()(1, 1) == doctest::Approx(3.0));
  CHECK(out.value()(2, 0) == 10.0);
}
