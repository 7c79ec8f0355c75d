#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tigflow/error.hpp"
#include "tigflow/flow.hpp"
#include "tigflow/optim.hpp"
#include "tigflow/rng.hpp"

using namespace tigflow;
namespace ad = tigflow::ad;

namespace {

FlowConfig toy_config() {
  FlowConfig c;
  c.future_len = 3;
  c.time_embed_dim = 4;
  c.context_proj_dim = 5;
  c.hidden = 7;
  c.depth = 2;
  return c;
}

Matrix normal_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("flow-matching path") {
  Rng rng(1);
  const Matrix y1 = normal_matrix(rng, 2, 6), xi = normal_matrix(rng, 2, 6);
  CHECK(cfm_path(y1, xi, 0.0).y_t == xi);
  CHECK(cfm_path(y1, xi, 1.0).y_t == y1);
  Matrix a = Matrix::Zero(1, 4), z = Matrix::Zero(1, 4);
  a(0, 0) = 2.0;
  const CfmSample h = cfm_path(a, z, 0.5);
  CHECK(h.y_t(0, 0) == 1.0);
  CHECK(h.target(0, 0) == 2.0);
  CHECK(h.y_t.rightCols(3).isZero(0.0));
}

TEST_CASE("time embedding") {
  Eigen::VectorXd t(2);
  t << 0.0, 0.25;
  const Matrix e = time_embedding(t, 4);
  CHECK(e(0, 0) == 0.0);
  CHECK(e(0, 1) == 1.0);
  CHECK(e(1, 0) == doctest::Approx(std::sin(M_PI * 0.25)));
  CHECK(e(1, 3) == doctest::Approx(std::cos(2 * M_PI * 0.25)));
}

TEST_CASE("zero network regresses onto the path velocity") {
  FlowNetParams p = FlowNetParams::init(toy_config(), 4, 2);
  p.params[p.out.weight].setZero();
  p.params[*p.out.bias].setZero();
  Rng data(3);
  const Matrix ctx = normal_matrix(data, 3, 4);
  const Matrix y1 = normal_matrix(data, 3, 6);
  Rng a(9), replay(9);
  ad::Tape tape;
  ParamBinding b(tape, p.params, false);
  const double loss = cfm_loss(b, p, tape.constant(ctx), y1, a, 2).scalar();
  double expect = 0.0;
  for (int r = 0; r < 6; ++r) {
    (void)replay.uniform();
    for (int c = 0; c < 6; ++c) {
      const double u = y1(r % 3, c) - replay.normal();
      expect += u * u;
    }
  }
  CHECK(std::abs(loss - expect / 36.0) < 1e-12);
}

TEST_CASE("flow-matching loss gradients match finite differences") {
  FlowNetParams p = FlowNetParams::init(toy_config(), 4, 4);
  Rng data(6);
  ParamSet ctx_set;
  ctx_set.add("ctx", normal_matrix(data, 3, 4));
  const Matrix y1 = normal_matrix(data, 3, 6);
  auto forward = [&](ParamBinding& b, ParamBinding& cb) {
    Rng r(77);
    return cfm_loss(b, p, cb(0), y1, r, 2);
  };
  ad::Tape tape;
  ParamBinding b(tape, p.params);
  ParamBinding cb(tape, ctx_set);
  tape.backward(forward(b, cb));
  ParamSet g = p.params.zeros_like(), gc = ctx_set.zeros_like();
  b.accumulate_grads(g);
  cb.accumulate_grads(gc);
  auto loss = [&] {
    ad::Tape t;
    ParamBinding bb(t, p.params), cc(t, ctx_set);
    return forward(bb, cc).scalar();
  };
  CHECK(oracle::fd_max_rel_error(p.params, g, loss) < 1e-4);
  CHECK(oracle::fd_max_rel_error(ctx_set, gc, loss) < 1e-4);
}

TEST_CASE("Euler integration") {
  Rng rng(8);
  const Matrix xi = normal_matrix(rng, 3, 4);
  const Matrix c = normal_matrix(rng, 3, 4);
  const VelocityFn constant = [&](const Matrix&, double) { return c; };
  const VelocityFn zero = [&](const Matrix& y, double) { return Matrix::Zero(y.rows(), y.cols()).eval(); };
  CHECK(euler_integrate(zero, xi, 7) == xi);
  for (int n : {1, 10, 100}) {
    CHECK((euler_integrate(constant, xi, n) - (xi + c)).cwiseAbs().maxCoeff() < 1e-12);
  }
  // time-dependent field v = 2t: exact Euler sum is (n - 1) / n
  const VelocityFn ramp = [&](const Matrix& y, double t) { return Matrix::Constant(y.rows(), y.cols(), 2 * t).eval(); };
  CHECK(std::abs(euler_integrate(ramp, Matrix::Zero(1, 1), 4)(0, 0) - 0.75) < 1e-15);
  const VelocityFn blowup = [&](const Matrix& y, double) {
    return Matrix::Constant(y.rows(), y.cols(), std::numeric_limits<double>::infinity()).eval();
  };
  CHECK_THROWS_AS((void)euler_integrate(blowup, xi, 3), NumericError);
}

TEST_CASE("AdamW") {
  ParamSet p;
  p.add("w", Matrix::Constant(1, 1, 0.5));
  ParamSet g = p.zeros_like();
  AdamWConfig cfg;
  cfg.learning_rate = 0.01;
  AdamWState s = AdamWState::init(p);
  adamw_step(p, g, s, cfg);
  CHECK(p[0](0, 0) == 0.5);

  g[0](0, 0) = 1.0;
  AdamWState s2 = AdamWState::init(p);
  adamw_step(p, g, s2, cfg);
  CHECK(std::abs(p[0](0, 0) - (0.5 - 0.01 / (1.0 + 1e-8))) < 1e-15);

  auto run = [&] {
    ParamSet q;
    q.add("w", Matrix::Constant(2, 2, 1.0));
    AdamWState st = AdamWState::init(q);
    AdamWConfig c;
    c.weight_decay = 0.1;
    c.grad_clip = 0.5;
    std::vector<Matrix> traj;
    for (int i = 0; i < 5; ++i) {
      ParamSet gr = q.zeros_like();
      gr[0] = q[0] * 3.0;
      adamw_step(q, gr, st, c);
      traj.push_back(q[0]);
    }
    return traj;
  };
  CHECK(run() == run());
}
