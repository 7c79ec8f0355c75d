#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "toy_model.hpp"
#include "tigflow/grpo.hpp"
#include "tigflow/sde.hpp"

using namespace tigflow;

namespace {

struct Setup {
  Model policy = toy::model(1);
  Model reference = toy::model(1);
  TrajectoryWindow window;
  SdeSchedule schedule;
  GrpoConfig cfg;
  RewardConfig reward;

  Setup() {
    Rng rng(4);
    window = toy::window(rng, 3);
    schedule.n_steps = 2;
    cfg.group_size = 2;
  }

  RolloutGroup collect(std::uint64_t seed = 9) {
    Rng prior = stream(seed, "prior");
    std::vector<Rng> noise;
    for (int g = 0; g < cfg.group_size; ++g) noise.push_back(stream(seed, "sde", 0, g));
    return collect_group(policy, reference, window, nullptr, schedule, reward, cfg, prior, noise);
  }
};

}  // namespace

TEST_CASE("group advantages") {
  const auto a = advantages({1, 2, 3, 4}, 1e-8);
  const double expect[] = {-1.3416407865, -0.4472135955, 0.4472135955, 1.3416407865};
  for (int i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(expect[i]).epsilon(1e-8));
  for (double x : advantages({5, 5, 5, 5}, 1e-8)) CHECK(x == 0.0);
  const auto two = advantages({0, 2}, 1e-8);
  CHECK(two[0] == doctest::Approx(-1.0));
  CHECK(two[1] == doctest::Approx(1.0));
  const auto shifted = advantages({1 + 7.5, 2 + 7.5, 3 + 7.5, 4 + 7.5}, 1e-8);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(shifted[i] - a[i]) < 1e-12);
}

TEST_CASE("clipped surrogate picks the clipped ratio for positive advantage") {
  ad::Tape tape;
  const ad::Var r = tape.constant(Matrix::Constant(1, 1, 1.3));
  const ad::Var adv = tape.constant(Matrix::Constant(1, 1, 1.0));
  const ad::Var s = ad::minimum(ad::mul(r, adv), ad::mul(ad::clip(r, 0.8, 1.2), adv));
  CHECK(s.scalar() == 1.2);
}

TEST_CASE("on-policy loss is the reference penalty only") {
  Setup s;
  const RolloutGroup grp = s.collect();
  const RolloutGroup again = s.collect();
  CHECK(grp.xi == again.xi);
  CHECK(grp.rollouts[1].preds_abs == again.rollouts[1].preds_abs);

  const GrpoLossResult res = grpo_loss(s.policy, std::span<const RolloutGroup>(&grp, 1), s.cfg, s.schedule);
  CHECK(res.max_ratio_dev < 1e-12);
  CHECK(std::abs(res.surrogate) < 1e-12);
  CHECK(res.kl_pen == 0.0);
  CHECK(std::abs(res.loss) < 1e-12);
  for (int a = 0; a < 3; ++a) {
    const double m = (grp.advantages(0, a) + grp.advantages(1, a)) / 2;
    CHECK(std::abs(m) < 1e-9);
  }
}

TEST_CASE("reference penalty equals the same-variance Gaussian KL") {
  Setup s;
  Rng rng(3);
  toy::perturb(s.policy.flow.params, rng, 0.05);
  const RolloutGroup grp = s.collect();
  const GrpoLossResult res = grpo_loss(s.policy, std::span<const RolloutGroup>(&grp, 1), s.cfg, s.schedule);
  double kl = 0.0, rows = 0.0;
  const VelocityFn v = bind_velocity(s.policy.flow, grp.context);
  for (int g = 0; g < 2; ++g) {
    for (int k = 0; k < 2; ++k) {
      const auto& st = grp.rollouts[g].steps[k];
      const Matrix mu = transition_mean(st.y_in, v(st.y_in, clip_time(st.t, s.schedule)), st.t, s.schedule);
      kl += gaussian_kl_same_variance(mu, grp.ref_means[g][k], st.sigma).sum();
      rows += 3;
    }
  }
  CHECK(kl > 0.0);
  CHECK(std::abs(res.kl_pen - kl / rows) < 1e-12);
}

TEST_CASE("GRPO loss gradients match finite differences") {
  for (bool encoder : {false, true}) {
    CAPTURE(encoder);
    Setup s;
    s.cfg.train_encoder = encoder;
    s.cfg.beta = 0.5;
    Rng rng(5);
    toy::perturb(s.reference.flow.params, rng, 0.05);
    const RolloutGroup grp = s.collect();
    // move the policy off the sampling point so ratios and the penalty are live
    toy::perturb(s.policy.flow.params, rng, 0.004);
    const std::span<const RolloutGroup> groups(&grp, 1);
    const GrpoLossResult res = grpo_loss(s.policy, groups, s.cfg, s.schedule);
    CHECK(res.max_ratio_dev > 1e-4);
    CHECK(res.max_ratio_dev < s.cfg.eps_clip);
    auto loss = [&] { return grpo_loss(s.policy, groups, s.cfg, s.schedule).loss; };
    CHECK(oracle::fd_max_rel_error(s.policy.flow.params, res.flow_grads, loss) < 1e-4);
    if (encoder) CHECK(oracle::fd_max_rel_error(s.policy.encoder.params, res.encoder_grads, loss) < 1e-4);
  }
}

TEST_CASE("null rewards leave the parameters untouched") {
  Setup s;
  s.reward.weights = {0, 0, 0, 0};
  GrpoState st = GrpoState::init(s.policy);
  const Model before = s.policy;
  s.cfg.optim.learning_rate = 1e-2;
  (void)posttrain(s.policy, s.reference, st, {s.window}, nullptr, s.schedule, s.reward, s.cfg, 1, 1);
  CHECK(s.policy.flow.params == before.flow.params);
}

TEST_CASE("larger beta keeps the policy closer to the reference") {
  Rng rng(8);
  std::vector<TrajectoryWindow> ws;
  for (int i = 0; i < 4; ++i) ws.push_back(toy::window(rng, 3));
  Matrix probe(5, 4);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.normal();
  double last = 1e300;
  for (double beta : {0.01, 1.0, 1e6}) {
    Setup s;
    s.cfg.beta = beta;
    s.cfg.group_size = 4;
    s.cfg.optim.learning_rate = 1e-3;
    GrpoState st = GrpoState::init(s.policy);
    (void)posttrain(s.policy, s.reference, st, ws, nullptr, s.schedule, s.reward, s.cfg, 2, 40);
    const Matrix ctx = context_tokens(s.policy, ws[0]);
    double drift = 0.0;
    for (int r = 0; r < 5; ++r) {
      const Matrix y = probe.row(r);
      for (int k = 0; k < s.schedule.n_steps; ++k) {
        const double t = s.schedule.time(k), tb = clip_time(t, s.schedule);
        const Matrix c = ctx.row(0);
        const Matrix a = transition_mean(y, flow_velocity(s.policy.flow, y, tb, c), t, s.schedule);
        const Matrix b = transition_mean(y, flow_velocity(s.reference.flow, y, tb, c), t, s.schedule);
        drift = std::max(drift, (a - b).cwiseAbs().maxCoeff());
      }
    }
    CAPTURE(beta);
    CHECK(drift < last);
    last = drift;
  }
}
