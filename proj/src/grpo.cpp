#include "tigflow/grpo.hpp"

#include <cmath>
#include <numeric>

#include "tigflow/error.hpp"
#include "tigflow/parallel.hpp"

namespace tigflow {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) throw ConfigError("grpo.eps_clip must be in (0, 1)");
  if (!(beta >= 0.0)) throw ConfigError("grpo.beta must be >= 0");
  if (!(eps_adv > 0.0)) throw ConfigError("grpo.eps_adv must be > 0");
  if (inner_epochs < 1) throw ConfigError("grpo.inner_epochs must be >= 1");
  if (updates < 0) throw ConfigError("grpo.updates must be >= 0");
  if (conditions_per_update < 1) throw ConfigError("grpo.conditions_per_update must be >= 1");
  if (!(collision_threshold > 0.0)) throw ConfigError("grpo.collision_threshold must be > 0");
  if (checkpoint_every < 0) throw ConfigError("grpo.checkpoint_every must be >= 0");
  optim.validate();
}

std::vector<double> advantages(const std::vector<double>& rewards, double eps_adv) {
  if (rewards.size() < 2) throw std::invalid_argument("advantages: group size must be >= 2");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(rewards.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (rewards[i] - mean) / (sd + eps_adv);
  return a;
}

Eigen::VectorXd gaussian_kl_same_variance(const Matrix& mu_a, const Matrix& mu_b, double sigma) {
  return (mu_a - mu_b).rowwise().squaredNorm() / (2.0 * sigma * sigma);
}

RolloutGroup collect_group(const Model& policy, const Model& reference, const TrajectoryWindow& window,
                           const SceneMap* map, const SdeSchedule& schedule, const RewardConfig& reward,
                           const GrpoConfig& cfg, Rng& prior, std::span<Rng> noise_streams) {
  schedule.validate();
  if (!(schedule.eta > 0.0)) throw NumericError("collect_group: eta must be > 0 (degenerate sigma)");
  const int g_count = cfg.group_size;
  if (static_cast<int>(noise_streams.size()) != g_count) throw std::invalid_argument("collect_group: need G noise streams");

  RolloutGroup grp;
  grp.window = &window;
  grp.map = map;
  grp.context = context_tokens(policy, window);
  const Matrix ref_ctx = context_tokens(reference, window);
  const int n = window.num_agents();
  const int d = policy.flow.config.latent_dim();
  grp.xi.resize(n, d);
  for (Eigen::Index i = 0; i < grp.xi.size(); ++i) grp.xi.data()[i] = prior.normal();

  const VelocityFn v_pol = bind_velocity(policy.flow, grp.context);
  const VelocityFn v_ref = bind_velocity(reference.flow, ref_ctx);
  grp.rollouts.resize(g_count);
  grp.old_log_probs.resize(g_count);
  grp.ref_means.resize(g_count);
  for (int g = 0; g < g_count; ++g) {
    SdeRollout ro = sde_rollout(v_pol, grp.xi, schedule, noise_streams[g]);
    Rollout& r = grp.rollouts[g];
    r.preds_abs = latent_to_absolute(ro.final_state, window.origin, policy.latent_scale());
    r.rewards = score_window(window, r.preds_abs, map, reward);
    Matrix old(schedule.n_steps, n);
    for (int k = 0; k < schedule.n_steps; ++k) {
      const auto& st = ro.steps[k];
      old.row(k) = st.log_prob.transpose();
      grp.ref_means[g].push_back(transition_mean(st.y_in, v_ref(st.y_in, clip_time(st.t, schedule)), st.t, schedule));
    }
    grp.old_log_probs[g] = std::move(old);
    r.steps = std::move(ro.steps);
  }
  grp.advantages.resize(g_count, n);
  for (int a = 0; a < n; ++a) {
    std::vector<double> totals(g_count);
    for (int g = 0; g < g_count; ++g) totals[g] = grp.rollouts[g].rewards[a].total;
    const auto adv = advantages(totals, cfg.eps_adv);
    for (int g = 0; g < g_count; ++g) grp.advantages(g, a) = adv[g];
  }
  return grp;
}

GrpoLossResult grpo_loss(const Model& policy, std::span<const RolloutGroup> groups, const GrpoConfig& cfg,
                         const SdeSchedule& schedule) {
  ad::Tape tape;
  ParamBinding eb(tape, policy.encoder.params, cfg.train_encoder);
  ParamBinding fb(tape, policy.flow.params, true);
  GrpoLossResult res;
  std::vector<ad::Var> terms;
  double rows_total = 0.0;
  double surr_total = 0.0;
  double pen_total = 0.0;

  for (const auto& grp : groups) {
    const int g_count = grp.group_size();
    const int n = grp.window->num_agents();
    const int steps = static_cast<int>(grp.rollouts.front().steps.size());
    ad::Var ctx;
    if (cfg.train_encoder) {
      const TrajectoryWindow* w = grp.window;
      ctx = encode_batch(eb, policy.encoder, std::span<const TrajectoryWindow* const>(&w, 1)).tokens;
    } else {
      ctx = tape.constant(grp.context);
    }
    std::vector<int> rep(static_cast<std::size_t>(g_count) * n);
    for (std::size_t r = 0; r < rep.size(); ++r) rep[r] = static_cast<int>(r) % n;
    const ad::Var ctx_rows = ad::gather_rows(ctx, rep);

    Matrix adv(g_count * n, 1);
    for (int g = 0; g < g_count; ++g) {
      for (int a = 0; a < n; ++a) adv(g * n + a, 0) = grp.advantages(g, a);
    }
    const ad::Var adv_v = tape.constant(adv);
    Matrix ratios(g_count * steps, n);

    for (int k = 0; k < steps; ++k) {
      const auto& first = grp.rollouts.front().steps[k];
      const double sigma = first.sigma;
      if (!(sigma > 0.0)) throw NumericError("grpo_loss: degenerate sigma");
      const int d = static_cast<int>(first.y_in.cols());
      Matrix y_in(g_count * n, d), y_out(g_count * n, d), ref(g_count * n, d), old(g_count * n, 1);
      for (int g = 0; g < g_count; ++g) {
        const auto& st = grp.rollouts[g].steps[k];
        y_in.middleRows(g * n, n) = st.y_in;
        y_out.middleRows(g * n, n) = st.y_out;
        ref.middleRows(g * n, n) = grp.ref_means[g][k];
        old.middleRows(g * n, n) = grp.old_log_probs[g].row(k).transpose();
      }
      const ad::Var mu = transition_mean(fb, policy.flow, y_in, first.t, ctx_rows, schedule);
      const ad::Var logp = gaussian_log_prob(mu, y_out, sigma);
      const ad::Var ratio = ad::exp(logp - tape.constant(old));
      for (int g = 0; g < g_count; ++g) {
        for (int a = 0; a < n; ++a) {
          const double r = ratio.value()(g * n + a, 0);
          if (!std::isfinite(r)) {
            throw NumericError("grpo_loss: non-finite ratio at (g=" + std::to_string(g) + ", t=" + std::to_string(k) + ")");
          }
          ratios(g * steps + k, a) = r;
          res.max_ratio_dev = std::max(res.max_ratio_dev, std::abs(r - 1.0));
        }
      }
      const ad::Var clipped = ad::clip(ratio, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip);
      const ad::Var surr = ad::minimum(ad::mul(ratio, adv_v), ad::mul(clipped, adv_v));
      const ad::Var pen = ad::scale(ad::row_sum(ad::square(mu - tape.constant(ref))), 1.0 / (2.0 * sigma * sigma));
      terms.push_back(ad::sum(ad::add(ad::scale(surr, -1.0), ad::scale(pen, cfg.beta))));
      surr_total -= surr.value().sum();
      pen_total += pen.value().sum();
      rows_total += static_cast<double>(g_count * n);
    }
    res.ratios.push_back(std::move(ratios));
  }
  if (terms.empty()) throw std::invalid_argument("grpo_loss: no groups");
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  const ad::Var loss = ad::scale(total, 1.0 / rows_total);
  res.loss = loss.scalar();
  res.surrogate = surr_total / rows_total;
  res.kl_pen = pen_total / rows_total;
  if (!std::isfinite(res.loss)) throw NumericError("grpo_loss: non-finite loss");
  tape.backward(loss);
  res.flow_grads = policy.flow.params.zeros_like();
  res.encoder_grads = policy.encoder.params.zeros_like();
  fb.accumulate_grads(res.flow_grads);
  eb.accumulate_grads(res.encoder_grads);
  return res;
}

GrpoState GrpoState::init(const Model& model) {
  return {AdamWState::init(model.encoder.params), AdamWState::init(model.flow.params), 0};
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = stream(seed, "batch", epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

}  // namespace

std::vector<GrpoLogEntry> posttrain(Model& policy, const Model& reference, GrpoState& state,
                                    const std::vector<TrajectoryWindow>& windows, const SceneMap* map,
                                    const SdeSchedule& schedule, const RewardConfig& reward, const GrpoConfig& cfg,
                                    std::uint64_t seed, std::int64_t n_updates,
                                    const std::function<void(const GrpoLogEntry&)>& on_update) {
  cfg.validate();
  reward.validate();
  schedule.validate();
  if (windows.empty()) throw DataError("posttrain: no training windows");
  const std::size_t nw = windows.size();
  const int cpu = cfg.conditions_per_update;
  std::vector<GrpoLogEntry> log;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> order;

  for (std::int64_t i = 0; i < n_updates; ++i) {
    const auto u = static_cast<std::uint64_t>(state.update);
    std::vector<const TrajectoryWindow*> chosen;
    for (int c = 0; c < cpu; ++c) {
      const std::uint64_t idx = u * static_cast<std::uint64_t>(cpu) + static_cast<std::uint64_t>(c);
      const std::uint64_t epoch = idx / nw;
      if (epoch != cached_epoch) {
        order = epoch_order(nw, seed, epoch);
        cached_epoch = epoch;
      }
      chosen.push_back(&windows[order[idx % nw]]);
    }
    std::vector<RolloutGroup> groups(chosen.size());
    parallel_for(chosen.size(), [&](std::size_t c) {
      Rng prior = stream(seed, "prior", u, c);
      std::vector<Rng> noise;
      for (int g = 0; g < cfg.group_size; ++g) {
        noise.push_back(stream(seed, "sde", u, c * static_cast<std::size_t>(cfg.group_size) + static_cast<std::size_t>(g)));
      }
      groups[c] = collect_group(policy, reference, *chosen[c], map, schedule, reward, cfg, prior, noise);
    });

    GrpoLogEntry e;
    e.update = state.update;
    double count = 0.0;
    double rollouts = 0.0;
    for (const auto& grp : groups) {
      for (const auto& ro : grp.rollouts) {
        for (const auto& rb : ro.rewards) {
          e.mean_reward += rb.total;
          e.mean_r_sv += rb.r_sv;
          e.mean_r_map += rb.r_map;
          e.mean_r_acc += rb.r_acc;
          e.mean_r_sm += rb.r_sm;
          count += 1.0;
        }
        const std::vector<std::vector<Track>> world{ro.preds_abs};
        e.mean_collisions += static_cast<double>(
            collision_count(world, cfg.collision_threshold, static_cast<int>(ro.preds_abs.front().size())).colliding);
        rollouts += 1.0;
      }
    }
    e.mean_reward /= count;
    e.mean_r_sv /= count;
    e.mean_r_map /= count;
    e.mean_r_acc /= count;
    e.mean_r_sm /= count;
    e.mean_collisions /= rollouts;

    for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      GrpoLossResult lr = grpo_loss(policy, groups, cfg, schedule);
      const double gn = std::sqrt(lr.flow_grads.squared_norm() + lr.encoder_grads.squared_norm());
      if (!std::isfinite(gn)) throw NumericError("posttrain: non-finite gradient at update " + std::to_string(u));
      adamw_step(policy.flow.params, lr.flow_grads, state.flow, cfg.optim);
      if (cfg.train_encoder) adamw_step(policy.encoder.params, lr.encoder_grads, state.encoder, cfg.optim);
      if (epoch == 0) {
        e.kl_pen = lr.kl_pen;
        e.grad_norm = gn;
        e.loss = lr.loss;
      }
    }
    if (!policy.flow.params.all_finite() || !policy.encoder.params.all_finite()) {
      throw NumericError("posttrain: parameters became non-finite at update " + std::to_string(u));
    }
    ++state.update;
    log.push_back(e);
    if (on_update) on_update(e);
  }
  return log;
}

}  // namespace tigflow
