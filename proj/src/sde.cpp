#include "tigflow/sde.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include "tigflow/error.hpp"

namespace tigflow {

void SdeSchedule::validate() const {
  if (!(eta >= 0.0)) throw ConfigError("sde.eta must be >= 0");
  if (!(tau_min > 0.0 && tau_min < 0.5)) throw ConfigError("sde.tau_min must be in (0, 0.5)");
  if (n_steps < 1) throw ConfigError("sde.n_steps must be >= 1");
}

double clip_time(double t, const SdeSchedule& s) { return std::clamp(t, s.tau_min, 1.0 - s.tau_min); }

Matrix recover_score(const Matrix& y, const Matrix& v, double t_bar) {
  if (t_bar >= 1.0 - 1e-12) throw NumericError("recover_score: t_bar must be < 1");
  return (t_bar * v - y) / (1.0 - t_bar);
}

double diffusion_coeff(double t_bar, const SdeSchedule& s) {
  if (!(t_bar > 0.0)) throw NumericError("diffusion_coeff: t_bar must be > 0");
  return s.eta * std::sqrt((1.0 - t_bar) / t_bar);
}

double step_sigma(double t, const SdeSchedule& s) { return diffusion_coeff(clip_time(t, s), s) * std::sqrt(s.dt()); }

Matrix transition_mean(const Matrix& y, const Matrix& v, double t, const SdeSchedule& s) {
  // Expanded form of y + [v + g^2 s / 2] dt; the tape version below uses the
  // same arithmetic so recorded and recomputed densities agree bit for bit.
  const double tb = clip_time(t, s);
  const double g = diffusion_coeff(tb, s);
  if (tb >= 1.0 - 1e-12) throw NumericError("transition_mean: t_bar must be < 1");
  const double c = 0.5 * g * g * s.dt() / (1.0 - tb);
  return y * (1.0 - c) + v * (s.dt() + c * tb);
}

Eigen::VectorXd gaussian_log_prob(const Matrix& x, const Matrix& mean, double sigma) {
  const double d = static_cast<double>(x.cols());
  const double var = sigma * sigma;
  const Eigen::VectorXd sq = (x - mean).rowwise().squaredNorm();
  return (-0.5 * d * std::log(2.0 * std::numbers::pi * var) - sq.array() / (2.0 * var)).matrix();
}

SdeStepRecord sde_step(const Matrix& y, double t, const VelocityFn& v, const SdeSchedule& s, Rng& rng) {
  SdeStepRecord r;
  r.t = t;
  r.y_in = y;
  const double tb = clip_time(t, s);
  r.mean = transition_mean(y, v(y, tb), t, s);
  r.sigma = step_sigma(t, s);
  r.noise.resize(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < r.noise.size(); ++i) r.noise.data()[i] = rng.normal();
  if (!r.mean.allFinite()) throw NumericError("sde_step: non-finite mean at t=" + std::to_string(t));
  r.degenerate = r.sigma == 0.0;
  if (r.degenerate) {
    r.y_out = r.mean;
    r.log_prob = Eigen::VectorXd::Constant(y.rows(), std::numeric_limits<double>::quiet_NaN());
  } else {
    r.y_out = r.mean + r.sigma * r.noise;
    r.log_prob = gaussian_log_prob(r.y_out, r.mean, r.sigma);
  }
  if (!r.y_out.allFinite()) throw NumericError("sde_step: non-finite state at t=" + std::to_string(t));
  return r;
}

SdeRollout sde_rollout(const VelocityFn& v, const Matrix& xi, const SdeSchedule& s, Rng& rng) {
  s.validate();
  SdeRollout out;
  out.steps.reserve(static_cast<std::size_t>(s.n_steps));
  Matrix y = xi;
  for (int k = 0; k < s.n_steps; ++k) {
    out.steps.push_back(sde_step(y, s.time(k), v, s, rng));
    y = out.steps.back().y_out;
  }
  out.final_state = std::move(y);
  return out;
}

namespace {
void check_sigma(const SdeStepRecord& r, const SdeSchedule& s) {
  const double expect = step_sigma(r.t, s);
  if (r.sigma == 0.0 || expect == 0.0) throw NumericError("log_prob_under: degenerate sigma");
  if (std::abs(r.sigma - expect) > 1e-12 * std::max(1.0, expect)) {
    throw NumericError("log_prob_under: recorded sigma does not match the schedule");
  }
}
}  // namespace

Matrix log_prob_under(const VelocityFn& v, const std::vector<SdeStepRecord>& steps, const SdeSchedule& s) {
  if (steps.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(steps.size()), steps.front().y_in.rows());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto& r = steps[k];
    check_sigma(r, s);
    const Matrix mean = transition_mean(r.y_in, v(r.y_in, clip_time(r.t, s)), r.t, s);
    out.row(static_cast<Eigen::Index>(k)) = gaussian_log_prob(r.y_out, mean, r.sigma).transpose();
  }
  return out;
}

ad::Var transition_mean(ParamBinding& b, const FlowNetParams& p, const Matrix& y_in, double t, const ad::Var& ctx,
                        const SdeSchedule& s) {
  // mu = y + [v + g^2/2 (tb v - y)/(1 - tb)] dt = y (1 - c) + v (dt + c tb), c = g^2 dt / (2 (1 - tb))
  const double tb = clip_time(t, s);
  const double g = diffusion_coeff(tb, s);
  const double c = 0.5 * g * g * s.dt() / (1.0 - tb);
  ad::Tape& tape = b.tape();
  const ad::Var v = flow_velocity(b, p, tape.constant(y_in), Eigen::VectorXd::Constant(y_in.rows(), tb), ctx);
  return ad::add(tape.constant(y_in * (1.0 - c)), ad::scale(v, s.dt() + c * tb));
}

ad::Var gaussian_log_prob(const ad::Var& mean, const Matrix& x, double sigma) {
  const double d = static_cast<double>(x.cols());
  const double var = sigma * sigma;
  const ad::Var sq = ad::row_sum(ad::square(mean - mean.tape()->constant(x)));
  return ad::shift(ad::scale(sq, -1.0 / (2.0 * var)), -0.5 * d * std::log(2.0 * std::numbers::pi * var));
}

namespace {
nlohmann::json rows_json(const Matrix& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
    a.push_back(row);
  }
  return a;
}
}  // namespace

void write_trace_jsonl(std::ostream& out, const std::vector<SdeStepRecord>& steps) {
  for (const auto& r : steps) {
    nlohmann::json j;
    j["t"] = r.t;
    j["sigma"] = r.sigma;
    j["degenerate"] = r.degenerate;
    j["y_in"] = rows_json(r.y_in);
    j["mean"] = rows_json(r.mean);
    j["y_out"] = rows_json(r.y_out);
    j["noise"] = rows_json(r.noise);
    if (r.degenerate) {
      j["log_prob"] = nullptr;
    } else {
      j["log_prob"] = std::vector<double>(r.log_prob.data(), r.log_prob.data() + r.log_prob.size());
    }
    out << j.dump() << '\n';
  }
}

}  // namespace tigflow
