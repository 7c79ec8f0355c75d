#include "tigflow/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tigflow/error.hpp"

namespace tigflow {

namespace {

using nlohmann::json;

// Reads keys from one JSON object and rejects whatever was not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + where() + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, int>) {
        if (!it->is_number_integer()) throw ConfigError("config: '" + name(key) + "' must be an integer");
        if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (it->is_number_unsigned() || it->template get<std::int64_t>() >= 0) {
            out = it->template get<std::uint64_t>();
          } else {
            throw ConfigError("config: '" + name(key) + "' must be non-negative");
          }
        } else {
          out = it->template get<int>();
        }
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("config: '" + name(key) + "' must be a number");
        out = it->template get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("config: '" + name(key) + "' must be a boolean");
        out = it->template get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("config: '" + name(key) + "' must be a string");
        out = it->template get<std::string>();
      } else {
        out = it->template get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError("config: '" + name(key) + "': " + e.what());
    }
  }

  // Child object; an absent key yields an empty object.
  Section child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, name(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + name(k) + "'");
    }
  }

 private:
  [[nodiscard]] std::string where() const { return path_.empty() ? "<root>" : path_; }
  [[nodiscard]] std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read(Section s, FovConfig& c) {
  s.get("theta_fov_deg", c.theta_fov_deg);
  s.get("window", c.window);
  s.get("top_k", c.top_k);
  s.get("eps", c.eps);
  s.finish();
}

void read(Section s, EncoderConfig& c) {
  s.get("dim", c.dim);
  read(s.child("fov"), c.fov);
  s.get("use_absolute_position", c.use_absolute_position);
  s.get("position_scale", c.position_scale);
  s.get("input_scale", c.input_scale);
  s.get("lambda_init", c.lambda_init);
  s.finish();
}

void read(Section s, FlowConfig& c) {
  s.get("future_len", c.future_len);
  s.get("time_embed_dim", c.time_embed_dim);
  s.get("context_proj_dim", c.context_proj_dim);
  s.get("hidden", c.hidden);
  s.get("depth", c.depth);
  s.get("latent_scale", c.latent_scale);
  s.get("ode_steps", c.ode_steps);
  s.finish();
}

void read(Section s, AdamWConfig& c) {
  s.get("learning_rate", c.learning_rate);
  s.get("beta1", c.beta1);
  s.get("beta2", c.beta2);
  s.get("eps", c.eps);
  s.get("weight_decay", c.weight_decay);
  s.get("grad_clip", c.grad_clip);
  s.finish();
}

void read(Section s, TrainConfig& c) {
  read(s.child("optim"), c.optim);
  s.get("batch_size", c.batch_size);
  s.get("steps", c.steps);
  s.get("draws_per_agent", c.draws_per_agent);
  s.get("train_encoder", c.train_encoder);
  s.get("checkpoint_every", c.checkpoint_every);
  s.finish();
}

void read(Section s, SdeSchedule& c) {
  s.get("eta", c.eta);
  s.get("tau_min", c.tau_min);
  s.get("n_steps", c.n_steps);
  s.finish();
}

void read(Section s, GrpoConfig& c) {
  s.get("group_size", c.group_size);
  s.get("eps_clip", c.eps_clip);
  s.get("beta", c.beta);
  s.get("eps_adv", c.eps_adv);
  s.get("inner_epochs", c.inner_epochs);
  s.get("updates", c.updates);
  s.get("conditions_per_update", c.conditions_per_update);
  s.get("train_encoder", c.train_encoder);
  s.get("collision_threshold", c.collision_threshold);
  s.get("checkpoint_every", c.checkpoint_every);
  read(s.child("optim"), c.optim);
  s.finish();
}

void read(Section s, RewardConfig& c) {
  {
    Section so = s.child("social");
    auto& x = c.social;
    so.get("radius", x.radius);
    so.get("phi_s", x.phi_s);
    so.get("phi_w", x.phi_w);
    so.get("delta_s", x.delta_s);
    so.get("delta_w", x.delta_w);
    so.get("m_w", x.m_w);
    so.get("m_r", x.m_r);
    so.get("w_s", x.w_s);
    so.get("w_wc", x.w_wc);
    so.get("w_wo", x.w_wo);
    so.get("w_r", x.w_r);
    so.get("eps", x.eps);
    so.get("average_valid_only", x.average_valid_only);
    so.finish();
  }
  {
    Section sm = s.child("map");
    sm.get("delta_map", c.map.delta_map);
    sm.get("obs_indices", c.map.obs_indices);
    sm.finish();
  }
  {
    Section sw = s.child("weights");
    sw.get("w_sv", c.weights.w_sv);
    sw.get("w_map", c.weights.w_map);
    sw.get("w_acc", c.weights.w_acc);
    sw.get("w_sm", c.weights.w_sm);
    sw.finish();
  }
  s.finish();
}

void read(Section s, MetricsConfig& c) {
  s.get("k", c.k);
  s.get("collision_threshold", c.collision_threshold);
  s.get("horizons", c.horizons);
  s.get("count_single_agent", c.count_single_agent);
  s.get("delta_map", c.delta_map);
  s.get("obs_indices", c.obs_indices);
  s.finish();
}

void read(Section s, DataConfig& c) {
  s.get("source", c.source);
  {
    Section ss = s.child("synth");
    auto& x = c.synth;
    ss.get("n_agents", x.n_agents);
    std::string scenario = to_string(x.scenario);
    ss.get("scenario", scenario);
    x.scenario = scenario_from_string(scenario);
    ss.get("noise_std", x.noise_std);
    ss.get("n_windows", x.n_windows);
    ss.get("first_window", x.first_window);
    ss.finish();
  }
  s.get("eval_windows", c.eval_windows);
  s.get("train_files", c.train_files);
  s.get("eval_files", c.eval_files);
  s.get("map_pgm", c.map_pgm);
  s.get("map_sidecar", c.map_sidecar);
  {
    Section sw = s.child("window");
    auto& w = c.window;
    sw.get("history_len", w.history_len);
    sw.get("future_len", w.future_len);
    sw.get("stride", w.stride);
    sw.get("dt", w.dt);
    std::string units = to_string(w.units);
    sw.get("units", units);
    w.units = units_from_string(units);
    sw.finish();
  }
  s.get("eval_stride", c.eval_stride);
  s.finish();
}

json fov_json(const FovConfig& c) {
  return {{"theta_fov_deg", c.theta_fov_deg}, {"window", c.window}, {"top_k", c.top_k}, {"eps", c.eps}};
}

json optim_json(const AdamWConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},       {"beta2", c.beta2},
          {"eps", c.eps},                     {"weight_decay", c.weight_decay}, {"grad_clip", c.grad_clip}};
}

}  // namespace

void DataConfig::validate() const {
  if (source == "synth") {
    synth.validate();
    if (eval_windows < 0) throw ConfigError("data.eval_windows must be >= 0");
  } else if (source == "files") {
    if (train_files.empty() && eval_files.empty()) throw ConfigError("data.source=files needs train_files or eval_files");
    for (const auto& f : train_files) {
      if (!std::filesystem::exists(f)) throw ConfigError("data.train_files: '" + f + "' does not exist");
    }
    for (const auto& f : eval_files) {
      if (!std::filesystem::exists(f)) throw ConfigError("data.eval_files: '" + f + "' does not exist");
    }
    if (map_pgm.empty() != map_sidecar.empty()) throw ConfigError("data.map_pgm and data.map_sidecar go together");
    if (!map_pgm.empty() && !std::filesystem::exists(map_pgm)) throw ConfigError("data.map_pgm: '" + map_pgm + "' does not exist");
    if (!map_sidecar.empty() && !std::filesystem::exists(map_sidecar)) {
      throw ConfigError("data.map_sidecar: '" + map_sidecar + "' does not exist");
    }
  } else {
    throw ConfigError("data.source must be 'synth' or 'files'");
  }
  if (window.history_len < 2 || window.future_len < 2) throw ConfigError("data.window lengths must be >= 2");
  if (window.stride < 1) throw ConfigError("data.window.stride must be >= 1");
  if (!(window.dt > 0.0)) throw ConfigError("data.window.dt must be > 0");
  if (eval_stride < 0) throw ConfigError("data.eval_stride must be >= 0");
}

void RunConfig::validate() const {
  data.validate();
  encoder.validate();
  flow.validate();
  train.validate();
  sde.validate();
  grpo.validate();
  reward.validate();
  metrics.validate(data.window.future_len);
  if (precision != "float64") throw ConfigError("precision must be 'float64'");
  if (flow.future_len != data.window.future_len) throw ConfigError("flow.future_len must equal data.window.future_len");
  for (int k : reward.map.obs_indices) {
    if (k >= data.window.history_len) throw ConfigError("reward.map.obs_indices exceeds the history length");
  }
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "");
  read(root.child("data"), c.data);
  read(root.child("encoder"), c.encoder);
  read(root.child("flow"), c.flow);
  read(root.child("train"), c.train);
  read(root.child("sde"), c.sde);
  read(root.child("grpo"), c.grpo);
  read(root.child("reward"), c.reward);
  read(root.child("metrics"), c.metrics);
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.get("precision", c.precision);
  root.finish();
  // The synthetic generator follows the window protocol.
  c.data.synth.history_len = c.data.window.history_len;
  c.data.synth.future_len = c.data.window.future_len;
  c.data.synth.dt = c.data.window.dt;
  c.data.synth.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const EncoderConfig& c) {
  return {{"dim", c.dim},
          {"fov", fov_json(c.fov)},
          {"use_absolute_position", c.use_absolute_position},
          {"position_scale", c.position_scale},
          {"input_scale", c.input_scale},
          {"lambda_init", c.lambda_init}};
}

json to_json(const FlowConfig& c) {
  return {{"future_len", c.future_len}, {"time_embed_dim", c.time_embed_dim}, {"context_proj_dim", c.context_proj_dim},
          {"hidden", c.hidden},         {"depth", c.depth},                   {"latent_scale", c.latent_scale},
          {"ode_steps", c.ode_steps}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  read(Section(j, "encoder"), c);
  c.validate();
  return c;
}

FlowConfig flow_config_from_json(const json& j) {
  FlowConfig c;
  read(Section(j, "flow"), c);
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  const auto& s = c.data.synth;
  j["data"] = {{"source", c.data.source},
               {"synth",
                {{"n_agents", s.n_agents},
                 {"scenario", to_string(s.scenario)},
                 {"noise_std", s.noise_std},
                 {"n_windows", s.n_windows},
                 {"first_window", s.first_window}}},
               {"eval_windows", c.data.eval_windows},
               {"train_files", c.data.train_files},
               {"eval_files", c.data.eval_files},
               {"map_pgm", c.data.map_pgm},
               {"map_sidecar", c.data.map_sidecar},
               {"window",
                {{"history_len", c.data.window.history_len},
                 {"future_len", c.data.window.future_len},
                 {"stride", c.data.window.stride},
                 {"dt", c.data.window.dt},
                 {"units", to_string(c.data.window.units)}}},
               {"eval_stride", c.data.eval_stride}};
  j["encoder"] = to_json(c.encoder);
  j["flow"] = to_json(c.flow);
  j["train"] = {{"optim", optim_json(c.train.optim)},
                {"batch_size", c.train.batch_size},
                {"steps", c.train.steps},
                {"draws_per_agent", c.train.draws_per_agent},
                {"train_encoder", c.train.train_encoder},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["sde"] = {{"eta", c.sde.eta}, {"tau_min", c.sde.tau_min}, {"n_steps", c.sde.n_steps}};
  const auto& g = c.grpo;
  j["grpo"] = {{"group_size", g.group_size},
               {"eps_clip", g.eps_clip},
               {"beta", g.beta},
               {"eps_adv", g.eps_adv},
               {"inner_epochs", g.inner_epochs},
               {"updates", g.updates},
               {"conditions_per_update", g.conditions_per_update},
               {"train_encoder", g.train_encoder},
               {"collision_threshold", g.collision_threshold},
               {"checkpoint_every", g.checkpoint_every},
               {"optim", optim_json(g.optim)}};
  const auto& so = c.reward.social;
  j["reward"] = {{"social",
                  {{"radius", so.radius},
                   {"phi_s", so.phi_s},
                   {"phi_w", so.phi_w},
                   {"delta_s", so.delta_s},
                   {"delta_w", so.delta_w},
                   {"m_w", so.m_w},
                   {"m_r", so.m_r},
                   {"w_s", so.w_s},
                   {"w_wc", so.w_wc},
                   {"w_wo", so.w_wo},
                   {"w_r", so.w_r},
                   {"eps", so.eps},
                   {"average_valid_only", so.average_valid_only}}},
                 {"map", {{"delta_map", c.reward.map.delta_map}, {"obs_indices", c.reward.map.obs_indices}}},
                 {"weights",
                  {{"w_sv", c.reward.weights.w_sv},
                   {"w_map", c.reward.weights.w_map},
                   {"w_acc", c.reward.weights.w_acc},
                   {"w_sm", c.reward.weights.w_sm}}}};
  j["metrics"] = {{"k", c.metrics.k},
                  {"collision_threshold", c.metrics.collision_threshold},
                  {"horizons", c.metrics.horizons},
                  {"count_single_agent", c.metrics.count_single_agent},
                  {"delta_map", c.metrics.delta_map},
                  {"obs_indices", c.metrics.obs_indices}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["precision"] = c.precision;
  return j;
}

const std::vector<ConfigKeyDoc>& config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = {
      {"data.source", "", "'synth' (generated scenes) or 'files' (annotation files)"},
      {"data.synth.n_agents", "count", "agents per synthetic episode"},
      {"data.synth.scenario", "", "crossing_flows | corridor | obstacle_field"},
      {"data.synth.noise_std", "m", "observation noise std per recorded position"},
      {"data.synth.n_windows", "count", "training episodes"},
      {"data.synth.first_window", "index", "episode index offset"},
      {"data.eval_windows", "count", "held-out synthetic episodes following the training ones"},
      {"data.train_files", "paths", "annotation files for training (frame agent_id x y)"},
      {"data.eval_files", "paths", "annotation files for evaluation"},
      {"data.map_pgm", "path", "occupancy PGM for file data (>=128 = obstacle)"},
      {"data.map_sidecar", "path", "JSON with homography, rotation, cell_size"},
      {"data.window.history_len", "steps", "observed frames T_h"},
      {"data.window.future_len", "steps", "predicted frames T_f"},
      {"data.window.stride", "frames", "training window stride"},
      {"data.window.dt", "s", "seconds per sampled frame"},
      {"data.window.units", "", "meters | pixels"},
      {"data.eval_stride", "frames", "evaluation window stride; 0 = T_h + T_f"},
      {"encoder.dim", "", "embedding width D"},
      {"encoder.fov.theta_fov_deg", "deg", "field-of-view threshold on the heading/neighbour angle"},
      {"encoder.fov.window", "steps", "history frames accumulated for neighbour selection"},
      {"encoder.fov.top_k", "count", "neighbour budget"},
      {"encoder.fov.eps", "", "stabilizer"},
      {"encoder.use_absolute_position", "", "append scaled world position to per-frame input"},
      {"encoder.position_scale", "1/m", "multiplier on world positions"},
      {"encoder.input_scale", "m", "divides positions and velocities"},
      {"encoder.lambda_init", "", "initial fusion scale lambda"},
      {"flow.future_len", "steps", "must equal data.window.future_len"},
      {"flow.time_embed_dim", "", "sinusoidal time embedding width (even)"},
      {"flow.context_proj_dim", "", "context projection width"},
      {"flow.hidden", "", "trunk width"},
      {"flow.depth", "", "trunk hidden layers"},
      {"flow.latent_scale", "m", "latent = relative future / latent_scale"},
      {"flow.ode_steps", "count", "Euler steps at inference"},
      {"train.optim.learning_rate", "", "AdamW step size"},
      {"train.optim.beta1", "", "first-moment decay"},
      {"train.optim.beta2", "", "second-moment decay"},
      {"train.optim.eps", "", "AdamW denominator stabilizer"},
      {"train.optim.weight_decay", "", "decoupled weight decay"},
      {"train.optim.grad_clip", "", "global gradient norm cap, 0 = off"},
      {"train.batch_size", "windows", "windows per pretraining step"},
      {"train.steps", "count", "pretraining steps"},
      {"train.draws_per_agent", "count", "(t, xi) draws per agent per step"},
      {"train.train_encoder", "", "train the encoder jointly with the flow"},
      {"train.checkpoint_every", "steps", "intermediate checkpoints, 0 = final only"},
      {"sde.eta", "", "noise level eta"},
      {"sde.tau_min", "", "time clip tau_min"},
      {"sde.n_steps", "count", "SDE rollout steps"},
      {"grpo.group_size", "count", "rollouts per condition G"},
      {"grpo.eps_clip", "", "ratio clip epsilon"},
      {"grpo.beta", "", "reference penalty weight"},
      {"grpo.eps_adv", "", "advantage stabilizer"},
      {"grpo.inner_epochs", "count", "gradient updates per collected batch"},
      {"grpo.updates", "count", "post-training updates"},
      {"grpo.conditions_per_update", "windows", "groups collected per update"},
      {"grpo.train_encoder", "", "also update the encoder (default frozen)"},
      {"grpo.collision_threshold", "m", "threshold for the logged collision count"},
      {"grpo.checkpoint_every", "updates", "intermediate checkpoints, 0 = final only"},
      {"grpo.optim.learning_rate", "", "AdamW step size"},
      {"grpo.optim.beta1", "", "first-moment decay"},
      {"grpo.optim.beta2", "", "second-moment decay"},
      {"grpo.optim.eps", "", "AdamW denominator stabilizer"},
      {"grpo.optim.weight_decay", "", "decoupled weight decay"},
      {"grpo.optim.grad_clip", "", "global gradient norm cap, 0 = off"},
      {"reward.social.radius", "m", "interaction radius R"},
      {"reward.social.phi_s", "deg", "strong-view angle"},
      {"reward.social.phi_w", "deg", "weak-view angle"},
      {"reward.social.delta_s", "m", "strong-view proximity threshold"},
      {"reward.social.delta_w", "m", "weak-view proximity threshold"},
      {"reward.social.m_w", "m/step", "weak-view separation margin"},
      {"reward.social.m_r", "m/step", "rear-view separation margin"},
      {"reward.social.w_s", "", "strong-view weight"},
      {"reward.social.w_wc", "", "weak-view contact weight"},
      {"reward.social.w_wo", "", "weak-view over-avoidance weight"},
      {"reward.social.w_r", "", "rear-view weight"},
      {"reward.social.eps", "", "stabilizer"},
      {"reward.social.average_valid_only", "", "average over valid pairs only"},
      {"reward.map.delta_map", "cells", "clearance threshold"},
      {"reward.map.obs_indices", "steps", "history frames in the baseline, [] = all"},
      {"reward.weights.w_sv", "", "social reward weight"},
      {"reward.weights.w_map", "", "map reward weight"},
      {"reward.weights.w_acc", "", "accuracy reward weight"},
      {"reward.weights.w_sm", "", "smoothness reward weight"},
      {"metrics.k", "count", "samples per condition"},
      {"metrics.collision_threshold", "m", "pairwise distance counted as a collision"},
      {"metrics.horizons", "steps", "evaluation cut steps, ascending"},
      {"metrics.count_single_agent", "", "single-agent windows enter the collision denominator"},
      {"metrics.delta_map", "cells", "clearance threshold for the map-violation rate"},
      {"metrics.obs_indices", "steps", "history frames in the violation baseline, [] = all"},
      {"seed", "u64", "root seed for every named random stream"},
      {"output_dir", "path", "directory for artifacts"},
      {"precision", "", "must be float64"},
  };
  return docs;
}

std::string config_help_text() {
  const json defaults = to_json(RunConfig{});
  std::ostringstream out;
  out << "Config keys (JSON, unknown keys rejected):\n";
  for (const auto& d : config_key_docs()) {
    json::json_pointer ptr("/" + [&] {
      std::string p = d.key;
      for (auto& ch : p) {
        if (ch == '.') ch = '/';
      }
      return p;
    }());
    out << "  " << d.key << " = " << defaults.at(ptr).dump();
    if (!d.unit.empty()) out << " [" << d.unit << "]";
    out << "  " << d.description << '\n';
  }
  return out.str();
}

}  // namespace tigflow
