#include "tigflow/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tigflow/config.hpp"
#include "tigflow/error.hpp"
#include "tigflow/parallel.hpp"

namespace tigflow {

Model Model::init(const EncoderConfig& enc, const FlowConfig& flow, int history_len, std::uint64_t seed) {
  Model m;
  m.encoder = EncoderParams::init(enc, history_len, seed);
  m.flow = FlowNetParams::init(flow, enc.dim, seed);
  return m;
}

Matrix future_latent(const TrajectoryWindow& window, double scale) {
  const int tf = window.future_len();
  Matrix y(window.num_agents(), 2 * tf);
  for (int a = 0; a < window.num_agents(); ++a) {
    for (int t = 0; t < tf; ++t) {
      const Vec2 d = (window.future_gt[a][t] - window.origin[a]) / scale;
      y(a, 2 * t) = d.x();
      y(a, 2 * t + 1) = d.y();
    }
  }
  return y;
}

std::vector<Track> latent_to_absolute(const Matrix& latent, const std::vector<Vec2>& origins, double scale) {
  if (latent.rows() != static_cast<Eigen::Index>(origins.size()) || latent.cols() % 2 != 0) {
    throw std::invalid_argument("latent_to_absolute: shape mismatch");
  }
  const Eigen::Index tf = latent.cols() / 2;
  std::vector<Track> out(origins.size());
  for (std::size_t a = 0; a < origins.size(); ++a) {
    out[a].resize(static_cast<std::size_t>(tf));
    const auto r = static_cast<Eigen::Index>(a);
    for (Eigen::Index t = 0; t < tf; ++t) {
      out[a][static_cast<std::size_t>(t)] = origins[a] + scale * Vec2(latent(r, 2 * t), latent(r, 2 * t + 1));
    }
  }
  return out;
}

Matrix context_tokens(const Model& model, const TrajectoryWindow& window) { return encode_tokens(window, model.encoder); }

std::vector<std::vector<Track>> sample_futures(const Model& model, const TrajectoryWindow& window, int k, Rng& prior,
                                               int n_steps) {
  if (k < 1) throw std::invalid_argument("sample_futures: k must be >= 1");
  if (window.future_len() != model.future_len()) throw DataError("sample_futures: window horizon differs from the model's");
  const Matrix ctx = context_tokens(model, window);
  const Eigen::Index n = ctx.rows();
  const int d = model.flow.config.latent_dim();
  Matrix ctx_rows(n * k, ctx.cols());
  Matrix xi(n * k, d);
  for (int s = 0; s < k; ++s) {
    ctx_rows.middleRows(s * n, n) = ctx;
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int c = 0; c < d; ++c) xi(s * n + r, c) = prior.normal();
    }
  }
  const Matrix y = ode_rollout(model.flow, ctx_rows, xi, n_steps);
  std::vector<std::vector<Track>> out(k);
  for (int s = 0; s < k; ++s) out[s] = latent_to_absolute(y.middleRows(s * n, n), window.origin, model.latent_scale());
  return out;
}

MetricsReport evaluate(const Model& model, const std::vector<TrajectoryWindow>& windows, const SceneMap* map,
                       const MetricsConfig& cfg, std::uint64_t seed) {
  std::vector<std::vector<std::vector<Track>>> preds(windows.size());
  parallel_for(windows.size(), [&](std::size_t w) {
    Rng prior = stream(seed, "prior", w);
    preds[w] = sample_futures(model, windows[w], cfg.k, prior, model.flow.config.ode_steps);
  });
  MetricsReport r = evaluate_predictions(windows, preds, map, cfg);
  r.seed = seed;
  return r;
}

MetricsReport evaluate_constant_velocity(const std::vector<TrajectoryWindow>& windows, const SceneMap* map,
                                         const MetricsConfig& cfg) {
  std::vector<std::vector<std::vector<Track>>> preds;
  preds.reserve(windows.size());
  for (const auto& w : windows) preds.push_back(constant_velocity_prediction(w));
  return evaluate_predictions(windows, preds, map, cfg);
}

void TrainConfig::validate() const {
  optim.validate();
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (draws_per_agent < 1) throw ConfigError("train.draws_per_agent must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

TrainState TrainState::init(const Model& model) {
  return {AdamWState::init(model.encoder.params), AdamWState::init(model.flow.params), 0};
}

CfmResult cfm_batch_loss(const Model& model, std::span<const TrajectoryWindow* const> batch, Rng& rng, int draws,
                         bool train_encoder) {
  ad::Tape tape;
  ParamBinding eb(tape, model.encoder.params, train_encoder);
  ParamBinding fb(tape, model.flow.params, true);
  const EncodedBatch enc = encode_batch(eb, model.encoder, batch);
  Matrix y1(enc.tokens.rows(), model.flow.config.latent_dim());
  for (std::size_t w = 0; w < batch.size(); ++w) {
    const Matrix yw = future_latent(*batch[w], model.latent_scale());
    if (yw.cols() != y1.cols()) throw DataError("cfm: window horizon differs from the model's");
    y1.middleRows(enc.agent_offset[w], yw.rows()) = yw;
  }
  const ad::Var loss = cfm_loss(fb, model.flow, enc.tokens, y1, rng, draws);
  tape.backward(loss);
  CfmResult r;
  r.loss = loss.scalar();
  r.encoder_grads = model.encoder.params.zeros_like();
  r.flow_grads = model.flow.params.zeros_like();
  eb.accumulate_grads(r.encoder_grads);
  fb.accumulate_grads(r.flow_grads);
  return r;
}

std::vector<TrainLogEntry> pretrain(Model& model, TrainState& state, const std::vector<TrajectoryWindow>& windows,
                                    const TrainConfig& cfg, std::uint64_t seed, std::int64_t n_steps,
                                    const std::function<void(const TrainLogEntry&)>& on_step) {
  cfg.validate();
  if (windows.empty()) throw DataError("pretrain: no training windows");
  std::vector<TrainLogEntry> log;
  for (std::int64_t i = 0; i < n_steps; ++i) {
    const std::int64_t step = state.step;
    Rng brng = stream(seed, "batch", static_cast<std::uint64_t>(step));
    std::vector<const TrajectoryWindow*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(&windows[brng.index(windows.size())]);
    Rng prng = stream(seed, "prior", static_cast<std::uint64_t>(step));
    CfmResult r = cfm_batch_loss(model, batch, prng, cfg.draws_per_agent, cfg.train_encoder);
    const double gn = std::sqrt(r.encoder_grads.squared_norm() + r.flow_grads.squared_norm());
    if (!std::isfinite(r.loss) || !std::isfinite(gn)) {
      throw NumericError("pretrain: divergence at step " + std::to_string(step));
    }
    adamw_step(model.flow.params, r.flow_grads, state.flow, cfg.optim);
    if (cfg.train_encoder) adamw_step(model.encoder.params, r.encoder_grads, state.encoder, cfg.optim);
    ++state.step;
    TrainLogEntry e{step, r.loss, gn};
    log.push_back(e);
    if (on_step) on_step(e);
  }
  return log;
}

namespace {

constexpr const char* kFormat = "tigflow-checkpoint";
constexpr int kVersion = 1;

void append(nlohmann::json& dst, const nlohmann::json& src) {
  for (const auto& e : src) dst.push_back(e);
}

}  // namespace

void save_checkpoint(const std::string& prefix, const Model& model, const TrainState* state,
                     const nlohmann::json& meta) {
  std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write checkpoint '" + prefix + ".bin'");
  std::size_t offset = 0;
  nlohmann::json blocks = nlohmann::json::array();
  append(blocks, write_blob(bin, model.encoder.params, "encoder.", offset));
  append(blocks, write_blob(bin, model.flow.params, "flow.", offset));
  if (state) {
    append(blocks, write_blob(bin, state->encoder.m, "opt.encoder.m.", offset));
    append(blocks, write_blob(bin, state->encoder.v, "opt.encoder.v.", offset));
    append(blocks, write_blob(bin, state->flow.m, "opt.flow.m.", offset));
    append(blocks, write_blob(bin, state->flow.v, "opt.flow.v.", offset));
  }
  if (!bin) throw DataError("failed writing checkpoint '" + prefix + ".bin'");

  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["dtype"] = "float64";
  j["history_len"] = model.encoder.history_len;
  j["encoder_config"] = to_json(model.encoder.config);
  j["flow_config"] = to_json(model.flow.config);
  j["blocks"] = blocks;
  j["elements"] = offset;
  if (state) {
    j["optimizer"] = {{"encoder_step", state->encoder.step}, {"flow_step", state->flow.step}, {"step", state->step}};
  } else {
    j["optimizer"] = nullptr;
  }
  j["meta"] = meta;
  std::ofstream js(prefix + ".json", std::ios::trunc);
  if (!js) throw DataError("cannot write checkpoint '" + prefix + ".json'");
  js << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw DataError("cannot open checkpoint '" + prefix + ".json'");
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint manifest: " + std::string(e.what()));
  }
  try {
    if (j.at("format") != kFormat || j.at("version") != kVersion) throw DataError("checkpoint: unsupported format");
    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw DataError("cannot open checkpoint '" + prefix + ".bin'");
    const auto n = j.at("elements").get<std::size_t>();
    std::vector<double> blob(n);
    bin.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(n * sizeof(double))) throw DataError("checkpoint: truncated blob");

    const EncoderConfig ec = encoder_config_from_json(j.at("encoder_config"));
    const FlowConfig fc = flow_config_from_json(j.at("flow_config"));
    Checkpoint c{Model::init(ec, fc, j.at("history_len").get<int>(), 0), std::nullopt, j.value("meta", nlohmann::json())};
    const auto& blocks = j.at("blocks");
    read_blob(blob, blocks, "encoder.", c.model.encoder.params);
    read_blob(blob, blocks, "flow.", c.model.flow.params);
    if (!j.at("optimizer").is_null()) {
      TrainState s = TrainState::init(c.model);
      read_blob(blob, blocks, "opt.encoder.m.", s.encoder.m);
      read_blob(blob, blocks, "opt.encoder.v.", s.encoder.v);
      read_blob(blob, blocks, "opt.flow.m.", s.flow.m);
      read_blob(blob, blocks, "opt.flow.v.", s.flow.v);
      const auto& o = j.at("optimizer");
      s.encoder.step = o.at("encoder_step").get<std::int64_t>();
      s.flow.step = o.at("flow_step").get<std::int64_t>();
      s.step = o.at("step").get<std::int64_t>();
      c.state = std::move(s);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace tigflow
