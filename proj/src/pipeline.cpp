#include "tigflow/pipeline.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "tigflow/annotations.hpp"
#include "tigflow/error.hpp"
#include "tigflow/grpo.hpp"
#include "tigflow/model.hpp"
#include "tigflow/reward.hpp"
#include "tigflow/synthetic.hpp"

namespace tigflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha1: context allocation failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory '" + dir + "'");
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

void write_json(const std::string& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

std::vector<TrajectoryWindow> windows_from_files(const std::vector<std::string>& files, const WindowOptions& opts) {
  std::vector<TrajectoryWindow> out;
  for (const auto& f : files) {
    auto w = build_windows(parse_annotations_file(f), fs::path(f).stem().string(), opts);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

}  // namespace

std::string file_hash(const std::string& path) { return git_blob_hash(read_file(path)); }

std::string windows_hash(const std::vector<TrajectoryWindow>& windows) {
  std::ostringstream s;
  write_annotations(s, windows);
  return git_blob_hash(s.str());
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  const auto& dc = cfg.data;
  if (dc.source == "synth") {
    SynthConfig sc = dc.synth;
    SynthDataset train = generate_synthetic(sc);
    d.train = std::move(train.windows);
    d.map = std::move(train.map);
    sc.first_window = dc.synth.first_window + dc.synth.n_windows;
    sc.n_windows = dc.eval_windows;
    d.eval = generate_synthetic(sc).windows;
  } else {
    WindowOptions eval_opts = dc.window;
    eval_opts.stride = dc.eval_stride > 0 ? dc.eval_stride : dc.window.history_len + dc.window.future_len;
    d.train = windows_from_files(dc.train_files, dc.window);
    d.eval = windows_from_files(dc.eval_files.empty() ? dc.train_files : dc.eval_files, eval_opts);
    if (!dc.map_pgm.empty()) d.map = load_scene_map(dc.map_pgm, dc.map_sidecar);
  }
  return d;
}

void cmd_gen_synth(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.data.source != "synth") throw ConfigError("gen-synth needs data.source = synth");
  ensure_dir(out_dir);
  const Dataset d = load_dataset(cfg);
  json files = json::object();
  auto emit = [&](const std::string& name, const std::vector<TrajectoryWindow>& w) {
    const std::string path = (fs::path(out_dir) / name).string();
    {
      auto out = open_out(path);
      write_annotations(out, w);
    }
    files[name] = {{"hash", file_hash(path)}, {"windows", w.size()}};
  };
  emit("train.txt", d.train);
  emit("eval.txt", d.eval);
  if (d.map) {
    const std::string pgm = (fs::path(out_dir) / "map.pgm").string();
    const std::string side = (fs::path(out_dir) / "map.json").string();
    save_scene_map(*d.map, pgm, side);
    files["map.pgm"] = {{"hash", file_hash(pgm)}};
    files["map.json"] = {{"hash", file_hash(side)}};
  }
  write_json((fs::path(out_dir) / "manifest.json").string(),
             {{"command", "gen-synth"}, {"config", to_json(cfg)}, {"files", files}});
  spdlog::info("gen-synth: {} train / {} eval windows -> {}", d.train.size(), d.eval.size(), out_dir);
}

void cmd_train_flow(const RunConfig& cfg, const std::string& out_dir, const std::string& resume, std::int64_t stop_at) {
  ensure_dir(out_dir);
  const Dataset d = load_dataset(cfg);
  if (d.train.empty()) throw DataError("train-flow: no training windows");
  Model model;
  TrainState state;
  if (resume.empty()) {
    model = Model::init(cfg.encoder, cfg.flow, cfg.data.window.history_len, cfg.seed);
    state = TrainState::init(model);
  } else {
    Checkpoint c = load_checkpoint(resume);
    if (!c.state) throw DataError("train-flow: checkpoint '" + resume + "' has no optimizer state");
    model = std::move(c.model);
    state = std::move(*c.state);
  }
  const std::int64_t end = stop_at >= 0 ? std::min<std::int64_t>(stop_at, cfg.train.steps) : cfg.train.steps;
  const std::string data_hash = windows_hash(d.train);
  const auto base = fs::path(out_dir);
  auto log = open_out((base / "loss.jsonl").string());
  auto meta = [&](std::int64_t step) {
    return json{{"stage", "train-flow"}, {"step", step}, {"seed", cfg.seed}, {"data_hash", data_hash},
                {"config", to_json(cfg)}};
  };
  const std::int64_t start = state.step;
  pretrain(model, state, d.train, cfg.train, cfg.seed, std::max<std::int64_t>(end - start, 0),
           [&](const TrainLogEntry& e) {
             log << json{{"step", e.step}, {"loss", e.loss}, {"grad_norm", e.grad_norm}}.dump() << '\n';
             const std::int64_t done = e.step + 1;
             if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0 && done < end) {
               save_checkpoint((base / ("flow_step" + std::to_string(done))).string(), model, &state, meta(done));
             }
             if (done % 100 == 0) spdlog::info("train-flow: step {} loss {:.6f}", done, e.loss);
           });
  save_checkpoint((base / "flow").string(), model, &state, meta(state.step));
  spdlog::info("train-flow: finished at step {} -> {}", state.step, out_dir);
}

void cmd_posttrain(const RunConfig& cfg, const std::string& checkpoint, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Dataset d = load_dataset(cfg);
  if (d.train.empty()) throw DataError("posttrain-grpo: no training windows");
  const Model reference = load_checkpoint(checkpoint).model;
  Model policy = reference;
  GrpoState state = GrpoState::init(policy);
  const auto base = fs::path(out_dir);
  const std::string ckpt_hash = file_hash(checkpoint + ".bin");
  const std::string data_hash = windows_hash(d.train);
  auto meta = [&](std::int64_t update) {
    return json{{"stage", "posttrain-grpo"}, {"update", update},     {"seed", cfg.seed},
                {"reference_hash", ckpt_hash}, {"data_hash", data_hash}, {"config", to_json(cfg)}};
  };
  auto log = open_out((base / "grpo_log.jsonl").string());
  posttrain(policy, reference, state, d.train, d.map_ptr(), cfg.sde, cfg.reward, cfg.grpo, cfg.seed, cfg.grpo.updates,
            [&](const GrpoLogEntry& e) {
              log << json{{"update", e.update},
                          {"mean_reward", e.mean_reward},
                          {"mean_r_sv", e.mean_r_sv},
                          {"mean_r_map", e.mean_r_map},
                          {"mean_r_acc", e.mean_r_acc},
                          {"mean_r_sm", e.mean_r_sm},
                          {"mean_collisions", e.mean_collisions},
                          {"kl_pen", e.kl_pen},
                          {"grad_norm", e.grad_norm},
                          {"loss", e.loss}}
                         .dump()
                  << '\n';
              log.flush();
              const std::int64_t done = e.update + 1;
              if (cfg.grpo.checkpoint_every > 0 && done % cfg.grpo.checkpoint_every == 0 && done < cfg.grpo.updates) {
                save_checkpoint((base / ("grpo_update" + std::to_string(done))).string(), policy, nullptr, meta(done));
              }
              if (done % 10 == 0) spdlog::info("posttrain: update {} mean reward {:.6f}", done, e.mean_reward);
            });
  save_checkpoint((base / "grpo").string(), policy, nullptr, meta(state.update));
  spdlog::info("posttrain-grpo: {} updates -> {}", state.update, out_dir);
}

MetricsReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Dataset d = load_dataset(cfg);
  if (d.eval.empty()) throw DataError("eval: no evaluation windows");
  const Model model = load_checkpoint(checkpoint).model;
  const MetricsReport rep = evaluate(model, d.eval, d.map_ptr(), cfg.metrics, cfg.seed);
  const MetricsReport cv = evaluate_constant_velocity(d.eval, d.map_ptr(), cfg.metrics);
  const auto base = fs::path(out_dir);

  json j = report_to_json(rep);
  j["constant_velocity"] = report_to_json(cv)["horizons"];
  j["checkpoint_hash"] = file_hash(checkpoint + ".bin");
  j["data_hash"] = windows_hash(d.eval);
  j["run_config"] = to_json(cfg);
  write_json((base / "report.json").string(), j);
  {
    auto csv = open_out((base / "report.csv").string());
    write_report_csv(csv, rep);
  }
  json dump = json::array();
  for (std::size_t w = 0; w < d.eval.size(); ++w) {
    Rng prior = stream(cfg.seed, "prior", w);
    const auto samples = sample_futures(model, d.eval[w], cfg.metrics.k, prior, model.flow.config.ode_steps);
    json s = json::array();
    for (const auto& world : samples) {
      json agents = json::array();
      for (const auto& tr : world) {
        json pts = json::array();
        for (const auto& p : tr) pts.push_back({p.x(), p.y()});
        agents.push_back(pts);
      }
      s.push_back(agents);
    }
    dump.push_back({{"scene_id", d.eval[w].scene_id}, {"agent_ids", d.eval[w].agent_ids}, {"samples", s}});
  }
  write_json((base / "predictions.json").string(), {{"format", "tigflow-predictions"}, {"windows", dump}});
  const auto& last = rep.horizons.back();
  spdlog::info("eval: ADE_min {:.4f} FDE_min {:.4f} col {:.2f}% at {} steps", last.ade_min, last.fde_min, last.col_rate,
               last.horizon);
  return rep;
}

void cmd_score(const RunConfig& cfg, const std::string& trajectories, const std::string& out_dir) {
  ensure_dir(out_dir);
  const Dataset d = load_dataset(cfg);
  std::map<std::string, const TrajectoryWindow*> by_id;
  for (const auto& w : d.train) by_id[w.scene_id] = &w;
  for (const auto& w : d.eval) by_id[w.scene_id] = &w;

  json j;
  try {
    j = json::parse(read_file(trajectories));
  } catch (const json::exception& e) {
    throw DataError("score: '" + trajectories + "': " + e.what());
  }
  auto csv = open_out((fs::path(out_dir) / "scores.csv").string());
  csv << "scene_id,agent_id,g,r_sv,r_map,r_acc,r_sm,total\n";
  csv << std::setprecision(17);
  std::size_t rows = 0;
  try {
    if (j.at("format") != "tigflow-predictions") throw DataError("score: unexpected trajectory format");
    for (const auto& entry : j.at("windows")) {
      const std::string id = entry.at("scene_id").get<std::string>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("score: unknown scene_id '" + id + "'");
      const TrajectoryWindow& win = *it->second;
      int g = 0;
      for (const auto& world_j : entry.at("samples")) {
        std::vector<Track> world;
        for (const auto& tr_j : world_j) {
          Track tr;
          for (const auto& p : tr_j) tr.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
          if (static_cast<int>(tr.size()) != win.future_len()) throw DataError("score: horizon mismatch in '" + id + "'");
          world.push_back(std::move(tr));
        }
        const auto rb = score_window(win, world, d.map_ptr(), cfg.reward);
        for (int a = 0; a < win.num_agents(); ++a) {
          csv << id << ',' << win.agent_ids[a] << ',' << g << ',' << rb[a].r_sv << ',' << rb[a].r_map << ','
              << rb[a].r_acc << ',' << rb[a].r_sm << ',' << rb[a].total << '\n';
          ++rows;
        }
        ++g;
      }
    }
  } catch (const json::exception& e) {
    throw DataError("score: malformed trajectory file: " + std::string(e.what()));
  }
  write_json((fs::path(out_dir) / "score_manifest.json").string(),
             {{"command", "score"}, {"trajectories_hash", file_hash(trajectories)}, {"rows", rows},
              {"config", to_json(cfg)}});
  spdlog::info("score: {} rows -> {}", rows, out_dir);
}

}  // namespace tigflow
