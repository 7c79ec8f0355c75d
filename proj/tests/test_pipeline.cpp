#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "tigflow/config.hpp"
#include "tigflow/error.hpp"
#include "tigflow/model.hpp"
#include "tigflow/pipeline.hpp"

using namespace tigflow;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "seed": 5,
  "data": {"synth": {"n_agents": 3, "n_windows": 6, "scenario": "obstacle_field"}, "eval_windows": 2},
  "encoder": {"dim": 8},
  "flow": {"hidden": 16, "context_proj_dim": 8, "depth": 2, "ode_steps": 4},
  "train": {"steps": 6, "batch_size": 2, "draws_per_agent": 2, "optim": {"learning_rate": 0.001}},
  "sde": {"n_steps": 3},
  "grpo": {"updates": 2, "group_size": 2},
  "metrics": {"k": 3}
})";

RunConfig tiny() { return parse_run_config(nlohmann::json::parse(kTiny)); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tigflow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

// Every stage end to end into dir.
void run_all(const RunConfig& cfg, const fs::path& dir) {
  cmd_gen_synth(cfg, (dir / "data").string());
  cmd_train_flow(cfg, (dir / "pre").string());
  cmd_posttrain(cfg, (dir / "pre" / "flow").string(), (dir / "post").string());
  (void)cmd_eval(cfg, (dir / "post" / "grpo").string(), (dir / "eval").string());
  cmd_score(cfg, (dir / "eval" / "predictions.json").string(), (dir / "score").string());
}

int cli(const std::string& args) {
  const std::string cmd = std::string(TIGFLOW_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config parsing is strict and round-trips") {
  const RunConfig c = tiny();
  CHECK(c.data.synth.n_agents == 3);
  CHECK(c.data.synth.seed == 5);
  CHECK(to_json(parse_run_config(to_json(c))) == to_json(c));

  auto bad = nlohmann::json::parse(kTiny);
  bad["grpo"]["gropu_size"] = 3;
  try {
    (void)parse_run_config(bad);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grpo.gropu_size") != std::string::npos);
  }
  auto typed = nlohmann::json::parse(kTiny);
  typed["sde"]["eta"] = "high";
  CHECK_THROWS_AS((void)parse_run_config(typed), ConfigError);
  auto invalid = nlohmann::json::parse(kTiny);
  invalid["sde"]["tau_min"] = 0.7;
  CHECK_THROWS_AS((void)parse_run_config(invalid), ConfigError);
  auto mismatch = nlohmann::json::parse(kTiny);
  mismatch["flow"]["future_len"] = 10;
  CHECK_THROWS_AS((void)parse_run_config(mismatch), ConfigError);

  for (const auto& doc : config_key_docs()) {
    const std::string ptr = "/" + [&] {
      std::string s = doc.key;
      for (auto& ch : s)
        if (ch == '.') ch = '/';
      return s;
    }();
    CHECK(to_json(RunConfig{}).contains(nlohmann::json::json_pointer(ptr)));
  }
}

TEST_CASE("git-style blob hash") {
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("checkpoints round-trip exactly") {
  const RunConfig c = tiny();
  Model m = Model::init(c.encoder, c.flow, 8, 3);
  TrainState st = TrainState::init(m);
  st.step = 17;
  st.flow.m[0].setConstant(0.25);
  const fs::path dir = scratch("ckpt");
  save_checkpoint((dir / "m").string(), m, &st, {{"stage", "test"}});
  const Checkpoint back = load_checkpoint((dir / "m").string());
  CHECK(back.model.flow.params == m.flow.params);
  CHECK(back.model.encoder.params == m.encoder.params);
  REQUIRE(back.state.has_value());
  CHECK(back.state->step == 17);
  CHECK(back.state->flow.m == st.flow.m);
  CHECK(back.meta["stage"] == "test");
  CHECK_THROWS_AS((void)load_checkpoint((dir / "missing").string()), DataError);
}

TEST_CASE("every stage is byte-deterministic") {
  const RunConfig c = tiny();
  const fs::path dir = scratch("determinism");
  run_all(c, dir);
  const auto first = snapshot(dir);
  fs::remove_all(dir);
  run_all(c, dir);
  const auto second = snapshot(dir);
  CHECK(first.size() == second.size());
  CHECK(first.count("eval/report.json") == 1);
  CHECK(first.count("score/scores.csv") == 1);
  for (const auto& [name, bytes] : first) {
    CAPTURE(name);
    CHECK(second.at(name) == bytes);
  }
}

TEST_CASE("resumed pretraining matches an uninterrupted run") {
  const RunConfig c = tiny();
  const fs::path a = scratch("resume_a"), b = scratch("resume_b");
  cmd_train_flow(c, a.string());
  cmd_train_flow(c, b.string(), "", 3);
  cmd_train_flow(c, (b / "resumed").string(), (b / "flow").string());
  CHECK(slurp(a / "flow.bin") == slurp(b / "resumed" / "flow.bin"));
}

TEST_CASE("scoring ground truth gives zero accuracy penalty") {
  const RunConfig c = tiny();
  const Dataset ds = load_dataset(c);
  nlohmann::json preds = {{"format", "tigflow-predictions"}, {"windows", nlohmann::json::array()}};
  for (const auto& w : ds.eval) {
    nlohmann::json sample = nlohmann::json::array();
    for (const auto& track : w.future_gt) {
      nlohmann::json t = nlohmann::json::array();
      for (const auto& p : track) t.push_back({p.x(), p.y()});
      sample.push_back(t);
    }
    preds["windows"].push_back({{"scene_id", w.scene_id}, {"agent_ids", w.agent_ids}, {"samples", {sample}}});
  }
  const fs::path dir = scratch("score");
  std::ofstream(dir / "gt.json") << preds.dump();
  cmd_score(c, (dir / "gt.json").string(), (dir / "out").string());
  std::ifstream in(dir / "out" / "scores.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "scene_id,agent_id,g,r_sv,r_map,r_acc,r_sm,total");
  int rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    REQUIRE(cells.size() == 8);
    CHECK(std::stod(cells[5]) == 0.0);
    ++rows;
  }
  CHECK(rows == 2 * 3);
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch("cli");
  std::ofstream(dir / "tiny.json") << kTiny;
  std::ofstream(dir / "unknown.json") << R"({"sde": {"etta": 1}})";
  const std::string cfg = " --config " + (dir / "tiny.json").string();
  CHECK(cli("gen-synth" + cfg + " --out " + (dir / "data").string()) == 0);
  CHECK(fs::exists(dir / "data" / "train.txt"));
  CHECK(cli("gen-synth --config " + (dir / "unknown.json").string()) == 2);
  CHECK(cli("eval" + cfg + " --checkpoint " + (dir / "nope").string()) == 3);
  CHECK(cli("bogus-command") != 0);
  CHECK(cli("train-flow" + cfg + " --out " + (dir / "pre").string()) == 0);
  CHECK(cli("eval" + cfg + " --checkpoint " + (dir / "pre" / "flow").string() + " --out " + (dir / "ev").string()) == 0);
  CHECK(fs::exists(dir / "ev" / "report.json"));
}
