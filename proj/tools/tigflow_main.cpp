// tigflow command-line entry point.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "tigflow/config.hpp"
#include "tigflow/error.hpp"
#include "tigflow/parallel.hpp"
#include "tigflow/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "run config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "root seed, overrides the config");
  cmd->add_option("--out", f.out, "output directory, overrides output_dir");
  cmd->add_option("--threads", f.threads, "worker thread cap")->check(CLI::PositiveNumber);
  cmd->footer(tigflow::config_help_text());
}

tigflow::RunConfig resolve(const CommonFlags& f) {
  tigflow::RunConfig cfg;
  if (!f.config.empty()) cfg = tigflow::load_run_config(f.config);
  if (f.seed) {
    auto echo = tigflow::to_json(cfg);
    echo["seed"] = *f.seed;
    cfg = tigflow::parse_run_config(echo);
  }
  if (!f.out.empty()) cfg.output_dir = f.out;
  tigflow::set_worker_threads(f.threads);
  return cfg;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tigflow");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("FLOWGRPO_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"TIGFlow-GRPO trajectory forecasting: synthetic data, flow pretraining, GRPO post-training, evaluation"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, post_f, eval_f, score_f;
  std::string resume, post_ckpt, eval_ckpt, trajectories;

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset (annotation files + optional map)");
  add_common(gen, gen_f);
  auto* train = app.add_subcommand("train-flow", "pretrain encoder + flow with conditional flow matching");
  add_common(train, train_f);
  train->add_option("--checkpoint", resume, "resume from this checkpoint prefix");
  auto* post = app.add_subcommand("posttrain-grpo", "Flow-GRPO post-training from a pretrained checkpoint");
  add_common(post, post_f);
  post->add_option("--checkpoint", post_ckpt, "pretrained checkpoint prefix (frozen reference)")->required();
  auto* ev = app.add_subcommand("eval", "ADE/FDE/collision/map-violation report for a checkpoint");
  add_common(ev, eval_f);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint prefix")->required();
  auto* score = app.add_subcommand("score", "per-agent reward breakdown CSV for a predictions file");
  add_common(score, score_f);
  score->add_option("--trajectories", trajectories, "predictions JSON (eval dump format)")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(tigflow::ErrorKind::config);
  }

  try {
    if (*gen) {
      const auto cfg = resolve(gen_f);
      tigflow::cmd_gen_synth(cfg, cfg.output_dir);
    } else if (*train) {
      const auto cfg = resolve(train_f);
      tigflow::cmd_train_flow(cfg, cfg.output_dir, resume);
    } else if (*post) {
      const auto cfg = resolve(post_f);
      tigflow::cmd_posttrain(cfg, post_ckpt, cfg.output_dir);
    } else if (*ev) {
      const auto cfg = resolve(eval_f);
      (void)tigflow::cmd_eval(cfg, eval_ckpt, cfg.output_dir);
    } else if (*score) {
      const auto cfg = resolve(score_f);
      tigflow::cmd_score(cfg, trajectories, cfg.output_dir);
    }
  } catch (const tigflow::Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
