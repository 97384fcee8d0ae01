#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cng/core/errors.hpp"
#include "cng/pipeline/commands.hpp"

namespace {

struct Args {
  std::string config;
  std::string corpus;
  std::vector<std::string> checkpoints;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Args& a, bool config_required) {
  auto* opt = cmd->add_option("--config", a.config, "key = value config file (defaults when omitted)");
  if (config_required) opt->required();
  cmd->add_option("--corpus", a.corpus, "corpus JSON Lines file (.gz allowed)")->required();
  cmd->add_option("--checkpoint", a.checkpoints, "checkpoint file; repeat for classifier and estimator");
  cmd->add_option("--out", a.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", a.seed, "run seed; overrides the config");
  cmd->add_option("--set", a.overrides, "override a config key, key=value");
  cmd->add_flag("--quiet", a.quiet, "only print errors");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-graph classification, causal effect estimation and subgraph distillation"};
  app.require_subcommand(1);
  Args args;
  auto* train = app.add_subcommand("train", "train the classifier and report held-out metrics");
  auto* causal = app.add_subcommand("causal", "label leave-one-out effects and train the effect estimator");
  auto* distill = app.add_subcommand("distill", "distill graphs to minimal causal node sets");
  auto* eval = app.add_subcommand("eval", "evaluate a classifier checkpoint on a corpus");
  auto* synth = app.add_subcommand("synth", "write a synthetic trigger corpus to --corpus");
  add_common(train, args, true);
  add_common(causal, args, true);
  add_common(distill, args, true);
  add_common(eval, args, false);
  add_common(synth, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cng::kExitOk : cng::kExitUsage;
  }
  if (args.quiet) spdlog::set_level(spdlog::level::warn);

  try {
    cng::CommandOptions options;
    if (!args.config.empty()) options.config = cng::load_config(args.config);
    for (const auto& o : args.overrides) cng::apply_override(options.config, o);
    if (args.seed) options.config.set_seed(*args.seed);
    options.corpus = args.corpus;
    for (const auto& c : args.checkpoints) options.checkpoints.emplace_back(c);
    options.out = args.out;

    nlohmann::json report;
    if (train->parsed()) report = cng::cmd_train(options);
    if (causal->parsed()) report = cng::cmd_causal(options);
    if (distill->parsed()) report = cng::cmd_distill(options);
    if (eval->parsed()) report = cng::cmd_eval(options);
    if (synth->parsed()) report = cng::cmd_synth(options);
    std::printf("%s\n", report["content_digest"].get<std::string>().c_str());
    return cng::kExitOk;
  } catch (const std::exception& e) {
    const int code = cng::exit_code_for(e);
    std::fprintf(stderr, "cng: error: %s\n", e.what());
    return code;
  }
}
