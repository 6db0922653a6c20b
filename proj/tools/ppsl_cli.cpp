// ppsl: command-line front end for semi-supervised local community detection.
//
//   ppsl synth       --config run.ini --out-dir run
//   ppsl pretrain    --config run.ini --out-dir run
//   ppsl train-agent --config run.ini --out-dir run [--variant no-NE]
//   ppsl detect      --config run.ini --out-dir run [--queries 12,40]
//   ppsl ablate      --config run.ini --out-dir run --variant no-PF
//   ppsl eval        run/results.jsonl [more.jsonl ...]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ppsl/commands.hpp"

namespace {

struct Args {
  std::string config;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  std::string queries;
  std::string variant = "full";
  std::string encoder;
  std::string agent;
  std::vector<std::string> overrides;
  bool print_config = false;
};

ppsl::CommandOptions make_options(const Args& a) {
  ppsl::CommandOptions o;
  if (!a.config.empty()) o.config = ppsl::load_config(a.config);
  for (const auto& kv : a.overrides) {
    auto eq = kv.find('=');
    auto dot = kv.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ppsl::Error("--set expects section.key=value, got '" + kv + "'");
    ppsl::set_config_value(o.config, kv.substr(0, dot), kv.substr(dot + 1, eq - dot - 1), kv.substr(eq + 1));
  }
  if (a.seed) o.config.set_seed(*a.seed);
  o.config.sync();
  o.config.validate();
  o.out_dir = a.out_dir;
  if (!a.queries.empty()) o.queries = a.queries;
  o.variant = ppsl::parse_variant(a.variant);
  if (!a.encoder.empty()) o.encoder_path = a.encoder;
  if (!a.agent.empty()) o.agent_path = a.agent;
  o.log = &std::cerr;
  return o;
}

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "Configuration file (INI sections: data, synth, encoder, agent, prompt, run)");
  cmd->add_option("--seed", a.seed, "Override every component seed");
  cmd->add_option("--out-dir", a.out_dir, "Run directory for checkpoints and results");
  cmd->add_option("--set", a.overrides, "Override a configuration value, e.g. --set prompt.m=5");
  cmd->add_option("--encoder", a.encoder, "Encoder checkpoint (default <out-dir>/encoder.ckpt)");
  cmd->add_option("--agent", a.agent, "Agent checkpoint (default <out-dir>/agent.ckpt)");
  cmd->add_flag("--print-config", a.print_config, "Print the effective configuration and exit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised local community detection with pre-training and prompts"};
  app.require_subcommand(1);
  Args a;
  std::vector<std::string> result_files;

  auto* synth = app.add_subcommand("synth", "Generate a planted-partition graph and its communities");
  auto* pretrain = app.add_subcommand("pretrain", "Contrastive pre-training of the node encoder");
  auto* train = app.add_subcommand("train-agent", "Train the community expansion agent");
  auto* detect = app.add_subcommand("detect", "Detect communities for query nodes");
  auto* ablate = app.add_subcommand("ablate", "Run an ablation variant over the query nodes");
  auto* eval = app.add_subcommand("eval", "Recompute and aggregate metrics from result files");
  for (auto* c : {synth, pretrain, train, detect, ablate}) add_common(c, a);
  for (auto* c : {detect, ablate}) c->add_option("--queries", a.queries, "Comma-separated query node ids");
  auto variants = CLI::IsMember({"full", "no-NE", "no-SG", "no-PF"});
  train->add_option("--variant", a.variant, "no-NE trains on raw structural features")->check(variants);
  ablate->add_option("--variant", a.variant, "full, no-NE, no-SG or no-PF")->required()->check(variants);
  eval->add_option("files", result_files, "Result files (one per seed)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (eval->parsed()) {
      std::vector<std::filesystem::path> paths(result_files.begin(), result_files.end());
      auto out = ppsl::cmd_eval(paths);
      auto scores = [](const ppsl::Scores& s) {
        return nlohmann::json{{"precision", s.precision}, {"recall", s.recall}, {"fscore", s.fscore},
                              {"jaccard", s.jaccard}};
      };
      for (std::size_t i = 0; i < out.per_run.size(); ++i) {
        auto j = scores(out.per_run[i]);
        j["file"] = result_files[i];
        std::cout << j.dump() << '\n';
      }
      auto s = nlohmann::json{{"summary", true},       {"runs", out.summary.runs},
                              {"rows", out.rows},       {"mean", scores(out.summary.mean)},
                              {"std", scores(out.summary.std)}, {"pooled", scores(out.pooled)}};
      std::cout << s.dump() << '\n';
      return 0;
    }

    auto o = make_options(a);
    if (a.print_config) {
      std::cout << ppsl::serialize_config(o.config);
      return 0;
    }
    if (synth->parsed()) ppsl::cmd_synth(o);
    if (pretrain->parsed()) ppsl::cmd_pretrain(o);
    if (train->parsed()) ppsl::cmd_train_agent(o);
    if (detect->parsed()) ppsl::cmd_detect(o);
    if (ablate->parsed()) ppsl::cmd_ablate(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
