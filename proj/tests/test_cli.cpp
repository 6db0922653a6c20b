#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
namespace t = ppsl::testing;

namespace {

struct Run {
  int status = 0;
  std::string err;
};

Run ppsl_run(const fs::path& dir, const std::string& args) {
  auto err = dir / "stderr.txt";
  std::string cmd = std::string(PPSL_BIN) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + err.string();
  Run r;
  r.status = std::system(cmd.c_str());
  r.err = t::slurp(err);
  return r;
}

void write_config(const fs::path& dir) {
  std::ostringstream c;
  c << "[data]\ngraph = " << (dir / "graph.txt").string() << "\ncommunities = " << (dir / "communities.txt").string()
    << "\nknown_count = 6\nquery_count = 4\nsplit = per_query\n"
    << "[synth]\nblocks = 6\nsize = 6\np_in = 0.6\np_out = 0.02\n"
    << "[encoder]\nepochs = 2\nhidden = 16\ndim = 8\n"
    << "[agent]\nepochs = 2\ndim = 8\n"
    << "[prompt]\nepochs = 2\nhidden = 8\nm = 3\n";
  t::write_text(dir / "run.ini", c.str());
}

std::vector<nlohmann::json> records(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::istringstream in(t::slurp(p));
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST(Cli, MissingGraphFileIsNamed) {
  auto dir = t::scratch_dir("cli_missing");
  t::write_text(dir / "run.ini", "[data]\ngraph = /no/such/graph.txt\ncommunities = /no/such/c.txt\n");
  auto r = ppsl_run(dir, "pretrain --config " + (dir / "run.ini").string() + " --out-dir " + dir.string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("/no/such/graph.txt"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  auto dir = t::scratch_dir("cli_usage");
  EXPECT_NE(ppsl_run(dir, "ablate --variant no-XY").status, 0);
  EXPECT_NE(ppsl_run(dir, "frobnicate").status, 0);
  t::write_text(dir / "bad.ini", "[prompt]\nbeta = 2\n");
  auto r = ppsl_run(dir, "synth --config " + (dir / "bad.ini").string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("prompt.beta"), std::string::npos) << r.err;
}

TEST(Cli, PipelineIsReproducibleAndWritesOneLinePerQuery) {
  // Both passes share a directory so the configuration, and with it the
  // summary fingerprint, is the same.
  auto dir = t::scratch_dir("cli_pipeline");
  write_config(dir);
  std::string first_results, first_encoder;
  for (int pass = 0; pass < 2; ++pass) {
    std::string common = " --config " + (dir / "run.ini").string() + " --out-dir " + dir.string() + " --seed 5";
    ASSERT_EQ(ppsl_run(dir, "synth" + common).status, 0);
    ASSERT_EQ(ppsl_run(dir, "pretrain" + common).status, 0);
    ASSERT_EQ(ppsl_run(dir, "train-agent" + common).status, 0);
    EXPECT_TRUE(fs::exists(dir / "encoder.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "agent.ckpt"));
    auto r = ppsl_run(dir, "detect" + common + " --queries 0,7,999");
    ASSERT_EQ(r.status, 0) << r.err;
    auto rows = records(dir / "results.jsonl");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0]["query"], 0);
    EXPECT_EQ(rows[1]["query"], 7);
    EXPECT_TRUE(rows[2].contains("error"));
    EXPECT_TRUE(rows[3]["summary"].get<bool>());
    EXPECT_EQ(rows[3]["errors"], 1);
    for (int i = 0; i < 2; ++i) {
      EXPECT_TRUE(rows[static_cast<std::size_t>(i)]["seconds"].is_null());
      auto pred = rows[static_cast<std::size_t>(i)]["pred"];
      EXPECT_NE(std::find(pred.begin(), pred.end(), rows[static_cast<std::size_t>(i)]["query"]), pred.end());
    }
    if (pass == 0) {
      first_results = t::slurp(dir / "results.jsonl");
      first_encoder = t::slurp(dir / "encoder.ckpt");
    } else {
      EXPECT_EQ(t::slurp(dir / "results.jsonl"), first_results);
      EXPECT_EQ(t::slurp(dir / "encoder.ckpt"), first_encoder);
    }

    ASSERT_EQ(ppsl_run(dir, "ablate --variant no-PF" + common).status, 0);
    auto nopf = records(dir / "results_no-PF.jsonl");
    EXPECT_EQ(nopf.size(), 5u);
    ASSERT_EQ(ppsl_run(dir, "eval " + (dir / "results_no-PF.jsonl").string()).status, 0);
    auto ev = records(dir / "stdout.txt");
    ASSERT_EQ(ev.size(), 2u);
    EXPECT_NEAR(ev[1]["mean"]["fscore"].get<double>(), nopf.back()["fscore"].get<double>(), 1e-12);
  }
}
