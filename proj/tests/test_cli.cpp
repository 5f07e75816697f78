// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace modalprompt;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "modalprompt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace

TEST_CASE("cli exit codes") {
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"no-such-command"}).code == kExitUsage);
  CHECK(cli({"metrics", "/nonexistent.csv"}).code == kExitUsage);
  CHECK(cli({"oracle", "unknown-fixture"}).code == kExitUsage);
  CHECK(cli({"grid", "--plan", "/nonexistent.json"}).code == kExitUsage);
  CHECK(cli({"gen-suite", "--layout", "diagonal", "--out", "/tmp/mp-cli-x"}).code == kExitUsage);
}

TEST_CASE("cli oracle checks the reference fixtures") {
  const auto r = cli({"oracle", "modalprompt-ref"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("33/33") != std::string::npos);
  CHECK(cli({"oracle", MODALPROMPT_SOURCE_DIR "/data/fixtures/moelora-ref.csv"}).code == kExitOk);
  CHECK(cli({"oracle", "--list"}).out.find("finetune-ref") != std::string::npos);
}

TEST_CASE("cli oracle fails on a perturbed matrix") {
  const auto dir = std::filesystem::temp_directory_path() / "mp-cli-oracle";
  std::filesystem::create_directories(dir);
  const auto src = std::filesystem::path(MODALPROMPT_SOURCE_DIR "/data/fixtures/modalprompt-ref.csv");
  const auto dst = dir / "modalprompt-ref.csv";
  std::ifstream in(src);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  text.replace(text.find("59.68"), 5, "49.68");
  std::ofstream(dst) << text;
  const auto r = cli({"oracle", dst.string()});
  CHECK(r.code == kExitCheckFailed);
  CHECK(r.out.find("MISMATCH") != std::string::npos);
  CHECK(r.out.find("last.8") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("cli gen-suite and metrics write config records") {
  const auto dir = std::filesystem::temp_directory_path() / "mp-cli-gen";
  std::filesystem::remove_all(dir);
  const auto r = cli({"gen-suite", "--tasks", "2", "--n-train", "10", "--n-eval", "5", "--seed", "4", "--out", dir.string()});
  CHECK(r.code == kExitOk);
  CHECK(std::filesystem::exists(dir / "suite.jsonl"));
  CHECK(std::filesystem::exists(dir / "config.json"));
  const auto m = cli({"metrics", MODALPROMPT_SOURCE_DIR "/data/fixtures/finetune-ref.csv", "--out", dir.string()});
  CHECK(m.code == kExitOk);
  CHECK(std::filesystem::exists(dir / "report.json"));
  std::filesystem::remove_all(dir);
}
