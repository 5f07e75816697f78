// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/errors.hpp"
#include "modalprompt/tasks.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace modalprompt;
namespace fs = std::filesystem;

namespace {

SuiteOptions small(int tasks = 4) {
  SuiteOptions o;
  o.tasks = tasks;
  o.n_train = 30;
  o.n_eval = 20;
  return o;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("separable suites give every task its own scene and family") {
  const Suite suite = generate_suite(small(5));
  REQUIRE(suite.tasks.size() == 5);
  std::set<int> scenes;
  std::set<Family> families;
  for (size_t i = 0; i < suite.tasks.size(); ++i) {
    const auto& t = suite.tasks[i];
    CHECK(t.spec.task_id == static_cast<int>(i) + 1);
    CHECK(t.spec.shift != 0);
    CHECK(t.eval.size() == 20);
    scenes.insert(t.spec.scene);
    families.insert(t.spec.family);
    for (const auto& s : t.eval) {
      CHECK_FALSE(s.background);
      CHECK(s.task_id == t.spec.task_id);
      CHECK(s.target.size() >= 2);
    }
  }
  CHECK(scenes.size() == 5);
  CHECK(families.size() == 5);
}

TEST_CASE("background samples fill the requested share of each train split") {
  SuiteOptions o = small(2);
  o.background_fraction = 0.5;
  const Suite suite = generate_suite(o);
  for (const auto& t : suite.tasks) {
    int background = 0;
    for (const auto& s : t.train) {
      if (s.background) ++background;
    }
    CHECK(background == 30);
    CHECK(t.train.size() == 60);
  }
  o.background_fraction = 0.95;
  CHECK_THROWS_AS(generate_suite(o), ConfigError);
}

TEST_CASE("joint layout shares a scene and a family") {
  SuiteOptions o = small(4);
  o.layout = SuiteLayout::Joint;
  const Suite s = generate_suite(o);
  CHECK(s.tasks[0].spec.scene == s.tasks[1].spec.scene);
  CHECK(s.tasks[0].spec.family != s.tasks[1].spec.family);
  CHECK(s.tasks[2].spec.family == s.tasks[3].spec.family);
  CHECK(s.tasks[2].spec.scene != s.tasks[3].spec.scene);
  o.tasks = 3;
  CHECK_THROWS_AS(generate_suite(o), CapacityError);
}

TEST_CASE("joint tasks on one scene share an image cluster") {
  SuiteOptions o = small(4);
  o.layout = SuiteLayout::Joint;
  o.n_eval = 4000;
  const Suite s = generate_suite(o);
  const auto& a = s.tasks[0].spec;
  const auto& b = s.tasks[1].spec;
  CHECK(a.cluster_center == b.cluster_center);

  const World world(o.world);
  const double family_gap = (world.family_mean(a.family) - world.family_mean(b.family)).norm();
  const Eigen::Map<const Eigen::VectorXd> center(a.cluster_center.data(),
                                                 static_cast<Eigen::Index>(a.cluster_center.size()));
  for (int t = 0; t < 2; ++t) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(center.size());
    for (const auto& x : s.tasks[static_cast<size_t>(t)].eval) {
      mean += Eigen::Map<const Eigen::VectorXd>(x.image.data(), static_cast<Eigen::Index>(x.image.size()));
    }
    mean /= static_cast<double>(s.tasks[static_cast<size_t>(t)].eval.size());
    CHECK((mean - center).norm() < 0.1 * family_gap);
  }
}

TEST_CASE("suite capacity and config errors") {
  CHECK_THROWS_AS(generate_suite(small(9)), CapacityError);
  CHECK_THROWS_AS(generate_suite(small(0)), ConfigError);
  SuiteOptions o = small(2);
  o.n_eval = 0;
  CHECK_THROWS_AS(generate_suite(o), ConfigError);
}

TEST_CASE("generation is deterministic in the seed") {
  const Suite a = generate_suite(small(3));
  const Suite b = generate_suite(small(3));
  SuiteOptions other = small(3);
  other.seed = 99;
  const Suite c = generate_suite(other);
  CHECK(a.tasks[2].train[5].image == b.tasks[2].train[5].image);
  CHECK(a.tasks[1].eval[3].answer == b.tasks[1].eval[3].answer);
  CHECK(a.tasks[0].eval[0].image != c.tasks[0].eval[0].image);
}

TEST_CASE("suites round-trip through JSON lines") {
  const fs::path dir = fs::temp_directory_path() / "mp-suite-test";
  fs::create_directories(dir);
  const Suite suite = generate_suite(small(3));
  save_suite(suite, dir / "suite.jsonl");
  CHECK(fs::exists(manifest_path_for(dir / "suite.jsonl")));
  const auto loaded = load_suite(dir / "suite.jsonl");
  CHECK(loaded.warnings.empty());
  REQUIRE(loaded.suite.tasks.size() == 3);
  for (size_t t = 0; t < 3; ++t) {
    const auto& x = suite.tasks[t];
    const auto& y = loaded.suite.tasks[t];
    CHECK(x.spec.shift == y.spec.shift);
    REQUIRE(x.train.size() == y.train.size());
    for (size_t i = 0; i < x.train.size(); ++i) {
      CHECK(x.train[i].instruction_tokens == y.train[i].instruction_tokens);
      CHECK(x.train[i].target == y.train[i].target);
      CHECK(x.train[i].background == y.train[i].background);
    }
    CHECK(x.eval.back().image == y.eval.back().image);
  }
  // Saving the loaded suite reproduces the file byte for byte.
  save_suite(loaded.suite, dir / "again.jsonl");
  CHECK(read_all(dir / "suite.jsonl") == read_all(dir / "again.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("malformed suite records are reported with their line") {
  const fs::path dir = fs::temp_directory_path() / "mp-suite-bad";
  fs::create_directories(dir);
  save_suite(generate_suite(small(1)), dir / "suite.jsonl");
  const std::string text = read_all(dir / "suite.jsonl");
  const auto first_end = text.find('\n');

  SUBCASE("missing field") {
    std::string line = text.substr(0, first_end);
    const auto at = line.find("\"answer\":");
    const auto comma = line.find(',', at);
    line.erase(at, comma - at + 1);
    write_all(dir / "suite.jsonl", line + text.substr(first_end));
    try {
      load_suite(dir / "suite.jsonl");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("answer") != std::string::npos);
      CHECK(msg.find("1") != std::string::npos);
    }
  }
  SUBCASE("unknown field warns") {
    std::string line = text.substr(0, first_end);
    line.insert(1, "\"extra\":1,");
    write_all(dir / "suite.jsonl", line + text.substr(first_end));
    const auto loaded = load_suite(dir / "suite.jsonl");
    REQUIRE(loaded.warnings.size() == 1);
    CHECK(loaded.warnings[0].find("extra") != std::string::npos);
  }
  SUBCASE("not json") {
    write_all(dir / "suite.jsonl", "{broken\n" + text);
    CHECK_THROWS_AS(load_suite(dir / "suite.jsonl"), SchemaError);
  }
  SUBCASE("missing manifest") {
    fs::remove(manifest_path_for(dir / "suite.jsonl"));
    CHECK_THROWS_AS(load_suite(dir / "suite.jsonl"), SchemaError);
  }
  fs::remove_all(dir);
}

TEST_CASE("pretraining mixture carries binding pairs") {
  const auto bare = generate_pretraining_mixture(200, 5, World::Params{}, 0.25, 0);
  for (const auto& s : bare) CHECK(s.context.empty());
  const auto mixed = generate_pretraining_mixture(400, 5, World::Params{}, 0.25, 4);
  size_t longest = 0, with_pairs = 0;
  for (const auto& s : mixed) {
    CHECK(s.context.size() % 2 == 0);
    longest = std::max(longest, s.context.size());
    if (!s.context.empty()) ++with_pairs;
  }
  CHECK(longest == 8);
  CHECK(with_pairs > 200);
  CHECK_THROWS_AS(generate_pretraining_mixture(0, 1, World::Params{}, 0.25), ConfigError);
  CHECK_THROWS_AS(generate_pretraining_mixture(10, 1, World::Params{}, 0.25, 13), ConfigError);
}

TEST_CASE("joint mixture relabels everything as one task") {
  const Suite suite = generate_suite(small(3));
  const auto joint = joint_mixture(suite, 1);
  CHECK(joint.spec.task_id == 1);
  size_t n = 0;
  for (const auto& t : suite.tasks) n += t.train.size();
  CHECK(joint.train.size() == n);
  for (const auto& s : joint.train) CHECK(s.task_id == 1);
}
