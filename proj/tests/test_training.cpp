// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/archive.hpp"
#include "modalprompt/errors.hpp"
#include "modalprompt/evaluation.hpp"
#include "modalprompt/experiments.hpp"
#include "modalprompt/training.hpp"
#include "modalprompt/vocab.hpp"

#include <doctest.h>

using namespace modalprompt;

namespace {

BackboneModel tiny_backbone() {
  BackboneConfig c;
  c.vocab_size = Vocabulary::toy().size();
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.d_ff = 32;
  BackboneModel m = BackboneModel::initialize(c);
  m.freeze();
  return m;
}

RunConfig tiny_config(int tasks) {
  RunConfig c;
  c.tasks = tasks;
  c.d_model = 16;
  c.prompt_length = 3;
  c.top_k = 2;
  c.epochs_per_task = 1;
  return c;
}

Suite tiny_suite(int tasks) {
  SuiteOptions o;
  o.tasks = tasks;
  o.n_train = 12;
  o.n_eval = 6;
  return generate_suite(o);
}

}  // namespace

TEST_CASE("run config validation") {
  RunConfig c = tiny_config(2);
  CHECK_NOTHROW(c.validate());
  c.top_k = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config(2);
  c.prompt_length = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const RunConfig back = RunConfig::from_json(tiny_config(3).to_json());
  CHECK(back.to_json() == tiny_config(3).to_json());
}

TEST_CASE("continual run freezes earlier sets and fills the matrix") {
  const BackboneModel model = tiny_backbone();
  const Suite suite = tiny_suite(3);
  std::vector<std::string> snapshots;
  const auto result = run_continual(model, suite, tiny_config(3), [&](int stage, const PromptStore& store,
                                                                      const GuidanceEncoders&,
                                                                      const StageReport& report) {
    CHECK(report.task_id == stage);
    CHECK(store.task_count() == stage);
    CHECK(store.trainable_task() == 0);
    // Every set frozen at an earlier stage is unchanged.
    for (int t = 1; t < stage; ++t) {
      CHECK(matrix_bytes(store.set(t).embeddings) == snapshots[static_cast<size_t>(t - 1)]);
    }
    snapshots.push_back(matrix_bytes(store.set(stage).embeddings));
  });
  CHECK(result.matrix.complete());
  CHECK(result.reports.size() == 3);
  CHECK(result.store.task_count() == 3);
  CHECK_FALSE(result.final_traces.empty());
  for (const auto& tr : result.final_traces) CHECK(tr.chosen_ids.size() == 2);
}

TEST_CASE("every variant runs on a small suite") {
  const BackboneModel model = tiny_backbone();
  const Suite suite = tiny_suite(2);
  for (const Variant v : all_variants()) {
    CAPTURE(to_string(v));
    CHECK(variant_from_string(to_string(v)) == v);
    ExperimentPlan plan;
    plan.variant = v;
    plan.config = tiny_config(2);
    plan.suite = suite.options;
    const SeedResult r = run_seed(plan, model, suite, 1);
    CHECK(r.matrix.has(2, 1));
    CHECK(r.matrix.has(2, 2));
    CHECK(r.report.last.values.size() == 2);
  }
  CHECK_THROWS_AS(variant_from_string("nope"), ConfigError);
}

TEST_CASE("grid plans round-trip through JSON") {
  GridPlan p;
  p.variants = {Variant::ModalPrompt, Variant::ConcatAll};
  p.config = tiny_config(3);
  p.suite.tasks = 3;
  p.seeds = {4, 5};
  const GridPlan back = GridPlan::from_json(p.to_json());
  CHECK(back.to_json() == p.to_json());
  nlohmann::json bad = p.to_json();
  bad["variants"] = {"modalprompt", "unknown"};
  CHECK_THROWS_AS(GridPlan::from_json(bad), ConfigError);
  bad = p.to_json();
  bad["suite"]["tasks"] = 2;
  CHECK_THROWS_AS(GridPlan::from_json(bad), ConfigError);
  CHECK(suite_for_seed(p.suite, 3).seed == p.suite.seed + 3);
}

TEST_CASE("scoring normalizes case and whitespace") {
  const Suite suite = tiny_suite(1);
  const auto& eval = suite.tasks[0].eval;
  std::vector<std::string> preds;
  for (const auto& s : eval) preds.push_back(s.answer);
  preds[0] = "  " + preds[0] + " ";
  for (auto& c : preds[1]) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  preds[2] = "definitely wrong";
  CHECK(score_predictions(preds, eval) == doctest::Approx(100.0 * 5.0 / 6.0));
}
