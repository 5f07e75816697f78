// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment grid: ModalPrompt against its baselines and ablations over
// shared suites and seeds, plus the prefix-length complexity benchmark.
//
// Run directory layout:
//
//   <run>/plan.json
//   <run>/suites/seed-<s>.jsonl (+ manifest)
//   <run>/matrices/<variant>-seed<s>.csv
//   <run>/reports/<variant>-seed<s>.{json,txt}, <variant>-aggregate.json
//   <run>/prompts/<variant>-seed<s>.store
//   <run>/logs/<variant>-seed<s>.jsonl, <variant>-seed<s>-traces.jsonl
//   <run>/plots/

#pragma once

#include "modalprompt/backbone.hpp"
#include "modalprompt/metrics.hpp"
#include "modalprompt/tasks.hpp"
#include "modalprompt/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace modalprompt {

enum class Variant {
  ModalPrompt,
  Finetune,
  ConcatAll,
  FusionOnly,
  SelectionOnly,
  ImageGuidance,
  TextGuidance,
  Multitask,
  Zeroshot,
};

std::string to_string(Variant v);
/// ConfigError listing the valid names on an unknown variant.
Variant variant_from_string(const std::string& name);
const std::vector<Variant>& all_variants();

/// `base` with the switches of `v` applied.
RunConfig configure_variant(Variant v, RunConfig base);

/// Recipe for the frozen backbone shared by every run.
struct PretrainPlan {
  int samples = 4000;
  int epochs = 15;
  int max_context = 8;
  double learning_rate = 3e-3;
  std::uint64_t seed = 11;

  nlohmann::json to_json() const;
  static PretrainPlan from_json(const nlohmann::json& j);
};

/// Pretrains per `plan` on the default world; deterministic in the plan.
BackboneModel pretrain_default_backbone(const PretrainPlan& plan);
/// Loads `path` when it exists, else pretrains and saves there.
BackboneModel obtain_backbone(const std::filesystem::path& path, const PretrainPlan& plan);

struct ExperimentPlan {
  Variant variant = Variant::ModalPrompt;
  RunConfig config;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  SuiteOptions suite;

  /// ConfigError on empty seeds or an invalid config.
  void validate() const;
};

nlohmann::json suite_options_to_json(const SuiteOptions& options);
/// SchemaError on an unknown layout; absent keys keep their defaults.
SuiteOptions suite_options_from_json(const nlohmann::json& j);

/// Suite of one seed: the plan's suite options with seed `suite.seed + seed`.
SuiteOptions suite_for_seed(const SuiteOptions& base, std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  AccuracyMatrix matrix;
  MetricReport report;
  std::vector<StageReport> stages;
  std::vector<SelectionTrace> traces;
  std::optional<PromptStore> store;
  std::optional<GuidanceEncoders> encoders;
};

/// Report of a matrix holding only its last row (zero-shot, multitask).
MetricReport last_row_report(const AccuracyMatrix& a);

/// Runs one seed of `plan` on a prepared suite.
SeedResult run_seed(const ExperimentPlan& plan, const BackboneModel& model, const Suite& suite, std::uint64_t seed);

/// Every seed of the plan, each on the suite generated for it.
std::vector<SeedResult> run_variant(const ExperimentPlan& plan, const BackboneModel& model);

/// Several variants over shared suites and seeds.
struct GridPlan {
  std::vector<Variant> variants = {Variant::ModalPrompt, Variant::Finetune};
  RunConfig config;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  SuiteOptions suite;
  PretrainPlan pretrain;
  std::optional<std::filesystem::path> backbone;  // reuse instead of pretraining

  void validate() const;
  ExperimentPlan plan_for(Variant v) const;

  nlohmann::json to_json() const;
  /// SchemaError on malformed input, ConfigError on unknown variants.
  static GridPlan from_json(const nlohmann::json& j);
  static GridPlan load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct GridOutcome {
  std::vector<Variant> variants;
  std::vector<AggregateReport> aggregates;  // parallel to variants
};

/// Runs the grid into `run_dir` (created), writing the tree described at the
/// top of this header. Suites are generated once per seed and shared.
GridOutcome run_grid(const GridPlan& plan, const std::filesystem::path& run_dir);

/// Writes the plots of every finished ModalPrompt-style seed in `run_dir`:
/// similarity heatmap and selection histogram. Returns the files written.
std::vector<std::filesystem::path> plot_run(const std::filesystem::path& run_dir);

struct BenchRow {
  int tasks = 0;
  std::string method;  // "modalprompt" or "concat_all"
  int prefix_tokens = 0;
  double ms_per_token = 0.0;
};

struct BenchOptions {
  std::vector<int> task_counts = {2, 4, 8};
  int k = 3;
  int prompt_length = 10;
  int samples = 48;
  int repeats = 3;
  std::uint64_t seed = 1;
};

/// Times greedy decoding with randomly initialized stores of each size.
/// ModalPrompt timing includes guidance encoding and selection.
std::vector<BenchRow> complexity_benchmark(const BackboneModel& model, const BenchOptions& options);

std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace modalprompt
