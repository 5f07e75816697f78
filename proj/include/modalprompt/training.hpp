// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "modalprompt/backbone.hpp"
#include "modalprompt/evaluation.hpp"
#include "modalprompt/guidance.hpp"
#include "modalprompt/metrics.hpp"
#include "modalprompt/prompt_store.hpp"
#include "modalprompt/tasks.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace modalprompt {

struct RunConfig {
  int prompt_length = 10;  // M
  int top_k = 3;
  int d_model = 64;
  int d_guidance = 32;
  int d_image = 32;
  int tasks = 4;
  int epochs_per_task = 4;
  int batch_size = 16;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  std::uint64_t encoder_seed = 4242;
  GuidanceMode guidance_mode = GuidanceMode::Dual;
  bool fusion_enabled = true;     // top-k earlier sets join the training prefix
  bool selection_enabled = true;  // top-k at evaluation, else every set
  bool fuse_all = false;          // every earlier set joins the training prefix
  bool shared_prompt = false;     // one set tuned across all tasks
  double w_lmm = 1.0;
  double w_proto = 1.0;
  int max_answer_tokens = 4;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
  GuidanceWeights weights() const { return GuidanceWeights::for_mode(guidance_mode); }
  StoreShape store_shape() const { return {prompt_length, d_model, d_guidance}; }
  EvalOptions eval_options() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct StageReport {
  int task_id = 0;
  double final_lmm = 0.0;    // mean over the last epoch
  double final_proto = 0.0;
  int steps = 0;
  double wall_clock = 0.0;   // seconds
  std::vector<double> epoch_lmm;
  std::vector<double> epoch_proto;

  nlohmann::json to_json() const;
};

/// Mean over the batch of the summed target negative log-likelihood.
ag::Var lmm_loss(const BackboneGraph& graph, const ag::Var& extra_vocab, std::span<const SequenceInput> inputs,
                 std::span<const int> targets);
/// Convenience form: `prefix` rows prepended to every sample.
double lmm_loss(const BackboneModel& model, const Matrix& prefix, std::span<const Sample> batch);

/// w_image * (1 - cos(p, x_v)) + w_text * (1 - cos(p, x_instruct)).
ag::Var proto_loss(const ag::Var& prototype, const ag::Var& x_v, const ag::Var& x_instruct,
                   const GuidanceWeights& weights = {});
double proto_loss(const GuidanceVector& prototype, const GuidanceVector& x_v, const GuidanceVector& x_instruct);

/// Trains one stage. For prompt-pool runs, adds task `dataset.spec.task_id`
/// (which must be the next id), optimizes it with the shared head, then
/// finalizes it. With `shared_prompt` the single set 1 is tuned instead.
StageReport train_task(PromptStore& store, const BackboneGraph& graph, const GuidanceEncoders& enc,
                       const TaskDataset& dataset, const RunConfig& config);
StageReport train_task(PromptStore& store, const BackboneModel& model, const GuidanceEncoders& enc,
                       const TaskDataset& dataset, const RunConfig& config);

struct ContinualResult {
  PromptStore store;
  GuidanceEncoders encoders;
  AccuracyMatrix matrix;
  std::vector<StageReport> reports;
  std::vector<SelectionTrace> final_traces;  // last stage, when selection is on
};

/// Called after each stage has been trained and evaluated.
using StageCallback =
    std::function<void(int stage, const PromptStore&, const GuidanceEncoders&, const StageReport&)>;

ContinualResult run_continual(const BackboneModel& model, const Suite& suite, const RunConfig& config,
                              const StageCallback& on_stage = {});

/// Appends one JSON line per report.
void append_run_log(const std::vector<StageReport>& reports, const std::filesystem::path& path);

}  // namespace modalprompt
