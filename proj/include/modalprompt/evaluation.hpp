// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "modalprompt/backbone.hpp"
#include "modalprompt/guidance.hpp"
#include "modalprompt/metrics.hpp"
#include "modalprompt/prompt_store.hpp"
#include "modalprompt/selection.hpp"
#include "modalprompt/tasks.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace modalprompt {

/// Encoded guidance features of a sample list.
struct EncodedSamples {
  std::vector<GuidanceVector> image;
  std::vector<GuidanceVector> text;
};

EncodedSamples encode_samples(const GuidanceEncoders& enc, std::span<const Sample> samples);

/// Mean of unit vectors, renormalized.
GuidanceVector mean_direction(std::span<const GuidanceVector> vectors);

/// How the prefix of an evaluated sample is built.
enum class PrefixPolicy {
  Select,  // per-sample top-k over cached prototypes
  All,     // every stored set
  Shared,  // the single set of task 1 (sequential finetune, multitask)
  Empty,   // no prefix (zero-shot)
};

struct EvalOptions {
  PrefixPolicy policy = PrefixPolicy::Select;
  int k = 3;
  GuidanceWeights weights;
  int max_answer_tokens = 4;
  int batch_size = 64;
  bool keep_traces = false;
};

struct EvalOutcome {
  double accuracy = 0.0;  // percent
  std::vector<std::string> predictions;
  std::vector<SelectionTrace> traces;
};

/// Exact match after case/whitespace normalization, as a percentage.
double score_predictions(std::span<const std::string> predictions, std::span<const Sample> samples);

EvalOutcome evaluate_task(const BackboneGraph& graph, const PromptStore& store, const GuidanceEncoders& enc,
                          const TaskDataset& dataset, const EvalOptions& options);
EvalOutcome evaluate_task(const BackboneModel& model, const PromptStore& store, const GuidanceEncoders& enc,
                          const TaskDataset& dataset, const EvalOptions& options);

/// Entry (i, j): weighted alpha + beta of cached prototype i against the mean
/// guidance of task j's eval split.
Matrix similarity_heatmap(const PromptStore& store, const GuidanceEncoders& enc, const Suite& suite,
                          const GuidanceWeights& weights = {});

/// Row i: distribution of chosen task ids over samples of true task i,
/// normalized by the number of chosen entries (k per sample once T >= k).
Matrix selection_histogram(std::span<const SelectionTrace> traces, int tasks);

/// Per task: fraction of its samples whose chosen set contains it.
std::vector<double> own_task_rate(std::span<const SelectionTrace> traces, int tasks);

/// Writes `<stem>.csv` and `<stem>.svg`.
void write_heatmap(const Matrix& values, const std::vector<std::string>& labels, const std::string& title,
                   const std::filesystem::path& stem);

}  // namespace modalprompt
