// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "modalprompt/guidance.hpp"
#include "modalprompt/prompt_store.hpp"

#include <filesystem>
#include <map>
#include <vector>

namespace modalprompt {

using ScoreMap = std::map<int, GuidanceScores>;

enum class SelectionMode { Train, Eval };

struct SelectionResult {
  std::vector<int> chosen_task_ids;       // ascending
  std::map<int, double> combined_scores;  // task id -> weighted alpha + beta
  int k = 0;
  SelectionMode mode = SelectionMode::Eval;
};

/// Current task plus the k-1 best earlier tasks. Entries above `current_t`
/// are ignored; a missing entry for 1..current_t is an InputError.
SelectionResult select_train(const ScoreMap& scores, int current_t, int k, const GuidanceWeights& weights = {});

/// The k best tasks among 1..T (T = number of entries, which must be
/// exactly 1..T). Ties go to the lower id.
SelectionResult select_eval(const ScoreMap& scores, int k, const GuidanceWeights& weights = {});

/// Every task in 1..t (the concat-all prefix).
SelectionResult select_all(int t);

/// Prompt rows of the chosen sets in ascending task order (M*|chosen| x d_m).
Matrix assemble_prefix(const PromptStore& store, const SelectionResult& result);
/// Extended-vocabulary ids of the same rows.
std::vector<int> prefix_token_ids(const PromptStore& store, const SelectionResult& result, int vocab_size);

/// Scores of every cached prototype against one input.
ScoreMap score_all(const std::vector<GuidanceVector>& prototypes, const GuidanceVector& x_v,
                   const GuidanceVector& x_instruct);

struct SelectionTrace {
  int sample_id = 0;
  int task_id_true = 0;
  std::vector<int> chosen_ids;
  std::map<int, double> scores;
};

void write_traces(const std::vector<SelectionTrace>& traces, const std::filesystem::path& path);
std::vector<SelectionTrace> read_traces(const std::filesystem::path& path);

}  // namespace modalprompt
