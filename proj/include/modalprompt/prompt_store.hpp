// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "modalprompt/archive.hpp"
#include "modalprompt/autodiff.hpp"
#include "modalprompt/guidance.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace modalprompt {

struct PromptSet {
  int task_id = 0;
  Matrix embeddings;  // M x d_m
  bool frozen = false;
};

/// Graph-side handles to the head parameters.
struct HeadVars {
  ag::Var w1, b1, w2, b2;
};

/// Prototype projection: mean-pool the prompt rows, d_m -> d_g -> d_g with a
/// tanh in between, then L2-normalize.
struct PrototypeHead {
  Matrix w1;  // d_m x d_g
  Matrix b1;  // 1 x d_g
  Matrix w2;  // d_g x d_g
  Matrix b2;  // 1 x d_g
  bool trainable = true;

  static PrototypeHead initialize(int d_model, int d_guidance, std::uint64_t seed);
  int d_model() const { return static_cast<int>(w1.rows()); }
  int d_guidance() const { return static_cast<int>(w2.cols()); }

  HeadVars constants() const;
  HeadVars leaves() const;
  void assign(const HeadVars& vars);
};

/// Differentiable projection (1 x d_g, unit norm).
ag::Var project_prototype(const HeadVars& head, const ag::Var& prompts);
GuidanceVector project_prototype(const PrototypeHead& head, const PromptSet& prompts);

struct StoreShape {
  int prompt_length = 10;
  int d_model = 64;
  int d_guidance = 32;
};

class PromptStore {
 public:
  PromptStore(StoreShape shape, std::uint64_t head_seed);

  const StoreShape& shape() const { return shape_; }
  int prompt_length() const { return shape_.prompt_length; }

  /// Appends a trainable set for `task_id` (must be 1 + highest id). Every
  /// earlier set must be finalized (StateError otherwise).
  void add_task(int task_id, std::uint64_t init_seed);
  /// Freezes the current set and snapshots its prototype.
  void finalize_task(int task_id);

  const std::vector<PromptSet>& sets() const { return sets_; }
  const PromptSet& set(int task_id) const;
  PromptSet& mutable_set(int task_id);  // StateError when frozen
  int task_count() const { return static_cast<int>(sets_.size()); }
  /// Id of the trainable set, or 0 when all are frozen.
  int trainable_task() const;

  const PrototypeHead& head() const { return head_; }
  PrototypeHead& mutable_head() { return head_; }
  const std::vector<GuidanceVector>& cached_prototypes() const { return cached_; }
  const GuidanceVector& cached_prototype(int task_id) const;

  /// Every set's rows stacked in task order (T*M x d_m); prompt token ids
  /// index this block after the base vocabulary.
  Matrix stacked_embeddings() const;
  /// Extended-vocabulary id of row `row` of task `task_id`.
  int token_id(int task_id, int row, int vocab_size) const;

  Archive to_archive() const;
  /// Throws ShapeError naming the field when `expected` disagrees.
  static PromptStore from_archive(const Archive& archive, const std::optional<StoreShape>& expected = {});
  void save(const std::filesystem::path& path) const;
  static PromptStore load(const std::filesystem::path& path, const std::optional<StoreShape>& expected = {});
  /// Human-readable summary written next to the archive.
  std::string manifest() const;

 private:
  StoreShape shape_;
  std::vector<PromptSet> sets_;
  PrototypeHead head_;
  std::vector<GuidanceVector> cached_;
};

}  // namespace modalprompt
