// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Tiny multimodal decoder standing in for a pretrained LMM. Input layout of
// one sequence:
//
//   [prefix ; image slots ; instruction ; target prefix]
//
// Prefix ids index the extended vocabulary (base words followed by prompt
// rows), carry no position embedding, and are causal like every other row.
// Positions count from the first image slot. Output logits are tied to the
// extended vocabulary, so their width is base vocab + prompt rows.

#pragma once

#include "modalprompt/archive.hpp"
#include "modalprompt/autodiff.hpp"
#include "modalprompt/tasks.hpp"
#include "modalprompt/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace modalprompt {

struct BackboneConfig {
  int vocab_size = 256;
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int d_ff = 256;
  int image_slots = 4;
  int d_image = 32;
  int max_positions = 32;
  std::uint64_t seed = 1;
};

struct DecoderLayer {
  Matrix ln1_gain, ln1_bias;
  Matrix w_qkv, b_qkv;
  Matrix w_out, b_out;
  Matrix ln2_gain, ln2_bias;
  Matrix w_ff1, b_ff1;
  Matrix w_ff2, b_ff2;
};

class BackboneModel {
 public:
  static BackboneModel initialize(const BackboneConfig& config);

  const BackboneConfig& config() const { return config_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  /// Parameters in a fixed order, with stable names.
  std::vector<std::pair<std::string, const Matrix*>> parameters() const;
  /// Mutable parameters; StateError once frozen.
  std::vector<std::pair<std::string, Matrix*>> mutable_parameters();

  Archive to_archive() const;
  static BackboneModel from_archive(const Archive& archive);
  void save(const std::filesystem::path& path) const;
  static BackboneModel load(const std::filesystem::path& path);

 private:
  friend class BackboneGraph;

  BackboneConfig config_;
  bool frozen_ = false;
  Matrix token_embeddings_;     // V x d
  Matrix position_embeddings_;  // P x d
  Matrix adapter_w_;            // d_image x (slots * d)
  Matrix adapter_b_;            // 1 x (slots * d)
  std::vector<DecoderLayer> layers_;
  Matrix lnf_gain_, lnf_bias_;
};

/// One sequence of a packed batch.
struct SequenceInput {
  std::span<const int> prefix;  // extended-vocabulary ids
  std::span<const double> image;
  std::span<const int> instruction;
  std::span<const int> target_prefix;
};

/// Graph-side view of a model: its parameters wrapped as nodes (leaves when
/// trainable, constants otherwise). Build once and reuse across batches.
class BackboneGraph {
 public:
  explicit BackboneGraph(const BackboneModel& model, bool trainable = false);

  const BackboneConfig& config() const { return config_; }

  /// Logit rows for every sequence, packed in order: len(target_prefix) + 1
  /// rows per sequence (or one row each when `last_only`). `extra_vocab`
  /// holds prompt rows appended after the base vocabulary (may be empty).
  ag::Var forward(const ag::Var& extra_vocab, std::span<const SequenceInput> batch,
                  bool last_only = false) const;

  /// Greedy decoding of a batch over the base vocabulary; each output stops
  /// at end-of-answer (which is not included) or after `max_len` tokens.
  std::vector<TokenSeq> generate(const ag::Var& extra_vocab, std::span<const SequenceInput> batch,
                                 int max_len) const;

  std::vector<ag::Var>& trainable() { return trainable_; }
  /// Copies leaf values back into `model` (pretraining only).
  void write_back(BackboneModel& model) const;

 private:
  struct LayerVars {
    ag::Var ln1_gain, ln1_bias, w_qkv, b_qkv, w_out, b_out, ln2_gain, ln2_bias, w_ff1, b_ff1,
        w_ff2, b_ff2;
  };

  BackboneConfig config_;
  ag::Var token_embeddings_, position_embeddings_, adapter_w_, adapter_b_, lnf_gain_, lnf_bias_;
  std::vector<LayerVars> layers_;
  std::vector<ag::Var> trainable_;
};

/// Logits for one sequence whose prefix is the given embedding rows, which
/// also extend the output vocabulary.
Matrix forward_logits(const BackboneModel& model, const Matrix& prefix, std::span<const double> image,
                      std::span<const int> instruction, std::span<const int> target_prefix);

TokenSeq generate(const BackboneModel& model, const Matrix& prefix, std::span<const double> image,
                  std::span<const int> instruction, int max_len);

struct PretrainConfig {
  BackboneConfig backbone;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 3e-3;
  std::uint64_t seed = 1;
};

/// Trains every backbone parameter on the generic mixture with Adam, then
/// freezes the model. Throws ConfigError on an empty mixture.
BackboneModel pretrain_backbone(std::span<const Sample> mixture, const PretrainConfig& config);

/// Exact-match accuracy in [0, 1] of greedy answers with each sample's
/// context tokens as prefix.
double generic_accuracy(const BackboneModel& model, std::span<const Sample> samples);

/// Input view of a pretraining/generic sample.
SequenceInput context_input(const Sample& sample, std::span<const int> target_prefix);

}  // namespace modalprompt
