// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace modalprompt {

using TokenSeq = std::vector<int>;

/// Fixed word-level vocabulary of the toy world. Ids past size() are prompt
/// tokens appended by the prompt store.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEndOfAnswer = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnknown = 3;
  static constexpr int kScenes = 8;
  static constexpr int kShifts = 8;

  static const Vocabulary& toy();

  int size() const { return static_cast<int>(words_.size()); }
  /// Id of a word, or kUnknown.
  int id(std::string_view word) const;
  const std::string& word(int id) const;

  static constexpr int kFamilies = 5;
  static constexpr int kValues = 8;

  /// Attribute token <f{family}v{value}>. In a prefix, the pair
  /// [attribute token, word] binds images showing that attribute to `word`.
  int attribute_token(int family, int value) const;

  /// Lowercased whitespace tokenization.
  TokenSeq encode(std::string_view text) const;
  /// Space-joined words, stopping at end-of-answer.
  std::string decode(std::span<const int> tokens) const;

 private:
  Vocabulary();

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  int first_attribute_ = 0;
};

/// Case- and whitespace-normalized form used for exact-match scoring.
std::string normalize_answer(std::string_view text);

}  // namespace modalprompt
