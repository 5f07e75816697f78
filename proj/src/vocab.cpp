// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/vocab.hpp"

#include "modalprompt/errors.hpp"

#include <cctype>
#include <sstream>

namespace modalprompt {

namespace {

constexpr int kVocabSize = 256;

// Instruction and answer words of the five task families.
constexpr const char* kWords[] = {
    "what", "color", "is", "the", "object", "name", "of", "which", "shown", "how", "many",
    "objects", "are", "there", "count", "number", "items", "larger", "first", "item", "bigger",
    "compare", "sizes", "where", "position", "describe", "relation", "in", "scene", "tell",
    "me", "parity", "or", "shade", "tint", "tally", "total", "side", "than", "place", "layout",
    "located", "parities", "quantity", "other",
    // answers
    "red", "green", "blue", "yellow", "purple", "orange", "white", "black", "one", "two",
    "three", "four", "five", "six", "seven", "eight", "yes", "no", "above", "below", "left",
    "right", "even", "odd"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const Vocabulary& Vocabulary::toy() {
  static const Vocabulary vocab;
  return vocab;
}

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "<eoa>", "<sep>", "<unk>"};
  first_attribute_ = static_cast<int>(words_.size());
  for (int f = 0; f < kFamilies; ++f) {
    for (int v = 0; v < kValues; ++v) {
      words_.push_back("<f" + std::to_string(f) + "v" + std::to_string(v) + ">");
    }
  }
  for (const char* w : kWords) words_.emplace_back(w);
  for (int i = 0; static_cast<int>(words_.size()) < kVocabSize; ++i) {
    words_.push_back("<r" + std::to_string(i) + ">");
  }
  for (int i = 0; i < size(); ++i) index_.emplace(words_[static_cast<size_t>(i)], i);
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(lower(word));
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw LookupError("token id " + std::to_string(id) + " outside vocabulary");
  return words_[static_cast<size_t>(id)];
}

int Vocabulary::attribute_token(int family, int value) const {
  if (family < 0 || family >= kFamilies || value < 0 || value >= kValues) {
    throw LookupError("no attribute token for family " + std::to_string(family) + " value " +
                      std::to_string(value));
  }
  return first_attribute_ + family * kValues + value;
}

TokenSeq Vocabulary::encode(std::string_view text) const {
  std::istringstream in{std::string(text)};
  TokenSeq out;
  std::string w;
  while (in >> w) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t == kEndOfAnswer) break;
    if (!out.empty()) out += ' ';
    out += t >= 0 && t < size() ? words_[static_cast<size_t>(t)]
                                : "<prompt:" + std::to_string(t - size()) + ">";
  }
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::istringstream in{lower(text)};
  std::string out;
  std::string w;
  while (in >> w) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace modalprompt
