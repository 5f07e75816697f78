// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/selection.hpp"

#include "modalprompt/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>

namespace modalprompt {

namespace {

// Ids sorted by (-score, id).
std::vector<int> ranked(const std::map<int, double>& combined, const std::vector<int>& candidates) {
  std::vector<int> out = candidates;
  std::stable_sort(out.begin(), out.end(), [&](int a, int b) {
    const double sa = combined.at(a), sb = combined.at(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return out;
}

}  // namespace

SelectionResult select_train(const ScoreMap& scores, int current_t, int k, const GuidanceWeights& weights) {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (current_t < 1) throw InputError("current task id must be at least 1");
  SelectionResult r;
  r.k = k;
  r.mode = SelectionMode::Train;
  for (int t = 1; t <= current_t; ++t) {
    const auto it = scores.find(t);
    if (it == scores.end()) throw InputError("missing guidance score for task " + std::to_string(t));
    r.combined_scores[t] = it->second.combined(weights);
  }
  std::vector<int> previous;
  for (int t = 1; t < current_t; ++t) previous.push_back(t);
  const auto order = ranked(r.combined_scores, previous);
  r.chosen_task_ids.push_back(current_t);
  for (size_t i = 0; i < order.size() && static_cast<int>(r.chosen_task_ids.size()) < k; ++i) {
    r.chosen_task_ids.push_back(order[i]);
  }
  std::sort(r.chosen_task_ids.begin(), r.chosen_task_ids.end());
  return r;
}

SelectionResult select_eval(const ScoreMap& scores, int k, const GuidanceWeights& weights) {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (scores.empty()) throw InputError("no guidance scores to select from");
  const int T = static_cast<int>(scores.size());
  SelectionResult r;
  r.k = k;
  r.mode = SelectionMode::Eval;
  std::vector<int> all;
  for (int t = 1; t <= T; ++t) {
    const auto it = scores.find(t);
    if (it == scores.end()) throw InputError("missing guidance score for task " + std::to_string(t));
    r.combined_scores[t] = it->second.combined(weights);
    all.push_back(t);
  }
  auto order = ranked(r.combined_scores, all);
  order.resize(static_cast<size_t>(std::min(k, T)));
  std::sort(order.begin(), order.end());
  r.chosen_task_ids = std::move(order);
  return r;
}

SelectionResult select_all(int t) {
  SelectionResult r;
  r.k = t;
  for (int i = 1; i <= t; ++i) r.chosen_task_ids.push_back(i);
  return r;
}

Matrix assemble_prefix(const PromptStore& store, const SelectionResult& result) {
  const int M = store.prompt_length();
  Matrix out(static_cast<Eigen::Index>(result.chosen_task_ids.size()) * M, store.shape().d_model);
  for (size_t i = 0; i < result.chosen_task_ids.size(); ++i) {
    out.middleRows(static_cast<Eigen::Index>(i) * M, M) = store.set(result.chosen_task_ids[i]).embeddings;
  }
  return out;
}

std::vector<int> prefix_token_ids(const PromptStore& store, const SelectionResult& result, int vocab_size) {
  std::vector<int> ids;
  ids.reserve(result.chosen_task_ids.size() * static_cast<size_t>(store.prompt_length()));
  for (int t : result.chosen_task_ids) {
    for (int r = 0; r < store.prompt_length(); ++r) ids.push_back(store.token_id(t, r, vocab_size));
  }
  return ids;
}

ScoreMap score_all(const std::vector<GuidanceVector>& prototypes, const GuidanceVector& x_v,
                   const GuidanceVector& x_instruct) {
  ScoreMap out;
  for (size_t i = 0; i < prototypes.size(); ++i) out[static_cast<int>(i) + 1] = score(prototypes[i], x_v, x_instruct);
  return out;
}

void write_traces(const std::vector<SelectionTrace>& traces, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& t : traces) {
    nlohmann::json scores = nlohmann::json::object();
    for (const auto& [id, s] : t.scores) scores[std::to_string(id)] = s;
    out << nlohmann::json{{"sample_id", t.sample_id},
                          {"task_id_true", t.task_id_true},
                          {"chosen_ids", t.chosen_ids},
                          {"scores", scores}}
               .dump()
        << "\n";
  }
}

std::vector<SelectionTrace> read_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<SelectionTrace> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SelectionTrace t;
      t.sample_id = j.at("sample_id").get<int>();
      t.task_id_true = j.at("task_id_true").get<int>();
      t.chosen_ids = j.at("chosen_ids").get<std::vector<int>>();
      for (const auto& [k, v] : j.at("scores").items()) t.scores[std::stoi(k)] = v.get<double>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace modalprompt
