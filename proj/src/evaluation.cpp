// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/evaluation.hpp"

#include "modalprompt/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace modalprompt {

EncodedSamples encode_samples(const GuidanceEncoders& enc, std::span<const Sample> samples) {
  EncodedSamples out;
  out.image.reserve(samples.size());
  out.text.reserve(samples.size());
  for (const auto& s : samples) {
    out.image.push_back(enc.encode_image(s.image));
    out.text.push_back(enc.encode_text(s.instruction_tokens));
  }
  return out;
}

GuidanceVector mean_direction(std::span<const GuidanceVector> vectors) {
  if (vectors.empty()) throw InputError("mean of no vectors");
  RowVector acc = RowVector::Zero(vectors.front().dim());
  for (const auto& v : vectors) acc += v.values();
  return GuidanceVector::normalize(acc);
}

double score_predictions(std::span<const std::string> predictions, std::span<const Sample> samples) {
  if (samples.empty()) throw InputError("empty eval split");
  if (predictions.size() != samples.size()) throw InputError("prediction count does not match sample count");
  int correct = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (normalize_answer(predictions[i]) == normalize_answer(samples[i].answer)) ++correct;
  }
  return 100.0 * correct / static_cast<double>(samples.size());
}

EvalOutcome evaluate_task(const BackboneGraph& graph, const PromptStore& store, const GuidanceEncoders& enc,
                          const TaskDataset& dataset, const EvalOptions& options) {
  const auto& samples = dataset.eval;
  if (samples.empty()) throw InputError("empty eval split for task " + std::to_string(dataset.spec.task_id));
  const int V = graph.config().vocab_size;
  const auto& vocab = Vocabulary::toy();

  ag::Var extra;
  if (store.task_count() > 0 && options.policy != PrefixPolicy::Empty) {
    extra = ag::Var::constant(store.stacked_embeddings());
  }
  std::vector<std::vector<int>> prefixes(samples.size());
  EvalOutcome out;
  switch (options.policy) {
    case PrefixPolicy::Select: {
      if (store.cached_prototypes().empty()) throw StateError("no finalized task to select from");
      const auto features = encode_samples(enc, samples);
      for (size_t i = 0; i < samples.size(); ++i) {
        const auto scores = score_all(store.cached_prototypes(), features.image[i], features.text[i]);
        const auto result = select_eval(scores, options.k, options.weights);
        prefixes[i] = prefix_token_ids(store, result, V);
        if (options.keep_traces) {
          out.traces.push_back({samples[i].sample_id, dataset.spec.task_id, result.chosen_task_ids,
                                result.combined_scores});
        }
      }
      break;
    }
    case PrefixPolicy::All: {
      if (store.task_count() == 0) throw StateError("no prompt sets stored");
      const auto ids = prefix_token_ids(store, select_all(store.task_count()), V);
      std::fill(prefixes.begin(), prefixes.end(), ids);
      break;
    }
    case PrefixPolicy::Shared: {
      const auto ids = prefix_token_ids(store, select_all(1), V);
      std::fill(prefixes.begin(), prefixes.end(), ids);
      break;
    }
    case PrefixPolicy::Empty: break;
  }

  const size_t chunk = static_cast<size_t>(std::max(1, options.batch_size));
  for (size_t start = 0; start < samples.size(); start += chunk) {
    const size_t end = std::min(samples.size(), start + chunk);
    std::vector<SequenceInput> inputs;
    for (size_t i = start; i < end; ++i) {
      inputs.push_back({prefixes[i], samples[i].image, samples[i].instruction_tokens, {}});
    }
    for (const auto& tokens : graph.generate(extra, inputs, options.max_answer_tokens)) {
      out.predictions.push_back(vocab.decode(tokens));
    }
  }
  out.accuracy = score_predictions(out.predictions, samples);
  return out;
}

EvalOutcome evaluate_task(const BackboneModel& model, const PromptStore& store, const GuidanceEncoders& enc,
                          const TaskDataset& dataset, const EvalOptions& options) {
  return evaluate_task(BackboneGraph(model), store, enc, dataset, options);
}

Matrix similarity_heatmap(const PromptStore& store, const GuidanceEncoders& enc, const Suite& suite,
                          const GuidanceWeights& weights) {
  const auto& protos = store.cached_prototypes();
  if (protos.empty()) throw StateError("no finalized tasks");
  const int T = static_cast<int>(suite.tasks.size());
  Matrix out(static_cast<Eigen::Index>(protos.size()), T);
  for (int j = 0; j < T; ++j) {
    const auto f = encode_samples(enc, suite.tasks[static_cast<size_t>(j)].eval);
    const GuidanceVector mv = mean_direction(f.image);
    const GuidanceVector mt = mean_direction(f.text);
    for (size_t i = 0; i < protos.size(); ++i) {
      out(static_cast<Eigen::Index>(i), j) = score(protos[i], mv, mt).combined(weights);
    }
  }
  return out;
}

Matrix selection_histogram(std::span<const SelectionTrace> traces, int tasks) {
  if (traces.empty()) throw InputError("no selection traces");
  Matrix counts = Matrix::Zero(tasks, tasks);
  for (const auto& t : traces) {
    if (t.task_id_true < 1 || t.task_id_true > tasks) throw InputError("trace has unknown true task");
    for (int c : t.chosen_ids) {
      if (c < 1 || c > tasks) throw InputError("trace chose unknown task " + std::to_string(c));
      counts(t.task_id_true - 1, c - 1) += 1.0;
    }
  }
  for (int i = 0; i < tasks; ++i) {
    const double s = counts.row(i).sum();
    if (s > 0) counts.row(i) /= s;
  }
  return counts;
}

std::vector<double> own_task_rate(std::span<const SelectionTrace> traces, int tasks) {
  if (traces.empty()) throw InputError("no selection traces");
  std::vector<double> hits(static_cast<size_t>(tasks), 0.0), total(static_cast<size_t>(tasks), 0.0);
  for (const auto& t : traces) {
    if (t.task_id_true < 1 || t.task_id_true > tasks) throw InputError("trace has unknown true task");
    const auto i = static_cast<size_t>(t.task_id_true - 1);
    total[i] += 1.0;
    if (std::find(t.chosen_ids.begin(), t.chosen_ids.end(), t.task_id_true) != t.chosen_ids.end()) hits[i] += 1.0;
  }
  for (size_t i = 0; i < hits.size(); ++i) hits[i] = total[i] > 0 ? hits[i] / total[i] : 0.0;
  return hits;
}

namespace {

std::string cell_color(double v, double lo, double hi) {
  const double x = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  // White to deep blue.
  const int r = static_cast<int>(247 - x * (247 - 8));
  const int g = static_cast<int>(251 - x * (251 - 48));
  const int b = static_cast<int>(255 - x * (255 - 107));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void write_heatmap(const Matrix& values, const std::vector<std::string>& labels, const std::string& title,
                   const std::filesystem::path& stem) {
  auto csv_path = stem;
  csv_path += ".csv";
  auto svg_path = stem;
  svg_path += ".svg";
  const auto label = [&](Eigen::Index i) {
    return i < static_cast<Eigen::Index>(labels.size()) ? labels[static_cast<size_t>(i)] : std::to_string(i + 1);
  };
  {
    std::ofstream csv(csv_path);
    if (!csv) throw InputError("cannot write " + csv_path.string());
    csv << "row";
    for (Eigen::Index j = 0; j < values.cols(); ++j) csv << "," << label(j);
    csv << "\n";
    char buf[32];
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      csv << label(i);
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.6f", values(i, j));
        csv << "," << buf;
      }
      csv << "\n";
    }
  }
  const int cell = 56, left = 90, top = 50;
  const int width = left + cell * static_cast<int>(values.cols()) + 20;
  const int height = top + cell * static_cast<int>(values.rows()) + 20;
  const double lo = values.size() ? values.minCoeff() : 0.0;
  const double hi = values.size() ? values.maxCoeff() : 1.0;
  std::ofstream svg(svg_path);
  if (!svg) throw InputError("cannot write " + svg_path.string());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    svg << "<text x=\"" << left + cell * j + cell / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
        << label(j) << "</text>\n";
  }
  char buf[32];
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    svg << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * i + cell / 2 + 4 << "\" text-anchor=\"end\">"
        << label(i) << "</text>\n";
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const double v = values(i, j);
      const double x = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      std::snprintf(buf, sizeof buf, "%.2f", v);
      svg << "<rect x=\"" << left + cell * j << "\" y=\"" << top + cell * i << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << cell_color(v, lo, hi) << "\" stroke=\"#ffffff\"/>\n";
      svg << "<text x=\"" << left + cell * j + cell / 2 << "\" y=\"" << top + cell * i + cell / 2 + 4
          << "\" text-anchor=\"middle\" fill=\"" << (x > 0.55 ? "#ffffff" : "#111111") << "\">" << buf
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
}

}  // namespace modalprompt
