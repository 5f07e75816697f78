// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/training.hpp"

#include "modalprompt/errors.hpp"
#include "modalprompt/optim.hpp"
#include "modalprompt/seeding.hpp"
#include "modalprompt/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace modalprompt {

void RunConfig::validate() const {
  if (prompt_length < 1) throw ConfigError("M must be at least 1");
  if (top_k < 1) throw ConfigError("k must be at least 1");
  if (d_model < 1 || d_guidance < 1 || d_image < 1) throw ConfigError("dimensions must be positive");
  if (tasks < 1) throw ConfigError("T must be at least 1");
  if (epochs_per_task < 1 || batch_size < 1) throw ConfigError("epochs and batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(w_lmm > 0.0) || w_proto < 0.0) throw ConfigError("loss weights need w_lmm > 0 and w_proto >= 0");
  if (max_answer_tokens < 1) throw ConfigError("max_answer_tokens must be at least 1");
  if (shared_prompt && fuse_all) throw ConfigError("a shared prompt cannot be combined with concat-all fusion");
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.policy = shared_prompt ? PrefixPolicy::Shared : selection_enabled ? PrefixPolicy::Select : PrefixPolicy::All;
  o.k = top_k;
  o.weights = weights();
  o.max_answer_tokens = max_answer_tokens;
  return o;
}

nlohmann::json RunConfig::to_json() const {
  return {{"M", prompt_length},
          {"k", top_k},
          {"d_m", d_model},
          {"d_g", d_guidance},
          {"d_img", d_image},
          {"T", tasks},
          {"epochs_per_task", epochs_per_task},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"encoder_seed", encoder_seed},
          {"guidance_mode", to_string(guidance_mode)},
          {"fusion_enabled", fusion_enabled},
          {"selection_enabled", selection_enabled},
          {"fuse_all", fuse_all},
          {"shared_prompt", shared_prompt},
          {"loss_weights", {w_lmm, w_proto}},
          {"max_answer_tokens", max_answer_tokens}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.prompt_length = j.value("M", c.prompt_length);
    c.top_k = j.value("k", c.top_k);
    c.d_model = j.value("d_m", c.d_model);
    c.d_guidance = j.value("d_g", c.d_guidance);
    c.d_image = j.value("d_img", c.d_image);
    c.tasks = j.value("T", c.tasks);
    c.epochs_per_task = j.value("epochs_per_task", c.epochs_per_task);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.encoder_seed = j.value("encoder_seed", c.encoder_seed);
    if (j.contains("guidance_mode")) c.guidance_mode = guidance_mode_from_string(j["guidance_mode"].get<std::string>());
    c.fusion_enabled = j.value("fusion_enabled", c.fusion_enabled);
    c.selection_enabled = j.value("selection_enabled", c.selection_enabled);
    c.fuse_all = j.value("fuse_all", c.fuse_all);
    c.shared_prompt = j.value("shared_prompt", c.shared_prompt);
    if (j.contains("loss_weights")) {
      const auto w = j["loss_weights"].get<std::vector<double>>();
      if (w.size() != 2) throw ConfigError("loss_weights must hold two numbers");
      c.w_lmm = w[0];
      c.w_proto = w[1];
    }
    c.max_answer_tokens = j.value("max_answer_tokens", c.max_answer_tokens);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json StageReport::to_json() const {
  return {{"task_id", task_id},   {"final_losses", {final_lmm, final_proto}},
          {"steps", steps},       {"wall_clock", wall_clock},
          {"epoch_lmm", epoch_lmm}, {"epoch_proto", epoch_proto}};
}

ag::Var lmm_loss(const BackboneGraph& graph, const ag::Var& extra_vocab, std::span<const SequenceInput> inputs,
                 std::span<const int> targets) {
  if (inputs.empty()) throw InputError("lmm_loss on an empty batch");
  const ag::Var logits = graph.forward(extra_vocab, inputs);
  return ag::scale(ag::cross_entropy_sum(logits, targets), 1.0 / static_cast<double>(inputs.size()));
}

double lmm_loss(const BackboneModel& model, const Matrix& prefix, std::span<const Sample> batch) {
  if (batch.empty()) throw InputError("lmm_loss on an empty batch");
  const BackboneGraph graph(model);
  std::vector<int> ids(static_cast<size_t>(prefix.rows()));
  std::iota(ids.begin(), ids.end(), model.config().vocab_size);
  std::vector<SequenceInput> inputs;
  std::vector<int> targets;
  for (const auto& s : batch) {
    inputs.push_back({ids, s.image, s.instruction_tokens, std::span(s.target).first(s.target.size() - 1)});
    targets.insert(targets.end(), s.target.begin(), s.target.end());
  }
  const ag::Var extra = prefix.rows() > 0 ? ag::Var::constant(prefix) : ag::Var();
  return lmm_loss(graph, extra, inputs, targets).scalar();
}

ag::Var proto_loss(const ag::Var& prototype, const ag::Var& x_v, const ag::Var& x_instruct,
                   const GuidanceWeights& weights) {
  ag::Var total = ag::Var::constant(Matrix::Zero(1, 1));
  if (weights.image != 0.0) total = ag::sub(total, ag::scale(ag::cosine(prototype, x_v), weights.image));
  if (weights.text != 0.0) total = ag::sub(total, ag::scale(ag::cosine(prototype, x_instruct), weights.text));
  return ag::add_scalar(total, weights.image + weights.text);
}

double proto_loss(const GuidanceVector& prototype, const GuidanceVector& x_v, const GuidanceVector& x_instruct) {
  const auto s = score(prototype, x_v, x_instruct);
  return (1.0 - s.alpha) + (1.0 - s.beta);
}

namespace {

RowVector mean_of(const std::vector<GuidanceVector>& v, std::span<const size_t> idx) {
  RowVector acc = RowVector::Zero(v.front().dim());
  for (size_t i : idx) acc += v[i].values();
  return acc / static_cast<double>(idx.size());
}

}  // namespace

StageReport train_task(PromptStore& store, const BackboneGraph& graph, const GuidanceEncoders& enc,
                       const TaskDataset& dataset, const RunConfig& config) {
  config.validate();
  const auto start_time = std::chrono::steady_clock::now();
  if (dataset.train.empty()) throw InputError("task " + std::to_string(dataset.spec.task_id) + " has no training data");
  if (store.shape().d_model != graph.config().d_model) throw ShapeError("prompt width does not match backbone width");
  const int V = graph.config().vocab_size;

  int t = 0;
  if (config.shared_prompt) {
    if (store.task_count() == 0) store.add_task(1, mix_seed(config.seed, 0x9a, 1));
    if (store.task_count() != 1 || store.set(1).frozen) throw StateError("shared prompt store must hold one trainable set");
    t = 1;
  } else {
    if (const int open = store.trainable_task(); open != 0) {
      throw StateError("task " + std::to_string(open) + " was not finalized");
    }
    t = dataset.spec.task_id;
    store.add_task(t, mix_seed(config.seed, 0x9a, static_cast<std::uint64_t>(t)));
  }

  const bool use_proto = !config.shared_prompt && config.w_proto > 0.0;
  const bool top_k_fusion = !config.shared_prompt && !config.fuse_all && config.fusion_enabled;
  const GuidanceWeights weights = config.weights();
  const auto features = encode_samples(enc, dataset.train);

  ag::Var current = ag::Var::leaf(store.set(t).embeddings);
  HeadVars head = store.head().leaves();
  std::vector<ag::Var> vocab_parts;
  for (int s = 1; s < t; ++s) vocab_parts.push_back(ag::Var::constant(store.set(s).embeddings));
  vocab_parts.push_back(current);
  std::vector<ag::Var> params = {current};
  if (use_proto) params.insert(params.end(), {head.w1, head.b1, head.w2, head.b2});

  // Background samples only ever see the set under training, so it learns to
  // stay inert on them without compensating for frozen sets.
  const std::vector<int> own_prefix = prefix_token_ids(store, SelectionResult{{t}, {}, 1, SelectionMode::Train}, V);
  std::vector<int> fixed_prefix;
  if (config.shared_prompt) {
    fixed_prefix = prefix_token_ids(store, select_all(1), V);
  } else if (config.fuse_all) {
    fixed_prefix = prefix_token_ids(store, select_all(t), V);
  } else if (!config.fusion_enabled) {
    fixed_prefix = prefix_token_ids(store, SelectionResult{{t}, {}, 1, SelectionMode::Train}, V);
  }

  std::mt19937_64 rng(mix_seed(config.seed, 0x7a, static_cast<std::uint64_t>(t)));
  std::vector<size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);
  StageReport report;
  report.task_id = dataset.spec.task_id;
  const size_t bs = static_cast<size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs_per_task; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_lmm = 0.0, sum_proto = 0.0;
    int batches = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += bs) {
      const auto idx = std::span(order).subspan(b0, std::min(bs, order.size() - b0));
      ag::Var prototype;
      if (use_proto || top_k_fusion) prototype = project_prototype(head, current);

      std::vector<std::vector<int>> prefixes(idx.size());
      if (top_k_fusion) {
        const GuidanceVector live = GuidanceVector::from_unit(prototype.value().row(0));
        std::vector<GuidanceVector> protos(store.cached_prototypes().begin(), store.cached_prototypes().end());
        protos.push_back(live);
        for (size_t j = 0; j < idx.size(); ++j) {
          if (dataset.train[idx[j]].background) {
            prefixes[j] = own_prefix;
            continue;
          }
          const auto scores = score_all(protos, features.image[idx[j]], features.text[idx[j]]);
          prefixes[j] = prefix_token_ids(store, select_train(scores, t, config.top_k, weights), V);
        }
      } else {
        for (size_t j = 0; j < idx.size(); ++j) {
          prefixes[j] = dataset.train[idx[j]].background ? own_prefix : fixed_prefix;
        }
      }

      std::vector<SequenceInput> inputs;
      std::vector<int> targets;
      for (size_t j = 0; j < idx.size(); ++j) {
        const Sample& s = dataset.train[idx[j]];
        inputs.push_back({prefixes[j], s.image, s.instruction_tokens, std::span(s.target).first(s.target.size() - 1)});
        targets.insert(targets.end(), s.target.begin(), s.target.end());
      }
      const ag::Var lmm = lmm_loss(graph, ag::concat_rows(vocab_parts), inputs, targets);
      ag::Var total = ag::scale(lmm, config.w_lmm);
      double proto_value = 0.0;
      std::vector<size_t> task_idx;
      for (size_t i : idx) {
        if (!dataset.train[i].background) task_idx.push_back(i);
      }
      if (use_proto && !task_idx.empty()) {
        const ag::Var xv = ag::Var::constant(mean_of(features.image, task_idx));
        const ag::Var xt = ag::Var::constant(mean_of(features.text, task_idx));
        const ag::Var pl = proto_loss(prototype, xv, xt, weights);
        proto_value = pl.scalar();
        total = ag::add(total, ag::scale(pl, config.w_proto));
      }
      ag::backward(total);
      sgd_step(params, config.learning_rate);
      sum_lmm += lmm.scalar();
      sum_proto += proto_value;
      ++batches;
      ++report.steps;
    }
    report.epoch_lmm.push_back(sum_lmm / batches);
    report.epoch_proto.push_back(sum_proto / batches);
  }

  store.mutable_set(t).embeddings = current.value();
  if (use_proto) store.mutable_head().assign(head);
  if (!config.shared_prompt) store.finalize_task(t);
  report.final_lmm = report.epoch_lmm.back();
  report.final_proto = report.epoch_proto.back();
  report.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  if (!std::isfinite(report.final_lmm) || !std::isfinite(report.final_proto)) {
    throw StateError("training diverged on task " + std::to_string(report.task_id));
  }
  return report;
}

StageReport train_task(PromptStore& store, const BackboneModel& model, const GuidanceEncoders& enc,
                       const TaskDataset& dataset, const RunConfig& config) {
  return train_task(store, BackboneGraph(model), enc, dataset, config);
}

ContinualResult run_continual(const BackboneModel& model, const Suite& suite, const RunConfig& config,
                              const StageCallback& on_stage) {
  config.validate();
  if (!model.frozen()) throw StateError("continual tuning needs a frozen backbone");
  if (suite.tasks.empty()) throw InputError("empty suite");
  const int T = static_cast<int>(suite.tasks.size());
  std::vector<std::string> names;
  for (int t = 1; t <= T; ++t) {
    const auto& spec = suite.tasks[static_cast<size_t>(t - 1)].spec;
    if (spec.task_id != t) throw OrderingError("suite task " + std::to_string(t) + " carries id " + std::to_string(spec.task_id));
    names.push_back(family_info(spec.family).name + "-s" + std::to_string(spec.scene));
  }
  const BackboneGraph graph(model);
  ContinualResult result{PromptStore(config.store_shape(), mix_seed(config.seed, 0x4ead)),
                         GuidanceEncoders::initialize(model.config().d_image, model.config().vocab_size,
                                                      config.d_guidance, config.encoder_seed),
                         AccuracyMatrix(T, names),
                         {},
                         {}};
  EvalOptions eval = config.eval_options();
  for (int t = 1; t <= T; ++t) {
    result.reports.push_back(train_task(result.store, graph, result.encoders, suite.tasks[static_cast<size_t>(t - 1)], config));
    eval.keep_traces = t == T && eval.policy == PrefixPolicy::Select;
    for (int i = 1; i <= t; ++i) {
      auto outcome = evaluate_task(graph, result.store, result.encoders, suite.tasks[static_cast<size_t>(i - 1)], eval);
      result.matrix.set(t, i, outcome.accuracy);
      if (eval.keep_traces) {
        result.final_traces.insert(result.final_traces.end(), outcome.traces.begin(), outcome.traces.end());
      }
    }
    if (on_stage) on_stage(t, result.store, result.encoders, result.reports.back());
  }
  return result;
}

void append_run_log(const std::vector<StageReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& r : reports) out << r.to_json().dump() << "\n";
}

}  // namespace modalprompt
