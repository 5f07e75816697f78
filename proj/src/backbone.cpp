// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/backbone.hpp"

#include "modalprompt/errors.hpp"
#include "modalprompt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace modalprompt {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

void validate(const BackboneConfig& c) {
  if (c.vocab_size < 4 || c.d_model < 1 || c.layers < 1 || c.heads < 1 || c.d_ff < 1 ||
      c.image_slots < 0 || c.d_image < 1 || c.max_positions < 1) {
    throw ConfigError("backbone dimensions must be positive");
  }
  if (c.d_model % c.heads != 0) throw ConfigError("d_model must be divisible by heads");
}

}  // namespace

BackboneModel BackboneModel::initialize(const BackboneConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  const double std = 0.02;
  const double out_std = std / std::sqrt(2.0 * config.layers);
  const Eigen::Index d = config.d_model;

  BackboneModel m;
  m.config_ = config;
  m.token_embeddings_ = gaussian(config.vocab_size, d, std, rng);
  m.position_embeddings_ = gaussian(config.max_positions, d, std, rng);
  m.adapter_w_ = gaussian(config.d_image, config.image_slots * d, 1.0 / std::sqrt(config.d_image * 4.0), rng);
  m.adapter_b_ = Matrix::Zero(1, config.image_slots * d);
  for (int l = 0; l < config.layers; ++l) {
    DecoderLayer layer;
    layer.ln1_gain = Matrix::Ones(1, d);
    layer.ln1_bias = Matrix::Zero(1, d);
    layer.w_qkv = gaussian(d, 3 * d, std, rng);
    layer.b_qkv = Matrix::Zero(1, 3 * d);
    layer.w_out = gaussian(d, d, out_std, rng);
    layer.b_out = Matrix::Zero(1, d);
    layer.ln2_gain = Matrix::Ones(1, d);
    layer.ln2_bias = Matrix::Zero(1, d);
    layer.w_ff1 = gaussian(d, config.d_ff, std, rng);
    layer.b_ff1 = Matrix::Zero(1, config.d_ff);
    layer.w_ff2 = gaussian(config.d_ff, d, out_std, rng);
    layer.b_ff2 = Matrix::Zero(1, d);
    m.layers_.push_back(std::move(layer));
  }
  m.lnf_gain_ = Matrix::Ones(1, d);
  m.lnf_bias_ = Matrix::Zero(1, d);
  return m;
}

std::vector<std::pair<std::string, const Matrix*>> BackboneModel::parameters() const {
  std::vector<std::pair<std::string, const Matrix*>> out = {
      {"token_embeddings", &token_embeddings_},
      {"position_embeddings", &position_embeddings_},
      {"adapter.w", &adapter_w_},
      {"adapter.b", &adapter_b_},
  };
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.insert(out.end(), {{p + "ln1.gain", &L.ln1_gain},
                           {p + "ln1.bias", &L.ln1_bias},
                           {p + "attn.w_qkv", &L.w_qkv},
                           {p + "attn.b_qkv", &L.b_qkv},
                           {p + "attn.w_out", &L.w_out},
                           {p + "attn.b_out", &L.b_out},
                           {p + "ln2.gain", &L.ln2_gain},
                           {p + "ln2.bias", &L.ln2_bias},
                           {p + "ff.w1", &L.w_ff1},
                           {p + "ff.b1", &L.b_ff1},
                           {p + "ff.w2", &L.w_ff2},
                           {p + "ff.b2", &L.b_ff2}});
  }
  out.emplace_back("lnf.gain", &lnf_gain_);
  out.emplace_back("lnf.bias", &lnf_bias_);
  return out;
}

std::vector<std::pair<std::string, Matrix*>> BackboneModel::mutable_parameters() {
  if (frozen_) throw StateError("backbone is frozen");
  std::vector<std::pair<std::string, Matrix*>> out;
  for (auto& [name, ptr] : std::as_const(*this).parameters()) {
    out.emplace_back(name, const_cast<Matrix*>(ptr));
  }
  return out;
}

Archive BackboneModel::to_archive() const {
  Archive a;
  const auto& c = config_;
  a.metadata = {{"kind", "backbone"},
                {"vocab_size", c.vocab_size},
                {"d_model", c.d_model},
                {"layers", c.layers},
                {"heads", c.heads},
                {"d_ff", c.d_ff},
                {"image_slots", c.image_slots},
                {"d_image", c.d_image},
                {"max_positions", c.max_positions},
                {"seed", c.seed},
                {"frozen", frozen_}};
  for (const auto& [name, m] : parameters()) a.add(name, *m);
  return a;
}

BackboneModel BackboneModel::from_archive(const Archive& a) {
  const auto& md = a.metadata;
  if (md.value("kind", "") != "backbone") throw IntegrityError("archive is not a backbone checkpoint");
  BackboneConfig c;
  try {
    c.vocab_size = md.at("vocab_size").get<int>();
    c.d_model = md.at("d_model").get<int>();
    c.layers = md.at("layers").get<int>();
    c.heads = md.at("heads").get<int>();
    c.d_ff = md.at("d_ff").get<int>();
    c.image_slots = md.at("image_slots").get<int>();
    c.d_image = md.at("d_image").get<int>();
    c.max_positions = md.at("max_positions").get<int>();
    c.seed = md.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("backbone metadata: ") + e.what());
  }
  BackboneModel m = initialize(c);
  for (auto& [name, ptr] : m.mutable_parameters()) {
    *ptr = a.tensor(name, ptr->rows(), ptr->cols());
  }
  m.frozen_ = md.value("frozen", false);
  return m;
}

void BackboneModel::save(const std::filesystem::path& path) const { save_archive(to_archive(), path); }

BackboneModel BackboneModel::load(const std::filesystem::path& path) {
  return from_archive(load_archive(path));
}

BackboneGraph::BackboneGraph(const BackboneModel& model, bool trainable) : config_(model.config_) {
  if (trainable && model.frozen()) throw StateError("cannot train a frozen backbone");
  auto wrap = [&](const Matrix& m) {
    ag::Var v = trainable ? ag::Var::leaf(m) : ag::Var::constant(m);
    if (trainable) trainable_.push_back(v);
    return v;
  };
  token_embeddings_ = wrap(model.token_embeddings_);
  position_embeddings_ = wrap(model.position_embeddings_);
  adapter_w_ = wrap(model.adapter_w_);
  adapter_b_ = wrap(model.adapter_b_);
  for (const auto& L : model.layers_) {
    layers_.push_back({wrap(L.ln1_gain), wrap(L.ln1_bias), wrap(L.w_qkv), wrap(L.b_qkv),
                       wrap(L.w_out), wrap(L.b_out), wrap(L.ln2_gain), wrap(L.ln2_bias),
                       wrap(L.w_ff1), wrap(L.b_ff1), wrap(L.w_ff2), wrap(L.b_ff2)});
  }
  lnf_gain_ = wrap(model.lnf_gain_);
  lnf_bias_ = wrap(model.lnf_bias_);
}

void BackboneGraph::write_back(BackboneModel& model) const {
  auto params = model.mutable_parameters();
  if (params.size() != trainable_.size()) throw StateError("graph was not built trainable");
  for (size_t i = 0; i < params.size(); ++i) *params[i].second = trainable_[i].value();
}

ag::Var BackboneGraph::forward(const ag::Var& extra_vocab, std::span<const SequenceInput> batch,
                               bool last_only) const {
  const int d = config_.d_model;
  const int V = config_.vocab_size;
  const int extra = static_cast<int>(extra_vocab.rows());
  if (!extra_vocab.empty() && extra > 0 && extra_vocab.cols() != d) {
    throw ShapeError("prompt rows have width " + std::to_string(extra_vocab.cols()) +
                     ", backbone width is " + std::to_string(d));
  }
  if (batch.empty()) throw InputError("forward on an empty batch");
  const int n_slots = config_.image_slots;
  const int vocab_total = V + extra;
  const int image_base = vocab_total;
  const int zero_position = config_.max_positions;

  // Image slot embeddings for the whole batch.
  Matrix images(static_cast<Eigen::Index>(batch.size()), config_.d_image);
  for (size_t b = 0; b < batch.size(); ++b) {
    if (static_cast<int>(batch[b].image.size()) != config_.d_image) {
      throw ShapeError("image has " + std::to_string(batch[b].image.size()) + " features, expected " +
                       std::to_string(config_.d_image));
    }
    for (int j = 0; j < config_.d_image; ++j) images(static_cast<Eigen::Index>(b), j) = batch[b].image[static_cast<size_t>(j)];
  }
  ag::Var slots;
  if (n_slots > 0) {
    slots = ag::add_row(ag::matmul(ag::Var::constant(std::move(images)), adapter_w_), adapter_b_);
    slots = ag::reshape(slots, static_cast<Eigen::Index>(batch.size()) * n_slots, d);
  }

  std::vector<int> rows, positions, out_rows;
  std::vector<ag::Segment> segments;
  for (size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    if (s.instruction.empty()) throw InputError("empty instruction");
    const int offset = static_cast<int>(rows.size());
    for (int id : s.prefix) {
      if (id < 0 || id >= vocab_total) throw LookupError("prefix id " + std::to_string(id) + " outside extended vocabulary");
      rows.push_back(id);
      positions.push_back(zero_position);
    }
    int pos = 0;
    auto next_position = [&] {
      if (pos >= config_.max_positions) throw ShapeError("sequence exceeds max_positions");
      return pos++;
    };
    for (int j = 0; j < n_slots; ++j) {
      rows.push_back(image_base + static_cast<int>(b) * n_slots + j);
      positions.push_back(next_position());
    }
    for (int id : s.instruction) {
      if (id < 0 || id >= V) throw LookupError("instruction token " + std::to_string(id) + " outside vocabulary");
      rows.push_back(id);
      positions.push_back(next_position());
    }
    for (int id : s.target_prefix) {
      if (id < 0 || id >= vocab_total) throw LookupError("target token " + std::to_string(id) + " outside vocabulary");
      rows.push_back(id);
      positions.push_back(next_position());
    }
    const int length = static_cast<int>(rows.size()) - offset;
    segments.push_back({offset, length});
    const int first_out = offset + length - 1 - (last_only ? 0 : static_cast<int>(s.target_prefix.size()));
    for (int r = first_out; r < offset + length; ++r) out_rows.push_back(r);
  }

  const std::vector<ag::Var> vocab_parts = {token_embeddings_, extra_vocab};
  const ag::Var vocab = ag::concat_rows(vocab_parts);
  const std::vector<ag::Var> table_parts = {vocab, slots};
  const ag::Var table = ag::concat_rows(table_parts);
  const std::vector<ag::Var> pos_parts = {position_embeddings_, ag::Var::constant(Matrix::Zero(1, d))};
  const ag::Var pos_table = ag::concat_rows(pos_parts);

  ag::Var x = ag::add(ag::gather_rows(table, rows), ag::gather_rows(pos_table, positions));
  for (const auto& L : layers_) {
    ag::Var h = ag::layer_norm(x, L.ln1_gain, L.ln1_bias);
    ag::Var qkv = ag::add_row(ag::matmul(h, L.w_qkv), L.b_qkv);
    ag::Var attn = ag::causal_attention(qkv, config_.heads, segments);
    x = ag::add(x, ag::add_row(ag::matmul(attn, L.w_out), L.b_out));
    h = ag::layer_norm(x, L.ln2_gain, L.ln2_bias);
    h = ag::gelu(ag::add_row(ag::matmul(h, L.w_ff1), L.b_ff1));
    x = ag::add(x, ag::add_row(ag::matmul(h, L.w_ff2), L.b_ff2));
  }
  ag::Var selected = ag::gather_rows(x, out_rows);
  selected = ag::layer_norm(selected, lnf_gain_, lnf_bias_);
  return ag::matmul_nt(selected, vocab);
}

std::vector<TokenSeq> BackboneGraph::generate(const ag::Var& extra_vocab,
                                              std::span<const SequenceInput> batch, int max_len) const {
  if (max_len < 1) throw InputError("max_len must be at least 1");
  std::vector<TokenSeq> out(batch.size());
  std::vector<size_t> active(batch.size());
  std::iota(active.begin(), active.end(), 0);
  for (int step = 0; step < max_len && !active.empty(); ++step) {
    std::vector<SequenceInput> inputs;
    inputs.reserve(active.size());
    for (size_t i : active) {
      SequenceInput in = batch[i];
      in.target_prefix = out[i];
      inputs.push_back(in);
    }
    const Matrix logits = forward(extra_vocab, inputs, /*last_only=*/true).value();
    std::vector<size_t> still;
    for (size_t a = 0; a < active.size(); ++a) {
      // Prompt tokens are input-only; decoding ranges over the base vocabulary.
      Eigen::Index best = 0;
      logits.row(static_cast<Eigen::Index>(a)).head(config_.vocab_size).maxCoeff(&best);
      const int token = static_cast<int>(best);
      if (token == Vocabulary::kEndOfAnswer) continue;
      out[active[a]].push_back(token);
      still.push_back(active[a]);
    }
    active = std::move(still);
  }
  return out;
}

Matrix forward_logits(const BackboneModel& model, const Matrix& prefix, std::span<const double> image,
                      std::span<const int> instruction, std::span<const int> target_prefix) {
  const BackboneGraph graph(model);
  std::vector<int> ids(static_cast<size_t>(prefix.rows()));
  std::iota(ids.begin(), ids.end(), model.config().vocab_size);
  const SequenceInput in{ids, image, instruction, target_prefix};
  return graph.forward(ag::Var::constant(prefix), std::span(&in, 1)).value();
}

TokenSeq generate(const BackboneModel& model, const Matrix& prefix, std::span<const double> image,
                  std::span<const int> instruction, int max_len) {
  const BackboneGraph graph(model);
  std::vector<int> ids(static_cast<size_t>(prefix.rows()));
  std::iota(ids.begin(), ids.end(), model.config().vocab_size);
  const SequenceInput in{ids, image, instruction, {}};
  return graph.generate(ag::Var::constant(prefix), std::span(&in, 1), max_len).front();
}

SequenceInput context_input(const Sample& sample, std::span<const int> target_prefix) {
  return {sample.context, sample.image, sample.instruction_tokens, target_prefix};
}

BackboneModel pretrain_backbone(std::span<const Sample> mixture, const PretrainConfig& config) {
  if (mixture.empty()) throw ConfigError("empty pretraining mixture");
  if (config.epochs < 1 || config.batch_size < 1) throw ConfigError("pretraining needs epochs and batch size");
  BackboneModel model = BackboneModel::initialize(config.backbone);
  BackboneGraph graph(model, /*trainable=*/true);
  Adam adam(config.learning_rate);
  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order(mixture.size());
  std::iota(order.begin(), order.end(), 0);
  const int total_epochs = config.epochs;

  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    // Cosine decay to 10% of the base rate.
    const double progress = static_cast<double>(epoch) / std::max(1, total_epochs - 1);
    adam.set_lr(config.learning_rate * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * progress))));
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<SequenceInput> inputs;
      std::vector<int> targets;
      for (size_t i = start; i < end; ++i) {
        const Sample& s = mixture[order[i]];
        inputs.push_back(context_input(s, std::span(s.target).first(s.target.size() - 1)));
        targets.insert(targets.end(), s.target.begin(), s.target.end());
      }
      const ag::Var logits = graph.forward(ag::Var(), inputs);
      const ag::Var loss =
          ag::scale(ag::cross_entropy_sum(logits, targets), 1.0 / static_cast<double>(end - start));
      ag::backward(loss);
      adam.step(graph.trainable());
    }
  }
  graph.write_back(model);
  model.freeze();
  return model;
}

double generic_accuracy(const BackboneModel& model, std::span<const Sample> samples) {
  if (samples.empty()) throw InputError("no samples to score");
  const BackboneGraph graph(model);
  const auto& vocab = Vocabulary::toy();
  int correct = 0;
  constexpr size_t kChunk = 64;
  for (size_t start = 0; start < samples.size(); start += kChunk) {
    const size_t end = std::min(samples.size(), start + kChunk);
    std::vector<SequenceInput> inputs;
    for (size_t i = start; i < end; ++i) inputs.push_back(context_input(samples[i], {}));
    const auto answers = graph.generate(ag::Var(), inputs, 4);
    for (size_t i = start; i < end; ++i) {
      if (normalize_answer(vocab.decode(answers[i - start])) == normalize_answer(samples[i].answer)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace modalprompt
