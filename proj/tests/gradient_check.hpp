// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Central-difference checks of the analytic gradients used in training.
// Shared by the unit tests and the acceptance run.

#pragma once

#include "modalprompt/backbone.hpp"
#include "modalprompt/prompt_store.hpp"
#include "modalprompt/training.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace modalprompt::gradcheck {

inline constexpr double kStep = 1e-3;
inline constexpr double kTolerance = 1e-4;

struct ParamError {
  std::string name;
  double error = 0.0;  // ||analytic - numeric|| / (||analytic|| + ||numeric||)
};

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline double relative_error(ag::Var& param, const std::function<double()>& loss, const Matrix& analytic) {
  Matrix numeric(analytic.rows(), analytic.cols());
  Matrix& value = param.mutable_value();
  for (Eigen::Index i = 0; i < value.rows(); ++i) {
    for (Eigen::Index j = 0; j < value.cols(); ++j) {
      const double saved = value(i, j);
      value(i, j) = saved + kStep;
      const double up = loss();
      value(i, j) = saved - kStep;
      const double down = loss();
      value(i, j) = saved;
      numeric(i, j) = (up - down) / (2.0 * kStep);
    }
  }
  const double denom = analytic.norm() + numeric.norm();
  return denom < 1e-12 ? 0.0 : (analytic - numeric).norm() / denom;
}

inline BackboneConfig tiny_config() {
  BackboneConfig c;
  c.vocab_size = 24;
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.d_ff = 32;
  c.image_slots = 2;
  c.d_image = 6;
  c.max_positions = 24;
  c.seed = 5;
  return c;
}

struct TinyBatch {
  std::vector<std::vector<int>> prefixes, instructions, targets;
  std::vector<std::vector<double>> images;
  std::vector<int> flat_targets;
  std::vector<SequenceInput> inputs;
};

inline TinyBatch tiny_batch(const BackboneConfig& c, int prompt_rows, std::mt19937_64& rng) {
  TinyBatch b;
  std::uniform_int_distribution<int> tok(0, c.vocab_size - 1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int s = 0; s < 2; ++s) {
    std::vector<int> prefix;
    for (int r = 0; r < prompt_rows; ++r) prefix.push_back(c.vocab_size + (r + s) % prompt_rows);
    b.prefixes.push_back(prefix);
    b.instructions.push_back({tok(rng), tok(rng), tok(rng)});
    b.targets.push_back({tok(rng), tok(rng)});
    std::vector<double> image(static_cast<size_t>(c.d_image));
    for (auto& x : image) x = n(rng);
    b.images.push_back(image);
  }
  for (size_t s = 0; s < b.targets.size(); ++s) {
    b.inputs.push_back({b.prefixes[s], b.images[s], b.instructions[s], std::span(b.targets[s]).first(1)});
    b.flat_targets.insert(b.flat_targets.end(), b.targets[s].begin(), b.targets[s].end());
  }
  return b;
}

/// Language-modelling loss against the prompt rows (frozen backbone).
inline std::vector<ParamError> lmm_prompt_errors(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const BackboneConfig c = tiny_config();
  BackboneModel model = BackboneModel::initialize(c);
  model.freeze();
  const BackboneGraph graph(model);
  const TinyBatch batch = tiny_batch(c, 3, rng);
  ag::Var prompts = ag::Var::leaf(random_matrix(3, c.d_model, rng));
  ag::backward(lmm_loss(graph, prompts, batch.inputs, batch.flat_targets));
  const Matrix analytic = prompts.grad();
  auto f = [&] {
    return lmm_loss(graph, ag::Var::constant(prompts.value()), batch.inputs, batch.flat_targets).scalar();
  };
  return {{"prompts", relative_error(prompts, f, analytic)}};
}

/// Language-modelling loss against every backbone parameter (pretraining).
inline std::vector<ParamError> lmm_backbone_errors(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const BackboneConfig c = tiny_config();
  BackboneModel model = BackboneModel::initialize(c);
  BackboneGraph graph(model, /*trainable=*/true);
  const TinyBatch batch = tiny_batch(c, 2, rng);
  const ag::Var prompts = ag::Var::constant(random_matrix(2, c.d_model, rng));
  ag::backward(lmm_loss(graph, prompts, batch.inputs, batch.flat_targets));
  auto f = [&] { return lmm_loss(graph, prompts, batch.inputs, batch.flat_targets).scalar(); };
  const auto names = model.parameters();
  std::vector<ParamError> out;
  for (size_t p = 0; p < graph.trainable().size(); ++p) {
    ag::Var& param = graph.trainable()[p];
    const Matrix analytic = param.grad();
    const std::string name = p < names.size() ? names[p].first : "param" + std::to_string(p);
    out.push_back({name, relative_error(param, f, analytic)});
  }
  return out;
}

/// Prototype loss against the prompt rows and the head, for each weighting.
inline std::vector<ParamError> proto_errors(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d_m = 16, d_g = 8;
  const PrototypeHead head = PrototypeHead::initialize(d_m, d_g, seed + 4);
  HeadVars vars = head.leaves();
  ag::Var prompts = ag::Var::leaf(random_matrix(4, d_m, rng));
  const ag::Var x_v = ag::Var::constant(random_matrix(1, d_g, rng).rowwise().normalized());
  const ag::Var x_t = ag::Var::constant(random_matrix(1, d_g, rng).rowwise().normalized());
  const std::vector<std::pair<std::string, ag::Var*>> params = {
      {"prompts", &prompts}, {"head.w1", &vars.w1}, {"head.b1", &vars.b1}, {"head.w2", &vars.w2}, {"head.b2", &vars.b2}};
  std::vector<ParamError> out;
  const std::vector<std::pair<std::string, GuidanceWeights>> weightings = {
      {"dual", {1.0, 1.0}}, {"image", {1.0, 0.0}}, {"text", {0.0, 1.0}}};
  for (const auto& [wname, weights] : weightings) {
    for (const auto& [name, v] : params) v->zero_grad();
    ag::backward(proto_loss(project_prototype(vars, prompts), x_v, x_t, weights));
    auto f = [&, w = weights] { return proto_loss(project_prototype(vars, prompts), x_v, x_t, w).scalar(); };
    for (const auto& [name, v] : params) {
      const Matrix analytic = v->grad();
      out.push_back({wname + "/" + name, relative_error(*v, f, analytic)});
    }
  }
  return out;
}

}  // namespace modalprompt::gradcheck
