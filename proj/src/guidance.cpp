// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/guidance.hpp"

#include "modalprompt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace modalprompt {

GuidanceVector GuidanceVector::normalize(const RowVector& raw) {
  const double n = raw.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InputError("cannot normalize a zero or non-finite vector");
  GuidanceVector g;
  g.values_ = raw / n;
  return g;
}

GuidanceVector GuidanceVector::from_unit(const RowVector& unit, double tolerance) {
  if (std::abs(unit.norm() - 1.0) > tolerance) throw InputError("guidance vector is not unit norm");
  GuidanceVector g;
  g.values_ = unit;
  return g;
}

std::string to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::Dual: return "dual";
    case GuidanceMode::ImageOnly: return "image";
    case GuidanceMode::TextOnly: return "text";
  }
  return "dual";
}

GuidanceMode guidance_mode_from_string(const std::string& name) {
  if (name == "dual") return GuidanceMode::Dual;
  if (name == "image" || name == "image_only") return GuidanceMode::ImageOnly;
  if (name == "text" || name == "text_only") return GuidanceMode::TextOnly;
  throw ConfigError("unknown guidance mode '" + name + "' (expected dual, image or text)");
}

GuidanceWeights GuidanceWeights::for_mode(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::Dual: return {1.0, 1.0};
    case GuidanceMode::ImageOnly: return {1.0, 0.0};
    case GuidanceMode::TextOnly: return {0.0, 1.0};
  }
  return {};
}

GuidanceWeights GuidanceWeights::interpolated(double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("guidance lambda must lie in [0, 1]");
  return {lambda, 1.0 - lambda};
}

GuidanceEncoders GuidanceEncoders::initialize(int d_image, int vocab_size, int d_guidance, std::uint64_t seed) {
  if (d_image < 1 || vocab_size < 1 || d_guidance < 1) throw ConfigError("encoder dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GuidanceEncoders e;
  e.seed_ = seed;
  e.image_map_.resize(d_image, d_guidance);
  const double s = 1.0 / std::sqrt(static_cast<double>(d_image));
  for (Eigen::Index i = 0; i < e.image_map_.size(); ++i) e.image_map_.data()[i] = s * normal(rng);
  e.token_table_.resize(vocab_size, d_guidance);
  for (Eigen::Index i = 0; i < e.token_table_.size(); ++i) e.token_table_.data()[i] = normal(rng);
  return e;
}

GuidanceVector GuidanceEncoders::encode_image(std::span<const double> image) const {
  if (static_cast<Eigen::Index>(image.size()) != image_map_.rows()) {
    throw ShapeError("image has " + std::to_string(image.size()) + " features, encoder expects " +
                     std::to_string(image_map_.rows()));
  }
  const Eigen::Map<const RowVector> x(image.data(), static_cast<Eigen::Index>(image.size()));
  const RowVector h = (x * image_map_).array().tanh();
  return GuidanceVector::normalize(h);
}

GuidanceVector GuidanceEncoders::encode_text(std::span<const int> instruction) const {
  if (instruction.empty()) throw InputError("cannot encode an empty instruction");
  RowVector acc = RowVector::Zero(token_table_.cols());
  for (int id : instruction) {
    if (id < 0 || id >= token_table_.rows()) throw LookupError("token " + std::to_string(id) + " outside encoder vocabulary");
    acc += token_table_.row(id);
  }
  return GuidanceVector::normalize(acc / static_cast<double>(instruction.size()));
}

Archive GuidanceEncoders::to_archive() const {
  Archive a;
  a.metadata = {{"kind", "encoders"},
                {"d_image", d_image()},
                {"vocab_size", vocab_size()},
                {"d_guidance", d_guidance()},
                {"seed", seed_}};
  a.add("image_map", image_map_);
  a.add("token_table", token_table_);
  return a;
}

GuidanceEncoders GuidanceEncoders::from_archive(const Archive& a) {
  if (a.metadata.value("kind", "") != "encoders") throw IntegrityError("archive does not hold encoders");
  const int d_image = a.metadata.at("d_image").get<int>();
  const int vocab = a.metadata.at("vocab_size").get<int>();
  const int d_g = a.metadata.at("d_guidance").get<int>();
  GuidanceEncoders e;
  e.seed_ = a.metadata.at("seed").get<std::uint64_t>();
  e.image_map_ = a.tensor("image_map", d_image, d_g);
  e.token_table_ = a.tensor("token_table", vocab, d_g);
  return e;
}

GuidanceScores score(const GuidanceVector& prototype, const GuidanceVector& x_v,
                     const GuidanceVector& x_instruct) {
  if (prototype.dim() != x_v.dim() || prototype.dim() != x_instruct.dim()) {
    throw ShapeError("guidance vectors differ in dimension");
  }
  const auto clamp = [](double c) { return std::max(-1.0, std::min(1.0, c)); };
  return {clamp(prototype.values().dot(x_v.values())), clamp(prototype.values().dot(x_instruct.values()))};
}

}  // namespace modalprompt
