// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "modalprompt/archive.hpp"
#include "modalprompt/autodiff.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace modalprompt {

/// Unit-norm vector in the shared image-text guidance space.
class GuidanceVector {
 public:
  GuidanceVector() = default;
  /// Normalizes `raw`; throws InputError on a zero vector.
  static GuidanceVector normalize(const RowVector& raw);
  /// Wraps an already-normalized vector; throws InputError if it is not.
  static GuidanceVector from_unit(const RowVector& unit, double tolerance = 1e-6);

  const RowVector& values() const { return values_; }
  int dim() const { return static_cast<int>(values_.size()); }

 private:
  RowVector values_;
};

enum class GuidanceMode { Dual, ImageOnly, TextOnly };

std::string to_string(GuidanceMode mode);
GuidanceMode guidance_mode_from_string(const std::string& name);

/// Weights of (alpha, beta) in the combined score and in the prototype loss.
struct GuidanceWeights {
  double image = 1.0;
  double text = 1.0;

  static GuidanceWeights for_mode(GuidanceMode mode);
  /// lambda * alpha + (1 - lambda) * beta.
  static GuidanceWeights interpolated(double lambda);
};

/// Frozen stand-ins for the vision and text encoders. The image side is
/// tanh of a fixed random linear map, the text side a bag of fixed random
/// token embeddings; both L2-normalized.
class GuidanceEncoders {
 public:
  static GuidanceEncoders initialize(int d_image, int vocab_size, int d_guidance, std::uint64_t seed);

  int d_image() const { return static_cast<int>(image_map_.rows()); }
  int vocab_size() const { return static_cast<int>(token_table_.rows()); }
  int d_guidance() const { return static_cast<int>(image_map_.cols()); }
  std::uint64_t seed() const { return seed_; }

  GuidanceVector encode_image(std::span<const double> image) const;
  GuidanceVector encode_text(std::span<const int> instruction) const;

  Archive to_archive() const;
  static GuidanceEncoders from_archive(const Archive& archive);

 private:
  Matrix image_map_;    // d_image x d_g
  Matrix token_table_;  // V x d_g
  std::uint64_t seed_ = 0;
};

struct GuidanceScores {
  double alpha = 0.0;  // cos(prototype, image feature)
  double beta = 0.0;   // cos(prototype, text feature)

  double combined(const GuidanceWeights& w = {}) const { return w.image * alpha + w.text * beta; }
};

GuidanceScores score(const GuidanceVector& prototype, const GuidanceVector& x_v,
                     const GuidanceVector& x_instruct);

}  // namespace modalprompt
