// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "modalprompt/autodiff.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace modalprompt {

/// Named tensors plus a JSON metadata record, serialized to a single binary
/// file:
///
///   "MPAR" | u32 version | u64 len | metadata json | u64 fnv(metadata)
///   u32 count | count x { u32 len | name | u64 rows | u64 cols |
///                         rows*cols f64 (little endian) | u64 fnv(data) }
///
/// Serialization is deterministic, so equal archives are byte-identical.
struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  void add(std::string name, Matrix value);
  bool contains(std::string_view name) const;
  /// Throws IntegrityError naming the tensor if absent.
  const Matrix& tensor(std::string_view name) const;
  /// Tensor with an enforced shape; throws ShapeError naming the field.
  const Matrix& tensor(std::string_view name, Eigen::Index rows, Eigen::Index cols) const;
};

std::string serialize(const Archive& archive);
Archive deserialize(std::string_view bytes);

void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for per-field integrity checks and snapshot digests.
std::uint64_t fnv1a(std::string_view bytes);

/// Raw bytes of a matrix (row-major doubles), for byte-identity comparisons.
std::string matrix_bytes(const Matrix& m);

}  // namespace modalprompt
