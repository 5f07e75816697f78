// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic multimodal continual suite. Images are attribute-bearing feature
// vectors: a scene code (which identifies the task's image cluster) plus an
// attribute code for the latent value the question asks about, plus noise.
// Each task answers with a cyclic shift of the family's answer list. During
// pretraining the backbone saw prefixes of [attribute token, word] pairs that
// rebind one attribute value to another answer word; a task's prompts have to
// supply the bindings of its shift.

#pragma once

#include "modalprompt/autodiff.hpp"
#include "modalprompt/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace modalprompt {

enum class Family { AttributeNaming, Counting, Comparison, Relation, Parity };

inline constexpr int kFamilyCount = 5;

struct FamilyInfo {
  Family family;
  std::string name;
  std::vector<std::string> answers;
  std::vector<std::string> templates;
};

const FamilyInfo& family_info(Family family);
Family family_from_name(const std::string& name);

/// Frozen generator of image features shared by pretraining and every suite.
class World {
 public:
  static constexpr int kAttributeDims = 16;

  struct Params {
    std::uint64_t seed = 2024;
    int d_image = 32;
    double scene_scale = 1.0;      // per-coordinate std of scene codes
    double attribute_scale = 0.8;  // per-coordinate std of attribute codes
  };

  explicit World(Params params);
  World() : World(Params{}) {}

  const Params& params() const { return params_; }
  int d_image() const { return params_.d_image; }
  const RowVector& scene_code(int scene) const;
  const RowVector& attribute_code(Family family, int value) const;
  /// Mean attribute code of a family.
  RowVector family_mean(Family family) const;
  /// Mean image of (scene, family) over the family's attribute values.
  RowVector cluster_center(int scene, Family family) const;
  std::vector<double> render(int scene, Family family, int value, double noise_std,
                             std::mt19937_64& rng) const;
  /// Like render, but around an explicit center: the family's attribute
  /// codes are recentred on it, so tasks of different families can share
  /// one image cluster.
  std::vector<double> render_at(const std::vector<double>& center, Family family, int value,
                                double noise_std, std::mt19937_64& rng) const;

 private:
  Params params_;
  std::vector<RowVector> scenes_;
  std::vector<std::vector<RowVector>> attributes_;  // [family][value]
};

struct Latents {
  int value = 0;
  int scene = 0;
};

struct Sample {
  int task_id = 0;
  int sample_id = 0;
  Latents latents;
  std::vector<double> image;
  std::string instruction;
  std::string answer;
  TokenSeq instruction_tokens;
  TokenSeq target;   // answer tokens followed by end-of-answer
  TokenSeq context;  // pretraining-only binding pairs placed as prefix
  bool background = false;  // train-only sample outside the task, default answer
};

struct TaskSpec {
  int task_id = 0;
  Family family = Family::AttributeNaming;
  int scene = 0;
  int shift = 0;
  std::vector<double> cluster_center;
  double cluster_std = 0.0;
  int n_train = 0;
  int n_eval = 0;

  /// Answer word for the latents under this task's binding.
  std::string answer_fn(const Latents& latents) const;
};

struct TaskDataset {
  TaskSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> eval;
};

enum class SuiteLayout {
  Separable,  // distinct scene and family per task (while families last)
  Joint,      // tasks 1,2 share a scene; tasks 3,4 share a family
};

struct SuiteOptions {
  int tasks = 4;
  std::uint64_t seed = 7;
  int n_train = 500;
  int n_eval = 200;
  double noise_std = 0.25;
  // Share of each train split drawn from (scene, family) pairs no task owns,
  // answered with the unshifted answer list. Eval splits never contain them.
  double background_fraction = 0.3;
  SuiteLayout layout = SuiteLayout::Separable;
  World::Params world;
};

struct Suite {
  SuiteOptions options;
  std::vector<TaskDataset> tasks;
};

/// Throws CapacityError when the layout cannot host `tasks` tasks, and
/// ConfigError when background_fraction is outside [0, 0.9].
Suite generate_suite(const SuiteOptions& options);

/// Builds a sample; fills tokens and target from the task binding. With
/// around_center the image is drawn around spec.cluster_center.
Sample make_sample(const World& world, const TaskSpec& spec, int sample_id, int value,
                   double noise_std, std::mt19937_64& rng, bool around_center = false);

/// Shuffled union of all train splits, relabelled as task 1.
TaskDataset joint_mixture(const Suite& suite, std::uint64_t seed);

/// Generic pretraining mixture: random scenes and families with 0..max_context
/// binding pairs per sample. Half the samples with pairs carry one that
/// rebinds their own attribute; the rest are distractors. Held out by seed
/// from every suite. With max_context = 0 every answer is the unshifted one.
std::vector<Sample> generate_pretraining_mixture(int count, std::uint64_t seed,
                                                 const World::Params& world, double noise_std,
                                                 int max_context = 3);

struct SuiteLoadResult {
  Suite suite;
  std::vector<std::string> warnings;
};

/// Writes `<stem>.jsonl` (one record per sample) and `<stem>.manifest.json`.
void save_suite(const Suite& suite, const std::filesystem::path& jsonl_path);
/// Validates every record; missing fields raise SchemaError naming the field
/// and line, unknown fields produce a warning.
SuiteLoadResult load_suite(const std::filesystem::path& jsonl_path);

std::filesystem::path manifest_path_for(const std::filesystem::path& jsonl_path);

}  // namespace modalprompt
