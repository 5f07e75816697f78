// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/prompt_store.hpp"

#include "modalprompt/errors.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace modalprompt {

namespace {

constexpr double kInitStd = 0.02;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace

PrototypeHead PrototypeHead::initialize(int d_model, int d_guidance, std::uint64_t seed) {
  if (d_model < 1 || d_guidance < 1) throw ConfigError("head dimensions must be positive");
  std::mt19937_64 rng(seed);
  PrototypeHead h;
  // Fan-in scaling: with 0.02-scale prompts a 0.02-scale head would hand a
  // near-zero vector to the normalization.
  h.w1 = gaussian(d_model, d_guidance, 1.0 / std::sqrt(static_cast<double>(d_model)), rng);
  h.b1 = Matrix::Zero(1, d_guidance);
  h.w2 = gaussian(d_guidance, d_guidance, 1.0 / std::sqrt(static_cast<double>(d_guidance)), rng);
  h.b2 = Matrix::Zero(1, d_guidance);
  return h;
}

HeadVars PrototypeHead::constants() const {
  using ag::Var;
  return {Var::constant(w1), Var::constant(b1), Var::constant(w2), Var::constant(b2)};
}

HeadVars PrototypeHead::leaves() const {
  using ag::Var;
  return {Var::leaf(w1), Var::leaf(b1), Var::leaf(w2), Var::leaf(b2)};
}

void PrototypeHead::assign(const HeadVars& v) {
  if (!trainable) throw StateError("prototype head is frozen");
  w1 = v.w1.value();
  b1 = v.b1.value();
  w2 = v.w2.value();
  b2 = v.b2.value();
}

ag::Var project_prototype(const HeadVars& head, const ag::Var& prompts) {
  if (prompts.cols() != head.w1.rows()) {
    throw ShapeError("prompt width " + std::to_string(prompts.cols()) + " does not match head input " +
                     std::to_string(head.w1.rows()));
  }
  const ag::Var pooled = ag::mean_rows(prompts);
  const ag::Var hidden = ag::tanh(ag::add_row(ag::matmul(pooled, head.w1), head.b1));
  return ag::l2_normalize_rows(ag::add_row(ag::matmul(hidden, head.w2), head.b2));
}

GuidanceVector project_prototype(const PrototypeHead& head, const PromptSet& prompts) {
  if (prompts.embeddings.rows() < 1) throw ShapeError("prompt set has no rows");
  const ag::Var out = project_prototype(head.constants(), ag::Var::constant(prompts.embeddings));
  return GuidanceVector::from_unit(out.value().row(0));
}

PromptStore::PromptStore(StoreShape shape, std::uint64_t head_seed) : shape_(shape) {
  if (shape.prompt_length < 1) throw ConfigError("prompt length M must be at least 1");
  head_ = PrototypeHead::initialize(shape.d_model, shape.d_guidance, head_seed);
}

void PromptStore::add_task(int task_id, std::uint64_t init_seed) {
  const int expected = task_count() + 1;
  if (task_id != expected) {
    throw OrderingError("task " + std::to_string(task_id) + " added out of order; expected task " +
                        std::to_string(expected));
  }
  if (const int open = trainable_task(); open != 0) {
    throw StateError("task " + std::to_string(open) + " must be finalized before task " + std::to_string(task_id));
  }
  std::mt19937_64 rng(init_seed);
  sets_.push_back({task_id, gaussian(shape_.prompt_length, shape_.d_model, kInitStd, rng), false});
}

void PromptStore::finalize_task(int task_id) {
  PromptSet& s = const_cast<PromptSet&>(set(task_id));
  if (s.frozen) throw StateError("task " + std::to_string(task_id) + " is already finalized");
  s.frozen = true;
  cached_.push_back(project_prototype(head_, s));
}

const PromptSet& PromptStore::set(int task_id) const {
  if (task_id < 1 || task_id > task_count()) throw LookupError("no prompt set for task " + std::to_string(task_id));
  return sets_[static_cast<size_t>(task_id - 1)];
}

PromptSet& PromptStore::mutable_set(int task_id) {
  PromptSet& s = const_cast<PromptSet&>(set(task_id));
  if (s.frozen) throw StateError("prompt set of task " + std::to_string(task_id) + " is frozen");
  return s;
}

int PromptStore::trainable_task() const {
  for (const auto& s : sets_) {
    if (!s.frozen) return s.task_id;
  }
  return 0;
}

const GuidanceVector& PromptStore::cached_prototype(int task_id) const {
  if (task_id < 1 || task_id > static_cast<int>(cached_.size())) {
    throw LookupError("no cached prototype for task " + std::to_string(task_id));
  }
  return cached_[static_cast<size_t>(task_id - 1)];
}

Matrix PromptStore::stacked_embeddings() const {
  Matrix out(static_cast<Eigen::Index>(task_count()) * shape_.prompt_length, shape_.d_model);
  for (size_t i = 0; i < sets_.size(); ++i) {
    out.middleRows(static_cast<Eigen::Index>(i) * shape_.prompt_length, shape_.prompt_length) = sets_[i].embeddings;
  }
  return out;
}

int PromptStore::token_id(int task_id, int row, int vocab_size) const {
  set(task_id);
  if (row < 0 || row >= shape_.prompt_length) throw LookupError("prompt row out of range");
  return vocab_size + (task_id - 1) * shape_.prompt_length + row;
}

Archive PromptStore::to_archive() const {
  Archive a;
  nlohmann::json frozen = nlohmann::json::array();
  for (const auto& s : sets_) frozen.push_back(s.frozen);
  a.metadata = {{"kind", "prompt_store"},
                {"M", shape_.prompt_length},
                {"d_m", shape_.d_model},
                {"d_g", shape_.d_guidance},
                {"tasks", task_count()},
                {"frozen", frozen},
                {"cached", static_cast<int>(cached_.size())},
                {"head_trainable", head_.trainable}};
  for (const auto& s : sets_) a.add("prompts." + std::to_string(s.task_id), s.embeddings);
  a.add("head.w1", head_.w1);
  a.add("head.b1", head_.b1);
  a.add("head.w2", head_.w2);
  a.add("head.b2", head_.b2);
  for (size_t i = 0; i < cached_.size(); ++i) a.add("prototype." + std::to_string(i + 1), cached_[i].values());
  return a;
}

PromptStore PromptStore::from_archive(const Archive& a, const std::optional<StoreShape>& expected) {
  if (a.metadata.value("kind", "") != "prompt_store") throw IntegrityError("archive does not hold a prompt store");
  StoreShape shape{a.metadata.at("M").get<int>(), a.metadata.at("d_m").get<int>(), a.metadata.at("d_g").get<int>()};
  if (expected) {
    const auto check = [](const char* field, int got, int want) {
      if (got != want) {
        throw ShapeError(std::string("store field ") + field + " is " + std::to_string(got) + ", expected " +
                         std::to_string(want));
      }
    };
    check("M", shape.prompt_length, expected->prompt_length);
    check("d_m", shape.d_model, expected->d_model);
    check("d_g", shape.d_guidance, expected->d_guidance);
  }
  PromptStore store(shape, 0);
  const int tasks = a.metadata.at("tasks").get<int>();
  const auto& frozen = a.metadata.at("frozen");
  if (!frozen.is_array() || static_cast<int>(frozen.size()) != tasks) throw IntegrityError("field frozen: wrong length");
  for (int t = 1; t <= tasks; ++t) {
    store.sets_.push_back({t, a.tensor("prompts." + std::to_string(t), shape.prompt_length, shape.d_model),
                           frozen[static_cast<size_t>(t - 1)].get<bool>()});
  }
  store.head_.w1 = a.tensor("head.w1", shape.d_model, shape.d_guidance);
  store.head_.b1 = a.tensor("head.b1", 1, shape.d_guidance);
  store.head_.w2 = a.tensor("head.w2", shape.d_guidance, shape.d_guidance);
  store.head_.b2 = a.tensor("head.b2", 1, shape.d_guidance);
  store.head_.trainable = a.metadata.value("head_trainable", true);
  const int cached = a.metadata.at("cached").get<int>();
  for (int t = 1; t <= cached; ++t) {
    store.cached_.push_back(
        GuidanceVector::from_unit(a.tensor("prototype." + std::to_string(t), 1, shape.d_guidance).row(0)));
  }
  return store;
}

void PromptStore::save(const std::filesystem::path& path) const {
  save_archive(to_archive(), path);
  auto manifest_path = path;
  manifest_path += ".txt";
  std::ofstream out(manifest_path);
  if (!out) throw InputError("cannot write " + manifest_path.string());
  out << manifest();
}

PromptStore PromptStore::load(const std::filesystem::path& path, const std::optional<StoreShape>& expected) {
  return from_archive(load_archive(path), expected);
}

std::string PromptStore::manifest() const {
  std::ostringstream os;
  os << "M " << shape_.prompt_length << "\n";
  os << "d_m " << shape_.d_model << "\n";
  os << "d_g " << shape_.d_guidance << "\n";
  os << "cached_prototypes " << cached_.size() << "\n";
  for (const auto& s : sets_) os << "task " << s.task_id << (s.frozen ? " frozen" : " trainable") << "\n";
  return os.str();
}

}  // namespace modalprompt
