// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/tasks.hpp"

#include "modalprompt/errors.hpp"
#include "modalprompt/seeding.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace modalprompt {

namespace {

using nlohmann::json;

const std::array<FamilyInfo, kFamilyCount>& families() {
  static const std::array<FamilyInfo, kFamilyCount> table = {{
      {Family::AttributeNaming,
       "attribute-naming",
       {"red", "green", "blue", "yellow", "purple", "orange", "white", "black"},
       {"what color is the object", "name the color of the object", "which shade is shown",
        "what tint is the object"}},
      {Family::Counting,
       "counting",
       {"one", "two", "three", "four", "five", "six", "seven", "eight"},
       {"how many objects are there", "count the items", "what is the total number of items",
        "tally the objects"}},
      {Family::Comparison,
       "comparison",
       {"yes", "no"},
       {"is the first object larger", "is the first item bigger than the other",
        "compare the sizes of the objects"}},
      {Family::Relation,
       "relation",
       {"above", "below", "left", "right"},
       {"where is the object", "what is the position of the object",
        "describe the layout of the scene", "where is the item located"}},
      {Family::Parity,
       "parity",
       {"even", "odd"},
       {"is the count even or odd", "tell me the parity of the items",
        "what parity is the number of objects"}},
  }};
  return table;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

int answer_count(Family f) { return static_cast<int>(family_info(f).answers.size()); }

int draw_shift(Family f, std::mt19937_64& rng) {
  const int n = answer_count(f);
  for (;;) {
    const int s = uniform_int(rng, 1, Vocabulary::kShifts - 1);
    if (s % n != 0) return s;
  }
}

std::string layout_name(SuiteLayout layout) {
  return layout == SuiteLayout::Joint ? "joint" : "separable";
}

SuiteLayout layout_from_name(const std::string& s) {
  if (s == "separable") return SuiteLayout::Separable;
  if (s == "joint") return SuiteLayout::Joint;
  throw SchemaError("unknown suite layout '" + s + "'");
}

void fill_tokens(Sample& s) {
  const auto& vocab = Vocabulary::toy();
  s.instruction_tokens = vocab.encode(s.instruction);
  s.target = vocab.encode(s.answer);
  s.target.push_back(Vocabulary::kEndOfAnswer);
}

// Prefix of `n_pairs` [attribute token, word] pairs. Half the time one pair
// rebinds the sample's own attribute value, which then sets the answer.
void add_bindings(Sample& s, Family family, int value, int n_pairs, std::mt19937_64& rng) {
  const auto& info = family_info(family);
  std::vector<std::pair<int, int>> pairs;
  std::set<std::pair<int, int>> used;
  if (n_pairs > 0 && std::bernoulli_distribution(0.5)(rng)) {
    const auto& word = info.answers[static_cast<size_t>(uniform_int(rng, 0, answer_count(family) - 1))];
    pairs.emplace_back(Vocabulary::toy().attribute_token(static_cast<int>(family), value), Vocabulary::toy().id(word));
    used.emplace(static_cast<int>(family), value);
    s.answer = word;
  }
  while (static_cast<int>(pairs.size()) < n_pairs) {
    const int f = uniform_int(rng, 0, kFamilyCount - 1);
    const int n = answer_count(static_cast<Family>(f));
    const int v = uniform_int(rng, 0, n - 1);
    if (!used.emplace(f, v).second) continue;
    const auto& word = family_info(static_cast<Family>(f)).answers[static_cast<size_t>(uniform_int(rng, 0, n - 1))];
    pairs.emplace_back(Vocabulary::toy().attribute_token(f, v), Vocabulary::toy().id(word));
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  s.context.clear();
  for (const auto& [key, word] : pairs) {
    s.context.push_back(key);
    s.context.push_back(word);
  }
}

}  // namespace

const FamilyInfo& family_info(Family family) {
  return families()[static_cast<size_t>(family)];
}

Family family_from_name(const std::string& name) {
  for (const auto& f : families()) {
    if (f.name == name) return f.family;
  }
  throw LookupError("unknown task family '" + name + "'");
}

World::World(Params params) : params_(params) {
  if (params_.d_image <= kAttributeDims) {
    throw ConfigError("world d_image must exceed " + std::to_string(kAttributeDims));
  }
  std::mt19937_64 rng(params_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int scene_dims = params_.d_image - kAttributeDims;
  for (int s = 0; s < Vocabulary::kScenes; ++s) {
    RowVector v = RowVector::Zero(params_.d_image);
    for (int j = 0; j < scene_dims; ++j) v(kAttributeDims + j) = params_.scene_scale * normal(rng);
    scenes_.push_back(std::move(v));
  }
  for (const auto& f : families()) {
    std::vector<RowVector> codes;
    for (size_t a = 0; a < f.answers.size(); ++a) {
      RowVector v = RowVector::Zero(params_.d_image);
      for (int j = 0; j < kAttributeDims; ++j) v(j) = params_.attribute_scale * normal(rng);
      codes.push_back(std::move(v));
    }
    attributes_.push_back(std::move(codes));
  }
}

const RowVector& World::scene_code(int scene) const {
  if (scene < 0 || scene >= static_cast<int>(scenes_.size())) {
    throw LookupError("scene " + std::to_string(scene) + " outside world");
  }
  return scenes_[static_cast<size_t>(scene)];
}

const RowVector& World::attribute_code(Family family, int value) const {
  const auto& codes = attributes_[static_cast<size_t>(family)];
  if (value < 0 || value >= static_cast<int>(codes.size())) {
    throw LookupError("attribute value " + std::to_string(value) + " outside family");
  }
  return codes[static_cast<size_t>(value)];
}

RowVector World::family_mean(Family family) const {
  const auto& codes = attributes_[static_cast<size_t>(family)];
  RowVector m = RowVector::Zero(params_.d_image);
  for (const auto& a : codes) m += a / static_cast<double>(codes.size());
  return m;
}

RowVector World::cluster_center(int scene, Family family) const {
  RowVector c = scene_code(scene);
  const auto& codes = attributes_[static_cast<size_t>(family)];
  for (const auto& a : codes) c += a / static_cast<double>(codes.size());
  return c;
}

std::vector<double> World::render(int scene, Family family, int value, double noise_std,
                                  std::mt19937_64& rng) const {
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  RowVector v = scene_code(scene) + attribute_code(family, value);
  std::vector<double> out(static_cast<size_t>(v.size()));
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    out[static_cast<size_t>(j)] = v(j) + (noise_std > 0.0 ? noise(rng) : 0.0);
  }
  return out;
}

std::vector<double> World::render_at(const std::vector<double>& center, Family family, int value,
                                     double noise_std, std::mt19937_64& rng) const {
  if (static_cast<int>(center.size()) != params_.d_image) throw ShapeError("cluster center width mismatch");
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  const RowVector offset = attribute_code(family, value) - family_mean(family);
  std::vector<double> out(center.size());
  for (size_t j = 0; j < out.size(); ++j) {
    out[j] = center[j] + offset(static_cast<Eigen::Index>(j)) + (noise_std > 0.0 ? noise(rng) : 0.0);
  }
  return out;
}

std::string TaskSpec::answer_fn(const Latents& latents) const {
  const auto& info = family_info(family);
  const int n = static_cast<int>(info.answers.size());
  if (latents.value < 0 || latents.value >= n) {
    throw InputError("latent value " + std::to_string(latents.value) + " outside " + info.name);
  }
  return info.answers[static_cast<size_t>((latents.value + shift) % n)];
}

Sample make_sample(const World& world, const TaskSpec& spec, int sample_id, int value,
                   double noise_std, std::mt19937_64& rng, bool around_center) {
  const auto& info = family_info(spec.family);
  Sample s;
  s.task_id = spec.task_id;
  s.sample_id = sample_id;
  s.latents = {value, spec.scene};
  s.image = around_center ? world.render_at(spec.cluster_center, spec.family, value, noise_std, rng)
                          : world.render(spec.scene, spec.family, value, noise_std, rng);
  s.instruction =
      info.templates[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(info.templates.size()) - 1))];
  s.answer = spec.answer_fn(s.latents);
  fill_tokens(s);
  return s;
}

Suite generate_suite(const SuiteOptions& options) {
  if (options.tasks < 1) throw ConfigError("suite needs at least one task");
  if (options.n_train < 1 || options.n_eval < 1) throw ConfigError("suite splits must be non-empty");
  if (options.layout == SuiteLayout::Separable && options.tasks > Vocabulary::kScenes) {
    throw CapacityError("separable layout hosts at most " + std::to_string(Vocabulary::kScenes) +
                        " tasks (one scene each), requested " + std::to_string(options.tasks));
  }
  if (!(options.background_fraction >= 0.0 && options.background_fraction <= 0.9)) {
    throw ConfigError("background_fraction must lie in [0, 0.9]");
  }
  if (options.layout == SuiteLayout::Joint && options.tasks != 4) {
    throw CapacityError("joint layout is defined for exactly 4 tasks");
  }

  const World world(options.world);
  std::mt19937_64 rng(mix_seed(options.seed, 0x5eed));

  std::vector<TaskSpec> specs;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 64) throw CapacityError("could not place separated cluster centers");
    std::vector<int> scenes(Vocabulary::kScenes);
    std::iota(scenes.begin(), scenes.end(), 0);
    std::shuffle(scenes.begin(), scenes.end(), rng);
    std::vector<int> fams(kFamilyCount);
    std::iota(fams.begin(), fams.end(), 0);
    std::shuffle(fams.begin(), fams.end(), rng);

    specs.clear();
    for (int t = 0; t < options.tasks; ++t) {
      TaskSpec spec;
      spec.task_id = t + 1;
      if (options.layout == SuiteLayout::Separable) {
        spec.scene = scenes[static_cast<size_t>(t)];
        spec.family = static_cast<Family>(fams[static_cast<size_t>(t % kFamilyCount)]);
      } else {
        static constexpr std::array<int, 4> kScene = {0, 0, 1, 2};
        static constexpr std::array<int, 4> kFamily = {0, 1, 2, 2};
        spec.scene = scenes[static_cast<size_t>(kScene[static_cast<size_t>(t)])];
        spec.family = static_cast<Family>(fams[static_cast<size_t>(kFamily[static_cast<size_t>(t)])]);
      }
      spec.shift = draw_shift(spec.family, rng);
      const RowVector c = world.cluster_center(spec.scene, spec.family);
      spec.cluster_center.assign(c.data(), c.data() + c.size());
      spec.cluster_std = options.noise_std;
      spec.n_train = options.n_train;
      spec.n_eval = options.n_eval;
      specs.push_back(std::move(spec));
    }
    if (options.layout == SuiteLayout::Joint) {
      // Tasks 1 and 2 share one image cluster: the scene plus the mean of
      // both families' attribute codes.
      const RowVector c = world.scene_code(specs[0].scene) +
                          0.5 * (world.family_mean(specs[0].family) + world.family_mean(specs[1].family));
      for (int t = 0; t < 2; ++t) specs[static_cast<size_t>(t)].cluster_center.assign(c.data(), c.data() + c.size());
    }

    bool separated = true;
    for (size_t i = 0; i < specs.size() && separated; ++i) {
      for (size_t j = i + 1; j < specs.size(); ++j) {
        if (specs[i].scene == specs[j].scene) continue;  // joint layout shares on purpose
        const auto a = Eigen::Map<const Eigen::VectorXd>(specs[i].cluster_center.data(),
                                                         static_cast<Eigen::Index>(specs[i].cluster_center.size()));
        const auto b = Eigen::Map<const Eigen::VectorXd>(specs[j].cluster_center.data(),
                                                         static_cast<Eigen::Index>(specs[j].cluster_center.size()));
        if ((a - b).norm() < 4.0 * options.noise_std) {
          separated = false;
          break;
        }
      }
    }
    if (separated) break;
  }

  std::set<std::pair<int, int>> owned;
  for (const auto& spec : specs) owned.emplace(spec.scene, static_cast<int>(spec.family));
  const int n_background = static_cast<int>(
      std::lround(options.n_train * options.background_fraction / (1.0 - options.background_fraction)));

  Suite suite;
  suite.options = options;
  int next_id = 0;
  for (const auto& spec : specs) {
    TaskDataset ds;
    ds.spec = spec;
    const int n = answer_count(spec.family);
    for (int split = 0; split < 2; ++split) {
      std::mt19937_64 split_rng(mix_seed(options.seed, static_cast<std::uint64_t>(spec.task_id), split + 1));
      const int count = split == 0 ? options.n_train : options.n_eval;
      auto& out = split == 0 ? ds.train : ds.eval;
      for (int i = 0; i < count; ++i) {
        const int value = uniform_int(split_rng, 0, n - 1);
        out.push_back(make_sample(world, spec, next_id++, value, options.noise_std, split_rng,
                                  options.layout == SuiteLayout::Joint));
      }
    }
    std::mt19937_64 bg_rng(mix_seed(options.seed, static_cast<std::uint64_t>(spec.task_id), 3));
    for (int i = 0; i < n_background; ++i) {
      TaskSpec bg = spec;
      bg.shift = 0;
      do {
        bg.scene = uniform_int(bg_rng, 0, Vocabulary::kScenes - 1);
        bg.family = static_cast<Family>(uniform_int(bg_rng, 0, kFamilyCount - 1));
      } while (owned.count({bg.scene, static_cast<int>(bg.family)}) > 0);
      const int value = uniform_int(bg_rng, 0, answer_count(bg.family) - 1);
      Sample s = make_sample(world, bg, next_id++, value, options.noise_std, bg_rng);
      s.task_id = spec.task_id;
      s.background = true;
      ds.train.push_back(std::move(s));
    }
    std::shuffle(ds.train.begin(), ds.train.end(), bg_rng);
    suite.tasks.push_back(std::move(ds));
  }
  return suite;
}

TaskDataset joint_mixture(const Suite& suite, std::uint64_t seed) {
  if (suite.tasks.empty()) throw InputError("joint mixture of an empty suite");
  TaskDataset mix;
  mix.spec.task_id = 1;
  for (const auto& t : suite.tasks) {
    for (Sample s : t.train) {
      s.task_id = 1;
      mix.train.push_back(std::move(s));
    }
    mix.spec.n_train += static_cast<int>(t.train.size());
  }
  std::mt19937_64 rng(mix_seed(seed, 0x3a11));
  std::shuffle(mix.train.begin(), mix.train.end(), rng);
  return mix;
}

std::vector<Sample> generate_pretraining_mixture(int count, std::uint64_t seed,
                                                 const World::Params& world_params,
                                                 double noise_std, int max_context) {
  if (count <= 0) throw ConfigError("empty pretraining mixture");
  if (max_context < 0 || max_context > 12) throw ConfigError("max_context out of range");
  const World world(world_params);
  std::mt19937_64 rng(mix_seed(seed, 0x9e7));
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto family = static_cast<Family>(uniform_int(rng, 0, kFamilyCount - 1));
    const auto& info = family_info(family);
    const int scene = uniform_int(rng, 0, Vocabulary::kScenes - 1);
    const int value = uniform_int(rng, 0, answer_count(family) - 1);
    const int n_pairs = max_context > 0 ? uniform_int(rng, 0, max_context) : 0;

    Sample s;
    s.answer = info.answers[static_cast<size_t>(value)];
    add_bindings(s, family, value, n_pairs, rng);
    s.task_id = 1;
    s.sample_id = i;
    s.latents = {value, scene};
    s.image = world.render(scene, family, value, noise_std, rng);
    s.instruction =
        info.templates[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(info.templates.size()) - 1))];
    fill_tokens(s);
    out.push_back(std::move(s));
  }
  return out;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& jsonl_path) {
  auto p = jsonl_path;
  p.replace_extension(".manifest.json");
  return p;
}

void save_suite(const Suite& suite, const std::filesystem::path& jsonl_path) {
  const auto& o = suite.options;
  json manifest = {
      {"tasks", o.tasks},
      {"seed", o.seed},
      {"n_train", o.n_train},
      {"n_eval", o.n_eval},
      {"noise_std", o.noise_std},
      {"background_fraction", o.background_fraction},
      {"layout", layout_name(o.layout)},
      {"world",
       {{"seed", o.world.seed},
        {"d_image", o.world.d_image},
        {"scene_scale", o.world.scene_scale},
        {"attribute_scale", o.world.attribute_scale}}},
  };
  json specs = json::array();
  json fams = json::array();
  for (const auto& t : suite.tasks) {
    const auto& s = t.spec;
    fams.push_back(family_info(s.family).name);
    specs.push_back({{"task_id", s.task_id},
                     {"family", family_info(s.family).name},
                     {"scene", s.scene},
                     {"shift", s.shift},
                     {"cluster_center", s.cluster_center},
                     {"cluster_std", s.cluster_std},
                     {"n_train", s.n_train},
                     {"n_eval", s.n_eval}});
  }
  manifest["families"] = fams;
  manifest["specs"] = specs;

  std::ofstream mf(manifest_path_for(jsonl_path));
  if (!mf) throw InputError("cannot write suite manifest next to " + jsonl_path.string());
  mf << manifest.dump(2) << '\n';

  std::ofstream out(jsonl_path);
  if (!out) throw InputError("cannot write " + jsonl_path.string());
  for (const auto& t : suite.tasks) {
    for (int split = 0; split < 2; ++split) {
      for (const auto& s : split == 0 ? t.train : t.eval) {
        json rec = {{"task_id", s.task_id},
                    {"sample_id", s.sample_id},
                    {"latents", {{"value", s.latents.value}, {"scene", s.latents.scene}}},
                    {"image", s.image},
                    {"instruction", s.instruction},
                    {"answer", s.answer},
                    {"split", split == 0 ? "train" : "eval"}};
        if (s.background) rec["background"] = true;
        out << rec.dump() << '\n';
      }
    }
  }
}

namespace {

template <typename T>
T field(const json& obj, const char* name, const std::string& where) {
  auto it = obj.find(name);
  if (it == obj.end()) throw SchemaError(where + ": missing field '" + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": field '" + name + "' has the wrong type");
  }
}

}  // namespace

SuiteLoadResult load_suite(const std::filesystem::path& jsonl_path) {
  SuiteLoadResult result;
  auto& suite = result.suite;

  const auto mpath = manifest_path_for(jsonl_path);
  std::ifstream mf(mpath);
  if (!mf) throw SchemaError("missing suite manifest " + mpath.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw SchemaError(mpath.string() + ": " + e.what());
  }
  const std::string mwhere = mpath.filename().string();
  auto& o = suite.options;
  o.tasks = field<int>(manifest, "tasks", mwhere);
  o.seed = field<std::uint64_t>(manifest, "seed", mwhere);
  o.n_train = field<int>(manifest, "n_train", mwhere);
  o.n_eval = field<int>(manifest, "n_eval", mwhere);
  o.noise_std = field<double>(manifest, "noise_std", mwhere);
  o.background_fraction = manifest.value("background_fraction", 0.0);
  o.layout = layout_from_name(field<std::string>(manifest, "layout", mwhere));
  const auto w = field<json>(manifest, "world", mwhere);
  o.world.seed = field<std::uint64_t>(w, "seed", mwhere + " world");
  o.world.d_image = field<int>(w, "d_image", mwhere + " world");
  o.world.scene_scale = field<double>(w, "scene_scale", mwhere + " world");
  o.world.attribute_scale = field<double>(w, "attribute_scale", mwhere + " world");
  for (const auto& js : field<json>(manifest, "specs", mwhere)) {
    TaskDataset ds;
    auto& s = ds.spec;
    s.task_id = field<int>(js, "task_id", mwhere + " spec");
    s.family = family_from_name(field<std::string>(js, "family", mwhere + " spec"));
    s.scene = field<int>(js, "scene", mwhere + " spec");
    s.shift = field<int>(js, "shift", mwhere + " spec");
    s.cluster_center = field<std::vector<double>>(js, "cluster_center", mwhere + " spec");
    s.cluster_std = field<double>(js, "cluster_std", mwhere + " spec");
    s.n_train = field<int>(js, "n_train", mwhere + " spec");
    s.n_eval = field<int>(js, "n_eval", mwhere + " spec");
    if (s.task_id != static_cast<int>(suite.tasks.size()) + 1) {
      throw SchemaError(mwhere + ": task ids must be consecutive from 1");
    }
    suite.tasks.push_back(std::move(ds));
  }
  if (static_cast<int>(suite.tasks.size()) != o.tasks) {
    throw SchemaError(mwhere + ": 'tasks' disagrees with the number of specs");
  }

  static const std::set<std::string> kKnown = {"task_id",     "sample_id", "latents", "image",
                                               "instruction", "answer",    "split",
                                               "background"};
  std::ifstream in(jsonl_path);
  if (!in) throw InputError("cannot open " + jsonl_path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = jsonl_path.filename().string() + " line " + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw SchemaError(where + ": record is not an object");
    for (const auto& [key, _] : rec.items()) {
      if (!kKnown.contains(key)) result.warnings.push_back(where + ": unknown field '" + key + "' ignored");
    }
    Sample s;
    s.task_id = field<int>(rec, "task_id", where);
    const auto lat = field<json>(rec, "latents", where);
    s.latents.value = field<int>(lat, "value", where + " latents");
    s.latents.scene = field<int>(lat, "scene", where + " latents");
    s.image = field<std::vector<double>>(rec, "image", where);
    s.instruction = field<std::string>(rec, "instruction", where);
    s.answer = field<std::string>(rec, "answer", where);
    const auto split = field<std::string>(rec, "split", where);
    s.sample_id = rec.contains("sample_id") ? field<int>(rec, "sample_id", where) : lineno - 1;
    s.background = rec.contains("background") && field<bool>(rec, "background", where);
    if (s.task_id < 1 || s.task_id > o.tasks) {
      throw SchemaError(where + ": task_id " + std::to_string(s.task_id) + " outside 1.." +
                        std::to_string(o.tasks));
    }
    if (static_cast<int>(s.image.size()) != o.world.d_image) {
      throw SchemaError(where + ": image has " + std::to_string(s.image.size()) + " values, expected " +
                        std::to_string(o.world.d_image));
    }
    if (s.instruction.empty()) throw SchemaError(where + ": empty instruction");
    if (split != "train" && split != "eval") throw SchemaError(where + ": split must be train or eval");
    fill_tokens(s);
    auto& ds = suite.tasks[static_cast<size_t>(s.task_id - 1)];
    (split == "train" ? ds.train : ds.eval).push_back(std::move(s));
  }
  return result;
}

}  // namespace modalprompt
