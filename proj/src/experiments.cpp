// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/experiments.hpp"

#include "modalprompt/errors.hpp"
#include "modalprompt/evaluation.hpp"
#include "modalprompt/seeding.hpp"
#include "modalprompt/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace modalprompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<Variant, std::string>& variant_table() {
  static const std::map<Variant, std::string> table = {
      {Variant::ModalPrompt, "modalprompt"},       {Variant::Finetune, "finetune"},
      {Variant::ConcatAll, "concat_all"},          {Variant::FusionOnly, "fusion_only"},
      {Variant::SelectionOnly, "selection_only"},  {Variant::ImageGuidance, "image_guidance"},
      {Variant::TextGuidance, "text_guidance"},    {Variant::Multitask, "multitask"},
      {Variant::Zeroshot, "zeroshot"},
  };
  return table;
}

std::vector<std::string> task_names(const Suite& suite) {
  std::vector<std::string> names;
  for (const auto& t : suite.tasks) {
    names.push_back(family_info(t.spec.family).name + "-s" + std::to_string(t.spec.scene));
  }
  return names;
}

json suite_to_json(const SuiteOptions& o) {
  return {{"tasks", o.tasks},
          {"seed", o.seed},
          {"n_train", o.n_train},
          {"n_eval", o.n_eval},
          {"noise_std", o.noise_std},
          {"background_fraction", o.background_fraction},
          {"layout", o.layout == SuiteLayout::Joint ? "joint" : "separable"},
          {"world",
           {{"seed", o.world.seed},
            {"d_image", o.world.d_image},
            {"scene_scale", o.world.scene_scale},
            {"attribute_scale", o.world.attribute_scale}}}};
}

SuiteOptions suite_from_json(const json& j) {
  SuiteOptions o;
  o.tasks = j.value("tasks", o.tasks);
  o.seed = j.value("seed", o.seed);
  o.n_train = j.value("n_train", o.n_train);
  o.n_eval = j.value("n_eval", o.n_eval);
  o.noise_std = j.value("noise_std", o.noise_std);
  o.background_fraction = j.value("background_fraction", o.background_fraction);
  const std::string layout = j.value("layout", std::string("separable"));
  if (layout == "joint") {
    o.layout = SuiteLayout::Joint;
  } else if (layout != "separable") {
    throw SchemaError("suite layout must be separable or joint, got '" + layout + "'");
  }
  if (j.contains("world")) {
    const auto& w = j["world"];
    o.world.seed = w.value("seed", o.world.seed);
    o.world.d_image = w.value("d_image", o.world.d_image);
    o.world.scene_scale = w.value("scene_scale", o.world.scene_scale);
    o.world.attribute_scale = w.value("attribute_scale", o.world.attribute_scale);
  }
  return o;
}

std::string seed_stem(Variant v, std::uint64_t seed) {
  return to_string(v) + "-seed" + std::to_string(seed);
}

fs::path suite_path(const fs::path& run_dir, std::uint64_t seed) {
  return run_dir / "suites" / ("seed-" + std::to_string(seed) + ".jsonl");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string to_string(Variant v) { return variant_table().at(v); }

json suite_options_to_json(const SuiteOptions& options) { return suite_to_json(options); }
SuiteOptions suite_options_from_json(const json& j) { return suite_from_json(j); }

Variant variant_from_string(const std::string& name) {
  for (const auto& [v, n] : variant_table()) {
    if (n == name) return v;
  }
  std::string valid;
  for (const auto& [v, n] : variant_table()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown variant '" + name + "' (valid: " + valid + ")");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all = [] {
    std::vector<Variant> out;
    for (const auto& [v, n] : variant_table()) out.push_back(v);
    return out;
  }();
  return all;
}

RunConfig configure_variant(Variant v, RunConfig c) {
  switch (v) {
    case Variant::ModalPrompt:
      break;
    case Variant::Finetune:
    case Variant::Multitask:
      c.shared_prompt = true;
      c.fusion_enabled = false;
      c.selection_enabled = false;
      c.w_proto = 0.0;
      break;
    case Variant::ConcatAll:
      c.fuse_all = true;
      c.selection_enabled = false;
      break;
    case Variant::FusionOnly:
      c.selection_enabled = false;
      break;
    case Variant::SelectionOnly:
      c.fusion_enabled = false;
      break;
    case Variant::ImageGuidance:
      c.guidance_mode = GuidanceMode::ImageOnly;
      break;
    case Variant::TextGuidance:
      c.guidance_mode = GuidanceMode::TextOnly;
      break;
    case Variant::Zeroshot:
      break;
  }
  return c;
}

json PretrainPlan::to_json() const {
  return {{"samples", samples},
          {"epochs", epochs},
          {"max_context", max_context},
          {"learning_rate", learning_rate},
          {"seed", seed}};
}

PretrainPlan PretrainPlan::from_json(const json& j) {
  PretrainPlan p;
  p.samples = j.value("samples", p.samples);
  p.epochs = j.value("epochs", p.epochs);
  p.max_context = j.value("max_context", p.max_context);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.seed = j.value("seed", p.seed);
  return p;
}

BackboneModel pretrain_default_backbone(const PretrainPlan& plan) {
  const auto mixture = generate_pretraining_mixture(plan.samples, plan.seed, World::Params{}, 0.25, plan.max_context);
  PretrainConfig pc;
  pc.epochs = plan.epochs;
  pc.learning_rate = plan.learning_rate;
  pc.seed = plan.seed;
  return pretrain_backbone(mixture, pc);
}

BackboneModel obtain_backbone(const fs::path& path, const PretrainPlan& plan) {
  if (fs::exists(path)) return BackboneModel::load(path);
  BackboneModel model = pretrain_default_backbone(plan);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  model.save(path);
  return model;
}

void ExperimentPlan::validate() const {
  if (seeds.empty()) throw ConfigError("experiment plan needs at least one seed");
  config.validate();
  if (suite.tasks != config.tasks) {
    throw ConfigError("suite has " + std::to_string(suite.tasks) + " tasks but the run config T is " +
                      std::to_string(config.tasks));
  }
}

SuiteOptions suite_for_seed(const SuiteOptions& base, std::uint64_t seed) {
  SuiteOptions o = base;
  o.seed = base.seed + seed;
  return o;
}

MetricReport last_row_report(const AccuracyMatrix& a) {
  MetricReport r;
  r.tasks = a.tasks();
  for (int i = 1; i <= a.tasks(); ++i) {
    if (!a.has(a.tasks(), i)) throw InputError("last row is incomplete");
    r.last.values.push_back(a.at(a.tasks(), i));
  }
  double sum = 0.0;
  for (double v : r.last.values) sum += v;
  r.last.mean = sum / static_cast<double>(r.last.values.size());
  return r;
}

SeedResult run_seed(const ExperimentPlan& plan, const BackboneModel& model, const Suite& suite,
                    std::uint64_t seed) {
  plan.validate();
  RunConfig config = configure_variant(plan.variant, plan.config);
  config.seed = seed;
  SeedResult out;
  out.seed = seed;
  const int T = static_cast<int>(suite.tasks.size());

  if (plan.variant == Variant::Zeroshot || plan.variant == Variant::Multitask) {
    if (!model.frozen()) throw StateError("evaluation needs a frozen backbone");
    const BackboneGraph graph(model);
    PromptStore store(config.store_shape(), mix_seed(seed, 0x4ead));
    const auto enc = GuidanceEncoders::initialize(model.config().d_image, model.config().vocab_size,
                                                  config.d_guidance, config.encoder_seed);
    EvalOptions eval = config.eval_options();
    if (plan.variant == Variant::Zeroshot) {
      eval.policy = PrefixPolicy::Empty;
    } else {
      out.stages.push_back(train_task(store, graph, enc, joint_mixture(suite, seed), config));
    }
    out.matrix = AccuracyMatrix(T, task_names(suite));
    for (int i = 1; i <= T; ++i) {
      out.matrix.set(T, i, evaluate_task(graph, store, enc, suite.tasks[static_cast<size_t>(i - 1)], eval).accuracy);
    }
    out.report = last_row_report(out.matrix);
    out.store = std::move(store);
    out.encoders = enc;
    return out;
  }

  ContinualResult result = run_continual(model, suite, config);
  out.matrix = result.matrix;
  out.report = compute_report(result.matrix);
  out.stages = std::move(result.reports);
  out.traces = std::move(result.final_traces);
  out.store = std::move(result.store);
  out.encoders = std::move(result.encoders);
  return out;
}

std::vector<SeedResult> run_variant(const ExperimentPlan& plan, const BackboneModel& model) {
  plan.validate();
  std::vector<SeedResult> out;
  for (const auto seed : plan.seeds) {
    const Suite suite = generate_suite(suite_for_seed(plan.suite, seed));
    out.push_back(run_seed(plan, model, suite, seed));
  }
  return out;
}

void GridPlan::validate() const {
  if (variants.empty()) throw ConfigError("grid plan lists no variants");
  plan_for(variants.front()).validate();
}

ExperimentPlan GridPlan::plan_for(Variant v) const {
  ExperimentPlan p;
  p.variant = v;
  p.config = config;
  p.seeds = seeds;
  p.suite = suite;
  return p;
}

json GridPlan::to_json() const {
  json vs = json::array();
  for (auto v : variants) vs.push_back(to_string(v));
  json j = {{"variants", vs},
            {"config", config.to_json()},
            {"seeds", seeds},
            {"suite", suite_to_json(suite)},
            {"pretrain", pretrain.to_json()}};
  if (backbone) j["backbone"] = backbone->string();
  return j;
}

GridPlan GridPlan::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("grid plan must be a JSON object");
  GridPlan p;
  try {
    if (j.contains("variants")) {
      p.variants.clear();
      for (const auto& v : j["variants"]) p.variants.push_back(variant_from_string(v.get<std::string>()));
    } else if (j.contains("variant")) {
      p.variants = {variant_from_string(j["variant"].get<std::string>())};
    }
    if (j.contains("config")) p.config = RunConfig::from_json(j["config"]);
    if (j.contains("seeds")) p.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("suite")) {
      p.suite = suite_from_json(j["suite"]);
      if (!j["suite"].contains("tasks")) p.suite.tasks = p.config.tasks;
    } else {
      p.suite.tasks = p.config.tasks;
    }
    if (j.contains("pretrain")) p.pretrain = PretrainPlan::from_json(j["pretrain"]);
    if (j.contains("backbone")) p.backbone = j["backbone"].get<std::string>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad grid plan: ") + e.what());
  }
  p.validate();
  return p;
}

GridPlan GridPlan::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open plan " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void GridPlan::save(const fs::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

GridOutcome run_grid(const GridPlan& plan, const fs::path& run_dir) {
  plan.validate();
  for (const char* sub : {"suites", "matrices", "reports", "prompts", "plots", "logs"}) {
    fs::create_directories(run_dir / sub);
  }
  plan.save(run_dir / "plan.json");
  const BackboneModel model = obtain_backbone(plan.backbone.value_or(run_dir / "backbone.bin"), plan.pretrain);

  std::map<std::uint64_t, Suite> suites;
  for (const auto seed : plan.seeds) {
    Suite suite = generate_suite(suite_for_seed(plan.suite, seed));
    save_suite(suite, suite_path(run_dir, seed));
    suites.emplace(seed, std::move(suite));
  }

  GridOutcome outcome;
  for (const auto v : plan.variants) {
    const ExperimentPlan ep = plan.plan_for(v);
    std::vector<MetricReport> reports;
    for (const auto seed : plan.seeds) {
      const SeedResult r = run_seed(ep, model, suites.at(seed), seed);
      const std::string stem = seed_stem(v, seed);
      r.matrix.save_csv(run_dir / "matrices" / (stem + ".csv"));
      write_text(run_dir / "reports" / (stem + ".json"), r.report.to_json().dump(2) + "\n");
      write_text(run_dir / "reports" / (stem + ".txt"), r.report.to_table());
      append_run_log(r.stages, run_dir / "logs" / (stem + ".jsonl"));
      if (!r.traces.empty()) write_traces(r.traces, run_dir / "logs" / (stem + "-traces.jsonl"));
      if (r.store && r.store->task_count() > 0) r.store->save(run_dir / "prompts" / (stem + ".store"));
      reports.push_back(r.report);
    }
    AggregateReport agg = aggregate(reports);
    write_text(run_dir / "reports" / (to_string(v) + "-aggregate.json"), agg.to_json().dump(2) + "\n");
    outcome.variants.push_back(v);
    outcome.aggregates.push_back(std::move(agg));
  }
  return outcome;
}

std::vector<fs::path> plot_run(const fs::path& run_dir) {
  const fs::path plan_path = run_dir / "plan.json";
  if (!fs::exists(plan_path)) throw InputError("no plan.json in " + run_dir.string());
  const GridPlan plan = GridPlan::load(plan_path);
  fs::create_directories(run_dir / "plots");
  std::vector<fs::path> written;
  std::vector<fs::path> traces;
  if (fs::exists(run_dir / "logs")) {
    for (const auto& e : fs::directory_iterator(run_dir / "logs")) {
      const std::string name = e.path().filename().string();
      if (name.size() > 13 && name.ends_with("-traces.jsonl")) traces.push_back(e.path());
    }
  }
  std::sort(traces.begin(), traces.end());
  for (const auto& tpath : traces) {
    const std::string name = tpath.filename().string();
    const std::string stem = name.substr(0, name.size() - std::string("-traces.jsonl").size());
    const auto at = stem.rfind("-seed");
    if (at == std::string::npos) continue;
    const Variant v = variant_from_string(stem.substr(0, at));
    const std::uint64_t seed = std::stoull(stem.substr(at + 5));
    const RunConfig config = configure_variant(v, plan.config);
    const Suite suite = load_suite(suite_path(run_dir, seed)).suite;
    const auto names = task_names(suite);
    const auto trace_rows = read_traces(tpath);

    const fs::path store_path = run_dir / "prompts" / (stem + ".store");
    if (fs::exists(store_path)) {
      const PromptStore store = PromptStore::load(store_path, config.store_shape());
      const auto enc = GuidanceEncoders::initialize(suite.options.world.d_image, Vocabulary::toy().size(),
                                                    config.d_guidance, config.encoder_seed);
      const Matrix sim = similarity_heatmap(store, enc, suite, config.weights());
      const fs::path base = run_dir / "plots" / (stem + "-similarity");
      write_heatmap(sim, names, "prototype similarity (" + stem + ")", base);
      written.push_back(base.string() + ".svg");
    }
    const Matrix hist = selection_histogram(trace_rows, static_cast<int>(suite.tasks.size()));
    const fs::path base = run_dir / "plots" / (stem + "-selection");
    write_heatmap(hist, names, "selection probability (" + stem + ")", base);
    written.push_back(base.string() + ".svg");
  }
  return written;
}

std::vector<BenchRow> complexity_benchmark(const BackboneModel& model, const BenchOptions& options) {
  if (options.samples < 1 || options.repeats < 1) throw ConfigError("benchmark needs samples and repeats");
  const BackboneGraph graph(model);
  const int V = model.config().vocab_size;
  const auto enc = GuidanceEncoders::initialize(model.config().d_image, V, 32, options.seed);
  SuiteOptions so;
  so.tasks = 1;
  so.n_train = 1;
  so.n_eval = options.samples;
  so.background_fraction = 0.0;
  so.seed = options.seed;
  const Suite suite = generate_suite(so);
  const auto& samples = suite.tasks.front().eval;
  constexpr int kMaxTokens = 4;

  std::vector<BenchRow> rows;
  for (const int T : options.task_counts) {
    if (T < 1) throw ConfigError("benchmark task counts must be positive");
    PromptStore store({options.prompt_length, model.config().d_model, 32}, mix_seed(options.seed, 0xbe7c));
    for (int t = 1; t <= T; ++t) {
      store.add_task(t, mix_seed(options.seed, 0xbe7c, static_cast<std::uint64_t>(t)));
      store.finalize_task(t);
    }
    const ag::Var extra = ag::Var::constant(store.stacked_embeddings());
    const std::vector<GuidanceVector> protos(store.cached_prototypes().begin(), store.cached_prototypes().end());
    const auto all_prefix = prefix_token_ids(store, select_all(T), V);

    // Returns elapsed milliseconds and the number of decoding steps.
    auto time_method = [&](bool select) {
      int steps = 0;
      const auto start = std::chrono::steady_clock::now();
      for (const auto& s : samples) {
        std::vector<int> prefix;
        if (select) {
          const auto scores = score_all(protos, enc.encode_image(s.image), enc.encode_text(s.instruction_tokens));
          prefix = prefix_token_ids(store, select_eval(scores, options.k), V);
        } else {
          prefix = all_prefix;
        }
        const SequenceInput in{prefix, s.image, s.instruction_tokens, {}};
        const auto outputs = graph.generate(extra, std::span(&in, 1), kMaxTokens);
        steps += std::min(static_cast<int>(outputs.front().size()) + 1, kMaxTokens);
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return std::pair{ms, steps};
    };

    double best_select = std::numeric_limits<double>::infinity();
    double best_all = std::numeric_limits<double>::infinity();
    for (int r = 0; r < options.repeats; ++r) {
      const auto [ms_s, steps_s] = time_method(true);
      const auto [ms_a, steps_a] = time_method(false);
      best_select = std::min(best_select, ms_s / steps_s);
      best_all = std::min(best_all, ms_a / steps_a);
    }
    const int k_eff = std::min(options.k, T);
    rows.push_back({T, "modalprompt", k_eff * options.prompt_length, best_select});
    rows.push_back({T, "concat_all", T * options.prompt_length, best_all});
  }
  return rows;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(4) << "T" << std::setw(14) << "method" << std::right << std::setw(14)
      << "prefix_tokens" << std::setw(14) << "ms/token" << std::setw(10) << "speedup" << '\n';
  for (const auto& r : rows) {
    double speedup = 1.0;
    for (const auto& o : rows) {
      if (o.tasks == r.tasks && o.method == "concat_all") speedup = o.ms_per_token / r.ms_per_token;
    }
    out << std::left << std::setw(4) << r.tasks << std::setw(14) << r.method << std::right << std::setw(14)
        << r.prefix_tokens << std::setw(14) << std::fixed << std::setprecision(4) << r.ms_per_token
        << std::setw(10) << std::setprecision(2) << speedup << '\n';
  }
  return out.str();
}

}  // namespace modalprompt
