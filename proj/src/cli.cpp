// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/cli.hpp"

#include "modalprompt/errors.hpp"
#include "modalprompt/evaluation.hpp"
#include "modalprompt/experiments.hpp"
#include "modalprompt/fixtures.hpp"
#include "modalprompt/selection.hpp"
#include "modalprompt/vocab.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace modalprompt {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::path("runs");
}

namespace {

// Raised for missing inputs; maps to the usage exit code.
struct MissingPath {
  std::string message;
};

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw MissingPath{what + " not found: " + path.string()};
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  require_file(path, "file");
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

fs::path out_dir_or(const std::string& given, const fs::path& fallback) {
  return given.empty() ? default_output_root() / fallback : fs::path(given);
}

void record_config(const fs::path& dir, const std::string& command, json options) {
  options["command"] = command;
  write_json(dir / "config.json", options);
}

SuiteLayout layout_from(const std::string& s) {
  if (s == "separable") return SuiteLayout::Separable;
  if (s == "joint") return SuiteLayout::Joint;
  throw ConfigError("layout must be separable or joint, got '" + s + "'");
}

PrefixPolicy policy_from(const std::string& s) {
  if (s == "select") return PrefixPolicy::Select;
  if (s == "all") return PrefixPolicy::All;
  if (s == "shared") return PrefixPolicy::Shared;
  if (s == "empty") return PrefixPolicy::Empty;
  throw ConfigError("policy must be select, all, shared or empty, got '" + s + "'");
}

std::vector<std::string> task_labels(const Suite& suite) {
  std::vector<std::string> out;
  for (const auto& t : suite.tasks) {
    out.push_back(family_info(t.spec.family).name + "-s" + std::to_string(t.spec.scene));
  }
  return out;
}

BackboneModel backbone_from(const std::string& path) {
  if (!path.empty()) {
    require_file(path, "backbone");
    return BackboneModel::load(path);
  }
  return obtain_backbone(default_output_root() / "backbone.bin", PretrainPlan{});
}

struct SuiteArgs {
  int tasks = 4;
  int n_train = 500;
  int n_eval = 200;
  double background = 0.3;
  std::string layout = "separable";
  std::uint64_t base_seed = 7;

  void add(CLI::App* cmd) {
    cmd->add_option("--tasks", tasks, "Number of tasks T")->capture_default_str();
    cmd->add_option("--n-train", n_train, "Train samples per task")->capture_default_str();
    cmd->add_option("--n-eval", n_eval, "Eval samples per task")->capture_default_str();
    cmd->add_option("--background", background, "Background share of each train split")->capture_default_str();
    cmd->add_option("--layout", layout, "separable or joint")->capture_default_str();
    cmd->add_option("--suite-seed", base_seed, "Base suite seed (the run seed is added)")->capture_default_str();
  }

  SuiteOptions options() const {
    SuiteOptions o;
    o.tasks = tasks;
    o.n_train = n_train;
    o.n_eval = n_eval;
    o.background_fraction = background;
    o.layout = layout_from(layout);
    o.seed = base_seed;
    return o;
  }
};

// Run config: optional JSON file, then explicit flags on top.
struct ConfigArgs {
  std::string file;
  int tasks = 0;
  int epochs = 0;
  int k = 0;
  int prompt_length = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", file, "Run config JSON");
    cmd->add_option("--epochs", epochs, "Epochs per task");
    cmd->add_option("--k", k, "Selected sets per sample");
    cmd->add_option("--prompt-length", prompt_length, "Prompt tokens per set (M)");
  }

  RunConfig build(int suite_tasks) const {
    RunConfig c;
    if (!file.empty()) {
      json j = read_json(file);
      // A train output config.json nests the run config.
      if (j.contains("config") && j["config"].is_object()) j = j["config"];
      c = RunConfig::from_json(j);
    }
    c.tasks = suite_tasks;
    if (epochs > 0) c.epochs_per_task = epochs;
    if (k > 0) c.top_k = k;
    if (prompt_length > 0) c.prompt_length = prompt_length;
    c.validate();
    return c;
  }
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("not an integer list: '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

std::string report_summary(const MetricReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << "last " << r.last.mean;
  if (r.avg) out << "  avg " << r.avg->mean;
  if (r.bwt) out << "  bwt " << r.bwt->mean;
  if (r.mean_acc) out << "  mean_acc " << r.mean_acc->mean;
  return out.str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual prompt learning with modality-guided prompt selection"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  std::uint64_t seed = 1;
  auto add_seed = [&](CLI::App* cmd) { cmd->add_option("--seed", seed, "Random seed")->capture_default_str(); };

  // gen-suite
  auto* gen = app.add_subcommand("gen-suite", "Generate a task suite as JSON lines");
  SuiteArgs gen_suite;
  std::string gen_out;
  gen_suite.add(gen);
  add_seed(gen);
  gen->add_option("--out", gen_out, "Output directory");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Pretrain and save a frozen backbone");
  PretrainPlan pre_plan;
  std::string pre_out;
  pre->add_option("--samples", pre_plan.samples, "Mixture size")->capture_default_str();
  pre->add_option("--epochs", pre_plan.epochs, "Epochs")->capture_default_str();
  pre->add_option("--max-context", pre_plan.max_context, "Most binding pairs per sample")->capture_default_str();
  pre->add_option("--lr", pre_plan.learning_rate, "Learning rate")->capture_default_str();
  pre->add_option("--out", pre_out, "Output directory");
  add_seed(pre);

  // train
  auto* train = app.add_subcommand("train", "Run one variant over a task sequence");
  SuiteArgs train_suite;
  ConfigArgs train_config;
  std::string train_variant = "modalprompt", train_backbone, train_suite_path, train_out;
  train_suite.add(train);
  train_config.add(train);
  train->add_option("--variant", train_variant, "Method or ablation")->capture_default_str();
  train->add_option("--backbone", train_backbone, "Backbone file (default: pretrained under the output root)");
  train->add_option("--suite", train_suite_path, "Suite JSONL (default: generated)");
  train->add_option("--out", train_out, "Output directory");
  add_seed(train);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a stored prompt pool on a suite");
  ConfigArgs eval_config;
  std::string eval_store, eval_suite, eval_backbone, eval_policy = "select", eval_out;
  eval_config.add(ev);
  ev->add_option("--store", eval_store, "Prompt store")->required();
  ev->add_option("--suite", eval_suite, "Suite JSONL")->required();
  ev->add_option("--backbone", eval_backbone, "Backbone file");
  ev->add_option("--policy", eval_policy, "select, all, shared or empty")->capture_default_str();
  ev->add_option("--out", eval_out, "Directory for the result JSON");
  add_seed(ev);

  // metrics
  auto* met = app.add_subcommand("metrics", "Metrics of an accuracy matrix CSV");
  std::string met_csv, met_out;
  met->add_option("matrix", met_csv, "Accuracy matrix CSV")->required();
  met->add_option("--out", met_out, "Directory for report.json");
  add_seed(met);

  // oracle
  auto* ora = app.add_subcommand("oracle", "Check metrics against a reference fixture");
  std::string ora_target;
  bool ora_list = false;
  ora->add_option("fixture", ora_target, "Fixture name or matrix CSV named after one");
  ora->add_flag("--list", ora_list, "List the fixtures");
  add_seed(ora);

  // grid
  auto* grid = app.add_subcommand("grid", "Run a grid of variants over shared suites and seeds");
  std::string grid_plan, grid_out;
  grid->add_option("--plan", grid_plan, "Grid plan JSON")->required();
  grid->add_option("--out", grid_out, "Run directory");
  add_seed(grid);

  // bench
  auto* bench = app.add_subcommand("bench", "Decoding time against prompt pool size");
  BenchOptions bench_opts;
  std::string bench_tasks = "2,4,8", bench_backbone, bench_out;
  bench->add_option("--tasks", bench_tasks, "Comma-separated pool sizes")->capture_default_str();
  bench->add_option("--k", bench_opts.k, "Selected sets")->capture_default_str();
  bench->add_option("--prompt-length", bench_opts.prompt_length, "Prompt tokens per set")->capture_default_str();
  bench->add_option("--samples", bench_opts.samples, "Decoded samples per timing")->capture_default_str();
  bench->add_option("--repeats", bench_opts.repeats, "Timings per row (best kept)")->capture_default_str();
  bench->add_option("--backbone", bench_backbone, "Backbone file");
  bench->add_option("--out", bench_out, "Output directory");
  add_seed(bench);

  // plot
  auto* plot = app.add_subcommand("plot", "Similarity and selection plots of a grid run");
  std::string plot_run_dir;
  plot->add_option("--run", plot_run_dir, "Run directory")->required();
  add_seed(plot);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      const SuiteOptions options = suite_for_seed(gen_suite.options(), seed);
      const fs::path dir = out_dir_or(gen_out, "suites/seed-" + std::to_string(seed));
      fs::create_directories(dir);
      const Suite suite = generate_suite(options);
      save_suite(suite, dir / "suite.jsonl");
      record_config(dir, "gen-suite", {{"seed", seed}, {"suite", suite_options_to_json(options)}});
      const auto labels = task_labels(suite);
      for (size_t i = 0; i < suite.tasks.size(); ++i) {
        const auto& t = suite.tasks[i];
        out << "task " << t.spec.task_id << "  " << labels[i] << "  shift " << t.spec.shift << "  train "
            << t.train.size() << "  eval " << t.eval.size() << '\n';
      }
      out << "wrote " << (dir / "suite.jsonl").string() << '\n';
      return kExitOk;
    }

    if (*pre) {
      pre_plan.seed = seed;
      const fs::path dir = out_dir_or(pre_out, "backbone-seed" + std::to_string(seed));
      fs::create_directories(dir);
      const BackboneModel model = pretrain_default_backbone(pre_plan);
      model.save(dir / "backbone.bin");
      const auto held_out = generate_pretraining_mixture(400, seed + 1000, World::Params{}, 0.25, pre_plan.max_context);
      const auto bare = generate_pretraining_mixture(400, seed + 2000, World::Params{}, 0.25, 0);
      const double acc_ctx = generic_accuracy(model, held_out);
      const double acc_bare = generic_accuracy(model, bare);
      record_config(dir, "pretrain", {{"seed", seed}, {"pretrain", pre_plan.to_json()}});
      write_json(dir / "pretrain-report.json", {{"held_out_accuracy", acc_ctx}, {"bare_accuracy", acc_bare}});
      out << std::fixed << std::setprecision(3) << "held-out accuracy " << acc_ctx << "  bare accuracy "
          << acc_bare << '\n'
          << "wrote " << (dir / "backbone.bin").string() << '\n';
      return kExitOk;
    }

    if (*train) {
      const Variant variant = variant_from_string(train_variant);
      Suite suite;
      if (!train_suite_path.empty()) {
        require_file(train_suite_path, "suite");
        auto loaded = load_suite(train_suite_path);
        for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
        suite = std::move(loaded.suite);
      } else {
        suite = generate_suite(suite_for_seed(train_suite.options(), seed));
      }
      ExperimentPlan plan;
      plan.variant = variant;
      plan.config = train_config.build(static_cast<int>(suite.tasks.size()));
      plan.seeds = {seed};
      plan.suite = suite.options;
      const BackboneModel model = backbone_from(train_backbone);
      const fs::path dir = out_dir_or(train_out, "train/" + to_string(variant) + "-seed" + std::to_string(seed));
      fs::create_directories(dir);
      record_config(dir, "train",
                    {{"seed", seed},
                     {"variant", to_string(variant)},
                     {"config", configure_variant(variant, plan.config).to_json()},
                     {"suite", suite_options_to_json(suite.options)},
                     {"backbone", train_backbone}});
      save_suite(suite, dir / "suite.jsonl");
      const SeedResult r = run_seed(plan, model, suite, seed);
      r.matrix.save_csv(dir / "matrix.csv");
      write_json(dir / "report.json", r.report.to_json());
      {
        std::ofstream txt(dir / "report.txt");
        txt << r.report.to_table();
      }
      append_run_log(r.stages, dir / "run.jsonl");
      if (!r.traces.empty()) write_traces(r.traces, dir / "traces.jsonl");
      if (r.store && r.store->task_count() > 0) r.store->save(dir / "prompts.store");
      out << r.report.to_table() << report_summary(r.report) << '\n' << "wrote " << dir.string() << '\n';
      return kExitOk;
    }

    if (*ev) {
      require_file(eval_suite, "suite");
      require_file(eval_store, "prompt store");
      auto loaded = load_suite(eval_suite);
      for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
      const Suite& suite = loaded.suite;
      const RunConfig config = eval_config.build(static_cast<int>(suite.tasks.size()));
      const BackboneModel model = backbone_from(eval_backbone);
      const PromptStore store = PromptStore::load(eval_store, config.store_shape());
      const auto enc = GuidanceEncoders::initialize(model.config().d_image, model.config().vocab_size,
                                                    config.d_guidance, config.encoder_seed);
      EvalOptions options = config.eval_options();
      options.policy = policy_from(eval_policy);
      const auto labels = task_labels(suite);
      json result = {{"policy", eval_policy}, {"tasks", json::array()}};
      double sum = 0.0;
      for (size_t i = 0; i < suite.tasks.size(); ++i) {
        const double acc = evaluate_task(model, store, enc, suite.tasks[i], options).accuracy;
        sum += acc;
        result["tasks"].push_back({{"task", i + 1}, {"name", labels[i]}, {"accuracy", acc}});
        out << "task " << (i + 1) << "  " << std::left << std::setw(22) << labels[i] << std::right << std::fixed
            << std::setprecision(2) << acc << '\n';
      }
      const double mean = sum / static_cast<double>(suite.tasks.size());
      result["mean"] = mean;
      out << "mean " << std::fixed << std::setprecision(2) << mean << '\n';
      if (!eval_out.empty()) {
        write_json(fs::path(eval_out) / "eval.json", result);
        record_config(eval_out, "eval",
                      {{"seed", seed}, {"store", eval_store}, {"suite", eval_suite}, {"config", config.to_json()}});
      }
      return kExitOk;
    }

    if (*met) {
      require_file(met_csv, "matrix");
      const MetricReport report = compute_report(AccuracyMatrix::load_csv(met_csv));
      out << report.to_table();
      if (!met_out.empty()) {
        write_json(fs::path(met_out) / "report.json", report.to_json());
        record_config(met_out, "metrics", {{"seed", seed}, {"matrix", met_csv}});
      }
      return kExitOk;
    }

    if (*ora) {
      if (ora_list) {
        for (const auto& f : metric_fixtures()) out << f.name << "  (" << f.expected.size() << " values)\n";
        return kExitOk;
      }
      if (ora_target.empty()) {
        err << "oracle: give a fixture name or a matrix CSV (see --list)\n";
        return kExitUsage;
      }
      const MetricFixture* fixture = find_fixture(ora_target);
      AccuracyMatrix matrix;
      if (fixture != nullptr) {
        matrix = AccuracyMatrix::from_csv(fixture->csv);
      } else {
        const fs::path path(ora_target);
        require_file(path, "fixture or matrix");
        fixture = find_fixture(path.stem().string());
        if (fixture == nullptr) {
          err << "oracle: no fixture named '" << path.stem().string() << "' (see --list)\n";
          return kExitUsage;
        }
        matrix = AccuracyMatrix::load_csv(path);
      }
      const MetricReport report = compute_report(matrix);
      const auto diffs = check_fixture(*fixture, report);
      out << fixture->name << ": " << (fixture->expected.size() - diffs.size()) << "/" << fixture->expected.size()
          << " values within " << kFixtureTolerance << '\n';
      for (const auto& d : diffs) {
        out << "  MISMATCH " << std::left << std::setw(14) << d.metric << std::right << std::fixed
            << std::setprecision(2) << " expected " << d.expected << "  computed " << d.actual << "  diff "
            << std::showpos << (d.actual - d.expected) << std::noshowpos << '\n';
      }
      return diffs.empty() ? kExitOk : kExitCheckFailed;
    }

    if (*grid) {
      require_file(grid_plan, "plan");
      const GridPlan plan = GridPlan::load(grid_plan);
      const fs::path dir = out_dir_or(grid_out, fs::path(grid_plan).stem());
      fs::create_directories(dir);
      record_config(dir, "grid", {{"seed", seed}, {"plan", plan.to_json()}});
      const GridOutcome outcome = run_grid(plan, dir);
      for (size_t i = 0; i < outcome.variants.size(); ++i) {
        out << std::left << std::setw(16) << to_string(outcome.variants[i]) << std::right
            << report_summary(outcome.aggregates[i].mean) << '\n';
      }
      out << "wrote " << dir.string() << '\n';
      return kExitOk;
    }

    if (*bench) {
      bench_opts.task_counts = parse_int_list(bench_tasks);
      bench_opts.seed = seed;
      const BackboneModel model = backbone_from(bench_backbone);
      const fs::path dir = out_dir_or(bench_out, "bench");
      fs::create_directories(dir);
      record_config(dir, "bench",
                    {{"seed", seed},
                     {"tasks", bench_opts.task_counts},
                     {"k", bench_opts.k},
                     {"prompt_length", bench_opts.prompt_length},
                     {"samples", bench_opts.samples},
                     {"repeats", bench_opts.repeats}});
      const auto rows = complexity_benchmark(model, bench_opts);
      json j = json::array();
      for (const auto& r : rows) {
        j.push_back({{"tasks", r.tasks}, {"method", r.method}, {"prefix_tokens", r.prefix_tokens},
                     {"ms_per_token", r.ms_per_token}});
      }
      write_json(dir / "bench.json", j);
      const std::string table = bench_table(rows);
      {
        std::ofstream txt(dir / "bench.txt");
        txt << table;
      }
      out << table;
      return kExitOk;
    }

    if (*plot) {
      if (!fs::is_directory(plot_run_dir)) throw MissingPath{"run directory not found: " + plot_run_dir};
      const auto written = plot_run(plot_run_dir);
      for (const auto& p : written) out << "wrote " << p.string() << '\n';
      if (written.empty()) out << "no selection traces in " << plot_run_dir << '\n';
      return kExitOk;
    }
  } catch (const MissingPath& e) {
    err << "error: " << e.message << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace modalprompt
