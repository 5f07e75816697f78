// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Thin pybind11 layer. Structured values cross the boundary as JSON text;
// the Python package decodes them.

#include "modalprompt/cli.hpp"
#include "modalprompt/errors.hpp"
#include "modalprompt/experiments.hpp"
#include "modalprompt/fixtures.hpp"
#include "modalprompt/selection.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace modalprompt;
using nlohmann::json;

namespace {

json matrix_json(const AccuracyMatrix& a) {
  json rows = json::array();
  for (int t = 1; t <= a.tasks(); ++t) {
    json row = json::array();
    for (int i = 1; i <= t; ++i) row.push_back(a.has(t, i) ? json(a.at(t, i)) : json(nullptr));
    rows.push_back(row);
  }
  return {{"tasks", a.task_names()}, {"rows", rows}};
}

std::vector<GuidanceVector> unit_rows(const Matrix& m) {
  std::vector<GuidanceVector> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(GuidanceVector::normalize(m.row(r)));
  return out;
}

ScoreMap scores_for(const Matrix& prototypes, const RowVector& x_v, const RowVector& x_t) {
  return score_all(unit_rows(prototypes), GuidanceVector::normalize(x_v), GuidanceVector::normalize(x_t));
}

json suite_summary(const Suite& s) {
  json tasks = json::array();
  for (const auto& t : s.tasks) {
    tasks.push_back({{"task_id", t.spec.task_id},
                     {"family", family_info(t.spec.family).name},
                     {"scene", t.spec.scene},
                     {"shift", t.spec.shift},
                     {"n_train", t.train.size()},
                     {"n_eval", t.eval.size()}});
  }
  return {{"options", suite_options_to_json(s.options)}, {"tasks", tasks}};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the modalprompt package";

  // Translators run newest first, so the subclasses registered after the
  // base class take precedence over it.
  auto& base_error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base_error.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base_error.ptr());
  py::register_exception<InputError>(m, "InputError", base_error.ptr());
  py::register_exception<StateError>(m, "StateError", base_error.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base_error.ptr());

  // Metrics.
  m.def("report_from_rows", [](const std::vector<std::vector<double>>& rows, std::vector<std::string> names) {
    return compute_report(AccuracyMatrix::from_rows(rows, std::move(names))).to_json().dump();
  }, py::arg("rows"), py::arg("names") = std::vector<std::string>{});
  m.def("report_from_csv", [](const std::string& text) {
    return compute_report(AccuracyMatrix::from_csv(text)).to_json().dump();
  });
  m.def("aggregate", [](const std::vector<std::string>& reports) {
    std::vector<MetricReport> rs;
    for (const auto& r : reports) rs.push_back(MetricReport::from_json(json::parse(r)));
    return aggregate(rs).to_json().dump();
  });
  m.def("fixture_names", [] {
    std::vector<std::string> names;
    for (const auto& f : metric_fixtures()) names.push_back(f.name);
    return names;
  });
  m.def("fixture_csv", [](const std::string& name) {
    const auto* f = find_fixture(name);
    if (f == nullptr) throw LookupError("no fixture named '" + name + "'");
    return f->csv;
  });
  m.def("check_fixture", [](const std::string& name, const std::string& csv) {
    const auto* f = find_fixture(name);
    if (f == nullptr) throw LookupError("no fixture named '" + name + "'");
    const auto report = compute_report(AccuracyMatrix::from_csv(csv.empty() ? f->csv : csv));
    std::vector<std::tuple<std::string, double, double>> out;
    for (const auto& d : check_fixture(*f, report)) out.emplace_back(d.metric, d.expected, d.actual);
    return out;
  }, py::arg("name"), py::arg("csv") = "");

  // Tasks.
  py::class_<Suite>(m, "Suite")
      .def_property_readonly("num_tasks", [](const Suite& s) { return static_cast<int>(s.tasks.size()); })
      .def("summary", [](const Suite& s) { return suite_summary(s).dump(); })
      .def("save", [](const Suite& s, const std::string& path) { save_suite(s, path); })
      .def("samples", [](const Suite& s, int task_id, const std::string& split) {
        if (task_id < 1 || task_id > static_cast<int>(s.tasks.size())) throw LookupError("no task " + std::to_string(task_id));
        const auto& t = s.tasks[static_cast<size_t>(task_id - 1)];
        if (split != "train" && split != "eval") throw ConfigError("split must be train or eval");
        json out = json::array();
        for (const auto& x : split == "train" ? t.train : t.eval) {
          out.push_back({{"sample_id", x.sample_id}, {"instruction", x.instruction}, {"answer", x.answer},
                         {"background", x.background}, {"image", x.image}});
        }
        return out.dump();
      });
  m.def("generate_suite", [](const std::string& options) {
    return generate_suite(suite_options_from_json(json::parse(options)));
  });
  m.def("suite_for_seed", [](const std::string& options, std::uint64_t seed) {
    return suite_options_to_json(suite_for_seed(suite_options_from_json(json::parse(options)), seed)).dump();
  });
  m.def("load_suite", [](const std::string& path) {
    auto r = load_suite(path);
    return py::make_tuple(std::move(r.suite), r.warnings);
  });

  // Backbone.
  py::class_<BackboneModel>(m, "Backbone")
      .def_property_readonly("vocab_size", [](const BackboneModel& b) { return b.config().vocab_size; })
      .def_property_readonly("d_model", [](const BackboneModel& b) { return b.config().d_model; })
      .def_property_readonly("frozen", &BackboneModel::frozen)
      .def("save", [](const BackboneModel& b, const std::string& path) { b.save(path); })
      .def_static("load", [](const std::string& path) { return BackboneModel::load(path); });
  m.def("pretrain_backbone", [](const std::string& plan) {
    py::gil_scoped_release release;
    return pretrain_default_backbone(PretrainPlan::from_json(json::parse(plan)));
  });
  m.def("obtain_backbone", [](const std::string& path, const std::string& plan) {
    py::gil_scoped_release release;
    return obtain_backbone(path, PretrainPlan::from_json(json::parse(plan)));
  });

  // Runs.
  m.def("variant_names", [] {
    std::vector<std::string> out;
    for (auto v : all_variants()) out.push_back(to_string(v));
    return out;
  });
  m.def("run_seed", [](const std::string& variant, const std::string& config, const BackboneModel& model,
                       const Suite& suite, std::uint64_t seed) {
    ExperimentPlan plan;
    plan.variant = variant_from_string(variant);
    plan.config = RunConfig::from_json(json::parse(config));
    plan.config.tasks = static_cast<int>(suite.tasks.size());
    plan.suite = suite.options;
    plan.seeds = {seed};
    SeedResult r;
    {
      py::gil_scoped_release release;
      r = run_seed(plan, model, suite, seed);
    }
    json stages = json::array();
    for (const auto& s : r.stages) stages.push_back(s.to_json());
    json traces = json::array();
    for (const auto& t : r.traces) traces.push_back({{"sample_id", t.sample_id}, {"task", t.task_id_true}, {"chosen", t.chosen_ids}});
    return json{{"variant", variant},
                {"seed", seed},
                {"config", configure_variant(plan.variant, plan.config).to_json()},
                {"matrix", matrix_json(r.matrix)},
                {"report", r.report.to_json()},
                {"stages", stages},
                {"traces", traces}}
        .dump();
  });
  m.def("run_grid", [](const std::string& plan, const std::string& out_dir) {
    const GridPlan p = GridPlan::from_json(json::parse(plan));
    GridOutcome o;
    {
      py::gil_scoped_release release;
      o = run_grid(p, out_dir);
    }
    json out = json::object();
    for (size_t i = 0; i < o.variants.size(); ++i) out[to_string(o.variants[i])] = o.aggregates[i].to_json();
    return out.dump();
  });
  m.def("plot_run", [](const std::string& run_dir) {
    std::vector<std::string> out;
    for (const auto& p : plot_run(run_dir)) out.push_back(p.string());
    return out;
  });
  m.def("complexity_benchmark", [](const BackboneModel& model, std::vector<int> task_counts, int k, int prompt_length,
                                   int samples, int repeats, std::uint64_t seed) {
    BenchOptions o{std::move(task_counts), k, prompt_length, samples, repeats, seed};
    std::vector<BenchRow> rows;
    {
      py::gil_scoped_release release;
      rows = complexity_benchmark(model, o);
    }
    json out = json::array();
    for (const auto& r : rows) {
      out.push_back({{"tasks", r.tasks}, {"method", r.method}, {"prefix_tokens", r.prefix_tokens}, {"ms_per_token", r.ms_per_token}});
    }
    return out.dump();
  });

  // Selection and losses on raw vectors.
  m.def("select_eval", [](const Matrix& prototypes, const RowVector& x_v, const RowVector& x_t, int k, double w_image,
                          double w_text) {
    return select_eval(scores_for(prototypes, x_v, x_t), k, {w_image, w_text}).chosen_task_ids;
  }, py::arg("prototypes"), py::arg("x_v"), py::arg("x_t"), py::arg("k"), py::arg("w_image") = 1.0, py::arg("w_text") = 1.0);
  m.def("select_train", [](const Matrix& prototypes, const RowVector& x_v, const RowVector& x_t, int current, int k,
                           double w_image, double w_text) {
    return select_train(scores_for(prototypes, x_v, x_t), current, k, {w_image, w_text}).chosen_task_ids;
  }, py::arg("prototypes"), py::arg("x_v"), py::arg("x_t"), py::arg("current"), py::arg("k"), py::arg("w_image") = 1.0,
     py::arg("w_text") = 1.0);
  m.def("proto_loss", [](const RowVector& p, const RowVector& x_v, const RowVector& x_t) {
    return proto_loss(GuidanceVector::normalize(p), GuidanceVector::normalize(x_v), GuidanceVector::normalize(x_t));
  });

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "modalprompt");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
