// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. The pretrained backbone is cached next to the binary.

#include "gradient_check.hpp"

#include "modalprompt/archive.hpp"
#include "modalprompt/evaluation.hpp"
#include "modalprompt/experiments.hpp"
#include "modalprompt/fixtures.hpp"
#include "modalprompt/selection.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace modalprompt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// Expected metric values of a reference matrix, each to +-0.01.
Outcome check_values(const std::string& fixture, const std::vector<std::pair<std::string, double>>& expected) {
  const auto start = std::chrono::steady_clock::now();
  const MetricFixture* f = find_fixture(fixture);
  if (f == nullptr) return {false, "fixture " + fixture + " missing"};
  const MetricReport report = compute_report(AccuracyMatrix::from_csv(f->csv));
  bool ok = true;
  std::ostringstream detail;
  for (const auto& [key, want] : expected) {
    const double got = report_value(report, key);
    const bool hit = std::abs(got - want) <= kFixtureTolerance + 1e-9;
    ok = ok && hit;
    detail << key << "=" << fmt(got) << (hit ? "" : " (expected " + fmt(want) + ")") << " ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ok = ok && secs < 1.0;
  detail << "in " << fmt(secs * 1000.0, 1) << " ms";
  return {ok, detail.str()};
}

// Per-seed results of the continual runs shared by several criteria.
struct VariantRuns {
  std::vector<MetricReport> reports;
  std::vector<std::vector<SelectionTrace>> traces;
  double cpu = 0.0;
};

struct FreezeLog {
  int stages = 0;
  std::vector<std::string> violations;
};

// ModalPrompt-style runs go through run_continual directly so every stage
// can be compared against the state before it.
VariantRuns run_checked(Variant v, const BackboneModel& model, const SuiteOptions& suite_base,
                        const std::vector<std::uint64_t>& seeds, FreezeLog* freeze, RunConfig base = {}) {
  VariantRuns out;
  base.tasks = suite_base.tasks;
  const std::string model_bytes = serialize(model.to_archive());
  for (const auto seed : seeds) {
    const Suite suite = generate_suite(suite_for_seed(suite_base, seed));
    const double cpu0 = cpu_seconds();
    RunConfig config = configure_variant(v, base);
    config.seed = seed;
    if (freeze == nullptr || config.shared_prompt) {
      ExperimentPlan plan;
      plan.variant = v;
      plan.config = base;
      plan.suite = suite.options;
      plan.seeds = {seed};
      SeedResult r = run_seed(plan, model, suite, seed);
      out.reports.push_back(r.report);
      out.traces.push_back(std::move(r.traces));
    } else {
      const std::string enc_bytes = serialize(GuidanceEncoders::initialize(model.config().d_image,
                                                                           model.config().vocab_size,
                                                                           config.d_guidance, config.encoder_seed)
                                                  .to_archive());
      std::vector<std::string> set_bytes;
      std::vector<std::string> proto_bytes;
      auto fail = [&](int stage, const std::string& what) {
        freeze->violations.push_back("seed " + std::to_string(seed) + " stage " + std::to_string(stage) + ": " + what);
      };
      ContinualResult r = run_continual(
          model, suite, config,
          [&](int stage, const PromptStore& store, const GuidanceEncoders& enc, const StageReport&) {
            ++freeze->stages;
            if (serialize(model.to_archive()) != model_bytes) fail(stage, "backbone changed");
            if (serialize(enc.to_archive()) != enc_bytes) fail(stage, "encoders changed");
            if (store.task_count() != stage) fail(stage, "unexpected set count");
            for (int t = 1; t < stage; ++t) {
              const size_t i = static_cast<size_t>(t - 1);
              if (matrix_bytes(store.set(t).embeddings) != set_bytes[i]) fail(stage, "prompt set " + std::to_string(t) + " changed");
              if (!store.set(t).frozen) fail(stage, "prompt set " + std::to_string(t) + " not frozen");
              if (matrix_bytes(store.cached_prototype(t).values()) != proto_bytes[i]) {
                fail(stage, "cached prototype " + std::to_string(t) + " changed");
              }
            }
            set_bytes.push_back(matrix_bytes(store.set(stage).embeddings));
            proto_bytes.push_back(matrix_bytes(store.cached_prototype(stage).values()));
          });
      out.reports.push_back(compute_report(r.matrix));
      out.traces.push_back(std::move(r.final_traces));
    }
    out.cpu += cpu_seconds() - cpu0;
    const auto& rep = out.reports.back();
    std::cout << "  " << std::left << std::setw(15) << to_string(v) << " seed " << seed << "  last "
              << fmt(rep.last.mean) << "  bwt " << fmt(rep.bwt ? rep.bwt->mean : 0.0) << "  M_T "
              << fmt(rep.mean_acc ? rep.mean_acc->values.back() : 0.0) << "  (" << fmt(cpu_seconds() - cpu0, 1)
              << " s cpu)" << std::endl;
  }
  return out;
}

std::vector<double> series_of(const std::vector<MetricReport>& reports,
                              const std::function<double(const MetricReport&)>& get) {
  std::vector<double> v;
  for (const auto& r : reports) v.push_back(get(r));
  return v;
}

double last_mean(const MetricReport& r) { return r.last.mean; }
double bwt_mean(const MetricReport& r) { return r.bwt ? r.bwt->mean : 0.0; }
double final_m(const MetricReport& r) { return r.mean_acc ? r.mean_acc->values.back() : r.last.mean; }

// Exhaustive best subset by summed score, optionally forced to hold `forced`.
std::vector<int> best_subset(const std::map<int, double>& combined, int n, int size, int forced) {
  std::vector<int> best;
  double best_sum = -1e300;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != size) continue;
    if (forced > 0 && !(mask & (1u << (forced - 1)))) continue;
    std::vector<int> chosen;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        chosen.push_back(i + 1);
        sum += combined.at(i + 1);
      }
    }
    if (sum > best_sum) {
      best_sum = sum;
      best = chosen;
    }
  }
  return best;
}

GuidanceVector random_unit(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowVector v(d);
  for (int i = 0; i < d; ++i) v(i) = n(rng);
  return GuidanceVector::normalize(v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string backbone_path = MODALPROMPT_ACCEPTANCE_CACHE;
  std::vector<int> only;
  app.add_option("--backbone", backbone_path, "Cached backbone (pretrained when absent)");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::map<int, Outcome> results;
  const std::map<int, std::string> titles = {
      {1, "metric oracle, modalprompt matrix"},
      {2, "metric oracle, baseline matrices"},
      {3, "forgetting gap against sequential finetuning"},
      {4, "ablation ordering of fusion and selection"},
      {5, "dual guidance against single-modality guidance"},
      {6, "selection fidelity on the separable suite"},
      {7, "prefix length and decoding speed"},
      {8, "gradient and prototype-loss correctness"},
      {9, "freeze and selection invariants"},
  };
  auto report = [&](int c, Outcome o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c << ": " << titles.at(c) << "  [" << o.detail
              << "]" << std::endl;
    results[c] = std::move(o);
  };

  if (wanted(1)) {
    report(1, check_values("modalprompt-ref", {{"last.mean", 55.06},
                                         {"avg.1", 68.36},
                                         {"avg.mean", 54.19},
                                         {"bwt.2", 6.55},
                                         {"mean_acc.2", 64.50},
                                         {"bwt.mean", 3.72},
                                         {"mean_acc.mean", 56.10}}));
  }
  if (wanted(2)) {
    const Outcome a = check_values("moelora-ref", {{"bwt.2", 41.31}, {"mean_acc.2", 43.13}});
    const Outcome b = check_values("finetune-ref", {{"last.mean", 29.06}});
    report(2, {a.pass && b.pass, "moelora: " + a.detail + "; finetune: " + b.detail});
  }

  if (wanted(8)) {
    double worst = 0.0;
    std::string worst_name;
    int checked = 0;
    for (const auto& set : {gradcheck::lmm_prompt_errors(3), gradcheck::lmm_backbone_errors(4),
                            gradcheck::proto_errors(5)}) {
      for (const auto& e : set) {
        ++checked;
        if (e.error >= worst) {
          worst = e.error;
          worst_name = e.name;
        }
      }
    }
    // Analytic values on random unit vectors in 32 dimensions.
    std::mt19937_64 rng(8);
    double proto_dev = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const GuidanceVector p = random_unit(32, rng);
      RowVector r = random_unit(32, rng).values();
      r -= r.dot(p.values()) * p.values();
      const GuidanceVector orth = GuidanceVector::normalize(r);
      const GuidanceVector anti = GuidanceVector::normalize(-p.values());
      proto_dev = std::max(proto_dev, std::abs(proto_loss(p, p, p) - 0.0));
      proto_dev = std::max(proto_dev, std::abs(proto_loss(p, orth, orth) - 2.0));
      proto_dev = std::max(proto_dev, std::abs(proto_loss(p, anti, anti) - 4.0));
      const ag::Var pv = ag::Var::constant(p.values());
      proto_dev = std::max(proto_dev, std::abs(proto_loss(pv, ag::Var::constant(anti.values()),
                                                          ag::Var::constant(anti.values()))
                                                   .scalar() -
                                               4.0));
    }
    std::ostringstream d;
    d << checked << " tensors, worst relative error " << std::scientific << std::setprecision(2) << worst << " ("
      << worst_name << "); proto_loss deviation " << proto_dev;
    report(8, {worst < gradcheck::kTolerance && proto_dev <= 1e-9, d.str()});
  }

  if (wanted(7)) {
    RunConfig rc;
    const int M = rc.prompt_length, k = rc.top_k;
    bool counts_ok = true;
    std::mt19937_64 rng(7);
    for (int T = k; T <= 12; ++T) {
      PromptStore store(rc.store_shape(), 1);
      for (int t = 1; t <= T; ++t) {
        store.add_task(t, static_cast<std::uint64_t>(t));
        store.finalize_task(t);
      }
      for (int trial = 0; trial < 20; ++trial) {
        const auto scores = score_all(store.cached_prototypes(), random_unit(rc.d_guidance, rng),
                                      random_unit(rc.d_guidance, rng));
        const auto sel = select_eval(scores, k);
        counts_ok = counts_ok && assemble_prefix(store, sel).rows() == M * k &&
                    static_cast<int>(prefix_token_ids(store, sel, 256).size()) == M * k;
      }
    }
    const BackboneModel model = obtain_backbone(backbone_path, PretrainPlan{});
    BenchOptions bo;
    bo.task_counts = {4, 8};
    bo.repeats = 5;
    const auto rows = complexity_benchmark(model, bo);
    double mp = 0.0, cat = 0.0;
    for (const auto& r : rows) {
      if (r.method == "modalprompt") counts_ok = counts_ok && r.prefix_tokens == M * k;
      if (r.tasks == 8) (r.method == "modalprompt" ? mp : cat) = r.ms_per_token;
    }
    const double speedup = mp > 0.0 ? cat / mp : 0.0;
    report(7, {counts_ok && speedup >= 1.2,
               std::string("prefix ") + (counts_ok ? "= M*k for T=3..12" : "count mismatch") + "; T=8 ms/token " +
                   fmt(mp, 3) + " vs " + fmt(cat, 3) + ", speedup " + fmt(speedup) + "x"});
  }

  const bool need_default = wanted(3) || wanted(4) || wanted(6) || wanted(9);
  const bool need_joint = wanted(5);
  if (need_default || need_joint) {
    const auto t0 = std::chrono::steady_clock::now();
    const BackboneModel model = obtain_backbone(backbone_path, PretrainPlan{});
    std::cout << "  backbone ready in "
              << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1) << " s"
              << std::endl;

    if (need_default) {
      SuiteOptions suite;  // default separable suite, T = 4
      FreezeLog freeze;
      const VariantRuns mp = run_checked(Variant::ModalPrompt, model, suite, seeds, &freeze);

      if (wanted(3)) {
        const VariantRuns ft = run_checked(Variant::Finetune, model, suite, seeds, nullptr);
        const double b_mp = mean(series_of(mp.reports, bwt_mean)), b_ft = mean(series_of(ft.reports, bwt_mean));
        const double m_mp = mean(series_of(mp.reports, final_m)), m_ft = mean(series_of(ft.reports, final_m));
        const double cpu = mp.cpu + ft.cpu;
        const bool ok = b_mp <= 0.5 * b_ft && m_mp > m_ft && cpu < 600.0;
        report(3, {ok, "BWT " + fmt(b_mp) + " vs " + fmt(b_ft) + " (ratio " + fmt(b_ft != 0.0 ? b_mp / b_ft : 0.0, 3) +
                           ", need <= 0.5); M_T " + fmt(m_mp) + " vs " + fmt(m_ft) + "; " + fmt(cpu, 0) + " s cpu"});
      }
      if (wanted(4)) {
        const VariantRuns fo = run_checked(Variant::FusionOnly, model, suite, seeds, nullptr);
        const VariantRuns so = run_checked(Variant::SelectionOnly, model, suite, seeds, nullptr);
        const double full = mean(series_of(mp.reports, last_mean));
        const double f = mean(series_of(fo.reports, last_mean)), s = mean(series_of(so.reports, last_mean));
        report(4, {full > f && full > s,
                   "last: full " + fmt(full) + ", fusion_only " + fmt(f) + ", selection_only " + fmt(s)});
      }
      if (wanted(6)) {
        bool ok = true;
        std::ostringstream d;
        for (size_t si = 0; si < seeds.size(); ++si) {
          const auto& traces = mp.traces[si];
          const Matrix hist = selection_histogram(traces, suite.tasks);
          const auto own = own_task_rate(traces, suite.tasks);
          d << "seed " << seeds[si] << " own";
          for (int i = 0; i < suite.tasks; ++i) {
            // With k of T sets chosen per sample, other sets chosen just as
            // often tie with the diagonal; it must still be the row maximum.
            const bool diag_max = hist(i, i) >= hist.row(i).maxCoeff() - 1e-12;
            ok = ok && diag_max && own[static_cast<size_t>(i)] > 0.5;
            d << " " << fmt(own[static_cast<size_t>(i)]) << (diag_max ? "" : "(off-diagonal max)");
          }
          d << "; ";
        }
        report(6, {ok && !mp.traces.empty(), d.str()});
      }
      if (wanted(9)) {
        // Selection invariants on random scores.
        std::mt19937_64 rng(9);
        int oracle_mismatch = 0, missing_current = 0;
        for (int trial = 0; trial < 1000; ++trial) {
          const int T = 1 + static_cast<int>(rng() % 10);
          const int k = 1 + static_cast<int>(rng() % 5);
          std::vector<GuidanceVector> protos;
          for (int t = 0; t < T; ++t) protos.push_back(random_unit(16, rng));
          const auto scores = score_all(protos, random_unit(16, rng), random_unit(16, rng));
          std::map<int, double> combined;
          for (const auto& [id, s] : scores) combined[id] = s.combined();
          if (select_eval(scores, k).chosen_task_ids != best_subset(combined, T, std::min(k, T), 0)) ++oracle_mismatch;
          const int current = 1 + static_cast<int>(rng() % static_cast<unsigned>(T));
          const auto train = select_train(scores, current, k);
          const auto& ids = train.chosen_task_ids;
          if (std::find(ids.begin(), ids.end(), current) == ids.end()) ++missing_current;
          std::map<int, double> seen(combined.begin(), combined.find(current));
          seen[current] = combined.at(current);
          if (ids != best_subset(seen, current, std::min(k, current), current)) ++oracle_mismatch;
        }
        std::ostringstream d;
        d << freeze.stages << " stages checked, " << freeze.violations.size() << " freeze violations";
        if (!freeze.violations.empty()) d << " (first: " << freeze.violations.front() << ")";
        d << "; select_train without current task " << missing_current << "/1000; oracle mismatches "
          << oracle_mismatch << "/2000";
        report(9, {freeze.violations.empty() && freeze.stages > 0 && missing_current == 0 && oracle_mismatch == 0,
                   d.str()});
      }
    }

    if (need_joint) {
      SuiteOptions joint;
      joint.layout = SuiteLayout::Joint;
      // Each confusable pair is two tasks, so only k = 1 makes the choice
      // matter; with k >= 2 every modality keeps the own set in the top k.
      RunConfig one;
      one.top_k = 1;
      const VariantRuns dual = run_checked(Variant::ModalPrompt, model, joint, seeds, nullptr, one);
      const VariantRuns img = run_checked(Variant::ImageGuidance, model, joint, seeds, nullptr, one);
      const VariantRuns txt = run_checked(Variant::TextGuidance, model, joint, seeds, nullptr, one);
      const double d = mean(series_of(dual.reports, last_mean));
      const double i = mean(series_of(img.reports, last_mean)), t = mean(series_of(txt.reports, last_mean));
      report(5, {d >= i && d >= t, "last: dual " + fmt(d) + ", image " + fmt(i) + ", text " + fmt(t)});
    }
  }

  int failed = 0;
  for (const auto& [c, o] : results) failed += o.pass ? 0 : 1;
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " criteria failed") << " (" << results.size()
            << " checked)" << std::endl;
  return failed == 0 ? 0 : 1;
}
