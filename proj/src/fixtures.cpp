// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/fixtures.hpp"

#include "modalprompt/errors.hpp"

#include <cmath>

namespace modalprompt {

namespace {

std::vector<MetricFixture> build() {
  std::vector<MetricFixture> out;
  out.push_back({"modalprompt-ref",
                 R"csv(stage,ScienceQA,TextVQA,ImageNet,GQA,VizWiz,REC,VQAV2,OCRVQA
1,77.05,,,,,,,
2,70.50,58.50,,,,,,
3,68.57,58.18,42.26,,,,,
4,68.82,56.08,43.43,62.17,,,,
5,67.48,55.05,37.60,61.81,48.81,,,
6,66.58,55.68,35.92,61.95,48.74,36.88,,
7,68.12,56.43,40.22,60.92,51.19,36.63,64.99,
8,68.42,56.40,41.13,61.11,50.13,36.69,66.90,59.68
)csv",
                 {
                     {"last.1", 68.42},
                     {"last.2", 56.40},
                     {"last.3", 41.13},
                     {"last.4", 61.11},
                     {"last.5", 50.13},
                     {"last.6", 36.69},
                     {"last.7", 66.90},
                     {"last.8", 59.68},
                     {"last.mean", 55.06},
                     {"avg.1", 68.36},
                     {"avg.2", 56.30},
                     {"avg.3", 39.66},
                     {"avg.4", 61.45},
                     {"avg.5", 50.02},
                     {"avg.6", 36.66},
                     {"avg.7", 66.90},
                     {"avg.mean", 54.19},
                     {"bwt.2", 6.55},
                     {"bwt.3", 4.40},
                     {"bwt.4", 3.16},
                     {"bwt.5", 4.51},
                     {"bwt.6", 3.98},
                     {"bwt.7", 2.02},
                     {"bwt.8", 1.41},
                     {"bwt.mean", 3.72},
                     {"mean_acc.2", 64.50},
                     {"mean_acc.3", 56.34},
                     {"mean_acc.4", 57.63},
                     {"mean_acc.5", 54.15},
                     {"mean_acc.6", 50.96},
                     {"mean_acc.7", 54.07},
                     {"mean_acc.8", 55.06},
                     {"mean_acc.mean", 56.10},
                 }});
  out.push_back({"moelora-ref",
                 R"csv(stage,ScienceQA,TextVQA,ImageNet,GQA,VizWiz,REC,VQAV2,OCRVQA
1,75.78,,,,,,,
2,34.47,51.80,,,,,,
3,22.61,0.04,79.60,,,,,
4,32.37,34.04,42.48,57.95,,,,
5,45.32,38.13,2.63,43.80,58.70,,,
6,58.76,9.08,5.64,31.87,11.45,36.77,,
7,33.01,48.42,10.61,49.78,32.23,1.75,64.58,
8,47.34,32.91,38.73,37.15,42.48,0.97,42.77,57.50
)csv",
                 {
                     {"last.1", 47.34},
                     {"last.2", 32.91},
                     {"last.3", 38.73},
                     {"last.4", 37.15},
                     {"last.5", 42.48},
                     {"last.6", 0.97},
                     {"last.7", 42.77},
                     {"last.8", 57.50},
                     {"last.mean", 37.48},
                     {"avg.1", 39.12},
                     {"avg.2", 27.10},
                     {"avg.3", 20.01},
                     {"avg.4", 40.65},
                     {"avg.5", 28.72},
                     {"avg.6", 1.36},
                     {"avg.7", 42.77},
                     {"avg.mean", 28.53},
                     {"bwt.2", 41.31},
                     {"bwt.3", 52.47},
                     {"bwt.4", 32.76},
                     {"bwt.5", 33.81},
                     {"bwt.6", 41.41},
                     {"bwt.7", 30.80},
                     {"bwt.8", 26.12},
                     {"bwt.mean", 36.95},
                     {"mean_acc.2", 43.13},
                     {"mean_acc.3", 34.08},
                     {"mean_acc.4", 41.71},
                     {"mean_acc.5", 37.71},
                     {"mean_acc.6", 25.59},
                     {"mean_acc.7", 34.34},
                     {"mean_acc.8", 37.48},
                     {"mean_acc.mean", 36.29},
                 }});
  out.push_back({"finetune-ref",
                 R"csv(stage,ScienceQA,TextVQA,ImageNet,GQA,VizWiz,REC,VQAV2,OCRVQA
1,82.45,,,,,,,
2,38.15,50.14,,,,,,
3,0.96,0.58,96.03,,,,,
4,13.91,15.78,5.67,55.65,,,,
5,8.46,25.17,4.60,38.12,51.42,,,
6,0.00,0.00,0.00,0.27,0.00,34.00,,
7,9.10,27.58,6.62,43.92,19.10,0.03,59.17,
8,26.00,25.38,28.51,33.07,26.52,0.10,40.00,52.92
)csv",
                 {
                     {"last.1", 26.00},
                     {"last.2", 25.38},
                     {"last.3", 28.51},
                     {"last.4", 33.07},
                     {"last.5", 26.52},
                     {"last.6", 0.10},
                     {"last.7", 40.00},
                     {"last.8", 52.92},
                     {"last.mean", 29.06},
                     {"avg.1", 13.79},
                     {"avg.2", 15.74},
                     {"avg.3", 9.08},
                     {"avg.4", 28.84},
                     {"avg.5", 15.20},
                     {"avg.6", 0.06},
                     {"avg.7", 40.00},
                     {"avg.mean", 17.53},
                     {"bwt.2", 44.30},
                     {"bwt.3", 65.53},
                     {"bwt.4", 64.42},
                     {"bwt.5", 51.98},
                     {"bwt.6", 67.08},
                     {"mean_acc.2", 44.14},
                     {"mean_acc.3", 32.52},
                     {"mean_acc.4", 22.75},
                     {"mean_acc.5", 25.55},
                     {"mean_acc.6", 5.71},
                     {"mean_acc.7", 23.64},
                     {"mean_acc.8", 29.06},
                     {"mean_acc.mean", 26.19},
                 }});
  return out;
}

const MetricSeries* series(const MetricReport& r, const std::string& key) {
  if (key == "last") return &r.last;
  if (key == "avg") return r.avg ? &*r.avg : nullptr;
  if (key == "bwt") return r.bwt ? &*r.bwt : nullptr;
  if (key == "mean_acc") return r.mean_acc ? &*r.mean_acc : nullptr;
  throw LookupError("unknown metric '" + key + "'");
}

}  // namespace

const std::vector<MetricFixture>& metric_fixtures() {
  static const std::vector<MetricFixture> fixtures = build();
  return fixtures;
}

const MetricFixture* find_fixture(const std::string& name) {
  for (const auto& f : metric_fixtures()) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

double report_value(const MetricReport& report, const std::string& metric) {
  const auto dot = metric.find('.');
  if (dot == std::string::npos) throw LookupError("metric key '" + metric + "' lacks an index");
  const MetricSeries* s = series(report, metric.substr(0, dot));
  if (s == nullptr) throw LookupError("report has no " + metric.substr(0, dot) + " series");
  const std::string index = metric.substr(dot + 1);
  if (index == "mean") return s->mean;
  // Series of stage metrics start at stage 2.
  const int first = metric.starts_with("bwt") || metric.starts_with("mean_acc") ? 2 : 1;
  const int i = std::stoi(index) - first;
  if (i < 0 || i >= static_cast<int>(s->values.size())) throw LookupError("metric '" + metric + "' out of range");
  return s->values[static_cast<size_t>(i)];
}

std::vector<FixtureDiff> check_fixture(const MetricFixture& fixture, const MetricReport& report, double tolerance) {
  std::vector<FixtureDiff> diffs;
  for (const auto& e : fixture.expected) {
    const double actual = report_value(report, e.metric);
    if (!(std::abs(actual - e.expected) <= tolerance + 1e-9)) diffs.push_back({e.metric, e.expected, actual});
  }
  return diffs;
}

}  // namespace modalprompt
