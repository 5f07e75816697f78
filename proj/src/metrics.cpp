// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/metrics.hpp"

#include "modalprompt/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace modalprompt {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

MetricSeries series(std::vector<double> v) {
  MetricSeries s;
  s.mean = mean_of(v);
  s.values = std::move(v);
  return s;
}

void require_complete(const AccuracyMatrix& a) {
  if (a.tasks() < 1 || !a.complete()) throw InputError("accuracy matrix is incomplete");
}

void require_stages(const AccuracyMatrix& a, const char* metric) {
  require_complete(a);
  if (a.tasks() < 2) throw UndefinedMetricError(std::string(metric) + " is undefined for a single task");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

AccuracyMatrix::AccuracyMatrix(int tasks, std::vector<std::string> task_names)
    : tasks_(tasks), names_(std::move(task_names)) {
  if (tasks < 1) throw InputError("accuracy matrix needs at least one task");
  if (names_.empty()) {
    for (int i = 1; i <= tasks; ++i) names_.push_back("task" + std::to_string(i));
  }
  if (static_cast<int>(names_.size()) != tasks) throw InputError("task name count does not match task count");
  values_.resize(static_cast<size_t>(tasks));
  for (int t = 0; t < tasks; ++t) values_[static_cast<size_t>(t)].resize(static_cast<size_t>(t + 1));
}

void AccuracyMatrix::set(int t, int i, double value) {
  if (t < 1 || t > tasks_ || i < 1 || i > t) {
    throw InputError("entry (" + std::to_string(t) + ", " + std::to_string(i) + ") is outside the lower triangle");
  }
  if (!std::isfinite(value)) throw InputError("accuracy must be finite");
  values_[static_cast<size_t>(t - 1)][static_cast<size_t>(i - 1)] = value;
}

bool AccuracyMatrix::has(int t, int i) const {
  if (t < 1 || t > tasks_ || i < 1 || i > t) return false;
  return values_[static_cast<size_t>(t - 1)][static_cast<size_t>(i - 1)].has_value();
}

double AccuracyMatrix::at(int t, int i) const {
  if (!has(t, i)) {
    throw InputError("entry (" + std::to_string(t) + ", " + std::to_string(i) + ") is not defined");
  }
  return *values_[static_cast<size_t>(t - 1)][static_cast<size_t>(i - 1)];
}

bool AccuracyMatrix::complete_through(int t) const {
  for (int r = 1; r <= t; ++r) {
    for (int c = 1; c <= r; ++c) {
      if (!has(r, c)) return false;
    }
  }
  return true;
}

bool AccuracyMatrix::complete() const { return complete_through(tasks_); }

std::string AccuracyMatrix::to_csv() const {
  std::ostringstream os;
  os << "stage";
  for (const auto& n : names_) os << "," << n;
  os << "\n";
  for (int t = 1; t <= tasks_; ++t) {
    os << t;
    for (int i = 1; i <= tasks_; ++i) {
      os << ",";
      if (has(t, i)) os << format_number(at(t, i));
    }
    os << "\n";
  }
  return os.str();
}

AccuracyMatrix AccuracyMatrix::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty() && trim(line)[0] != '#') break;
  }
  header = split_csv(line);
  if (header.size() < 2) throw ParseError("row " + std::to_string(line_no) + ": header needs at least one task column");
  const int T = static_cast<int>(header.size()) - 1;
  AccuracyMatrix m(T, std::vector<std::string>(header.begin() + 1, header.end()));
  int stage = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    ++stage;
    if (stage > T) throw ParseError("row " + std::to_string(line_no) + ": more stages than task columns");
    const auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) > T + 1) {
      throw ParseError("row " + std::to_string(line_no) + ", column " + std::to_string(T + 2) + ": too many cells");
    }
    for (int i = 1; i <= T; ++i) {
      const std::string cell = i < static_cast<int>(cells.size()) ? cells[static_cast<size_t>(i)] : "";
      if (cell.empty() || cell == "-") {
        if (i <= stage) {
          throw ParseError("row " + std::to_string(line_no) + ", column " + std::to_string(i + 1) +
                           ": missing lower-triangular entry");
        }
        continue;
      }
      if (i > stage) {
        throw ParseError("row " + std::to_string(line_no) + ", column " + std::to_string(i + 1) +
                         ": entry above the diagonal");
      }
      size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size()) {
        throw ParseError("row " + std::to_string(line_no) + ", column " + std::to_string(i + 1) + ": '" + cell +
                         "' is not a number");
      }
      m.set(stage, i, v);
    }
  }
  if (stage != T) throw ParseError("expected " + std::to_string(T) + " stage rows, found " + std::to_string(stage));
  return m;
}

void AccuracyMatrix::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_csv();
}

AccuracyMatrix AccuracyMatrix::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

AccuracyMatrix AccuracyMatrix::from_rows(const std::vector<std::vector<double>>& rows,
                                         std::vector<std::string> task_names) {
  AccuracyMatrix m(static_cast<int>(rows.size()), std::move(task_names));
  for (size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != t + 1) throw InputError("row " + std::to_string(t + 1) + " must have " + std::to_string(t + 1) + " entries");
    for (size_t i = 0; i <= t; ++i) m.set(static_cast<int>(t) + 1, static_cast<int>(i) + 1, rows[t][i]);
  }
  return m;
}

MetricSeries metric_last(const AccuracyMatrix& a) {
  require_complete(a);
  std::vector<double> v;
  for (int i = 1; i <= a.tasks(); ++i) v.push_back(a.at(a.tasks(), i));
  return series(std::move(v));
}

MetricSeries metric_avg(const AccuracyMatrix& a) {
  require_stages(a, "Avg");
  const int T = a.tasks();
  std::vector<double> v;
  for (int i = 1; i < T; ++i) {
    double s = 0.0;
    for (int t = i + 1; t <= T; ++t) s += a.at(t, i);
    v.push_back(s / (T - i));
  }
  return series(std::move(v));
}

MetricSeries metric_bwt(const AccuracyMatrix& a) {
  require_stages(a, "BWT");
  std::vector<double> v;
  for (int t = 2; t <= a.tasks(); ++t) {
    double s = 0.0;
    for (int i = 1; i < t; ++i) s += a.at(i, i) - a.at(t, i);
    v.push_back(s / (t - 1));
  }
  return series(std::move(v));
}

MetricSeries metric_mean_acc(const AccuracyMatrix& a) {
  require_stages(a, "mean accuracy");
  std::vector<double> v;
  for (int t = 2; t <= a.tasks(); ++t) {
    double s = 0.0;
    for (int i = 1; i <= t; ++i) s += a.at(t, i);
    v.push_back(s / t);
  }
  return series(std::move(v));
}

MetricReport compute_report(const AccuracyMatrix& a) {
  MetricReport r;
  r.tasks = a.tasks();
  r.last = metric_last(a);
  if (a.tasks() >= 2) {
    r.avg = metric_avg(a);
    r.bwt = metric_bwt(a);
    r.mean_acc = metric_mean_acc(a);
  }
  return r;
}

namespace {

nlohmann::json series_json(const MetricSeries& s) { return {{"values", s.values}, {"mean", s.mean}}; }

MetricSeries series_from(const nlohmann::json& j) {
  return {j.at("values").get<std::vector<double>>(), j.at("mean").get<double>()};
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"tasks", tasks}, {"last", series_json(last)}};
  if (avg) j["avg"] = series_json(*avg);
  if (bwt) j["bwt"] = series_json(*bwt);
  if (mean_acc) j["mean_acc"] = series_json(*mean_acc);
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.tasks = j.at("tasks").get<int>();
  r.last = series_from(j.at("last"));
  if (j.contains("avg")) r.avg = series_from(j["avg"]);
  if (j.contains("bwt")) r.bwt = series_from(j["bwt"]);
  if (j.contains("mean_acc")) r.mean_acc = series_from(j["mean_acc"]);
  return r;
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  const auto row = [&](const char* name, const MetricSeries& s, int first_index) {
    os << std::left << std::setw(6) << name << std::right;
    for (int i = 1; i < first_index; ++i) os << std::setw(9) << "-";
    for (double v : s.values) os << std::setw(9) << v;
    for (int i = first_index + static_cast<int>(s.values.size()); i <= tasks; ++i) os << std::setw(9) << "-";
    os << "  | mean " << s.mean << "\n";
  };
  os << std::left << std::setw(6) << "" << std::right;
  for (int i = 1; i <= tasks; ++i) os << std::setw(9) << ("#" + std::to_string(i));
  os << "\n";
  row("Last", last, 1);
  if (avg) row("Avg", *avg, 1);
  if (bwt) row("B", *bwt, 2);
  if (mean_acc) row("M", *mean_acc, 2);
  return os.str();
}

namespace {

MetricSeries combine(const std::vector<const MetricSeries*>& parts, bool want_std) {
  const size_t n = parts.front()->values.size();
  for (const auto* p : parts) {
    if (p->values.size() != n) throw InputError("reports disagree on series length");
  }
  const auto stat = [&](auto get) {
    double m = 0.0;
    for (const auto* p : parts) m += get(*p);
    m /= static_cast<double>(parts.size());
    if (!want_std) return m;
    if (parts.size() < 2) return 0.0;
    double ss = 0.0;
    for (const auto* p : parts) ss += (get(*p) - m) * (get(*p) - m);
    return std::sqrt(ss / static_cast<double>(parts.size() - 1));
  };
  MetricSeries out;
  for (size_t i = 0; i < n; ++i) out.values.push_back(stat([i](const MetricSeries& s) { return s.values[i]; }));
  out.mean = stat([](const MetricSeries& s) { return s.mean; });
  return out;
}

}  // namespace

AggregateReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw InputError("nothing to aggregate");
  const int T = reports.front().tasks;
  for (const auto& r : reports) {
    if (r.tasks != T || r.avg.has_value() != reports.front().avg.has_value()) {
      throw InputError("reports have inconsistent shapes");
    }
  }
  AggregateReport out;
  out.seeds = static_cast<int>(reports.size());
  for (int k = 0; k < 2; ++k) {
    MetricReport& dst = k == 0 ? out.mean : out.stddev;
    dst.tasks = T;
    std::vector<const MetricSeries*> parts;
    for (const auto& r : reports) parts.push_back(&r.last);
    dst.last = combine(parts, k == 1);
    if (reports.front().avg) {
      const auto pick = [&](auto member) {
        std::vector<const MetricSeries*> ps;
        for (const auto& r : reports) ps.push_back(&*(r.*member));
        return combine(ps, k == 1);
      };
      dst.avg = pick(&MetricReport::avg);
      dst.bwt = pick(&MetricReport::bwt);
      dst.mean_acc = pick(&MetricReport::mean_acc);
    }
  }
  return out;
}

nlohmann::json AggregateReport::to_json() const {
  return {{"seeds", seeds}, {"mean", mean.to_json()}, {"std", stddev.to_json()}};
}

}  // namespace modalprompt
