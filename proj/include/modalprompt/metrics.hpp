// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Continual-learning metrics over a lower-triangular accuracy matrix
// A[t][i] (accuracy on task i after stage t, 1-based, in [0, 100]).
//
//   Last_i = A[T][i]
//   Avg_i  = mean_{t = i+1..T} A[t][i]         (i < T; the diagonal is excluded)
//   B_t    = mean_{i < t} (A[i][i] - A[t][i])  (t >= 2)
//   M_t    = mean_{i <= t} A[t][i]             (t >= 2)

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace modalprompt {

class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(int tasks, std::vector<std::string> task_names = {});

  int tasks() const { return tasks_; }
  const std::vector<std::string>& task_names() const { return names_; }

  /// 1-based; requires i <= t.
  void set(int t, int i, double value);
  double at(int t, int i) const;
  bool has(int t, int i) const;
  /// Every entry with i <= t is filled.
  bool complete() const;
  /// Rows 1..t are filled.
  bool complete_through(int t) const;

  std::string to_csv() const;
  /// Lower-triangular CSV with a header of task names; ParseError names the
  /// offending row and column.
  static AccuracyMatrix from_csv(const std::string& text);
  void save_csv(const std::filesystem::path& path) const;
  static AccuracyMatrix load_csv(const std::filesystem::path& path);

  static AccuracyMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                  std::vector<std::string> task_names = {});

  bool operator==(const AccuracyMatrix& other) const = default;

 private:
  int tasks_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<std::optional<double>>> values_;
};

struct MetricSeries {
  std::vector<double> values;
  double mean = 0.0;
};

struct MetricReport {
  int tasks = 0;
  MetricSeries last;                 // i = 1..T
  std::optional<MetricSeries> avg;   // i = 1..T-1
  std::optional<MetricSeries> bwt;   // t = 2..T
  std::optional<MetricSeries> mean_acc;  // t = 2..T

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  /// Fixed-width human table.
  std::string to_table() const;
};

MetricSeries metric_last(const AccuracyMatrix& a);
MetricSeries metric_avg(const AccuracyMatrix& a);
MetricSeries metric_bwt(const AccuracyMatrix& a);
MetricSeries metric_mean_acc(const AccuracyMatrix& a);

/// All metrics; the stage metrics are absent when T = 1.
MetricReport compute_report(const AccuracyMatrix& a);

struct AggregateReport {
  MetricReport mean;
  MetricReport stddev;  // sample standard deviation (0 for one seed)
  int seeds = 0;

  nlohmann::json to_json() const;
};

/// Element-wise mean and sample std; InputError on inconsistent shapes.
AggregateReport aggregate(const std::vector<MetricReport>& reports);

}  // namespace modalprompt
