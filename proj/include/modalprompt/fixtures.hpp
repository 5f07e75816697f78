// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Published eight-stage accuracy matrices and their summary metrics, used as
// regression fixtures for the metric code.

#pragma once

#include "modalprompt/metrics.hpp"

#include <string>
#include <vector>

namespace modalprompt {

struct FixtureValue {
  std::string metric;  // "last.3", "avg.mean", "bwt.2", "mean_acc.mean", ...
  double expected = 0.0;
};

struct MetricFixture {
  std::string name;
  std::string csv;
  std::vector<FixtureValue> expected;
};

struct FixtureDiff {
  std::string metric;
  double expected = 0.0;
  double actual = 0.0;
};

inline constexpr double kFixtureTolerance = 0.01;

const std::vector<MetricFixture>& metric_fixtures();
/// nullptr when no fixture carries `name`.
const MetricFixture* find_fixture(const std::string& name);

/// Value of a metric key in a report; LookupError on an unknown key.
double report_value(const MetricReport& report, const std::string& metric);

/// Entries deviating by more than the tolerance.
std::vector<FixtureDiff> check_fixture(const MetricFixture& fixture, const MetricReport& report,
                                       double tolerance = kFixtureTolerance);

}  // namespace modalprompt
