// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/errors.hpp"
#include "modalprompt/selection.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace modalprompt;

namespace {

GuidanceVector random_unit(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowVector v(d);
  for (int i = 0; i < d; ++i) v(i) = n(rng);
  return GuidanceVector::normalize(v);
}

// Exhaustive oracle: the subset of `pool` of size `size` with the largest
// summed score that contains every id of `forced`.
std::vector<int> best_subset(const std::map<int, double>& combined, const std::vector<int>& pool, int size,
                             const std::vector<int>& forced) {
  std::vector<int> best;
  double best_sum = -1e300;
  const int n = static_cast<int>(pool.size());
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != size) continue;
    std::vector<int> chosen;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        chosen.push_back(pool[static_cast<size_t>(i)]);
        sum += combined.at(pool[static_cast<size_t>(i)]);
      }
    }
    bool ok = true;
    for (int f : forced) ok = ok && std::find(chosen.begin(), chosen.end(), f) != chosen.end();
    if (ok && sum > best_sum) {
      best_sum = sum;
      best = chosen;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("top-k selection matches an exhaustive subset search") {
  std::mt19937_64 rng(2024);
  const int d = 12;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = 1 + static_cast<int>(rng() % 8);
    const int k = 1 + static_cast<int>(rng() % 4);
    std::vector<GuidanceVector> prototypes;
    for (int t = 0; t < T; ++t) prototypes.push_back(random_unit(d, rng));
    const auto x_v = random_unit(d, rng);
    const auto x_t = random_unit(d, rng);
    const ScoreMap scores = score_all(prototypes, x_v, x_t);
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto weights = trial % 3 == 0 ? GuidanceWeights{} : GuidanceWeights::interpolated(lambda);

    std::map<int, double> combined;
    std::vector<int> pool;
    for (int t = 1; t <= T; ++t) {
      const auto& s = scores.at(t);
      CHECK(s.alpha == doctest::Approx(prototypes[static_cast<size_t>(t - 1)].values().dot(x_v.values())));
      CHECK(s.beta == doctest::Approx(prototypes[static_cast<size_t>(t - 1)].values().dot(x_t.values())));
      combined[t] = s.combined(weights);
      pool.push_back(t);
    }
    const auto eval = select_eval(scores, k, weights);
    CHECK(eval.chosen_task_ids == best_subset(combined, pool, std::min(k, T), {}));
    CHECK(eval.mode == SelectionMode::Eval);

    const int current = 1 + static_cast<int>(rng() % static_cast<unsigned>(T));
    std::vector<int> seen(pool.begin(), pool.begin() + current);
    const auto train = select_train(scores, current, k, weights);
    CHECK(train.chosen_task_ids == best_subset(combined, seen, std::min(k, current), {current}));
    CHECK(train.mode == SelectionMode::Train);
  }
}

TEST_CASE("selection rejects bad input") {
  std::mt19937_64 rng(1);
  const std::vector<GuidanceVector> prototypes = {random_unit(4, rng), random_unit(4, rng)};
  const ScoreMap scores = score_all(prototypes, random_unit(4, rng), random_unit(4, rng));
  CHECK_THROWS_AS(select_eval(scores, 0), ConfigError);
  CHECK_THROWS_AS(select_eval({}, 2), InputError);
  CHECK_THROWS_AS(select_train(scores, 3, 2), InputError);
  CHECK_THROWS_AS(select_train(scores, 0, 2), InputError);
  ScoreMap gap = {{1, scores.at(1)}, {3, scores.at(2)}};
  CHECK_THROWS_AS(select_eval(gap, 1), InputError);
  CHECK(select_all(3).chosen_task_ids == std::vector<int>{1, 2, 3});
}

TEST_CASE("ties go to the lower task id") {
  RowVector u(2);
  u << 1.0, 0.0;
  const auto p = GuidanceVector::normalize(u);
  const ScoreMap scores = score_all({p, p, p}, p, p);
  CHECK(select_eval(scores, 2).chosen_task_ids == std::vector<int>{1, 2});
  CHECK(select_train(scores, 3, 2).chosen_task_ids == std::vector<int>{1, 3});
}

TEST_CASE("selection traces round-trip") {
  std::vector<SelectionTrace> traces = {{4, 2, {1, 2}, {{1, 0.5}, {2, 1.25}}}, {5, 1, {1}, {{1, -0.25}}}};
  const auto path = std::filesystem::temp_directory_path() / "mp-traces-test.jsonl";
  write_traces(traces, path);
  const auto back = read_traces(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].sample_id == 4);
  CHECK(back[0].chosen_ids == std::vector<int>{1, 2});
  CHECK(back[0].scores.at(2) == doctest::Approx(1.25));
  CHECK(back[1].task_id_true == 1);
  std::filesystem::remove(path);
}
