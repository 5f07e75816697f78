// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference checks of every analytic gradient the trainers use.

#include "gradient_check.hpp"

#include <doctest.h>

using namespace modalprompt;
using namespace modalprompt::gradcheck;

namespace {

void check_all(const std::vector<ParamError>& errors) {
  REQUIRE(!errors.empty());
  for (const auto& e : errors) {
    CAPTURE(e.name);
    CHECK(e.error < kTolerance);
  }
}

}  // namespace

TEST_CASE("language-modelling loss gradient with respect to prompt rows") { check_all(lmm_prompt_errors(3)); }

TEST_CASE("language-modelling loss gradient with respect to every backbone parameter") {
  check_all(lmm_backbone_errors(4));
}

TEST_CASE("prototype loss gradient with respect to prompts and head parameters") { check_all(proto_errors(5)); }

TEST_CASE("prototype loss takes its extreme values") {
  RowVector u(3);
  u << 1.0, 0.0, 0.0;
  RowVector w(3);
  w << 0.0, 1.0, 0.0;
  const auto p = GuidanceVector::normalize(u);
  const auto orth = GuidanceVector::normalize(w);
  const auto opposite = GuidanceVector::normalize(-u);
  CHECK(proto_loss(p, p, p) == doctest::Approx(0.0));
  CHECK(proto_loss(p, orth, orth) == doctest::Approx(2.0));
  CHECK(proto_loss(p, opposite, opposite) == doctest::Approx(4.0));
  CHECK(proto_loss(p, p, opposite) == doctest::Approx(2.0));

  const ag::Var pv = ag::Var::constant(u);
  CHECK(proto_loss(pv, ag::Var::constant(-u), ag::Var::constant(-u)).scalar() == doctest::Approx(4.0));
  CHECK(proto_loss(pv, ag::Var::constant(-u), ag::Var::constant(-u), {1.0, 0.0}).scalar() == doctest::Approx(2.0));
}
