// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>

namespace modalprompt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable that overrides the default output root ("runs").
inline constexpr const char* kOutputRootEnv = "MODALPROMPT_OUTPUT_ROOT";

std::filesystem::path default_output_root();

/// Entry point of the `modalprompt` tool. Commands: gen-suite, pretrain,
/// train, eval, metrics, oracle, grid, bench, plot.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace modalprompt
