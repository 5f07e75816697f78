// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return modalprompt::run_cli(argc, argv, std::cout, std::cerr); }
