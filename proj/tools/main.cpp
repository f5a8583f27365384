// Copyright 2026 The stackdedup Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return stackdedup::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cin,
                                  std::cout, std::cerr);
}
