// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  return halfwalk::cli::run(argc, argv, std::cout, std::cerr);
}
