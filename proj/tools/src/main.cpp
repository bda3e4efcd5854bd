// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "dietweight_cli/cli.hpp"

int main(int argc, char** argv) { return dietweight::cli::run(argc, argv, std::cout, std::cerr); }
