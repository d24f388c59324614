// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "driftcal/cli.hpp"

int main(int argc, char** argv) { return driftcal::cli::run(argc, argv, std::cout, std::cerr); }
