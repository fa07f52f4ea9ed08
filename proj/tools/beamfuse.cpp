// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "beamfuse/cli.hpp"

int main(int argc, char** argv) {
  return beamfuse::run_cli(argc, argv, std::cout, std::cerr);
}
