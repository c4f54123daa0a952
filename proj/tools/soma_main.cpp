// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "soma/cli.hpp"

int main(int argc, char** argv) { return soma::run_cli(argc, argv, std::cout, std::cerr); }
