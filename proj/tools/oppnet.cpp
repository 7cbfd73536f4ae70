/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <iostream>

#include "oppnet/harness.hpp"

int main(int argc, char** argv) { return oppnet::harness::cli_main(argc, argv, std::cout, std::cerr); }
