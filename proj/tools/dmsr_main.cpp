// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/cli.hpp"

int main(int argc, char** argv) { return dmsr::run_cli(argc, argv); }
