// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 missing file,
// 4 invalid configuration. Errors are a single JSON line on stderr.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dmsr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMissingFile = 3;
inline constexpr int kExitInvalidConfig = 4;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace dmsr
