// Copyright 2026 The lptm-kit Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Entry point of the `lptm` command-line tool, callable in-process.
//
// Exit codes: 0 success, 1 configuration error, 2 data error,
// 3 checkpoint error (a malformed file or a failed checksum).

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lptm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitCheckpoint = 3;

/// `args` excludes the program name. Log records go to `out`, errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lptm::cli
