#pragma once

#include "w2sg/common.hpp"
#include "w2sg/experiment.hpp"

#include <string>
#include <vector>

namespace w2sg {

// Exit codes are a stable contract:
//   0 success, 2 usage/config error, 3 backend/transport failure,
//   4 pipeline phase failure.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitTransport = 3;
constexpr int kExitPipeline = 4;

// Command-line entry point (parsing, dispatch, exit-code mapping).
int run_cli(int argc, char** argv);

// Cache root resolution: config value, else W2SG_CACHE_DIR, else
// <out_dir>/cache.
fs::path resolve_cache_dir(const ExperimentConfig& cfg);

} // namespace w2sg
