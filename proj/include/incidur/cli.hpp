#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
// validation error, 3 internal error.

#include <iosfwd>
#include <string>
#include <vector>

#include "incidur/pipeline.hpp"
#include "incidur/report.hpp"

namespace incidur {

inline constexpr const char* kModelEnvVar = "INCIDUR_MODEL";

// Applies a key-value run config on top of `config`. Unknown keys and bad
// values throw InvalidArgument.
void apply_run_config(const KeyValues& kv, CompareConfig& config);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace incidur
