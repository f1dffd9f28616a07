#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "nqce/errors.hpp"

namespace nqce::cli {

// 0 ok, 2 config, 3 validation, 4 overlap/positivity, 5 solver/variance,
// 6 I/O, 1 anything else.
int exit_code(ErrorKind kind);

struct Invocation {
  std::string command;
  Json resolved;
};

/// Runs one subcommand; errors propagate as nqce::Error.
void run_command(const Invocation& inv);

Dataset load_dataset(const RunConfig& cfg);

}  // namespace nqce::cli
