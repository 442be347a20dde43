#pragma once

#include <string>
#include <vector>

#include "panoalign/graphopt.hpp"
#include "panoalign/io.hpp"

namespace panoalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumeric = 2;

/// Parses argv, runs the subcommand and returns the process exit code.
/// Diagnostics go to stderr, summaries to stdout.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

/// Merged optimizer inputs described by a manifest. Missing normals fall
/// back to depth-derived normals and a missing intensity to a flat image;
/// both are reported through `warnings`.
OptInputs load_inputs(const io::Manifest& m, std::vector<std::string>* warnings = nullptr);

}  // namespace panoalign::cli
