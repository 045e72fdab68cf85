#pragma once

#include <optional>
#include <string>
#include <vector>

#include "h2mmp/geometry.hpp"

namespace h2mmp {

/// One benchmark batch: build operands, run the product sweep, emit rows.
struct RunConfig {
  GeometrySpec geometry;
  Kernel kernel;
  std::optional<Kernel> kernel_b;  // assemble B from a second kernel (A x B); default B = A
  int leafsize = 30;
  double eta = 1.0;
  double eps_h2 = 1e-4;
  std::vector<double> eps_trunc{1e-2, 1e-4, 1e-6};

  enum class Mode { mmp, formatted, both };
  enum class Format { csv, json };
  Mode mode = Mode::both;
  Format format = Format::csv;
  std::string output;  // empty writes to stdout; H2MMP_OUTPUT_DIR prefixes relative paths
};

struct RunRow {
  int n = 0;
  double eps_trunc = 0.0;
  std::string mode;
  double eps_rel = 0.0;
  std::int64_t flops = 0;
  std::int64_t memory_scalars = 0;
  int c_sp = 0;
  Index max_rank = 0;
  int depth = 0;
  double wall_ms = 0.0;
};

struct RunOutput {
  std::vector<RunRow> rows;
  std::string rendered;  // the emitted CSV or JSON document
};

/// Execute a config: one row per (eps_trunc, mode). Writes the artifact file
/// when config.output is set and always returns the rendered document.
/// Throws ConfigError for invalid configs and InvariantError for numerical
/// invariant violations.
RunOutput run(const RunConfig& config);

/// CLI entry: run() with exceptions mapped to exit codes
/// (0 success, 2 invalid config, 3 invariant violation).
int run_to_exit_code(const RunConfig& config);

std::string describe(const RunConfig& config);

}  // namespace h2mmp
