#include "h2mmp/benchmark_runner.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "h2mmp/errors.hpp"
#include "h2mmp/metrics.hpp"

namespace h2mmp {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string mode_name(RunConfig::Mode mode) {
  switch (mode) {
    case RunConfig::Mode::mmp:
      return "mmp";
    case RunConfig::Mode::formatted:
      return "formatted";
    case RunConfig::Mode::both:
      return "both";
  }
  return "?";
}

std::string kernel_text(const Kernel& k) {
  std::ostringstream out;
  out << (k.kind == KernelKind::laplace ? "laplace" : "helmholtz");
  if (k.kind == KernelKind::helmholtz) out << " wavenumber=" << format_double(k.wavenumber);
  if (k.diagonal_value) out << " diagonal=" << format_double(*k.diagonal_value);
  return out.str();
}

void validate(const RunConfig& config) {
  if (config.leafsize < 1) throw ConfigError("leafsize must be >= 1");
  if (!(config.eta > 0)) throw ConfigError("eta must be positive");
  if (!(config.eps_h2 > 0 && config.eps_h2 < 1)) throw ConfigError("eps_h2 must be in (0,1)");
  if (config.eps_trunc.empty()) throw ConfigError("eps_trunc sweep must not be empty");
  for (double eps : config.eps_trunc)
    if (!(eps > 0 && eps < 1)) throw ConfigError("every eps_trunc must be in (0,1)");
  if (config.kernel_b && config.kernel_b->kind != config.kernel.kind)
    throw ConfigError("A and B kernels must be of the same scalar kind");
}

std::string block_statistics(const BlockTree& structure) {
  std::ostringstream out;
  out << "blocks depth=" << structure.depth() << " c_sp=" << structure.c_sp()
      << " admissible/full per level=";
  for (int l = 0; l <= structure.depth(); ++l) {
    int admissible = 0;
    int full = 0;
    for (const BlockEntry& e : structure.level_blocks(l)) {
      if (e.kind == BlockKind::admissible) ++admissible;
      if (e.kind == BlockKind::inadmissible_leaf) ++full;
    }
    out << (l ? " " : "") << l << ':' << admissible << '/' << full;
  }
  return out.str();
}

template <class Scalar>
std::vector<RunRow> run_rows(const RunConfig& config, std::string& stats) {
  const PointSet pts = generate_geometry(config.geometry);
  auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(pts, config.leafsize));
  auto structure = build_block_tree(tree, tree, config.eta);
  stats = block_statistics(*structure);

  const DenseMatrix<Scalar> dense_a = assemble_dense<Scalar>(pts, config.kernel);
  const H2Matrix<Scalar> a = build_h2<Scalar>(dense_a, structure, config.eps_h2);
  H2Matrix<Scalar> b_storage;
  const H2Matrix<Scalar>* b = &a;
  if (config.kernel_b) {
    const DenseMatrix<Scalar> dense_b = assemble_dense<Scalar>(pts, *config.kernel_b);
    b_storage = build_h2<Scalar>(dense_b, structure, config.eps_h2);
    b = &b_storage;
  }

  const bool want_mmp = config.mode != RunConfig::Mode::formatted;
  const bool want_formatted = config.mode != RunConfig::Mode::mmp;

  std::optional<MmpResult<Scalar>> formatted;
  std::optional<double> formatted_err;
  if (want_formatted) {
    formatted = formatted_mmp(a, *b);
    formatted_err = relative_error(a, *b, formatted->product, config.geometry.seed).value;
  }

  std::vector<RunRow> rows;
  for (double eps : config.eps_trunc) {
    if (want_mmp) {
      MmpResult<Scalar> result = mmp(a, *b, eps);
      RunRow row;
      row.n = pts.size();
      row.eps_trunc = eps;
      row.mode = "mmp";
      row.eps_rel = relative_error(a, *b, result.product, config.geometry.seed).value;
      row.flops = result.report.flops;
      row.memory_scalars = memory_footprint(result.product);
      row.c_sp = structure->c_sp();
      row.max_rank = result.report.max_rank();
      row.depth = tree->depth;
      row.wall_ms = result.report.wall_seconds * 1e3;
      rows.push_back(row);
    }
    if (want_formatted) {
      RunRow row;
      row.n = pts.size();
      row.eps_trunc = eps;
      row.mode = "formatted";
      row.eps_rel = *formatted_err;
      row.flops = formatted->report.flops;
      row.memory_scalars = memory_footprint(formatted->product);
      row.c_sp = structure->c_sp();
      row.max_rank = formatted->report.max_rank();
      row.depth = tree->depth;
      row.wall_ms = formatted->report.wall_seconds * 1e3;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string geometry_text(const GeometrySpec& g) {
  std::ostringstream out;
  out << family_name(g.family) << " seed=" << g.seed;
  switch (g.family) {
    case Family::random_cloud:
      out << " n=" << g.n;
      break;
    case Family::bus:
      out << " m=" << g.bus_count << " samples_per_meter=" << g.samples_per_meter;
      break;
    case Family::slab:
      out << " width=" << g.slab_width << " thickness=" << g.slab_thickness;
      break;
    case Family::cube_array:
      out << " edge=" << g.array_edge << " cube_points=" << g.cube_points;
      break;
  }
  return out.str();
}

std::string render_csv(const RunConfig& config, const std::vector<RunRow>& rows,
                       const std::string& stats) {
  std::ostringstream out;
  out << "# h2mmp-csv/1\n";
  out << "# " << describe(config) << "\n";
  out << "# " << stats << "\n";
  out << "N,leafsize,eta,eps_h2,eps_trunc,mode,eps_rel,flops,memory_scalars,c_sp,max_rank,"
         "depth,wall_ms\n";
  for (const RunRow& r : rows) {
    out << r.n << ',' << config.leafsize << ',' << format_double(config.eta) << ','
        << format_double(config.eps_h2) << ',' << format_double(r.eps_trunc) << ',' << r.mode
        << ',' << format_double(r.eps_rel) << ',' << r.flops << ',' << r.memory_scalars << ','
        << r.c_sp << ',' << r.max_rank << ',' << r.depth << ',' << format_double(r.wall_ms)
        << '\n';
  }
  return out.str();
}

std::string render_json(const RunConfig& config, const std::vector<RunRow>& rows,
                        const std::string& stats) {
  nlohmann::json doc;
  doc["schema"] = "h2mmp-json/1";
  doc["config"] = describe(config);
  doc["blocks"] = stats;
  doc["rows"] = nlohmann::json::array();
  for (const RunRow& r : rows) {
    doc["rows"].push_back({{"N", r.n},
                           {"leafsize", config.leafsize},
                           {"eta", config.eta},
                           {"eps_h2", config.eps_h2},
                           {"eps_trunc", r.eps_trunc},
                           {"mode", r.mode},
                           {"eps_rel", r.eps_rel},
                           {"flops", r.flops},
                           {"memory_scalars", r.memory_scalars},
                           {"c_sp", r.c_sp},
                           {"max_rank", r.max_rank},
                           {"depth", r.depth},
                           {"wall_ms", r.wall_ms}});
  }
  return doc.dump(2) + "\n";
}

std::string resolve_output(const std::string& path) {
  if (path.empty()) return path;
  const char* dir = std::getenv("H2MMP_OUTPUT_DIR");
  if (dir && *dir && path.front() != '/') return std::string(dir) + "/" + path;
  return path;
}

}  // namespace

std::string describe(const RunConfig& config) {
  std::ostringstream out;
  out << "geometry=" << geometry_text(config.geometry) << " kernel=" << kernel_text(config.kernel);
  if (config.kernel_b) out << " kernel_b=" << kernel_text(*config.kernel_b);
  out << " leafsize=" << config.leafsize << " eta=" << format_double(config.eta)
      << " eps_h2=" << format_double(config.eps_h2) << " eps_trunc=";
  for (std::size_t i = 0; i < config.eps_trunc.size(); ++i)
    out << (i ? "," : "") << format_double(config.eps_trunc[i]);
  out << " mode=" << mode_name(config.mode);
  return out.str();
}

RunOutput run(const RunConfig& config) {
  validate(config);
  RunOutput out;
  std::string stats;
  if (config.kernel.kind == KernelKind::laplace)
    out.rows = run_rows<Real>(config, stats);
  else
    out.rows = run_rows<Complex>(config, stats);

  out.rendered = config.format == RunConfig::Format::csv
                     ? render_csv(config, out.rows, stats)
                     : render_json(config, out.rows, stats);
  const std::string path = resolve_output(config.output);
  if (!path.empty()) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ConfigError("cannot open output file " + path);
    file << out.rendered;
    if (!file) throw ConfigError("failed writing " + path);
  } else {
    std::cout << out.rendered;
  }
  return out;
}

int run_to_exit_code(const RunConfig& config) {
  try {
    run(config);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace h2mmp
