// Benchmark and utility CLI for the h2mmp library.
//
//   h2mmp run   --geometry random --n 512 --kernel laplace --leafsize 30
//               --eta 1.0 --eps-h2 1e-4 --eps-trunc 1e-2,1e-4,1e-6
//               --mode both --format csv --output runs.csv
//   h2mmp save  --geometry cube --edge 2 --kernel helmholtz --wavenumber 6.28
//               --output matrix.h2json
//   h2mmp info  --input matrix.h2json

#include <CLI11.hpp>
#include <iostream>
#include <sstream>
#include <string>

#include "h2mmp/benchmark_runner.hpp"
#include "h2mmp/errors.hpp"
#include "h2mmp/h2_io.hpp"
#include "h2mmp/metrics.hpp"

namespace {

using namespace h2mmp;

struct GeometryArgs {
  std::string family = "random";
  std::uint64_t seed = 0;
  int n = 512;
  int m = 4;
  int samples_per_meter = 1;
  int width = 12;
  int thickness = 2;
  int edge = 2;
  int cube_points = 3;

  GeometrySpec to_spec() const {
    GeometrySpec spec;
    spec.family = family_from_name(family);
    spec.seed = seed;
    spec.n = n;
    spec.bus_count = m;
    spec.samples_per_meter = samples_per_meter;
    spec.slab_width = width;
    spec.slab_thickness = thickness;
    spec.array_edge = edge;
    spec.cube_points = cube_points;
    return spec;
  }
};

void add_geometry_options(CLI::App* cmd, GeometryArgs& args) {
  cmd->add_option("--geometry", args.family,
                  "geometry family: random|random_cloud, bus, slab, cube|cube_array")
      ->required();
  cmd->add_option("--seed", args.seed, "generator seed (also seeds the error-metric vector)");
  cmd->add_option("--n", args.n, "random_cloud: point count");
  cmd->add_option("--m", args.m, "bus: conductors per layer");
  cmd->add_option("--samples-per-meter", args.samples_per_meter, "bus: surface sampling density");
  cmd->add_option("--width", args.width, "slab: lattice points per side");
  cmd->add_option("--thickness", args.thickness, "slab: lattice point layers");
  cmd->add_option("--edge", args.edge, "cube_array: cubes per axis");
  cmd->add_option("--cube-points", args.cube_points, "cube_array: lattice points per cube edge");
}

struct KernelArgs {
  std::string kind = "laplace";
  double wavenumber = 0.0;
  double diagonal = 0.0;
  bool diagonal_set = false;

  Kernel to_kernel() const {
    Kernel k;
    if (kind == "laplace")
      k.kind = KernelKind::laplace;
    else if (kind == "helmholtz")
      k.kind = KernelKind::helmholtz;
    else
      throw ConfigError("unknown kernel: " + kind);
    k.wavenumber = wavenumber;
    if (diagonal_set) k.diagonal_value = diagonal;
    return k;
  }
};

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const double value = std::stod(item, &pos);
    if (pos != item.size()) throw ConfigError("bad eps-trunc entry: " + item);
    out.push_back(value);
  }
  if (out.empty()) throw ConfigError("empty --eps-trunc list");
  return out;
}

int cmd_save(const GeometryArgs& geometry, const KernelArgs& kernel, int leafsize, double eta,
             double eps_h2, const std::string& output) {
  const PointSet pts = generate_geometry(geometry.to_spec());
  auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(pts, leafsize));
  auto structure = build_block_tree(tree, tree, eta);
  const Kernel k = kernel.to_kernel();
  if (k.kind == KernelKind::laplace) {
    save_h2(build_h2<Real>(assemble_dense<Real>(pts, k), structure, eps_h2), output);
  } else {
    save_h2(build_h2<Complex>(assemble_dense<Complex>(pts, k), structure, eps_h2), output);
  }
  std::cout << "saved " << pts.size() << " unknowns to " << output << "\n";
  return 0;
}

template <class Scalar>
void print_info(const H2Matrix<Scalar>& h) {
  std::cout << "n: " << h.size() << "\n"
            << "scalar: " << (is_complex_v<Scalar> ? "complex" : "real") << "\n"
            << "depth: " << h.tree->depth << "\n"
            << "eta: " << h.structure->eta() << "\n"
            << "c_sp: " << h.structure->c_sp() << "\n"
            << "admissible blocks: " << h.coupling.size() << "\n"
            << "full blocks: " << h.full.size() << "\n"
            << "memory_scalars: " << memory_footprint(h) << "\n";
}

int cmd_info(const std::string& input) {
  if (h2_file_scalar_kind(input) == ScalarKind::real)
    print_info(load_h2<Real>(input));
  else
    print_info(load_h2<Complex>(input));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"H^2-matrix product benchmark harness"};
  app.require_subcommand(1);

  GeometryArgs geometry;
  KernelArgs kernel, kernel_b;
  bool has_kernel_b = false;
  int leafsize = 30;
  double eta = 1.0;
  double eps_h2 = 1e-4;
  std::string eps_trunc = "1e-2,1e-4,1e-6";
  std::string mode = "both";
  std::string format = "csv";
  std::string output;
  std::string input;

  CLI::App* run_cmd = app.add_subcommand("run", "build operands and run the product sweep");
  add_geometry_options(run_cmd, geometry);
  run_cmd->add_option("--kernel", kernel.kind, "laplace or helmholtz");
  run_cmd->add_option("--wavenumber", kernel.wavenumber, "helmholtz wavenumber (rad/m)");
  run_cmd->add_option("--diagonal", kernel.diagonal, "self-interaction value override")
      ->each([&](const std::string&) { kernel.diagonal_set = true; });
  run_cmd->add_option("--kernel-b", kernel_b.kind, "assemble B from a second kernel")
      ->each([&](const std::string&) { has_kernel_b = true; });
  run_cmd->add_option("--wavenumber-b", kernel_b.wavenumber, "wavenumber for B");
  run_cmd->add_option("--diagonal-b", kernel_b.diagonal, "diagonal override for B")
      ->each([&](const std::string&) { kernel_b.diagonal_set = true; });
  run_cmd->add_option("--leafsize", leafsize, "max unknowns per leaf cluster");
  run_cmd->add_option("--eta", eta, "admissibility parameter");
  run_cmd->add_option("--eps-h2", eps_h2, "construction accuracy");
  run_cmd->add_option("--eps-trunc", eps_trunc, "comma-separated truncation sweep");
  run_cmd->add_option("--mode", mode, "mmp, formatted, or both");
  run_cmd->add_option("--format", format, "csv or json");
  run_cmd->add_option("--output", output, "output file (default stdout)");

  CLI::App* save_cmd = app.add_subcommand("save", "build one H^2 matrix and save it as h2json");
  add_geometry_options(save_cmd, geometry);
  save_cmd->add_option("--kernel", kernel.kind, "laplace or helmholtz");
  save_cmd->add_option("--wavenumber", kernel.wavenumber, "helmholtz wavenumber (rad/m)");
  save_cmd->add_option("--diagonal", kernel.diagonal, "self-interaction value override")
      ->each([&](const std::string&) { kernel.diagonal_set = true; });
  save_cmd->add_option("--leafsize", leafsize, "max unknowns per leaf cluster");
  save_cmd->add_option("--eta", eta, "admissibility parameter");
  save_cmd->add_option("--eps-h2", eps_h2, "construction accuracy");
  save_cmd->add_option("--output", output, "h2json output path")->required();

  CLI::App* info_cmd = app.add_subcommand("info", "load an h2json file and print a summary");
  info_cmd->add_option("--input", input, "h2json input path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_cmd->parsed()) {
      RunConfig config;
      config.geometry = geometry.to_spec();
      config.kernel = kernel.to_kernel();
      if (has_kernel_b) config.kernel_b = kernel_b.to_kernel();
      config.leafsize = leafsize;
      config.eta = eta;
      config.eps_h2 = eps_h2;
      config.eps_trunc = parse_eps_list(eps_trunc);
      if (mode == "mmp")
        config.mode = RunConfig::Mode::mmp;
      else if (mode == "formatted")
        config.mode = RunConfig::Mode::formatted;
      else if (mode == "both")
        config.mode = RunConfig::Mode::both;
      else
        throw ConfigError("unknown mode: " + mode);
      if (format == "csv")
        config.format = RunConfig::Format::csv;
      else if (format == "json")
        config.format = RunConfig::Format::json;
      else
        throw ConfigError("unknown format: " + format);
      config.output = output;
      return run_to_exit_code(config);
    }
    if (save_cmd->parsed()) return cmd_save(geometry, kernel, leafsize, eta, eps_h2, output);
    if (info_cmd->parsed()) return cmd_info(input);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
