#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "h2mmp/benchmark_runner.hpp"
#include "h2mmp/errors.hpp"
#include "test_support.hpp"

using namespace h2mmp;
using namespace h2mmp::testing;

namespace {

RunConfig small_config() {
  RunConfig config;
  config.geometry = cloud_spec(128, 7);
  config.leafsize = 16;
  config.eta = 1.5;  // keeps admissible blocks present even at this size
  config.eps_trunc = {1e-2, 1e-4, 1e-6};
  config.mode = RunConfig::Mode::both;
  // keep the unit-test log clean; empty output would print to stdout
  config.output = (std::filesystem::temp_directory_path() / "h2mmp_runner_unit.csv").string();
  return config;
}

// the wall_ms column is timing noise; everything else must be reproducible
std::string strip_wall_ms(const std::string& csv) {
  std::ostringstream out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') {
      const auto cut = line.rfind(',');
      line = line.substr(0, cut);
    }
    out << line << '\n';
  }
  return out.str();
}

}  // namespace

TEST_CASE("a both-mode sweep emits one row per eps and mode") {
  const RunOutput out = run(small_config());
  CHECK(out.rows.size() == 6);
  int mmp_rows = 0;
  for (const RunRow& r : out.rows) {
    CHECK(r.n == 128);
    CHECK(r.eps_rel >= 0.0);
    CHECK(r.flops > 0);
    if (r.mode == "mmp") ++mmp_rows;
  }
  CHECK(mmp_rows == 3);

  // header carries the schema tag and echoes the parameters
  CHECK(out.rendered.rfind("# h2mmp-csv/1\n", 0) == 0);
  CHECK(out.rendered.find("leafsize=16") != std::string::npos);
  CHECK(out.rendered.find("geometry=random_cloud seed=7 n=128") != std::string::npos);

  CHECK(out.rendered.find("# blocks depth=") != std::string::npos);

  // 3 comment lines + 1 header + 6 rows
  int lines = 0;
  for (char ch : out.rendered)
    if (ch == '\n') ++lines;
  CHECK(lines == 10);
}

TEST_CASE("identical configs render identical output apart from wall time") {
  const RunOutput a = run(small_config());
  const RunOutput b = run(small_config());
  CHECK(strip_wall_ms(a.rendered) == strip_wall_ms(b.rendered));
}

TEST_CASE("the proposed sweep reproduces the monotone error column") {
  RunConfig config = small_config();
  config.geometry = cloud_spec(384, 11);
  config.leafsize = 30;
  config.mode = RunConfig::Mode::mmp;
  const RunOutput out = run(config);
  REQUIRE(out.rows.size() == 3);
  CHECK(out.rows[0].eps_rel * 1.1 >= out.rows[1].eps_rel);
  CHECK(out.rows[1].eps_rel * 1.1 >= out.rows[2].eps_rel);
}

TEST_CASE("json format carries the same rows") {
  RunConfig config = small_config();
  config.format = RunConfig::Format::json;
  config.eps_trunc = {1e-3};
  const RunOutput out = run(config);
  CHECK(out.rows.size() == 2);
  CHECK(out.rendered.find("h2mmp-json/1") != std::string::npos);
  CHECK(out.rendered.find("\"eps_rel\"") != std::string::npos);
}

TEST_CASE("a second kernel assembles B for rectangular-content products") {
  RunConfig config = small_config();
  config.eps_trunc = {1e-4};
  config.mode = RunConfig::Mode::mmp;
  Kernel kb;
  kb.diagonal_value = 3.0;
  config.kernel_b = kb;
  const RunOutput out = run(config);
  REQUIRE(out.rows.size() == 1);
  CHECK(out.rows[0].eps_rel < 1.0);

  // mixing scalar kinds is rejected
  config.kernel_b->kind = KernelKind::helmholtz;
  CHECK_THROWS_AS(run(config), ConfigError);
}

TEST_CASE("invalid configurations exit with code 2") {
  RunConfig config = small_config();
  config.leafsize = 0;
  CHECK(run_to_exit_code(config) == 2);

  RunConfig bad_eps = small_config();
  bad_eps.eps_trunc = {2.0};
  CHECK(run_to_exit_code(bad_eps) == 2);

  RunConfig bad_geometry = small_config();
  bad_geometry.geometry.n = -4;
  CHECK(run_to_exit_code(bad_geometry) == 2);
}

TEST_CASE("output files land in the directory override") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "h2mmp_runner_test";
  fs::create_directories(dir);
  setenv("H2MMP_OUTPUT_DIR", dir.c_str(), 1);
  RunConfig config = small_config();
  config.eps_trunc = {1e-3};
  config.mode = RunConfig::Mode::mmp;
  config.output = "rows.csv";
  run(config);
  unsetenv("H2MMP_OUTPUT_DIR");
  std::ifstream in(dir / "rows.csv");
  REQUIRE(in.good());
  std::string first;
  std::getline(in, first);
  CHECK(first == "# h2mmp-csv/1");
  fs::remove_all(dir);
}

#ifdef H2MMP_CLI_PATH
TEST_CASE("command line tool runs end to end") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "h2mmp_cli_test";
  fs::create_directories(dir);
  const std::string cli = H2MMP_CLI_PATH;
  const std::string csv = (dir / "out.csv").string();

  const std::string run_cmd = cli +
                              " run --geometry random --n 128 --kernel laplace --leafsize 16"
                              " --eta 1.0 --eps-h2 1e-4 --eps-trunc 1e-2,1e-4 --mode both"
                              " --format csv --seed 5 --output " +
                              csv + " > /dev/null 2>&1";
  REQUIRE(std::system(run_cmd.c_str()) == 0);
  std::ifstream in(csv);
  REQUIRE(in.good());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content.rfind("# h2mmp-csv/1\n", 0) == 0);
  int rows = 0;
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty() && line[0] != '#') ++rows;
  CHECK(rows == 1 + 4);  // header + 2 eps x 2 modes

  // save and reload through the h2json path
  const std::string file = (dir / "m.h2json").string();
  const std::string save_cmd = cli +
                               " save --geometry random --n 96 --kernel laplace --leafsize 16"
                               " --output " +
                               file + " > /dev/null 2>&1";
  REQUIRE(std::system(save_cmd.c_str()) == 0);
  const std::string info_cmd = cli + " info --input " + file + " > /dev/null 2>&1";
  CHECK(std::system(info_cmd.c_str()) == 0);

  // invalid configuration surfaces exit code 2
  const std::string bad_cmd =
      cli + " run --geometry torus --n 8 > /dev/null 2>&1";
  const int status = std::system(bad_cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);

  // malformed h2json input also exits with 2
  const std::string broken = (dir / "broken.h2json").string();
  std::ofstream(broken) << "{\"version\":\"h2json/9\"}";
  const std::string bad_info = cli + " info --input " + broken + " > /dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(bad_info.c_str())) == 2);

  // two consecutive runs of the binary agree byte for byte (wall time aside)
  const std::string csv2 = (dir / "out2.csv").string();
  const std::string rerun_cmd = cli +
                                " run --geometry random --n 128 --kernel laplace --leafsize 16"
                                " --eta 1.0 --eps-h2 1e-4 --eps-trunc 1e-2,1e-4 --mode both"
                                " --format csv --seed 5 --output " +
                                csv2 + " > /dev/null 2>&1";
  REQUIRE(std::system(rerun_cmd.c_str()) == 0);
  std::ifstream second(csv2);
  std::string content2((std::istreambuf_iterator<char>(second)),
                       std::istreambuf_iterator<char>());
  CHECK(strip_wall_ms(content) == strip_wall_ms(content2));

  fs::remove_all(dir);
}
#endif
