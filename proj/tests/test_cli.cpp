#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mmsem/cli.hpp"

namespace mmsem::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmsem_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

int config_error_code(const std::vector<std::string>& args, std::string* message = nullptr) {
  std::ostringstream log;
  const int code = main(args, log);
  if (message) *message = log.str();
  return code;
}

TEST(ParseConfig, MinimalConvergenceDefaults) {
  const RunConfig c = make_config({{"command", "convergence"}, {"case", "manufactured"}});
  EXPECT_EQ(c.command, Command::convergence);
  EXPECT_EQ(c.mode, StudyMode::h);
  EXPECT_EQ(c.degrees, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(c.elements, (std::vector<int>{2, 4, 8, 16}));
  EXPECT_EQ(c.sign, DarcySign::paper);
  EXPECT_EQ(c.mass_quadrature, 0);
  EXPECT_EQ(c.source_quadrature, 0);
  EXPECT_TRUE(c.fields.empty());
  EXPECT_EQ(c.out, fs::path("out"));
}

TEST(ParseConfig, PModeDefaults) {
  const RunConfig c = make_config({{"command", "convergence"}, {"mode", "p"}});
  EXPECT_EQ(c.degrees, (std::vector<int>{2, 3, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(c.elements, (std::vector<int>{2}));
}

TEST(ParseConfig, ValidationErrorsNameTheKey) {
  auto key_of = [](const KeyValues& kv) {
    try {
      make_config(kv);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(key_of({{"command", "solve"}, {"degree", "0"}}), "degree");
  EXPECT_EQ(key_of({{"command", "layered"}, {"elements_y", "4"}}), "elements_y");
  EXPECT_EQ(key_of({{"command", "solve"}, {"bogus", "1"}}), "bogus");
  EXPECT_EQ(key_of({{"command", "solve"}, {"elements_x", "two"}}), "elements_x");
  EXPECT_EQ(key_of({{"command", "solve"}, {"darcy_sign", "up"}}), "darcy_sign");
  EXPECT_EQ(key_of({{"command", "fly"}}), "command");
  EXPECT_EQ(key_of({{"degree", "2"}}), "command");
  EXPECT_EQ(key_of({{"command", "convergence"}, {"degrees", "1,0"}}), "degrees");
  EXPECT_EQ(key_of({{"command", "solve"}, {"x_min", "2"}, {"x_max", "1"}}), "x_max");
  EXPECT_EQ(key_of({{"command", "layered"}, {"y_max", "2"}}), "y_max");
  EXPECT_EQ(key_of({{"command", "solve"}, {"fields", "qx,vorticity"}}), "fields");
  EXPECT_EQ(key_of({{"command", "solve"}, {"source_quadrature", "1"}}), "source_quadrature");
}

TEST(ParseConfig, FileWithFlagOverrides) {
  const fs::path dir = scratch("config");
  fs::create_directories(dir);
  const fs::path file = dir / "run.cfg";
  std::ofstream(file) << "# study\ncommand = convergence\ncase=manufactured\ndegrees = 1..3\nelements = 2, 4\n"
                         "darcy_sign = physical\n";
  const RunConfig c = parse_config({"--config", file.string(), "--degrees=2", "--out", (dir / "o").string()});
  EXPECT_EQ(c.command, Command::convergence);
  EXPECT_EQ(c.degrees, (std::vector<int>{2}));
  EXPECT_EQ(c.elements, (std::vector<int>{2, 4}));
  EXPECT_EQ(c.sign, DarcySign::physical);
  EXPECT_EQ(c.out, dir / "o");

  const fs::path plain = dir / "plain.cfg";
  std::ofstream(plain) << "degree = 5\nelements_y = 6\n";
  const RunConfig positional = parse_config({"layered", "--degree=3", "--config=" + plain.string()});
  EXPECT_EQ(positional.command, Command::layered);
  EXPECT_EQ(positional.degree, 3);
  EXPECT_EQ(positional.elements_y, 6);
}

TEST(ParseConfig, UnknownArgumentsNameTheKey) {
  auto key_of = [](const std::vector<std::string>& args) {
    try {
      parse_config(args);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(key_of({"solve", "--bogus=1"}), "bogus");
  EXPECT_EQ(key_of({"solve", "stray"}), "stray");
  EXPECT_EQ(key_of({"solve", "--degree"}), "degree");
  const fs::path dir = scratch("unknown");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.cfg") << "degree = 2\nvelocity = 3\n";
  EXPECT_EQ(key_of({"solve", "--config", (dir / "bad.cfg").string()}), "velocity");
}

TEST(Run, ExitCodeForConfigError) {
  std::string msg;
  EXPECT_EQ(config_error_code({"solve", "--degree=0"}, &msg), kConfigError);
  EXPECT_NE(msg.find("degree"), std::string::npos);
  EXPECT_EQ(config_error_code({}), kConfigError);
  EXPECT_EQ(config_error_code({"solve", "--config", "/nonexistent/file.cfg"}), kConfigError);
}

TEST(Run, LayeredFieldClustersAtLayerFluxes) {
  const fs::path out = scratch("layered");
  ASSERT_EQ(config_error_code({"layered", "--out", out.string()}), kSuccess);
  const auto rows = read_csv(out / "field_qx.csv");
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"x", "y", "value"}));
  std::set<long> levels;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const double y = std::stod(rows[k][1]);
    const double v = std::stod(rows[k][2]);
    levels.insert(std::lround(v * 1e6));
    if (y < 1.0 / 3.0 - 1e-12) {
      EXPECT_NEAR(v, 0.3, 1e-9);
    }
    if (y > 1.0 / 3.0 + 1e-12 && y < 2.0 / 3.0 - 1e-12) {
      EXPECT_NEAR(v, 0.7, 1e-9);
    }
    if (y > 2.0 / 3.0 + 1e-12) {
      EXPECT_NEAR(v, 0.5, 1e-9);
    }
  }
  EXPECT_EQ(levels, (std::set<long>{300000, 500000, 700000}));
  EXPECT_TRUE(fs::exists(out / "field_p.csv"));
  EXPECT_TRUE(fs::exists(out / "field_ux.csv"));
  const auto report = read_csv(out / "report.csv");
  ASSERT_EQ(report.size(), 2u);
  EXPECT_EQ(report[1][0], "layered");
}

TEST(Run, ConvergenceReportSchemaAndRates) {
  const fs::path out = scratch("convergence");
  ASSERT_EQ(config_error_code({"convergence", "--degrees=2", "--elements=2,4,8", "--out=" + out.string()}), kSuccess);
  const auto rows = read_csv(out / "report.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"case", "mode", "M", "N", "dofs", "p_l2_error", "q_l2_error",
                                               "observed_rate"}));
  EXPECT_EQ(rows[1][7], "");
  EXPECT_EQ(rows[1][4], "56");  // 40 fluxes + 16 pressures
  // N = 2 pressure converges at rate N
  EXPECT_NEAR(std::stod(rows[3][7]), 2.0, 0.1);
  EXPECT_FALSE(fs::exists(out / "field_qx.csv"));
}

TEST(Run, RepeatedRunsAreBytewiseIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const auto& dir : {a, b}) {
    ASSERT_EQ(config_error_code({"solve", "--elements_x=3", "--degree=3", "--fields=qx,qy,p,ux,uy,div",
                                 "--out=" + dir.string()}),
              kSuccess);
  }
  for (const char* f : {"report.csv", "field_qx.csv", "field_qy.csv", "field_p.csv", "field_ux.csv", "field_uy.csv",
                        "field_div.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Run, SeventeenSignificantDigits) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(std::stod(format_number(M_PI)), M_PI);
}

TEST(Run, PressureBoundaryOverride) {
  const fs::path out = scratch("bc");
  ASSERT_EQ(config_error_code({"solve", "--bc_left=pressure", "--bc_top=pressure", "--degree=3",
                               "--out=" + out.string()}),
            kSuccess);
  const auto rows = read_csv(out / "report.csv");
  EXPECT_LT(std::stod(rows[1][5]), 1e-2);
}

TEST(Run, NumericalFailureExitCode) {
  // no-flux sides with a pure flux problem but tiny quadrature make the data incompatible
  const fs::path out = scratch("fail");
  EXPECT_EQ(config_error_code({"solve", "--degree=1", "--elements_x=1", "--elements_y=1", "--source_quadrature=2",
                               "--out=" + out.string()}),
            kNumericalFailure);
}

TEST(Run, IoErrorExitCode) {
  const fs::path dir = scratch("io");
  fs::create_directories(dir);
  const fs::path blocker = dir / "file";
  std::ofstream(blocker) << "x";
  EXPECT_EQ(config_error_code({"solve", "--out=" + (blocker / "sub").string()}), kIoError);
}

TEST(Executable, ExitCodes) {
  const std::string exe = MMSEM_CLI_PATH;
  const fs::path out = scratch("exe");
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(s);
  };
  EXPECT_EQ(status(exe + " solve --out " + out.string()), 0);
  EXPECT_EQ(status(exe + " solve --degree=0"), 2);
  EXPECT_EQ(status(exe + " layered --elements_y=4"), 2);
  EXPECT_TRUE(fs::exists(out / "report.csv"));
}

}  // namespace
}  // namespace mmsem::cli
