#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"
#include "mmsem/mmsem.hpp"

namespace mmsem::cli {

/// Invalid configuration; `key` names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what) : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kSuccess = 0, kNumericalFailure = 1, kConfigError = 2, kIoError = 3 };

enum class Command { solve, convergence, layered };

struct RunConfig {
  Command command = Command::solve;
  std::string case_name = "manufactured";
  Rectangle domain{-1.0, 1.0, -1.0, 1.0};
  int elements_x = 2;
  int elements_y = 2;
  int degree = 2;
  StudyMode mode = StudyMode::h;
  std::vector<int> degrees{1, 2, 3};
  std::vector<int> elements{2, 4, 8, 16};
  int mass_quadrature = 0;
  int source_quadrature = 0;
  int error_quadrature = 0;
  DarcySign sign = DarcySign::paper;
  std::array<std::optional<BoundaryKind>, 4> bc_override;
  std::filesystem::path out = "out";
  int sample = 0;  // points per element direction; 0 means N + 1 (the GLL nodes)
  std::vector<std::string> fields;

  AssemblyOptions assembly() const { return {mass_quadrature, source_quadrature, true, 1e-10}; }
  ErrorOptions errors() const { return {error_quadrature}; }
};

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "command", "case",         "x_min",           "x_max",           "y_min",     "y_max",
      "elements_x", "elements_y", "degree",         "mode",            "degrees",   "elements",
      "mass_quadrature", "source_quadrature", "error_quadrature", "darcy_sign", "bc_left", "bc_right",
      "bc_bottom", "bc_top",      "out",             "sample",          "fields"};
  return keys;
}

inline const std::vector<std::string>& known_fields() {
  static const std::vector<std::string> names = {"qx", "qy", "p", "ux", "uy", "div"};
  return names;
}

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

namespace detail {

inline int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

inline std::vector<std::string> split(const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& part : split(v)) {
    // a..b expands to an inclusive range
    if (const auto dots = part.find(".."); dots != std::string::npos) {
      const int lo = parse_int(key, part.substr(0, dots));
      const int hi = parse_int(key, part.substr(dots + 2));
      if (hi < lo) throw ConfigError(key, "empty range '" + part + "'");
      for (int k = lo; k <= hi; ++k) out.push_back(k);
    } else {
      out.push_back(parse_int(key, part));
    }
  }
  if (out.empty()) throw ConfigError(key, "list is empty");
  return out;
}

inline Command parse_command(const std::string& v) {
  if (v == "solve") return Command::solve;
  if (v == "convergence") return Command::convergence;
  if (v == "layered") return Command::layered;
  throw ConfigError("command", "unknown command '" + v + "' (solve | convergence | layered)");
}

inline BoundaryKind parse_bc(const std::string& key, const std::string& v) {
  if (v == "flux") return BoundaryKind::flux;
  if (v == "pressure") return BoundaryKind::pressure;
  throw ConfigError(key, "expected flux or pressure, got '" + v + "'");
}

}  // namespace detail

/// Applies defaults for the command, then the given keys, then validates.
inline RunConfig make_config(const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw ConfigError(key, "unknown key");
    }
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };

  RunConfig c;
  const auto command = get("command");
  if (!command) throw ConfigError("command", "missing");
  c.command = detail::parse_command(*command);

  if (c.command == Command::layered) c.case_name = "layered";
  if (auto v = get("case")) c.case_name = *v;
  if (c.case_name != "manufactured" && c.case_name != "layered") {
    throw ConfigError("case", "unknown case '" + c.case_name + "' (manufactured | layered)");
  }
  if (c.command == Command::layered && c.case_name != "layered") {
    throw ConfigError("case", "the layered command runs the layered case");
  }
  const bool layered = c.case_name == "layered";
  if (layered) {
    c.domain = {0.0, 1.0, 0.0, 1.0};
    c.elements_x = c.elements_y = 3;
    c.degree = 4;
  }

  if (auto v = get("mode")) {
    if (*v == "h") {
      c.mode = StudyMode::h;
    } else if (*v == "p") {
      c.mode = StudyMode::p;
    } else {
      throw ConfigError("mode", "expected h or p, got '" + *v + "'");
    }
  }
  if (c.command == Command::convergence) {
    if (c.mode == StudyMode::p) {
      c.degrees = {2, 3, 4, 5, 6, 7, 8, 9, 10};
      c.elements = {layered ? 3 : 2};
    } else if (layered) {
      c.elements = {3, 6, 12};
    }
  }

  if (auto v = get("x_min")) c.domain.x_min = detail::parse_double("x_min", *v);
  if (auto v = get("x_max")) c.domain.x_max = detail::parse_double("x_max", *v);
  if (auto v = get("y_min")) c.domain.y_min = detail::parse_double("y_min", *v);
  if (auto v = get("y_max")) c.domain.y_max = detail::parse_double("y_max", *v);
  if (auto v = get("elements_x")) c.elements_x = detail::parse_int("elements_x", *v);
  if (auto v = get("elements_y")) c.elements_y = detail::parse_int("elements_y", *v);
  if (auto v = get("degree")) c.degree = detail::parse_int("degree", *v);
  if (auto v = get("degrees")) c.degrees = detail::parse_int_list("degrees", *v);
  if (auto v = get("elements")) c.elements = detail::parse_int_list("elements", *v);
  if (auto v = get("mass_quadrature")) c.mass_quadrature = detail::parse_int("mass_quadrature", *v);
  if (auto v = get("source_quadrature")) c.source_quadrature = detail::parse_int("source_quadrature", *v);
  if (auto v = get("error_quadrature")) c.error_quadrature = detail::parse_int("error_quadrature", *v);
  if (auto v = get("sample")) c.sample = detail::parse_int("sample", *v);
  if (auto v = get("out")) c.out = *v;
  if (auto v = get("darcy_sign")) {
    if (*v == "paper") {
      c.sign = DarcySign::paper;
    } else if (*v == "physical") {
      c.sign = DarcySign::physical;
    } else {
      throw ConfigError("darcy_sign", "expected paper or physical, got '" + *v + "'");
    }
  }
  for (Side s : kSides) {
    const std::string key = std::string("bc_") + side_name(s);
    if (auto v = get(key)) c.bc_override[static_cast<int>(s)] = detail::parse_bc(key, *v);
  }
  if (c.command == Command::convergence) {
    c.fields.clear();
  } else {
    c.fields = layered ? std::vector<std::string>{"qx", "qy", "p", "ux"} : std::vector<std::string>{"qx", "qy", "p"};
  }
  if (auto v = get("fields")) {
    c.fields = *v == "none" ? std::vector<std::string>{} : detail::split(*v);
    for (const auto& f : c.fields) {
      if (std::find(known_fields().begin(), known_fields().end(), f) == known_fields().end()) {
        throw ConfigError("fields", "unknown field '" + f + "' (qx, qy, p, ux, uy, div)");
      }
    }
  }

  // validation
  if (!(c.domain.x_min < c.domain.x_max)) throw ConfigError("x_max", "must exceed x_min");
  if (!(c.domain.y_min < c.domain.y_max)) throw ConfigError("y_max", "must exceed y_min");
  if (layered && (c.domain.x_min != 0.0 || c.domain.x_max != 1.0 || c.domain.y_min != 0.0 || c.domain.y_max != 1.0)) {
    throw ConfigError(get("y_min") ? "y_min" : get("y_max") ? "y_max" : get("x_min") ? "x_min" : "x_max",
                      "the layered case is defined on the unit square");
  }
  constexpr int kMaxDegree = 64;
  auto check_degree = [&](const std::string& key, int N) {
    if (N < 1) throw ConfigError(key, "degree must be at least 1");
    if (N > kMaxDegree) throw ConfigError(key, "degree must not exceed " + std::to_string(kMaxDegree));
  };
  auto check_elements = [&](const std::string& key, int M, bool is_y) {
    if (M < 1) throw ConfigError(key, "element count must be positive");
    if (layered && is_y && M % 3 != 0) throw ConfigError(key, "must be a multiple of 3 for the layered case");
  };
  check_degree("degree", c.degree);
  check_elements("elements_x", c.elements_x, false);
  check_elements("elements_y", c.elements_y, true);
  if (c.command == Command::convergence) {
    for (int N : c.degrees) check_degree("degrees", N);
    for (int M : c.elements) check_elements("elements", M, true);
  }
  for (const auto& [key, q] : {std::pair{"mass_quadrature", c.mass_quadrature},
                               std::pair{"source_quadrature", c.source_quadrature},
                               std::pair{"error_quadrature", c.error_quadrature}}) {
    if (q != 0 && q < 2) throw ConfigError(key, "must be 0 (default) or at least 2 points");
  }
  if (c.sample != 0 && c.sample < 2) throw ConfigError("sample", "must be 0 (GLL nodes) or at least 2");
  return c;
}

/// `<command> [--config FILE] [--out DIR] [--key=value ...]`. The config file
/// holds `key = value` lines with '#' comments; flags win over the file.
inline RunConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"mmsem"};
  app.set_config("--config");
  app.allow_extras();
  app.allow_config_extras(CLI::config_extras_mode::capture);
  std::map<std::string, std::string> values;
  for (const auto& key : known_keys()) {
    const bool list = key == "degrees" || key == "elements" || key == "fields";
    const std::string name = key == "command" ? "command,--command" : "--" + key;
    // CLI11 splits list values; joining them back leaves parsing to make_config
    app.add_option(name, values[key])
        ->delimiter(list ? ',' : ' ')
        ->multi_option_policy(CLI::MultiOptionPolicy::Join)
        ->allow_extra_args(false);
  }

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::FileError& e) {
    throw ConfigError("config", e.what());
  } catch (const CLI::ParseError& e) {
    std::string what = e.what();
    std::string key = "command";
    if (what.rfind("--", 0) == 0) key = what.substr(2, what.find(':') - 2);
    throw ConfigError(key, what);
  }
  if (const auto extra = app.remaining(); !extra.empty()) {
    std::string key = extra.front();
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    key = key.substr(0, key.find('='));
    throw ConfigError(key, "unknown key or unexpected argument '" + extra.front() + "'");
  }

  KeyValues kv;
  for (const auto& key : known_keys()) {
    const std::string opt = key == "command" ? "command" : "--" + key;
    if (app.count(opt) > 0) kv[key] = values[key];
  }
  return make_config(kv);
}

// ---------------------------------------------------------------------------
// Output

/// Shortest-roundtrip-safe decimal with 17 significant digits, locale independent.
inline std::string format_number(double v) {
  char buf[40];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

inline constexpr const char* kReportHeader = "case,mode,M,N,dofs,p_l2_error,q_l2_error,observed_rate";

inline void write_report(const std::filesystem::path& path, const std::string& case_name, const std::string& mode,
                         const std::vector<ConvergenceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kReportHeader << '\n';
  for (const auto& r : rows) {
    out << case_name << ',' << mode << ',' << r.elements << ',' << r.degree << ',' << r.dofs << ','
        << format_number(r.pressure_error) << ',' << format_number(r.flux_error) << ','
        << (r.observed_rate ? format_number(*r.observed_rate) : std::string()) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

struct XYValue {
  double x, y, value;
};

inline void write_field(const std::filesystem::path& path, const std::vector<XYValue>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "x,y,value\n";
  for (const auto& s : samples) {
    out << format_number(s.x) << ',' << format_number(s.y) << ',' << format_number(s.value) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline ProblemSpec make_problem(const RunConfig& c) {
  ProblemSpec spec = c.case_name == "layered" ? layered_case(c.sign) : manufactured_case(c.sign, c.domain);
  for (Side s : kSides) {
    if (const auto& kind = c.bc_override[static_cast<int>(s)]) spec.use_exact_boundary(s, *kind);
  }
  return spec;
}

/// Samples the requested fields of a solve on the per-element GLL grid.
inline void write_fields(const RunConfig& c, const ProblemSpec& spec, const SolveResult& r) {
  const int n = c.sample > 0 ? c.sample : r.mesh.degree + 1;
  const std::vector<Point2> grid = gll_grid(n);
  for (const auto& name : c.fields) {
    std::vector<XYValue> samples;
    if (name == "ux" || name == "uy") {
      for (const auto& v : velocity_from_flux(spec, r.mesh, r.dofs, r.fields, grid)) {
        samples.push_back({v.x, v.y, name == "ux" ? v.ux : v.uy});
      }
    } else {
      const Field f = name == "qx" ? Field::flux_x : name == "qy" ? Field::flux_y : name == "p" ? Field::pressure
                                                                                              : Field::divergence;
      const Eigen::VectorXd& coeffs = f == Field::pressure ? r.fields.pressure : r.fields.flux;
      const std::span<const double> cs(coeffs.data(), static_cast<std::size_t>(coeffs.size()));
      for (const auto& s : reconstruct(r.mesh, r.dofs, cs, f, grid)) samples.push_back({s.x, s.y, s.value});
    }
    write_field(c.out / ("field_" + name + ".csv"), samples);
  }
}

/// Executes a validated configuration. Returns an ExitCode.
inline int run(const RunConfig& c, std::ostream& log = std::cerr) {
  try {
    std::error_code ec;
    std::filesystem::create_directories(c.out, ec);
    if (ec) throw IoError("cannot create output directory " + c.out.string() + ": " + ec.message());

    const ProblemSpec spec = make_problem(c);
    if (c.command == Command::convergence) {
      const ConvergenceReport report =
          convergence_study(spec, c.mode, c.degrees, c.elements, c.assembly(), c.errors());
      write_report(c.out / "report.csv", report.case_name, mode_name(report.mode), report.rows);
      if (report.failure) {
        log << "error: " << *report.failure << '\n';
        return kNumericalFailure;
      }
      return kSuccess;
    }

    const SolveResult r = run_case(spec, c.elements_x, c.elements_y, c.degree, c.assembly(), c.errors());
    ConvergenceRow row;
    row.elements = c.elements_x;
    row.degree = c.degree;
    row.dofs = r.dofs.n_q() + r.dofs.n_p;
    row.pressure_error = r.pressure_error.value_or(0.0);
    row.flux_error = r.flux_error.value_or(0.0);
    write_report(c.out / "report.csv", spec.name, "single", {row});
    write_fields(c, spec, r);
    if (!r.balance.holds()) {
      log << "error: discrete mass balance violated (" << r.balance.residual << ")\n";
      return kNumericalFailure;
    }
    return kSuccess;
  } catch (const IoError& e) {
    log << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

/// Entry point shared by the executable and the tests.
inline int main(const std::vector<std::string>& args, std::ostream& log = std::cerr) {
  RunConfig config;
  try {
    config = parse_config(args);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    log << "usage: mmsem <solve|convergence|layered> [--config FILE] [--out DIR] [--key=value ...]\n";
    return kConfigError;
  }
  return run(config, log);
}

}  // namespace mmsem::cli
