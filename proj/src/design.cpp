#include "manyiv/design.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "manyiv/errors.hpp"

namespace manyiv {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const std::string& origin, const std::string& what) {
  throw InvalidInput(origin + ": " + what);
}

long long parse_int(const std::string& origin, const std::string& key,
                    const std::string& value) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    bad(origin, "key '" + key + "' needs an integer, got '" + value + "'");
  return v;
}

double parse_real(const std::string& origin, const std::string& key,
                  const std::string& value) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0' || !std::isfinite(v))
    bad(origin, "key '" + key + "' needs a finite real, got '" + value + "'");
  return v;
}

std::vector<double> parse_real_list(const std::string& origin,
                                    const std::string& key,
                                    const std::string& value) {
  std::vector<double> out;
  for (const std::string& item : split_list(value))
    out.push_back(parse_real(origin, key, item));
  return out;
}

}  // namespace

void SimDesign::validate() const {
  const std::string where = "design '" + name + "'";
  if (n < 2) throw InvalidInput(where + ": n must be at least 2");
  if (k_z < 1) throw InvalidInput(where + ": k_z must be at least 1");
  if (k_w < 0) throw InvalidInput(where + ": k_w cannot be negative");
  if (reps < 1) throw InvalidInput(where + ": reps must be at least 1");
  if (!(rho > -1.0 && rho < 1.0))
    throw InvalidInput(where + ": rho must lie strictly inside (-1, 1)");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidInput(where + ": alpha must lie strictly inside (0, 1)");
  if (strength_target < 0.0)
    throw InvalidInput(where + ": strength_target cannot be negative");
  if (kind == DesignKind::kGroups) {
    if (k_w != 0)
      throw InvalidInput(where + ": group designs do not take controls");
    if (n % k_z != 0)
      throw InvalidInput(where + ": n must be divisible by k_z so groups are balanced");
    if (n / k_z < 2)
      throw InvalidInput(where + ": groups need at least 2 observations each");
    if (heteroskedasticity != "none")
      throw InvalidInput(where + ": group designs are homoskedastic; set heteroskedasticity = none");
  } else {
    if (k_w < 1)
      throw InvalidInput(where + ": controls designs need k_w >= 1");
    if (n <= k_z + k_w)
      throw InvalidInput(where + ": n must exceed k_z + k_w");
  }
  if (first_stage == FirstStage::kCustom &&
      static_cast<int>(custom_pi.size()) != k_z)
    throw InvalidInput(where + ": custom pi needs exactly k_z entries");
  if (first_stage != FirstStage::kCustom && !custom_pi.empty())
    throw InvalidInput(where + ": pi is only accepted with first_stage = custom");
  if (task == SimTask::kPower && delta_grid.empty())
    throw InvalidInput(where + ": power task needs a non-empty delta_grid");
  if (task == SimTask::kBias && beta_true == 0.0)
    throw InvalidInput(where + ": bias task needs beta_true != 0 so relative bias is defined");
}

SimDesign parse_design(std::istream& in, const std::string& origin) {
  SimDesign d;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      bad(where, "expected `key = value`, got '" + stripped + "'");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) bad(where, "missing key before '='");
    if (value.empty()) bad(where, "missing value for key '" + key + "'");
    if (!seen.insert(key).second) bad(where, "duplicate key '" + key + "'");

    if (key == "name") {
      d.name = value;
    } else if (key == "kind") {
      if (value == "groups") d.kind = DesignKind::kGroups;
      else if (value == "controls") d.kind = DesignKind::kControls;
      else bad(where, "kind must be groups or controls, got '" + value + "'");
    } else if (key == "task") {
      if (value == "size") d.task = SimTask::kSize;
      else if (value == "power") d.task = SimTask::kPower;
      else if (value == "bias") d.task = SimTask::kBias;
      else bad(where, "task must be size, power, or bias, got '" + value + "'");
    } else if (key == "n") {
      d.n = static_cast<int>(parse_int(where, key, value));
    } else if (key == "k_z") {
      d.k_z = static_cast<int>(parse_int(where, key, value));
    } else if (key == "k_w") {
      d.k_w = static_cast<int>(parse_int(where, key, value));
    } else if (key == "first_stage") {
      if (value == "sparse") d.first_stage = FirstStage::kSparse;
      else if (value == "dense") d.first_stage = FirstStage::kDense;
      else if (value == "custom") d.first_stage = FirstStage::kCustom;
      else bad(where, "first_stage must be sparse, dense, or custom");
    } else if (key == "pi") {
      d.custom_pi = parse_real_list(where, key, value);
    } else if (key == "strength_target") {
      d.strength_target = parse_real(where, key, value);
    } else if (key == "rho") {
      d.rho = parse_real(where, key, value);
    } else if (key == "beta_true") {
      d.beta_true = parse_real(where, key, value);
    } else if (key == "heteroskedasticity") {
      d.heteroskedasticity = value;
    } else if (key == "controls_rule") {
      d.controls_rule = value;
    } else if (key == "reps") {
      d.reps = static_cast<int>(parse_int(where, key, value));
    } else if (key == "seed") {
      d.seed = static_cast<std::uint64_t>(parse_int(where, key, value));
    } else if (key == "alpha") {
      d.alpha = parse_real(where, key, value);
    } else if (key == "delta_grid") {
      d.delta_grid = parse_real_list(where, key, value);
    } else if (key == "statistics") {
      d.statistics = split_list(value);
    } else if (key == "estimators") {
      d.estimators = split_list(value);
    } else {
      bad(where, "unknown key '" + key + "'");
    }
  }
  d.validate();
  return d;
}

SimDesign parse_design_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open design file '" + path + "'");
  return parse_design(in, path);
}

}  // namespace manyiv
