#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace manyiv {

// What a simulation run does with the generated data.
enum class SimTask { kSize, kPower, kBias };

// Shape of the first-stage coefficient vector before strength rescaling.
enum class FirstStage { kSparse, kDense, kCustom };

// Family of data generating processes.
//   kGroups:   instruments are balanced group indicators, no controls.
//   kControls: fixed instrument/control design with many controls.
enum class DesignKind { kGroups, kControls };

// One simulation design, usually parsed from a text file with one
// `key = value` pair per line.  Lists are comma separated.  Unknown or
// duplicate keys are rejected so stale files fail loudly.
struct SimDesign {
  std::string name = "design";
  DesignKind kind = DesignKind::kGroups;
  SimTask task = SimTask::kSize;

  int n = 200;
  int k_z = 40;
  int k_w = 0;

  FirstStage first_stage = FirstStage::kDense;
  std::vector<double> custom_pi;  // used when first_stage == kCustom

  // Target for mu^2 / sqrt(K); the coefficient vector is rescaled so the
  // realized value matches exactly.
  double strength_target = 2.5;
  double rho = 0.2;         // corr(structural error, first-stage error)
  double beta_true = 0.0;

  // "none" or a named weight-vector rule understood by the generator.
  std::string heteroskedasticity = "none";
  // Generative rule for controls designs: "plain" or "leverage-zone".
  std::string controls_rule = "plain";

  int reps = 1000;
  std::uint64_t seed = 1;
  double alpha = 0.05;

  std::vector<double> delta_grid;          // alternatives beta_true - delta
  std::vector<std::string> statistics;     // evaluated by size/power tasks
  std::vector<std::string> estimators;     // evaluated by the bias task

  // Throws InvalidInput when fields are inconsistent.
  void validate() const;
};

// Parses the strict `key = value` format.  Blank lines and lines starting
// with '#' are ignored.  Throws InvalidInput on unknown keys, duplicate
// keys, or malformed values.  The result has been validated.
SimDesign parse_design(std::istream& in, const std::string& origin = "design");
SimDesign parse_design_file(const std::string& path);

}  // namespace manyiv
