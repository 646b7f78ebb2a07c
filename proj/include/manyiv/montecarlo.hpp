#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <utility>
#include <optional>
#include <string>
#include <vector>

#include "manyiv/dataset.hpp"
#include "manyiv/design.hpp"
#include "manyiv/projection.hpp"
#include "manyiv/theta.hpp"

namespace manyiv {

// Everything about a simulation design that is fixed across replications:
// instruments, controls, projections, the rescaled signal vector, and the
// error second moments implied by the design rules. Replications only add
// fresh error draws on top.
struct GeneratedDesign {
  GeneratedDesign(SimDesign s, ProjectionBundle b)
      : spec(std::move(s)), bundle(std::move(b)) {}

  SimDesign spec;
  ProjectionBundle bundle;

  Eigen::MatrixXd z;  // materialized instruments (raw, pre-residualization)
  Eigen::MatrixXd w;  // controls; zero columns for group designs

  Eigen::VectorXd m;        // E[x] after strength rescaling
  Eigen::VectorXd gamma_w;  // control contribution to the outcome
  Eigen::VectorXd omega;    // per-observation error weight

  // Implied second moments of the structural error and its covariance
  // with the first-stage error, used by infeasible oracles.
  Eigen::VectorXd sigma2;
  Eigen::VectorXd sigma_uv;

  double mu2 = 0.0;  // realized concentration parameter
  int strength_rank = 0;  // the K in mu^2 / sqrt(K)

  std::optional<ZeroDiagA> zda;               // controls designs
  std::optional<Eigen::MatrixXd> arw_weights; // pair weights for phi_w
  // View of the residualized instrument projection as a no-controls
  // bundle, the layout the naive comparator statistics work in.
  std::optional<ProjectionBundle> naive_view;

  int redraws = 0;
  std::vector<std::string> notes;
};

// Deterministic function of the design (draws use fixed sub-streams of
// the design seed). Controls designs are redrawn up to 20 times until
// the balanced-design screen passes, then the build fails.
GeneratedDesign build_design(const SimDesign& design);

// Error draws for one replication; the stream seed is mix64(seed, rep),
// so results do not depend on evaluation order.
void draw_rep(const GeneratedDesign& gd, int rep, Eigen::VectorXd& y,
              Eigen::VectorXd& x);

// Materialized per-replication datasets.
Dataset gen_group_design(const SimDesign& design, int rep);
Dataset gen_controls_design(const SimDesign& design, int rep);

// One (statistic, alternative) cell of a simulation report.
struct SimCell {
  std::string series;
  double delta = 0.0;
  int reps = 0;
  int rejections = 0;
  int errors = 0;
  double rate = 0.0;   // rejections / (reps - errors)
  double mc_se = 0.0;  // sqrt(rate (1-rate) / (reps - errors))
  double theory = std::numeric_limits<double>::quiet_NaN();
};

struct SimBias {
  std::string estimator;
  int reps = 0;
  int degenerate = 0;  // replications whose estimator threw
  double mean_rel_bias = 0.0;
  double mc_se = 0.0;
};

struct SimReport {
  std::string design_name;
  std::uint64_t seed = 0;
  int reps = 0;
  double alpha = 0.05;
  std::vector<SimCell> cells;
  std::vector<SimBias> biases;
  double runtime_seconds = 0.0;
  std::vector<std::string> notes;
};

// Rejection rates at the null (beta0 = beta_true) for the statistics the
// design lists. Replications run concurrently; the reduction is a fixed
// sequential pass over per-replication records, so reports are
// bit-identical for a given (design, seed) no matter the thread count.
SimReport run_size(const SimDesign& design);

// Rejection rates across the delta grid, testing beta0 = beta_true -
// delta on data generated once per replication at beta_true (common
// draws across alternatives). Group designs also carry the large-sample
// power prediction per cell.
SimReport run_power_curve(const SimDesign& design);

// Mean relative bias per estimator at beta_true.
SimReport run_bias(const SimDesign& design);

// Serialization. The CSV is deterministic (no timings); the JSON summary
// includes runtime and a schema_version key.
void write_report_csv(const SimReport& report, std::ostream& out);
void write_report_json(const SimReport& report, std::ostream& out);
// Line chart of rate (and dashed theory) against delta, one polyline per
// series. Self-contained SVG.
void write_power_svg(const SimReport& report, std::ostream& out);

}  // namespace manyiv
