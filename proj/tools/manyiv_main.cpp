#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "manyiv/confset.hpp"
#include "manyiv/csv.hpp"
#include "manyiv/dataset.hpp"
#include "manyiv/design.hpp"
#include "manyiv/errors.hpp"
#include "manyiv/estimators.hpp"
#include "manyiv/montecarlo.hpp"
#include "manyiv/normal.hpp"
#include "manyiv/projection.hpp"
#include "manyiv/stattests.hpp"
#include "manyiv/theta.hpp"
#include "manyiv/variance.hpp"

namespace {

using nlohmann::json;

constexpr const char* kSchemaVersion = "1";

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

struct IoArgs {
  std::string out_path;
  std::string format = "text";
};

void add_io_options(CLI::App* cmd, IoArgs& io) {
  cmd->add_option("--out", io.out_path,
                  "write the report to this file instead of stdout");
  cmd->add_option("--format", io.format, "output format")
      ->check(CLI::IsMember({"text", "json", "csv"}));
}

void emit(const IoArgs& io, const std::string& text, const json& j,
          const std::string& csv) {
  std::ostringstream body;
  if (io.format == "json")
    body << j.dump(2) << '\n';
  else if (io.format == "csv")
    body << csv;
  else
    body << text;
  if (io.out_path.empty()) {
    std::cout << body.str();
    return;
  }
  std::ofstream out(io.out_path, std::ios::binary);
  if (!out) throw manyiv::InvalidInput("cannot write '" + io.out_path + "'");
  out << body.str();
}

struct DataArgs {
  std::string path;
  std::string outcome;
  std::string endog;
  std::vector<std::string> instruments;
  std::vector<std::string> controls;
  std::vector<std::string> expand;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--data", a.path, "CSV data file")->required();
  cmd->add_option("--outcome", a.outcome, "outcome column")->required();
  cmd->add_option("--endog", a.endog, "endogenous regressor column")
      ->required();
  cmd->add_option("--instruments", a.instruments,
                  "instrument columns (trailing * matches a prefix)")
      ->required()
      ->delimiter(',');
  cmd->add_option("--controls", a.controls, "exogenous control columns")
      ->delimiter(',');
  cmd->add_option("--expand", a.expand,
                  "categorical columns dummy-coded into controls")
      ->delimiter(',');
}

manyiv::Dataset load_data(const DataArgs& a, manyiv::IngestReport& rep) {
  manyiv::ColumnRoles roles;
  roles.outcome = a.outcome;
  roles.endogenous = a.endog;
  roles.instruments = a.instruments;
  roles.controls = a.controls;
  roles.expand = a.expand;
  return manyiv::ingest_csv(a.path, roles, &rep);
}

json ingest_json(const manyiv::IngestReport& rep) {
  json j;
  j["rows_total"] = rep.rows_total;
  j["rows_kept"] = rep.rows_kept;
  j["rows_dropped"] = rep.rows_dropped;
  j["instruments"] = rep.instrument_names;
  j["controls"] = rep.control_names;
  j["notes"] = rep.notes;
  return j;
}

std::string ingest_text(const manyiv::IngestReport& rep) {
  std::ostringstream s;
  s << "data: kept " << rep.rows_kept << " of " << rep.rows_total
    << " rows, " << rep.instrument_names.size() << " instruments, "
    << rep.control_names.size() << " controls\n";
  for (const std::string& n : rep.notes) s << "  note: " << n << '\n';
  return s.str();
}

// Residualized no-controls view of a dataset with controls, used when a
// statistic defined for the no-controls layout is requested anyway.
struct ResidualView {
  manyiv::ProjectionBundle bundle;
  Eigen::VectorXd y;
  Eigen::VectorXd x;
};

ResidualView make_view(const manyiv::Dataset& ds,
                       const manyiv::ProjectionBundle& bundle) {
  return ResidualView{
      manyiv::ProjectionBundle::from_projection(bundle.p_perp(),
                                                bundle.rank_perp()),
      bundle.m_w() * ds.y(), bundle.m_w() * ds.x()};
}

std::string interval_text(const manyiv::Interval& iv) {
  std::string lo = iv.lo_unbounded ? "-inf" : fmt(iv.lo);
  std::string hi = iv.hi_unbounded ? "inf" : fmt(iv.hi);
  return (iv.lo_unbounded ? "(" : "[") + lo + ", " + hi +
         (iv.hi_unbounded ? ")" : "]");
}

std::string set_text(const manyiv::ConfidenceSet& cs) {
  if (cs.whole_line) return "(-inf, inf)";
  if (cs.empty_set || cs.intervals.empty()) return "(empty set)";
  std::string s;
  for (std::size_t i = 0; i < cs.intervals.size(); ++i) {
    if (i) s += " U ";
    s += interval_text(cs.intervals[i]);
  }
  return s;
}

json set_json(const manyiv::ConfidenceSet& cs) {
  json j;
  j["test"] = cs.test_id;
  j["engine"] = cs.engine;
  j["alpha"] = cs.alpha;
  j["whole_line"] = cs.whole_line;
  j["empty_set"] = cs.empty_set;
  json arr = json::array();
  for (const manyiv::Interval& iv : cs.intervals) {
    json ji;
    ji["lo"] = iv.lo_unbounded ? json() : json(iv.lo);
    ji["hi"] = iv.hi_unbounded ? json() : json(iv.hi);
    arr.push_back(std::move(ji));
  }
  j["intervals"] = std::move(arr);
  return j;
}

std::string set_csv_rows(const std::string& name,
                         const manyiv::ConfidenceSet& cs) {
  std::string out;
  if (cs.whole_line) return name + ",-inf,inf\n";
  if (cs.empty_set || cs.intervals.empty()) return name + ",,\n";
  for (const manyiv::Interval& iv : cs.intervals)
    out += name + ',' + (iv.lo_unbounded ? "-inf" : fmt(iv.lo, "%.12g")) +
           ',' + (iv.hi_unbounded ? "inf" : fmt(iv.hi, "%.12g")) + '\n';
  return out;
}

json estimate_json(const manyiv::EstimateOutcome& eo) {
  json j;
  j["estimator"] = eo.estimator_id;
  j["beta_hat"] = eo.beta_hat;
  j["std_error"] = eo.std_error ? json(*eo.std_error) : json();
  j["denominator"] = eo.denominator;
  j["diagnostics"] = eo.diagnostics;
  return j;
}

json test_json(const manyiv::TestOutcome& t) {
  json j;
  j["statistic"] = t.statistic;
  j["p_value"] = t.p_value;
  j["rejected"] = t.rejected;
  j["beta0"] = t.beta0;
  j["alpha"] = t.alpha;
  j["two_sided"] = t.sidedness == manyiv::Sidedness::kTwoSided;
  j["normalizer"] = t.normalizer.value;
  j["normalizer_id"] = t.normalizer.estimator_id;
  j["flags"] = t.flags;
  return j;
}

// ---------------------------------------------------------------------
// estimate

int cmd_estimate(const DataArgs& da, const IoArgs& io,
                 const std::string& estimator) {
  manyiv::IngestReport rep;
  manyiv::Dataset ds = load_data(da, rep);
  manyiv::ProjectionBundle bundle = manyiv::ProjectionBundle::build(ds);

  manyiv::EstimateOutcome eo;
  if (estimator == "tsls")
    eo = manyiv::tsls(ds, bundle);
  else if (estimator == "jive1")
    eo = manyiv::jive1(ds, bundle);
  else if (estimator == "jive2")
    eo = manyiv::jive2(ds, bundle);
  else if (estimator == "beta1")
    eo = manyiv::beta1_ijive(ds, bundle);
  else if (estimator == "beta2")
    eo = manyiv::beta2_naive(ds, bundle);
  else
    eo = manyiv::beta3_zero_diag(ds, bundle, manyiv::compute_theta(bundle));

  std::ostringstream text;
  text << ingest_text(rep);
  text << "estimator: " << eo.estimator_id << '\n';
  text << "beta_hat: " << fmt(eo.beta_hat) << '\n';
  if (eo.std_error)
    text << "std_error: " << fmt(*eo.std_error) << '\n';
  else
    text << "std_error: unavailable\n";
  for (const auto& [k, v] : eo.diagnostics)
    text << "  " << k << ": " << v << '\n';

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "estimate";
  j["data"] = ingest_json(rep);
  j["estimate"] = estimate_json(eo);

  std::string csv = "estimator,beta_hat,std_error\n";
  csv += eo.estimator_id + ',' + fmt(eo.beta_hat, "%.12g") + ',' +
         (eo.std_error ? fmt(*eo.std_error, "%.12g") : std::string()) + '\n';

  emit(io, text.str(), j, csv);
  return 0;
}

// ---------------------------------------------------------------------
// pretest

int cmd_pretest(const DataArgs& da, const IoArgs& io, double cutoff) {
  manyiv::IngestReport rep;
  manyiv::Dataset ds = load_data(da, rep);
  manyiv::ProjectionBundle bundle = manyiv::ProjectionBundle::build(ds);
  manyiv::PretestOutcome pt = manyiv::pretest_ftilde(ds, bundle, cutoff);

  std::ostringstream text;
  text << ingest_text(rep);
  text << "first-stage screen: " << fmt(pt.ftilde) << " (cutoff "
       << fmt(pt.cutoff) << ") -> "
       << (pt.strong ? "strong" : "weak (use the robust tests)") << '\n';
  text << "conventional first-stage F: " << fmt(pt.first_stage_f) << '\n';
  if (pt.approximate)
    text << "note: controls were residualized out first; the screen is "
            "approximate\n";

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "pretest";
  j["data"] = ingest_json(rep);
  j["ftilde"] = pt.ftilde;
  j["first_stage_f"] = pt.first_stage_f;
  j["cutoff"] = pt.cutoff;
  j["strong"] = pt.strong;
  j["approximate"] = pt.approximate;

  std::string csv = "ftilde,first_stage_f,cutoff,strong\n";
  csv += fmt(pt.ftilde, "%.12g") + ',' + fmt(pt.first_stage_f, "%.12g") +
         ',' + fmt(pt.cutoff, "%.12g") + ',' + (pt.strong ? "1" : "0") + '\n';

  emit(io, text.str(), j, csv);
  return 0;
}

// ---------------------------------------------------------------------
// test

struct StatChoice {
  std::string stat = "ar";      // ar | lm | arw
  std::string variance;          // phi1|phi2|phi3|psi1|psi2 or empty
  manyiv::PhiChoice phi = manyiv::PhiChoice::kPhi2;
  manyiv::PsiChoice psi = manyiv::PsiChoice::kPsi2;
};

void resolve_stat_choice(StatChoice& c) {
  if (c.stat == "ar") {
    if (c.variance.empty() || c.variance == "phi2")
      c.phi = manyiv::PhiChoice::kPhi2;
    else if (c.variance == "phi1")
      c.phi = manyiv::PhiChoice::kPhi1;
    else if (c.variance == "phi3")
      c.phi = manyiv::PhiChoice::kPhi3;
    else
      throw manyiv::InvalidInput("--stat ar pairs with --variance phi1, "
                                 "phi2, or phi3");
  } else if (c.stat == "lm") {
    if (c.variance.empty() || c.variance == "psi2")
      c.psi = manyiv::PsiChoice::kPsi2;
    else if (c.variance == "psi1")
      c.psi = manyiv::PsiChoice::kPsi1;
    else
      throw manyiv::InvalidInput("--stat lm pairs with --variance psi1 or "
                                 "psi2");
  } else if (c.stat == "arw") {
    if (!c.variance.empty())
      throw manyiv::InvalidInput(
          "--stat arw has a fixed normalizer; drop --variance");
  } else {
    throw manyiv::InvalidInput("unknown --stat '" + c.stat + "'");
  }
}

int cmd_test(const DataArgs& da, const IoArgs& io, StatChoice choice,
             double beta0, double alpha) {
  resolve_stat_choice(choice);
  manyiv::IngestReport rep;
  manyiv::Dataset ds = load_data(da, rep);
  manyiv::ProjectionBundle bundle = manyiv::ProjectionBundle::build(ds);

  manyiv::TestOutcome t;
  bool approximate = false;
  if (choice.stat == "arw") {
    manyiv::ZeroDiagA zda = manyiv::compute_theta(bundle);
    t = manyiv::ar_w(ds.y(), ds.x(), bundle, zda, beta0, alpha);
  } else if (!bundle.has_controls()) {
    t = choice.stat == "ar"
            ? manyiv::ar_loo(ds.y(), ds.x(), bundle, beta0, choice.phi, alpha)
            : manyiv::lm_loo(ds.y(), ds.x(), bundle, beta0, choice.psi,
                             alpha);
  } else {
    approximate = true;
    ResidualView view = make_view(ds, bundle);
    t = choice.stat == "ar"
            ? manyiv::ar_loo(view.y, view.x, view.bundle, beta0, choice.phi,
                             alpha)
            : manyiv::lm_loo(view.y, view.x, view.bundle, beta0, choice.psi,
                             alpha);
  }

  std::ostringstream text;
  text << ingest_text(rep);
  text << "test: " << choice.stat << " at beta0 = " << fmt(beta0) << '\n';
  text << "statistic: " << fmt(t.statistic) << "  ("
       << (t.sidedness == manyiv::Sidedness::kTwoSided ? "two-sided"
                                                       : "one-sided upper")
       << ")\n";
  text << "normalizer (" << t.normalizer.estimator_id
       << "): " << fmt(t.normalizer.value) << '\n';
  text << "p_value: " << fmt(t.p_value) << '\n';
  text << "decision at level " << fmt(alpha) << ": "
       << (t.rejected ? "reject" : "fail to reject") << '\n';
  for (const std::string& f : t.flags) text << "  flag: " << f << '\n';
  if (approximate)
    text << "note: controls were residualized out first; the test is "
            "approximate\n";

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "test";
  j["data"] = ingest_json(rep);
  j["stat"] = choice.stat;
  j["approximate"] = approximate;
  j["result"] = test_json(t);

  std::string csv = "stat,beta0,statistic,p_value,rejected\n";
  csv += choice.stat + ',' + fmt(beta0, "%.12g") + ',' +
         fmt(t.statistic, "%.12g") + ',' + fmt(t.p_value, "%.12g") + ',' +
         (t.rejected ? "1" : "0") + '\n';

  emit(io, text.str(), j, csv);
  return 0;
}

// ---------------------------------------------------------------------
// confset

int cmd_confset(const DataArgs& da, const IoArgs& io, StatChoice choice,
                double alpha, const std::string& engine, int points,
                std::optional<double> center,
                std::optional<double> halfwidth) {
  resolve_stat_choice(choice);

  manyiv::ConfSetOptions opt;
  opt.alpha = alpha;
  opt.phi = choice.phi;
  opt.psi = choice.psi;
  if (engine == "grid")
    opt.engine = manyiv::ConfSetEngine::kGrid;
  else if (engine == "polynomial")
    opt.engine = manyiv::ConfSetEngine::kPolynomial;
  else
    opt.engine = manyiv::ConfSetEngine::kAuto;
  if (points > 0) opt.grid.points = points;
  if (center.has_value() != halfwidth.has_value())
    throw manyiv::InvalidInput("--center and --halfwidth come together");
  if (center) {
    opt.grid.auto_window = false;
    opt.grid.center = *center;
    opt.grid.halfwidth = *halfwidth;
    if (*halfwidth <= 0)
      throw manyiv::InvalidInput("--halfwidth must be positive");
  }

  manyiv::IngestReport rep;
  manyiv::Dataset ds = load_data(da, rep);
  manyiv::ProjectionBundle bundle = manyiv::ProjectionBundle::build(ds);

  manyiv::ConfidenceSet cs;
  bool approximate = false;
  if (choice.stat == "arw") {
    manyiv::ZeroDiagA zda = manyiv::compute_theta(bundle);
    cs = manyiv::invert_test(ds.y(), ds.x(), bundle, manyiv::ConfSetStat::kArW,
                             opt, &zda);
  } else {
    const manyiv::ConfSetStat stat = choice.stat == "ar"
                                         ? manyiv::ConfSetStat::kAr
                                         : manyiv::ConfSetStat::kLm;
    if (!bundle.has_controls()) {
      cs = manyiv::invert_test(ds.y(), ds.x(), bundle, stat, opt);
    } else {
      approximate = true;
      ResidualView view = make_view(ds, bundle);
      cs = manyiv::invert_test(view.y, view.x, view.bundle, stat, opt);
    }
  }

  std::ostringstream text;
  text << ingest_text(rep);
  text << fmt(100 * (1 - alpha), "%.4g") << "% confidence set ("
       << cs.test_id << ", " << cs.engine << " engine): " << set_text(cs)
       << '\n';
  if (approximate)
    text << "note: controls were residualized out first; the set is "
            "approximate\n";

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "confset";
  j["data"] = ingest_json(rep);
  j["approximate"] = approximate;
  j["confidence_set"] = set_json(cs);

  std::string csv = "set,lo,hi\n" + set_csv_rows(choice.stat, cs);
  emit(io, text.str(), j, csv);
  return 0;
}

// ---------------------------------------------------------------------
// analyze

int cmd_analyze(const DataArgs& da, const IoArgs& io, double alpha) {
  manyiv::IngestReport rep;
  manyiv::Dataset ds = load_data(da, rep);
  manyiv::ProjectionBundle bundle = manyiv::ProjectionBundle::build(ds);
  const bool controls = bundle.has_controls();

  manyiv::PretestOutcome pt = manyiv::pretest_ftilde(ds, bundle);

  manyiv::EstimateOutcome jive = manyiv::jive2(ds, bundle);
  std::optional<double> wald_lo, wald_hi;
  if (jive.std_error) {
    const double zq = manyiv::norm_quantile(1.0 - alpha / 2.0);
    wald_lo = jive.beta_hat - zq * *jive.std_error;
    wald_hi = jive.beta_hat + zq * *jive.std_error;
  }

  manyiv::ConfSetOptions opt;
  opt.alpha = alpha;

  manyiv::ConfidenceSet ar_set, lm_set;
  bool approximate = false;
  if (!controls) {
    ar_set = manyiv::invert_test(ds.y(), ds.x(), bundle,
                                 manyiv::ConfSetStat::kAr, opt);
    lm_set = manyiv::invert_test(ds.y(), ds.x(), bundle,
                                 manyiv::ConfSetStat::kLm, opt);
  } else {
    approximate = true;
    ResidualView view = make_view(ds, bundle);
    ar_set = manyiv::invert_test(view.y, view.x, view.bundle,
                                 manyiv::ConfSetStat::kAr, opt);
    lm_set = manyiv::invert_test(view.y, view.x, view.bundle,
                                 manyiv::ConfSetStat::kLm, opt);
  }

  std::optional<manyiv::EstimateOutcome> b3;
  std::optional<manyiv::ConfidenceSet> arw_set;
  std::optional<manyiv::Assumption2Report> screen;
  if (controls) {
    manyiv::ZeroDiagA zda = manyiv::compute_theta(bundle);
    screen = manyiv::check_assumption2(bundle, zda);
    b3 = manyiv::beta3_zero_diag(ds, bundle, zda);
    arw_set = manyiv::invert_test(ds.y(), ds.x(), bundle,
                                  manyiv::ConfSetStat::kArW, opt, &zda);
  }

  std::ostringstream text;
  text << ingest_text(rep);
  text << "first-stage screen: " << fmt(pt.ftilde) << " (cutoff "
       << fmt(pt.cutoff) << ") -> " << (pt.strong ? "strong" : "weak")
       << "; conventional F " << fmt(pt.first_stage_f) << '\n';
  text << "jack-knife estimate (jive): " << fmt(jive.beta_hat);
  if (jive.std_error) text << ", se " << fmt(*jive.std_error);
  if (wald_lo)
    text << ", " << fmt(100 * (1 - alpha), "%.4g") << "% Wald ["
         << fmt(*wald_lo) << ", " << fmt(*wald_hi) << ']';
  text << '\n';
  if (!pt.strong)
    text << "  caution: the screen calls this design weak, so the Wald "
            "interval is unreliable; use the robust sets below\n";
  text << "robust " << fmt(100 * (1 - alpha), "%.4g") << "% sets"
       << (approximate ? " (controls residualized out; approximate)" : "")
       << ":\n";
  text << "  quadratic test: " << set_text(ar_set) << '\n';
  text << "  score test:     " << set_text(lm_set) << '\n';
  if (controls) {
    text << "with controls kept in place:\n";
    text << "  zero-diagonal estimate: " << fmt(b3->beta_hat);
    if (b3->std_error) text << ", se " << fmt(*b3->std_error);
    text << '\n';
    text << "  many-controls set: " << set_text(*arw_set) << '\n';
    text << "  balanced-design screen: min control leverage "
         << fmt(screen->min_mw_diag) << ", min theta "
         << fmt(screen->min_theta) << ", max leverage ratio "
         << fmt(screen->max_leverage_ratio) << " -> "
         << (screen->pass ? "pass" : "FAIL") << '\n';
  }

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "analyze";
  j["data"] = ingest_json(rep);
  j["alpha"] = alpha;
  json jp;
  jp["ftilde"] = pt.ftilde;
  jp["first_stage_f"] = pt.first_stage_f;
  jp["cutoff"] = pt.cutoff;
  jp["strong"] = pt.strong;
  jp["approximate"] = pt.approximate;
  j["pretest"] = std::move(jp);
  json je = estimate_json(jive);
  je["wald_lo"] = wald_lo ? json(*wald_lo) : json();
  je["wald_hi"] = wald_hi ? json(*wald_hi) : json();
  je["reliable"] = pt.strong;
  j["jive"] = std::move(je);
  j["approximate_sets"] = approximate;
  j["ar_set"] = set_json(ar_set);
  j["lm_set"] = set_json(lm_set);
  if (controls) {
    j["beta3"] = estimate_json(*b3);
    j["arw_set"] = set_json(*arw_set);
    json js;
    js["min_mw_diag"] = screen->min_mw_diag;
    js["min_theta"] = screen->min_theta;
    js["max_leverage_ratio"] = screen->max_leverage_ratio;
    js["pass"] = screen->pass;
    j["assumption_screen"] = std::move(js);
  }

  std::string csv = "quantity,value,extra\n";
  csv += "ftilde," + fmt(pt.ftilde, "%.12g") + ',' +
         (pt.strong ? "strong" : "weak") + '\n';
  csv += "jive," + fmt(jive.beta_hat, "%.12g") + ',' +
         (jive.std_error ? fmt(*jive.std_error, "%.12g") : std::string()) +
         '\n';
  csv += set_csv_rows("ar_set", ar_set);
  csv += set_csv_rows("lm_set", lm_set);
  if (controls) {
    csv += "beta3," + fmt(b3->beta_hat, "%.12g") + ',' +
           (b3->std_error ? fmt(*b3->std_error, "%.12g") : std::string()) +
           '\n';
    csv += set_csv_rows("arw_set", *arw_set);
  }

  emit(io, text.str(), j, csv);
  return 0;
}

// ---------------------------------------------------------------------
// simulate

std::string report_text(const manyiv::SimReport& r) {
  std::ostringstream s;
  s << "design " << r.design_name << ": " << r.reps << " replications, seed "
    << r.seed << ", " << fmt(r.runtime_seconds, "%.2f") << "s\n";
  if (!r.cells.empty()) {
    s << "  series            delta     rate    mc_se   theory  errors\n";
    for (const manyiv::SimCell& c : r.cells) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "  %-16s %6.3g  %7.4f  %7.4f  %7s  %6d\n",
                    c.series.c_str(), c.delta, c.rate, c.mc_se,
                    std::isfinite(c.theory) ? fmt(c.theory, "%.4f").c_str()
                                            : "-",
                    c.errors);
      s << line;
    }
  }
  for (const manyiv::SimBias& b : r.biases) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "  bias %-10s %8.4f  (mc se %.4f, %d degenerate)\n",
                  b.estimator.c_str(), b.mean_rel_bias, b.mc_se,
                  b.degenerate);
    s << line;
  }
  for (const std::string& n : r.notes) s << "  note: " << n << '\n';
  return s.str();
}

int cmd_simulate(const std::string& design_path, const IoArgs& io,
                 std::optional<std::uint64_t> seed) {
  manyiv::SimDesign d = manyiv::parse_design_file(design_path);
  if (seed) d.seed = *seed;

  manyiv::SimReport r;
  switch (d.task) {
    case manyiv::SimTask::kSize:
      r = manyiv::run_size(d);
      break;
    case manyiv::SimTask::kPower:
      r = manyiv::run_power_curve(d);
      break;
    case manyiv::SimTask::kBias:
      r = manyiv::run_bias(d);
      break;
  }

  if (!io.out_path.empty()) {
    {
      std::ofstream csv(io.out_path + ".csv", std::ios::binary);
      if (!csv)
        throw manyiv::InvalidInput("cannot write '" + io.out_path + ".csv'");
      manyiv::write_report_csv(r, csv);
    }
    {
      std::ofstream js(io.out_path + ".json", std::ios::binary);
      if (!js)
        throw manyiv::InvalidInput("cannot write '" + io.out_path + ".json'");
      manyiv::write_report_json(r, js);
    }
    if (d.task == manyiv::SimTask::kPower) {
      std::ofstream svg(io.out_path + ".svg", std::ios::binary);
      if (!svg)
        throw manyiv::InvalidInput("cannot write '" + io.out_path + ".svg'");
      manyiv::write_power_svg(r, svg);
    }
    std::cout << report_text(r);
    std::cout << "wrote " << io.out_path << ".csv, " << io.out_path
              << ".json"
              << (d.task == manyiv::SimTask::kPower
                      ? ", " + io.out_path + ".svg"
                      : std::string())
              << '\n';
    return 0;
  }

  std::ostringstream csv, js;
  manyiv::write_report_csv(r, csv);
  manyiv::write_report_json(r, js);
  json parsed = json::parse(js.str());
  emit(io, report_text(r), parsed, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Estimation and weak-identification-robust inference for linear IV "
      "models with many instruments and many controls"};
  app.require_subcommand(1);

  DataArgs da;
  IoArgs io_analyze, io_pretest, io_test, io_confset, io_estimate,
      io_simulate;
  double alpha = 0.05;

  auto* analyze = app.add_subcommand(
      "analyze", "first-stage screen, estimates, and robust sets");
  add_data_options(analyze, da);
  add_io_options(analyze, io_analyze);
  analyze->add_option("--alpha", alpha, "test level")
      ->check(CLI::Range(1e-6, 0.5));

  auto* pretest =
      app.add_subcommand("pretest", "first-stage strength screen");
  double cutoff = 4.14;
  add_data_options(pretest, da);
  add_io_options(pretest, io_pretest);
  pretest->add_option("--cutoff", cutoff, "screen cutoff");

  auto* test =
      app.add_subcommand("test", "test one hypothesized coefficient");
  StatChoice test_choice;
  double beta0 = 0.0;
  add_data_options(test, da);
  add_io_options(test, io_test);
  test->add_option("--beta0", beta0, "hypothesized coefficient")->required();
  test->add_option("--stat", test_choice.stat, "ar, lm, or arw")
      ->check(CLI::IsMember({"ar", "lm", "arw"}));
  test->add_option("--variance", test_choice.variance,
                   "phi1|phi2|phi3 for ar, psi1|psi2 for lm");
  test->add_option("--alpha", alpha, "test level")
      ->check(CLI::Range(1e-6, 0.5));

  auto* confset = app.add_subcommand(
      "confset", "confidence set by inverting a robust test");
  StatChoice cs_choice;
  std::string engine = "auto";
  int points = 0;
  std::optional<double> center, halfwidth;
  add_data_options(confset, da);
  add_io_options(confset, io_confset);
  confset->add_option("--stat", cs_choice.stat, "ar, lm, or arw")
      ->check(CLI::IsMember({"ar", "lm", "arw"}));
  confset->add_option("--variance", cs_choice.variance,
                      "normalizer (defaults to the cross-fit one)");
  confset->add_option("--engine", engine, "auto, grid, or polynomial")
      ->check(CLI::IsMember({"auto", "grid", "polynomial"}));
  confset->add_option("--points", points, "grid points");
  confset->add_option("--center", center, "grid window center");
  confset->add_option("--halfwidth", halfwidth, "grid window halfwidth");
  confset->add_option("--alpha", alpha, "test level")
      ->check(CLI::Range(1e-6, 0.5));

  auto* estimate = app.add_subcommand("estimate", "point estimation");
  std::string estimator;
  add_data_options(estimate, da);
  add_io_options(estimate, io_estimate);
  estimate
      ->add_option("--estimator", estimator,
                   "tsls, jive1, jive2, beta1, beta2, or beta3")
      ->required()
      ->check(CLI::IsMember(
          {"tsls", "jive1", "jive2", "beta1", "beta2", "beta3"}));

  auto* simulate =
      app.add_subcommand("simulate", "run a simulation design file");
  std::string design_path;
  std::optional<std::uint64_t> seed;
  simulate->add_option("--design", design_path, "design file")->required();
  simulate->add_option("--seed", seed, "override the design seed");
  add_io_options(simulate, io_simulate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return cmd_analyze(da, io_analyze, alpha);
    if (pretest->parsed()) return cmd_pretest(da, io_pretest, cutoff);
    if (test->parsed())
      return cmd_test(da, io_test, test_choice, beta0, alpha);
    if (confset->parsed())
      return cmd_confset(da, io_confset, cs_choice, alpha, engine, points,
                         center, halfwidth);
    if (estimate->parsed()) return cmd_estimate(da, io_estimate, estimator);
    if (simulate->parsed()) return cmd_simulate(design_path, io_simulate, seed);
  } catch (const manyiv::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
