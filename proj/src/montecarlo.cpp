#include "manyiv/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "manyiv/errors.hpp"
#include "manyiv/estimators.hpp"
#include "manyiv/rng.hpp"
#include "manyiv/stattests.hpp"
#include "manyiv/variance.hpp"

namespace manyiv {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void fill_normals(SplitMix64& g, Eigen::Ref<Eigen::VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g.next_normal();
}

Eigen::VectorXd first_stage_coefficients(const SimDesign& d, int cols) {
  switch (d.first_stage) {
    case FirstStage::kDense:
      return Eigen::VectorXd::Constant(cols, 0.316);
    case FirstStage::kSparse: {
      Eigen::VectorXd pi = Eigen::VectorXd::Constant(cols, 0.001);
      pi[cols - 1] = 2.0;
      return pi;
    }
    case FirstStage::kCustom: {
      if (static_cast<int>(d.custom_pi.size()) != cols)
        throw InvalidInput("design '" + d.name + "': custom first stage needs " +
                           std::to_string(cols) + " coefficients, got " +
                           std::to_string(d.custom_pi.size()));
      return Eigen::Map<const Eigen::VectorXd>(d.custom_pi.data(), cols);
    }
  }
  throw InvalidInput("unknown first-stage rule");
}

double concentration(const Eigen::VectorXd& m, const ProjectionBundle& b) {
  const Eigen::VectorXd pm = b.p_perp() * m;
  return m.dot(pm) - b.hat_p_perp().dot(m.cwiseAbs2());
}

// Scale factor applied to the first-stage signal so that the realized
// mu^2 / sqrt(K) hits the requested strength exactly.
double strength_scale(const SimDesign& d, int k, double mu2_0) {
  if (d.strength_target <= 0.0) return 0.0;
  if (mu2_0 <= 0.0)
    throw InvalidInput("design '" + d.name +
                       "': first-stage signal carries no concentration; "
                       "cannot rescale to the requested strength");
  return std::sqrt(d.strength_target * std::sqrt(static_cast<double>(k)) /
                   mu2_0);
}

GeneratedDesign build_group(const SimDesign& d) {
  const int ng = d.n / d.k_z;
  std::vector<int> membership(d.n);
  for (int i = 0; i < d.n; ++i) membership[i] = i / ng;

  GeneratedDesign gd{d, ProjectionBundle::from_groups(membership)};
  gd.z = Eigen::MatrixXd::Zero(d.n, d.k_z);
  for (int i = 0; i < d.n; ++i) gd.z(i, membership[i]) = 1.0;
  gd.w.resize(d.n, 0);

  const Eigen::VectorXd pi0 = first_stage_coefficients(d, d.k_z);
  const Eigen::VectorXd m0 = gd.z * pi0;
  const double mu2_0 = concentration(m0, gd.bundle);
  const double c = strength_scale(d, gd.bundle.rank_z(), mu2_0);
  gd.m = c * m0;
  gd.mu2 = c * c * mu2_0;
  gd.strength_rank = gd.bundle.rank_z();

  gd.gamma_w = Eigen::VectorXd::Zero(d.n);
  gd.omega = Eigen::VectorXd::Ones(d.n);
  gd.sigma2 = Eigen::VectorXd::Ones(d.n);
  gd.sigma_uv = Eigen::VectorXd::Constant(d.n, d.rho);
  return gd;
}

struct ControlsParts {
  Eigen::MatrixXd z;
  Eigen::MatrixXd w;
  Eigen::VectorXd gamma;
  Eigen::VectorXd omega;
  Eigen::VectorXd pi0;
};

void fill_plain(const SimDesign& d, std::uint64_t base, ControlsParts& out) {
  if (d.heteroskedasticity != "none" && d.heteroskedasticity != "abs-normal")
    throw InvalidInput("design '" + d.name +
                       "': controls_rule 'plain' supports heteroskedasticity "
                       "none or abs-normal, got '" +
                       d.heteroskedasticity + "'");

  out.w.resize(d.n, d.k_w);
  out.w.col(0).setOnes();
  SplitMix64 gw(mix64(base, kStreamControls));
  for (int j = 1; j < d.k_w; ++j) fill_normals(gw, out.w.col(j));

  out.z.resize(d.n, d.k_z);
  SplitMix64 gz(mix64(base, kStreamInstruments));
  for (int j = 0; j < d.k_z; ++j) fill_normals(gz, out.z.col(j));

  SplitMix64 gc(mix64(base, kStreamCoefficients));
  out.gamma.resize(d.k_w);
  for (int j = 0; j < d.k_w; ++j) out.gamma[j] = 0.5 * gc.next_normal();

  out.omega = Eigen::VectorXd::Ones(d.n);
  if (d.heteroskedasticity == "abs-normal") {
    SplitMix64 go(mix64(base, kStreamWeights));
    for (int i = 0; i < d.n; ++i) out.omega[i] = std::abs(go.next_normal());
  }

  out.pi0 = first_stage_coefficients(d, d.k_z);
}

// Engineered design with a cluster of high-leverage observations. The
// instrument block splits into three roles: zone columns concentrate
// leverage on the lead observation of small dummy-control cells, signal
// columns carry the first stage on quiet observations, and noise columns
// spread normalizer mass over the background. The error weight is
// negative on the lead observations, which flips the sign of the
// error covariance there without changing the variance; that is what
// separates the own-observation-biased statistics from the robust ones.
constexpr int kBiasCells = 84;  // dummy-control cells of size 3
constexpr int kCellSize = 3;
constexpr int kZoneCols = 28;   // each covers the lead obs of 3 cells
constexpr int kSignalCols = 8;
constexpr int kSignalSupport = 45;
constexpr int kNoiseCols = 12;
constexpr int kNoiseSupport = 60;
constexpr double kZoneWScale = 1.8;      // continuous-row amplification
constexpr double kOmegaZoneLead = -1.2;  // signed on purpose
constexpr double kOmegaZoneRest = 0.8;
constexpr double kOmegaSignal = 0.15;
constexpr double kGammaIntercept = -4.8;
constexpr double kGammaContinuousSd = 0.1;

void fill_zone(const SimDesign& d, std::uint64_t base, ControlsParts& out) {
  constexpr int zone_obs = kBiasCells * kCellSize;
  constexpr int signal_obs = kSignalCols * kSignalSupport;
  constexpr int noise_slots = kNoiseCols * kNoiseSupport;
  constexpr int rest_cells = kBiasCells * (kCellSize - 1);
  constexpr int min_n = zone_obs + signal_obs + (noise_slots - rest_cells) + 100;

  if (d.k_z != kZoneCols + kSignalCols + kNoiseCols)
    throw InvalidInput("design '" + d.name +
                       "': controls_rule 'leverage-zone' requires k_z = " +
                       std::to_string(kZoneCols + kSignalCols + kNoiseCols));
  if (d.k_w < 2 + kBiasCells)
    throw InvalidInput("design '" + d.name +
                       "': controls_rule 'leverage-zone' requires k_w >= " +
                       std::to_string(2 + kBiasCells));
  if (d.n < min_n)
    throw InvalidInput("design '" + d.name +
                       "': controls_rule 'leverage-zone' requires n >= " +
                       std::to_string(min_n));
  if (d.heteroskedasticity != "zoned")
    throw InvalidInput("design '" + d.name +
                       "': controls_rule 'leverage-zone' requires "
                       "heteroskedasticity = zoned");

  // Controls: intercept, one dummy per cell, continuous remainder with
  // amplified rows inside the zone.
  out.w = Eigen::MatrixXd::Zero(d.n, d.k_w);
  out.w.col(0).setOnes();
  for (int c = 0; c < kBiasCells; ++c)
    for (int r = 0; r < kCellSize; ++r) out.w(kCellSize * c + r, 1 + c) = 1.0;
  SplitMix64 gw(mix64(base, kStreamControls));
  for (int j = 1 + kBiasCells; j < d.k_w; ++j) {
    fill_normals(gw, out.w.col(j));
    out.w.col(j).head(zone_obs) *= kZoneWScale;
  }

  // Instruments.
  out.z = Eigen::MatrixXd::Zero(d.n, d.k_z);
  for (int j = 0; j < kZoneCols; ++j)
    for (int c = 0; c < kCellSize; ++c)
      out.z(kCellSize * (kCellSize * j + c), j) = 1.0;
  const int signal_first = zone_obs;
  for (int j = 0; j < kSignalCols; ++j)
    out.z.col(kZoneCols + j)
        .segment(signal_first + kSignalSupport * j, kSignalSupport)
        .setOnes();
  std::vector<int> noise_rows;
  noise_rows.reserve(noise_slots);
  for (int c = 0; c < kBiasCells; ++c)
    for (int r = 1; r < kCellSize; ++r) noise_rows.push_back(kCellSize * c + r);
  for (int i = zone_obs + signal_obs;
       static_cast<int>(noise_rows.size()) < noise_slots; ++i)
    noise_rows.push_back(i);
  for (int j = 0; j < kNoiseCols; ++j)
    for (int s = 0; s < kNoiseSupport; ++s)
      out.z(noise_rows[kNoiseSupport * j + s], kZoneCols + kSignalCols + j) =
          1.0;

  // Outcome loadings: an intercept shift plus faint continuous texture.
  SplitMix64 gc(mix64(base, kStreamCoefficients));
  out.gamma = Eigen::VectorXd::Zero(d.k_w);
  out.gamma[0] = kGammaIntercept;
  for (int j = 1 + kBiasCells; j < d.k_w; ++j)
    out.gamma[j] = kGammaContinuousSd * gc.next_normal();

  // Error weights: signed lead weight, quiet cell companions and signal
  // support, folded-normal background.
  SplitMix64 go(mix64(base, kStreamWeights));
  out.omega.resize(d.n);
  for (int i = 0; i < d.n; ++i) out.omega[i] = std::abs(go.next_normal());
  for (int c = 0; c < kBiasCells; ++c) {
    out.omega[kCellSize * c] = kOmegaZoneLead;
    for (int r = 1; r < kCellSize; ++r)
      out.omega[kCellSize * c + r] = kOmegaZoneRest;
  }
  out.omega.segment(signal_first, signal_obs).setConstant(kOmegaSignal);

  // First stage rides on the signal columns only, unless fully custom.
  if (d.first_stage == FirstStage::kCustom) {
    out.pi0 = first_stage_coefficients(d, d.k_z);
  } else {
    out.pi0 = Eigen::VectorXd::Zero(d.k_z);
    out.pi0.segment(kZoneCols, kSignalCols) =
        first_stage_coefficients(d, kSignalCols);
  }
}

GeneratedDesign build_controls(const SimDesign& d) {
  const bool zone = d.controls_rule == "leverage-zone";
  if (!zone && d.controls_rule != "plain")
    throw InvalidInput("design '" + d.name + "': unknown controls_rule '" +
                       d.controls_rule + "'");

  std::string last_failure = "screen never ran";
  for (int attempt = 0; attempt < 20; ++attempt) {
    const std::uint64_t base =
        attempt == 0 ? d.seed
                     : mix64(mix64(d.seed, kStreamRedraw),
                             static_cast<std::uint64_t>(attempt));
    ControlsParts parts;
    if (zone)
      fill_zone(d, base, parts);
    else
      fill_plain(d, base, parts);

    try {
      Dataset ds = Dataset::make(Eigen::VectorXd::Zero(d.n),
                                 Eigen::VectorXd::Zero(d.n), parts.z, parts.w);
      if (ds.kz() != d.k_z || ds.kw() != d.k_w) {
        last_failure = "collinear design columns were pruned";
        continue;
      }
      GeneratedDesign gd{d, ProjectionBundle::build(ds)};
      ZeroDiagA zda = compute_theta(gd.bundle);
      const Assumption2Report screen = check_assumption2(gd.bundle, zda);
      if (!screen.pass) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "min control leverage %.4f, min theta %.4g, "
                      "max leverage ratio %.4f",
                      screen.min_mw_diag, screen.min_theta,
                      screen.max_leverage_ratio);
        last_failure = buf;
        continue;
      }

      gd.z = parts.z;
      gd.w = parts.w;
      const Eigen::VectorXd m0 =
          gd.bundle.m_w() * (parts.z * parts.pi0).eval();
      const double mu2_0 = concentration(m0, gd.bundle);
      const double c = strength_scale(d, gd.bundle.rank_perp(), mu2_0);
      gd.m = c * m0;
      gd.mu2 = c * c * mu2_0;
      gd.strength_rank = gd.bundle.rank_perp();

      gd.gamma_w = parts.w * parts.gamma;
      const bool eps_only = d.heteroskedasticity == "none";
      if (eps_only) {
        gd.omega = Eigen::VectorXd::Ones(d.n);
        gd.sigma2 = Eigen::VectorXd::Ones(d.n);
        gd.sigma_uv = Eigen::VectorXd::Zero(d.n);
      } else {
        gd.omega = parts.omega;
        gd.sigma2 = 3.25 * parts.omega.cwiseAbs2();
        gd.sigma_uv = -1.5 * parts.omega;
      }
      gd.zda = std::move(zda);
      gd.redraws = attempt;

      char buf[200];
      std::snprintf(buf, sizeof(buf),
                    "balanced-design screen passed: min control leverage "
                    "%.4f, min theta %.4g, max leverage ratio %.4f%s",
                    screen.min_mw_diag, screen.min_theta,
                    screen.max_leverage_ratio,
                    screen.ratio_warn ? " (ratio above 0.9)" : "");
      gd.notes.push_back(buf);
      if (attempt > 0)
        gd.notes.push_back("design redraws before the screen passed: " +
                           std::to_string(attempt));
      return gd;
    } catch (const Error& e) {
      last_failure = e.what();
    }
  }
  throw InvalidInput("design '" + d.name +
                     "': balanced-design screen failed after 20 draws (" +
                     last_failure + ")");
}

}  // namespace

GeneratedDesign build_design(const SimDesign& design) {
  design.validate();
  if (design.kind == DesignKind::kGroups) return build_group(design);
  return build_controls(design);
}

void draw_rep(const GeneratedDesign& gd, int rep, Eigen::VectorXd& y,
              Eigen::VectorXd& x) {
  if (rep < 0) throw InvalidInput("replication index must be nonnegative");
  const int n = gd.bundle.n();
  SplitMix64 g(mix64(gd.spec.seed, static_cast<std::uint64_t>(rep)));
  Eigen::VectorXd v(n), eps(n);
  fill_normals(g, v);
  fill_normals(g, eps);

  x = gd.m + v;
  if (gd.spec.kind == DesignKind::kGroups) {
    const double rho = gd.spec.rho;
    y = gd.spec.beta_true * x + rho * v +
        std::sqrt(1.0 - rho * rho) * eps;
    return;
  }
  Eigen::VectorXd u;
  if (gd.spec.heteroskedasticity == "none")
    u = std::move(eps);
  else
    u = (gd.omega.array() * (eps.array() - 1.5 * v.array())).matrix();
  y = gd.gamma_w + gd.spec.beta_true * x + u;
}

Dataset gen_group_design(const SimDesign& design, int rep) {
  if (design.kind != DesignKind::kGroups)
    throw InvalidInput("gen_group_design needs kind = groups");
  GeneratedDesign gd = build_design(design);
  Eigen::VectorXd y, x;
  draw_rep(gd, rep, y, x);
  return Dataset::make(std::move(y), std::move(x), gd.z);
}

Dataset gen_controls_design(const SimDesign& design, int rep) {
  if (design.kind != DesignKind::kControls)
    throw InvalidInput("gen_controls_design needs kind = controls");
  GeneratedDesign gd = build_design(design);
  Eigen::VectorXd y, x;
  draw_rep(gd, rep, y, x);
  return Dataset::make(std::move(y), std::move(x), gd.z, gd.w);
}

namespace {

struct RepData {
  Eigen::VectorXd y, x;    // raw draw
  Eigen::VectorXd my, mx;  // control-residualized copies when needed
};

// family: 0 = quadratic statistic (theory from the ar prediction),
// 1 = score statistic, -1 = no prediction.
struct StatJob {
  std::string series;
  int family = -1;
  std::function<TestOutcome(const RepData&, double)> eval;
};

struct BiasJob {
  std::string name;
  std::function<EstimateOutcome(const RepData&)> eval;
};

void ensure_zda(GeneratedDesign& gd) {
  if (!gd.zda) gd.zda = compute_theta(gd.bundle);
}

void ensure_arw_weights(GeneratedDesign& gd) {
  ensure_zda(gd);
  if (!gd.arw_weights)
    gd.arw_weights = phi_w_weight_matrix(gd.bundle, *gd.zda);
}

void ensure_naive_view(GeneratedDesign& gd) {
  if (!gd.naive_view)
    gd.naive_view.emplace(ProjectionBundle::from_projection(
        gd.bundle.p_perp(), gd.bundle.rank_perp()));
}

std::vector<StatJob> make_stat_jobs(GeneratedDesign& gd, bool& need_resid) {
  const SimDesign& d = gd.spec;
  const bool groups = d.kind == DesignKind::kGroups;
  std::vector<std::string> list = d.statistics;
  if (list.empty())
    list = groups ? std::vector<std::string>{"ar:phi1", "ar:phi2", "lm:psi1",
                                             "lm:psi2"}
                  : std::vector<std::string>{"arw", "ar1", "ar2"};

  const double alpha = d.alpha;
  std::vector<StatJob> jobs;
  for (const std::string& name : list) {
    StatJob job;
    job.series = name;
    if (name == "ar:phi1" || name == "ar:phi2" || name == "ar:phi3") {
      if (!groups)
        throw InvalidInput(
            "statistic '" + name +
            "' runs on group designs; controls designs use arw/ar1/ar2");
      const PhiChoice choice = name == "ar:phi1"   ? PhiChoice::kPhi1
                               : name == "ar:phi2" ? PhiChoice::kPhi2
                                                   : PhiChoice::kPhi3;
      job.family = 0;
      job.eval = [&gd, choice, alpha](const RepData& rd, double b0) {
        return ar_loo(rd.y, rd.x, gd.bundle, b0, choice, alpha);
      };
    } else if (name == "lm:psi1" || name == "lm:psi2") {
      if (!groups)
        throw InvalidInput(
            "statistic '" + name +
            "' runs on group designs; controls designs use arw/ar1/ar2");
      const PsiChoice choice =
          name == "lm:psi1" ? PsiChoice::kPsi1 : PsiChoice::kPsi2;
      job.family = 1;
      job.eval = [&gd, choice, alpha](const RepData& rd, double b0) {
        return lm_loo(rd.y, rd.x, gd.bundle, b0, choice, alpha);
      };
    } else if (name == "arw") {
      ensure_arw_weights(gd);
      job.family = 0;
      job.eval = [&gd, alpha](const RepData& rd, double b0) {
        return ar_w(rd.y, rd.x, gd.bundle, *gd.zda, b0, alpha,
                    *gd.arw_weights);
      };
    } else if (name == "ar1" || name == "ar2") {
      if (groups)
        throw InvalidInput("statistic '" + name +
                           "' is a controls-design comparator");
      ensure_naive_view(gd);
      job.family = -1;
      if (name == "ar1") {
        need_resid = true;
        job.eval = [&gd, alpha](const RepData& rd, double b0) {
          return ar_loo(rd.my, rd.mx, *gd.naive_view, b0, PhiChoice::kPhi2,
                        alpha);
        };
      } else {
        job.eval = [&gd, alpha](const RepData& rd, double b0) {
          return ar_loo(rd.y, rd.x, *gd.naive_view, b0, PhiChoice::kPhi2,
                        alpha);
        };
      }
    } else {
      throw InvalidInput("unknown statistic '" + name + "'");
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

std::vector<BiasJob> make_bias_jobs(GeneratedDesign& gd) {
  const SimDesign& d = gd.spec;
  const bool groups = d.kind == DesignKind::kGroups;
  std::vector<std::string> list = d.estimators;
  if (list.empty())
    list = groups ? std::vector<std::string>{"tsls", "jive1", "jive2"}
                  : std::vector<std::string>{"beta1", "beta2", "beta3"};

  std::vector<BiasJob> jobs;
  for (const std::string& name : list) {
    BiasJob job;
    job.name = name;
    if (name == "tsls") {
      job.eval = [&gd](const RepData& rd) {
        return tsls(rd.y, rd.x, gd.bundle);
      };
    } else if (name == "jive1") {
      job.eval = [&gd](const RepData& rd) {
        return jive1(rd.y, rd.x, gd.bundle);
      };
    } else if (name == "jive2") {
      job.eval = [&gd](const RepData& rd) {
        return jive2(rd.y, rd.x, gd.bundle);
      };
    } else if (name == "beta1") {
      job.eval = [&gd](const RepData& rd) {
        return beta1_ijive(rd.y, rd.x, gd.bundle);
      };
    } else if (name == "beta2") {
      job.eval = [&gd](const RepData& rd) {
        return beta2_naive(rd.y, rd.x, gd.bundle);
      };
    } else if (name == "beta3") {
      ensure_zda(gd);
      job.eval = [&gd](const RepData& rd) {
        return beta3_zero_diag(rd.y, rd.x, gd.bundle, *gd.zda);
      };
    } else {
      throw InvalidInput("unknown estimator '" + name + "'");
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

struct RepRecord {
  std::vector<std::uint8_t> cell;  // 0 accept, 1 reject, 2 error
  std::vector<double> bias;        // NaN when the estimator threw
};

SimReport run_core(const SimDesign& d, std::vector<double> deltas,
                   bool with_stats, bool with_bias) {
  const auto t0 = std::chrono::steady_clock::now();
  d.validate();
  GeneratedDesign gd = build_design(d);

  bool need_resid = false;
  std::vector<StatJob> sjobs;
  if (with_stats) sjobs = make_stat_jobs(gd, need_resid);
  std::vector<BiasJob> bjobs;
  if (with_bias) bjobs = make_bias_jobs(gd);

  const int S = static_cast<int>(sjobs.size());
  const int D = with_stats ? static_cast<int>(deltas.size()) : 0;
  const int B = static_cast<int>(bjobs.size());
  const int reps = d.reps;

  auto eval_rep = [&](int r, RepData& rd, RepRecord& rec) {
    draw_rep(gd, r, rd.y, rd.x);
    if (need_resid) {
      rd.my.noalias() = gd.bundle.m_w() * rd.y;
      rd.mx.noalias() = gd.bundle.m_w() * rd.x;
    }
    rec.cell.assign(static_cast<std::size_t>(S) * D, 0);
    for (int s = 0; s < S; ++s) {
      for (int k = 0; k < D; ++k) {
        const double beta0 = d.beta_true - deltas[k];
        try {
          rec.cell[static_cast<std::size_t>(s) * D + k] =
              sjobs[s].eval(rd, beta0).rejected ? 1 : 0;
        } catch (const Error&) {
          rec.cell[static_cast<std::size_t>(s) * D + k] = 2;
        }
      }
    }
    rec.bias.assign(B, kNan);
    for (int b = 0; b < B; ++b) {
      try {
        rec.bias[b] =
            (bjobs[b].eval(rd).beta_hat - d.beta_true) / d.beta_true;
      } catch (const Error&) {
      }
    }
  };

  std::vector<RepRecord> recs(reps);
  {
    // First replication runs alone so every lazy design cache is built
    // before the workers start.
    RepData rd;
    eval_rep(0, rd, recs[0]);
  }
  if (reps > 1) {
    std::atomic<int> cursor{1};
    auto work = [&]() {
      RepData rd;
      for (;;) {
        const int r = cursor.fetch_add(1);
        if (r >= reps) break;
        eval_rep(r, rd, recs[r]);
      }
    };
    const unsigned hc = std::thread::hardware_concurrency();
    const int nthreads =
        std::clamp(hc == 0 ? 1 : static_cast<int>(hc), 1,
                   std::min(reps - 1, 8));
    std::vector<std::thread> pool;
    for (int t = 0; t + 1 < nthreads; ++t) pool.emplace_back(work);
    work();
    for (std::thread& th : pool) th.join();
  }

  SimReport rpt;
  rpt.design_name = d.name;
  rpt.seed = d.seed;
  rpt.reps = reps;
  rpt.alpha = d.alpha;
  rpt.notes = gd.notes;

  // Large-sample predictions per alternative (group designs only).
  std::vector<PowerPair> predictions(D);
  const bool groups = d.kind == DesignKind::kGroups;
  if (with_stats && groups && D > 0) {
    const int n = gd.bundle.n();
    const double k = static_cast<double>(gd.strength_rank);
    // E over the first-stage noise of the score normalizer adds the
    // off-diagonal squared-projection mass once per observation.
    const double sump2_off =
        gd.bundle.p_sq().sum() - gd.bundle.hat_p_perp().cwiseAbs2().sum();
    for (int kd = 0; kd < D; ++kd) {
      const double dl = deltas[kd];
      const double s2 = 1.0 + 2.0 * dl * d.rho + dl * dl;
      const double gm = d.rho + dl;
      const double tphi =
          true_phi(Eigen::VectorXd::Constant(n, s2), gd.bundle);
      const double tpsi =
          true_psi(Eigen::VectorXd::Constant(n, s2),
                   Eigen::VectorXd::Constant(n, gm), gd.m, gd.bundle) +
          s2 * sump2_off / k;
      predictions[kd] =
          theoretical_power(gd.mu2, gd.strength_rank, tphi, tpsi, dl, d.alpha);
    }
  }

  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < D; ++k) {
      SimCell cell;
      cell.series = sjobs[s].series;
      cell.delta = deltas[k];
      cell.reps = reps;
      int rej = 0, err = 0;
      for (int r = 0; r < reps; ++r) {
        const std::uint8_t c = recs[r].cell[static_cast<std::size_t>(s) * D + k];
        if (c == 1) ++rej;
        if (c == 2) ++err;
      }
      cell.rejections = rej;
      cell.errors = err;
      const int good = reps - err;
      cell.rate = good > 0 ? static_cast<double>(rej) / good : 0.0;
      cell.mc_se =
          good > 0 ? std::sqrt(cell.rate * (1.0 - cell.rate) / good) : 0.0;
      if (groups && sjobs[s].family == 0)
        cell.theory = predictions[k].ar;
      else if (groups && sjobs[s].family == 1)
        cell.theory = predictions[k].lm;
      rpt.cells.push_back(std::move(cell));
    }
  }

  for (int b = 0; b < B; ++b) {
    SimBias sb;
    sb.estimator = bjobs[b].name;
    sb.reps = reps;
    double sum = 0.0;
    int good = 0;
    for (int r = 0; r < reps; ++r) {
      const double v = recs[r].bias[b];
      if (std::isfinite(v)) {
        sum += v;
        ++good;
      }
    }
    sb.degenerate = reps - good;
    if (good > 0) {
      const double mean = sum / good;
      double ss = 0.0;
      for (int r = 0; r < reps; ++r) {
        const double v = recs[r].bias[b];
        if (std::isfinite(v)) ss += (v - mean) * (v - mean);
      }
      sb.mean_rel_bias = mean;
      sb.mc_se = good > 1 ? std::sqrt(ss / (good - 1) / good) : 0.0;
    } else {
      sb.mean_rel_bias = kNan;
      sb.mc_se = 0.0;
    }
    rpt.biases.push_back(std::move(sb));
  }

  rpt.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rpt;
}

}  // namespace

SimReport run_size(const SimDesign& design) {
  return run_core(design, {0.0}, true, false);
}

SimReport run_power_curve(const SimDesign& design) {
  if (design.delta_grid.empty())
    throw InvalidInput("design '" + design.name +
                       "': power task needs a nonempty delta_grid");
  return run_core(design, design.delta_grid, true, false);
}

SimReport run_bias(const SimDesign& design) {
  if (design.beta_true == 0.0)
    throw InvalidInput("design '" + design.name +
                       "': relative bias needs beta_true != 0");
  return run_core(design, {}, false, true);
}

namespace {

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_report_csv(const SimReport& report, std::ostream& out) {
  out << "series,delta,reps,value,mc_se,theory,errors\n";
  for (const SimCell& c : report.cells) {
    out << c.series << ',' << fmt_num(c.delta) << ',' << c.reps << ','
        << fmt_num(c.rate) << ',' << fmt_num(c.mc_se) << ','
        << (std::isfinite(c.theory) ? fmt_num(c.theory) : std::string())
        << ',' << c.errors << '\n';
  }
  for (const SimBias& b : report.biases) {
    out << "bias:" << b.estimator << ",0," << b.reps << ','
        << fmt_num(b.mean_rel_bias) << ',' << fmt_num(b.mc_se) << ",,"
        << b.degenerate << '\n';
  }
}

void write_report_json(const SimReport& report, std::ostream& out) {
  nlohmann::json j;
  j["schema_version"] = "1";
  j["report"] = "simulation";
  j["design"] = report.design_name;
  j["seed"] = report.seed;
  j["reps"] = report.reps;
  j["alpha"] = report.alpha;
  nlohmann::json cells = nlohmann::json::array();
  for (const SimCell& c : report.cells) {
    nlohmann::json jc;
    jc["series"] = c.series;
    jc["delta"] = c.delta;
    jc["reps"] = c.reps;
    jc["rejections"] = c.rejections;
    jc["errors"] = c.errors;
    jc["rate"] = c.rate;
    jc["mc_se"] = c.mc_se;
    jc["theory"] =
        std::isfinite(c.theory) ? nlohmann::json(c.theory) : nlohmann::json();
    cells.push_back(std::move(jc));
  }
  j["cells"] = std::move(cells);
  nlohmann::json biases = nlohmann::json::array();
  for (const SimBias& b : report.biases) {
    nlohmann::json jb;
    jb["estimator"] = b.estimator;
    jb["reps"] = b.reps;
    jb["degenerate"] = b.degenerate;
    jb["mean_rel_bias"] = std::isfinite(b.mean_rel_bias)
                              ? nlohmann::json(b.mean_rel_bias)
                              : nlohmann::json();
    jb["mc_se"] = b.mc_se;
    biases.push_back(std::move(jb));
  }
  j["biases"] = std::move(biases);
  j["runtime_seconds"] = report.runtime_seconds;
  j["notes"] = report.notes;
  out << j.dump(2) << '\n';
}

void write_power_svg(const SimReport& report, std::ostream& out) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  constexpr int kW = 680, kH = 440;
  constexpr double x0 = 64, x1 = 652, y0 = 46, y1 = 388;

  // Series in first-appearance order.
  std::vector<std::string> names;
  for (const SimCell& c : report.cells)
    if (std::find(names.begin(), names.end(), c.series) == names.end())
      names.push_back(c.series);

  double dmin = 0.0, dmax = 0.0;
  bool first = true;
  for (const SimCell& c : report.cells) {
    dmin = first ? c.delta : std::min(dmin, c.delta);
    dmax = first ? c.delta : std::max(dmax, c.delta);
    first = false;
  }
  if (first) {
    dmin = -1.0;
    dmax = 1.0;
  }
  if (dmax - dmin < 1e-12) {
    dmin -= 1.0;
    dmax += 1.0;
  }
  const auto sx = [&](double dl) {
    return x0 + (dl - dmin) / (dmax - dmin) * (x1 - x0);
  };
  const auto sy = [&](double rate) { return y1 - rate * (y1 - y0); };

  char buf[256];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << ' ' << kH
      << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << (kW / 2) << "\" y=\"24\" font-family=\"sans-serif\" "
         "font-size=\"15\" text-anchor=\"middle\">"
      << xml_escape(report.design_name)
      << ": rejection rate by alternative</text>\n";

  // Axes and grid.
  for (int t = 0; t <= 5; ++t) {
    const double rate = t / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"#ddd\"/>\n",
                  x0, sy(rate), x1, sy(rate));
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" "
                  "font-size=\"11\" text-anchor=\"end\">%.1f</text>\n",
                  x0 - 6, sy(rate) + 4, rate);
    out << buf;
  }
  std::vector<double> ticks;
  {
    std::vector<double> distinct;
    for (const SimCell& c : report.cells)
      if (std::find(distinct.begin(), distinct.end(), c.delta) ==
          distinct.end())
        distinct.push_back(c.delta);
    std::sort(distinct.begin(), distinct.end());
    if (distinct.size() <= 13 && !distinct.empty()) {
      ticks = distinct;
    } else {
      for (int t = 0; t <= 6; ++t)
        ticks.push_back(dmin + (dmax - dmin) * t / 6.0);
    }
  }
  for (double tv : ticks) {
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"#999\"/>\n",
                  sx(tv), y1, sx(tv), y1 + 5);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" "
                  "font-size=\"11\" text-anchor=\"middle\">%.3g</text>\n",
                  sx(tv), y1 + 18, tv);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                "stroke=\"black\"/>\n",
                x0, y1, x1, y1);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                "stroke=\"black\"/>\n",
                x0, y0, x0, y1);
  out << buf;
  // Nominal level marker.
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                "stroke=\"#aaa\" stroke-dasharray=\"2 3\"/>\n",
                x0, sy(report.alpha), x1, sy(report.alpha));
  out << buf;

  int ci = 0;
  for (const std::string& name : names) {
    const char* color = kColors[ci % 8];
    std::vector<std::pair<double, double>> pts, theo;
    for (const SimCell& c : report.cells) {
      if (c.series != name) continue;
      pts.emplace_back(c.delta, c.rate);
      if (std::isfinite(c.theory)) theo.emplace_back(c.delta, c.theory);
    }
    std::sort(pts.begin(), pts.end());
    std::sort(theo.begin(), theo.end());
    if (!theo.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.3\" stroke-dasharray=\"6 4\" points=\"";
      for (const auto& [dl, rate] : theo) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(dl), sy(rate));
        out << buf;
      }
      out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const auto& [dl, rate] : pts) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(dl), sy(rate));
      out << buf;
    }
    out << "\"/>\n";
    for (const auto& [dl, rate] : pts) {
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.6\" fill=\"%s\"/>\n",
                    sx(dl), sy(rate), color);
      out << buf;
    }
    // Legend entry.
    const double ly = y0 + 10 + 16.0 * ci;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"%s\" stroke-width=\"2\"/>\n",
                  x0 + 10, ly, x0 + 34, ly, color);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" "
                  "font-size=\"12\">%s</text>\n",
                  x0 + 40, ly + 4, xml_escape(name).c_str());
    out << buf;
    ++ci;
  }
  out << "<text x=\"" << ((x0 + x1) / 2)
      << "\" y=\"" << (kH - 6)
      << "\" font-family=\"sans-serif\" font-size=\"12\" "
         "text-anchor=\"middle\">alternative offset (dashed: large-sample "
         "prediction)</text>\n";
  out << "</svg>\n";
}

}  // namespace manyiv
