#include "manyiv/projection.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <utility>

#include "manyiv/errors.hpp"

namespace manyiv {
namespace {

constexpr double kRankRelTol = 1e-10;

struct QrPieces {
  Eigen::MatrixXd thin_q;  // n x rank, orthonormal columns
  int rank = 0;
  std::vector<int> retained;
};

// Rank-revealing factorization. A column counts toward the rank while its
// R diagonal exceeds kRankRelTol times the largest R diagonal.
QrPieces factor(const Eigen::MatrixXd& cols) {
  QrPieces out;
  const int n = static_cast<int>(cols.rows());
  if (n == 0 || cols.cols() == 0) return out;
  if (!cols.allFinite())
    throw InvalidInput("projection input has non-finite entries");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cols);
  qr.setThreshold(kRankRelTol);
  const int r = static_cast<int>(qr.rank());
  out.rank = r;
  if (r == 0) return out;
  const auto& perm = qr.colsPermutation().indices();
  out.retained.assign(perm.data(), perm.data() + r);
  std::sort(out.retained.begin(), out.retained.end());
  out.thin_q = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
  return out;
}

// Symmetric rank-k product q q' with the upper triangle mirrored from the
// lower one, so the result is symmetric to the last bit.
Eigen::MatrixXd orthonormal_to_projection(const Eigen::MatrixXd& thin_q,
                                          int n) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  if (thin_q.cols() > 0)
    acc.selfadjointView<Eigen::Lower>().rankUpdate(thin_q, 1.0);
  Eigen::MatrixXd full = acc.selfadjointView<Eigen::Lower>();
  return full;
}

void check_projection(const Eigen::MatrixXd& p, int expected_rank) {
  if (p.rows() == 0) return;
  const double asym = (p - p.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) {
    std::ostringstream os;
    os << "projection asymmetry " << asym << " exceeds 1e-12";
    throw Error(os.str());
  }
  const double idem = (p * p - p).cwiseAbs().maxCoeff();
  if (idem > 1e-9) {
    std::ostringstream os;
    os << "projection idempotency defect " << idem << " exceeds 1e-9";
    throw Error(os.str());
  }
  const double tr = p.trace();
  if (std::abs(tr - expected_rank) >
      1e-8 * std::max(1.0, static_cast<double>(expected_rank))) {
    std::ostringstream os;
    os << "projection trace " << tr << " disagrees with rank "
       << expected_rank;
    throw Error(os.str());
  }
}

Eigen::MatrixXd identity_minus(const Eigen::MatrixXd& p) {
  Eigen::MatrixXd m = -p;
  m.diagonal().array() += 1.0;
  return m;
}

}  // namespace

ProjectionResult build_projection(const Eigen::MatrixXd& cols) {
  ProjectionResult res;
  const int n = static_cast<int>(cols.rows());
  QrPieces qp = factor(cols);
  res.rank = qp.rank;
  res.retained = std::move(qp.retained);
  res.p = orthonormal_to_projection(qp.thin_q, n);
  check_projection(res.p, res.rank);
  return res;
}

std::vector<int> independent_columns(const Eigen::MatrixXd& cols) {
  return factor(cols).retained;
}

Eigen::VectorXd residualize(const Eigen::MatrixXd& annihilator,
                            const Eigen::VectorXd& v) {
  if (annihilator.cols() != v.size())
    throw InvalidInput("residualize: size mismatch");
  return annihilator * v;
}

Eigen::MatrixXd residualize(const Eigen::MatrixXd& annihilator,
                            const Eigen::MatrixXd& v) {
  if (annihilator.cols() != v.rows())
    throw InvalidInput("residualize: size mismatch");
  return annihilator * v;
}

struct ProjectionBundle::Impl {
  int n = 0;
  bool has_controls = false;
  Eigen::MatrixXd z, w;  // retained data columns; empty for views/groups
  std::vector<int> groups;
  bool has_groups = false;

  mutable int rank_z = 0;
  mutable int rank_w = -1, rank_perp = -1, rank_zw = -1;

  mutable std::once_flag p_once, m_once, mw_once, pperp_once, mzw_once,
      psq_once, cw_once;
  mutable Eigen::MatrixXd p, m, mw, pperp, mzw, psq, cw;
  mutable Eigen::VectorXd hat_p, hat_m, hat_mw, hat_pperp, hat_mzw;

  void ensure_p() const {
    std::call_once(p_once, [this] {
      if (p.size() == 0) {
        ProjectionResult pr = build_projection(z);
        p = std::move(pr.p);
        rank_z = pr.rank;
      }
      hat_p = p.diagonal();
    });
  }

  void ensure_m() const {
    ensure_p();
    std::call_once(m_once, [this] {
      m = identity_minus(p);
      hat_m = m.diagonal();
    });
  }

  void ensure_mw() const {
    if (!has_controls) throw InvalidInput("bundle has no control block");
    std::call_once(mw_once, [this] {
      ProjectionResult pw = build_projection(w);
      rank_w = pw.rank;
      mw = identity_minus(pw.p);
      hat_mw = mw.diagonal();
    });
  }

  void ensure_pperp() const {
    if (!has_controls) {
      ensure_p();
      return;
    }
    ensure_mw();
    std::call_once(pperp_once, [this] {
      ProjectionResult pr = build_projection(mw * z);
      pperp = std::move(pr.p);
      rank_perp = pr.rank;
      hat_pperp = pperp.diagonal();
    });
  }

  void ensure_mzw() const {
    if (!has_controls) {
      ensure_m();
      return;
    }
    std::call_once(mzw_once, [this] {
      Eigen::MatrixXd zw(n, z.cols() + w.cols());
      zw << z, w;
      ProjectionResult pr = build_projection(zw);
      rank_zw = pr.rank;
      mzw = identity_minus(pr.p);
      hat_mzw = mzw.diagonal();
    });
  }
};

ProjectionBundle::ProjectionBundle(std::shared_ptr<Impl> impl)
    : impl_(std::move(impl)) {}

ProjectionBundle ProjectionBundle::build(const Dataset& ds) {
  auto impl = std::make_shared<Impl>();
  impl->n = ds.n();
  impl->z = ds.z();
  impl->w = ds.w();
  impl->has_controls = ds.kw() > 0;
  impl->rank_z = ds.kz();
  return ProjectionBundle(std::move(impl));
}

ProjectionBundle ProjectionBundle::from_groups(
    const std::vector<int>& membership) {
  const int n = static_cast<int>(membership.size());
  if (n == 0) throw InvalidInput("empty group membership");
  int g = 0;
  for (int v : membership) {
    if (v < 0) throw InvalidInput("negative group label");
    g = std::max(g, v + 1);
  }
  std::vector<int> sizes(g, 0);
  for (int v : membership) ++sizes[v];
  for (int t = 0; t < g; ++t)
    if (sizes[t] == 0) throw InvalidInput("group label with no members");

  auto impl = std::make_shared<Impl>();
  impl->n = n;
  impl->has_controls = false;
  impl->groups = membership;
  impl->has_groups = true;
  impl->rank_z = g;
  // Exact projection for dummy instruments: 1/n_g within a group.
  impl->p = Eigen::MatrixXd::Zero(n, n);
  std::vector<std::vector<int>> members(g);
  for (int i = 0; i < n; ++i) members[membership[i]].push_back(i);
  for (int t = 0; t < g; ++t) {
    const double v = 1.0 / static_cast<double>(sizes[t]);
    for (int a : members[t])
      for (int b : members[t]) impl->p(a, b) = v;
  }
  check_projection(impl->p, g);
  return ProjectionBundle(std::move(impl));
}

ProjectionBundle ProjectionBundle::from_projection(Eigen::MatrixXd p,
                                                   int rank) {
  if (p.rows() != p.cols()) throw InvalidInput("projection must be square");
  check_projection(p, rank);
  auto impl = std::make_shared<Impl>();
  impl->n = static_cast<int>(p.rows());
  impl->has_controls = false;
  impl->rank_z = rank;
  impl->p = std::move(p);
  return ProjectionBundle(std::move(impl));
}

int ProjectionBundle::n() const { return impl_->n; }
bool ProjectionBundle::has_controls() const { return impl_->has_controls; }

const Eigen::MatrixXd& ProjectionBundle::p() const {
  impl_->ensure_p();
  return impl_->p;
}

const Eigen::MatrixXd& ProjectionBundle::m() const {
  impl_->ensure_m();
  return impl_->m;
}

const Eigen::MatrixXd& ProjectionBundle::p_perp() const {
  impl_->ensure_pperp();
  return impl_->has_controls ? impl_->pperp : impl_->p;
}

const Eigen::MatrixXd& ProjectionBundle::m_w() const {
  impl_->ensure_mw();
  return impl_->mw;
}

const Eigen::MatrixXd& ProjectionBundle::m_zw() const {
  impl_->ensure_mzw();
  return impl_->has_controls ? impl_->mzw : impl_->m;
}

const Eigen::VectorXd& ProjectionBundle::hat_p() const {
  impl_->ensure_p();
  return impl_->hat_p;
}

const Eigen::VectorXd& ProjectionBundle::hat_m() const {
  impl_->ensure_m();
  return impl_->hat_m;
}

const Eigen::VectorXd& ProjectionBundle::hat_p_perp() const {
  impl_->ensure_pperp();
  return impl_->has_controls ? impl_->hat_pperp : impl_->hat_p;
}

const Eigen::VectorXd& ProjectionBundle::hat_m_w() const {
  impl_->ensure_mw();
  return impl_->hat_mw;
}

const Eigen::VectorXd& ProjectionBundle::hat_m_zw() const {
  impl_->ensure_mzw();
  return impl_->has_controls ? impl_->hat_mzw : impl_->hat_m;
}

int ProjectionBundle::rank_z() const {
  impl_->ensure_p();
  return impl_->rank_z;
}

int ProjectionBundle::rank_w() const {
  if (!impl_->has_controls) return 0;
  impl_->ensure_mw();
  return impl_->rank_w;
}

int ProjectionBundle::rank_perp() const {
  impl_->ensure_pperp();
  return impl_->has_controls ? impl_->rank_perp : impl_->rank_z;
}

int ProjectionBundle::rank_zw() const {
  impl_->ensure_mzw();
  return impl_->has_controls ? impl_->rank_zw : impl_->rank_z;
}

const Eigen::MatrixXd& ProjectionBundle::z_cols() const { return impl_->z; }
const Eigen::MatrixXd& ProjectionBundle::w_cols() const { return impl_->w; }

const std::vector<int>* ProjectionBundle::groups() const {
  return impl_->has_groups ? &impl_->groups : nullptr;
}

const Eigen::MatrixXd& ProjectionBundle::p_sq() const {
  impl_->ensure_p();
  std::call_once(impl_->psq_once,
                 [im = impl_.get()] { im->psq = im->p.cwiseProduct(im->p); });
  return impl_->psq;
}

const Eigen::MatrixXd& ProjectionBundle::crossfit_weights() const {
  p_sq();
  impl_->ensure_m();
  std::call_once(impl_->cw_once, [im = impl_.get()] {
    const Eigen::VectorXd& d = im->hat_m;
    Eigen::MatrixXd denom =
        d * d.transpose() + im->m.cwiseProduct(im->m);
    Eigen::Index bi = 0, bj = 0;
    const double dmin = denom.minCoeff(&bi, &bj);
    if (dmin <= 1e-12) {
      std::ostringstream os;
      os << "cross-fit weight denominator " << dmin << " at pair (" << bi
         << "," << bj << ")";
      throw DegenerateDenominator(os.str());
    }
    im->cw = im->psq.cwiseQuotient(denom);
    im->cw.diagonal().setZero();
  });
  return impl_->cw;
}

BalanceReport ProjectionBundle::balance_check() const {
  BalanceReport rep;
  const Eigen::VectorXd& h = hat_p();
  Eigen::Index arg = 0;
  rep.max_leverage = h.size() > 0 ? h.maxCoeff(&arg) : 0.0;
  rep.argmax = static_cast<int>(arg);
  rep.pass = rep.max_leverage <= 0.99;
  rep.warn = rep.pass && rep.max_leverage > 0.9;
  return rep;
}

}  // namespace manyiv
