#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rpmdp/rng.hpp"

namespace rpmdp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error taxonomy: structural = tensor shapes inconsistent; validation =
// shapes fine but a model invariant is broken; generation/solver map to the
// CLI exit codes (2 = validation, 3 = solver).
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kSupportEps = 1e-12;   // occupancy below this = off support
inline constexpr double kDecisionEps = 1e-6;   // attackable/boundary/robust band
inline constexpr double kNoMarginSentinel = 1e30;  // no competing action anywhere

// ---------------------------------------------------------------------------
// Finite-horizon linear MDP (stage count H, feature dimension d):
//   reward_h(s,a)   = <phi_h(s,a), theta_h>
//   P_h(s'|s,a)     = sum_i phi_h(s,a)[i] * mu_h[i][s']
// phi rows live in the (S*A) x d matrix per stage, row index s*A + a.
// ---------------------------------------------------------------------------
struct LinearMdp {
  int H = 0, S = 0, A = 0, d = 0;
  std::vector<Mat> phi;    // H of (S*A) x d
  std::vector<Vec> theta;  // H of d
  std::vector<Mat> mu;     // H of d x S
  Vec rho;                 // S
  double noise_sigma = 0.0;

  int row(int s, int a) const { return s * A + a; }

  Mat::ConstRowXpr feat(int h, int s, int a) const { return phi[h].row(row(s, a)); }

  double reward(int h, int s, int a) const { return feat(h, s, a).dot(theta[h]); }

  // Induced next-state distribution, as computed (may carry float slack).
  Vec trans(int h, int s, int a) const {
    return (feat(h, s, a) * mu[h]).transpose();
  }

  // Full (S*A) x S induced transition table for one stage.
  Mat trans_table(int h) const { return phi[h] * mu[h]; }
};

// Feature-only view: exactly what learners and black-box attackers are
// allowed to see (no theta, no mu, no rho).
struct FeatureMap {
  int H = 0, S = 0, A = 0, d = 0;
  std::vector<Mat> phi;

  static FeatureMap of(const LinearMdp& m) { return FeatureMap{m.H, m.S, m.A, m.d, m.phi}; }

  int row(int s, int a) const { return s * A + a; }
  Mat::ConstRowXpr feat(int h, int s, int a) const { return phi[h].row(row(s, a)); }
};

// ---------------------------------------------------------------------------
// Policies: deterministic (h,s) -> a, or stochastic (h,s) -> distribution.
// ---------------------------------------------------------------------------
struct Policy {
  bool stochastic = false;
  Eigen::MatrixXi actions;  // H x S, deterministic case
  std::vector<Mat> probs;   // H of S x A, stochastic case

  static Policy deterministic(Eigen::MatrixXi acts) {
    Policy p;
    p.actions = std::move(acts);
    return p;
  }
  static Policy from_probs(std::vector<Mat> pr) {
    Policy p;
    p.stochastic = true;
    p.probs = std::move(pr);
    return p;
  }
  // Constant-action policy, handy in tests.
  static Policy constant(int H, int S, int a) {
    return deterministic(Eigen::MatrixXi::Constant(H, S, a));
  }

  int at(int h, int s) const {
    if (stochastic) throw StructuralError("Policy::at on stochastic policy");
    return actions(h, s);
  }
  double prob(int h, int s, int a) const {
    if (stochastic) return probs[h](s, a);
    return actions(h, s) == a ? 1.0 : 0.0;
  }
  bool defined_for(const LinearMdp& m) const {
    if (stochastic)
      return int(probs.size()) == m.H && probs[0].rows() == m.S && probs[0].cols() == m.A;
    return actions.rows() == m.H && actions.cols() == m.S;
  }
};

struct Occupancy {
  Mat d_occ;  // H x S
  double support_eps = kSupportEps;

  bool on(int h, int s) const { return d_occ(h, s) > support_eps; }
  std::vector<int> support(int h) const {
    std::vector<int> out;
    for (int s = 0; s < d_occ.cols(); ++s)
      if (on(h, s)) out.push_back(s);
    return out;
  }
};

struct QFunction {
  std::vector<Mat> q;          // H of S x A
  Mat v;                       // H x S stage values under the defining policy
  std::vector<Vec> w;          // least-squares fit q[h] ~ phi[h] * w[h]
  std::vector<double> residual;  // max |phi*w - q| per stage
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------
struct Violation {
  std::string what;
  double magnitude = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const {
    std::ostringstream os;
    for (const auto& v : violations) os << v.what << " (magnitude " << v.magnitude << ")\n";
    return os.str();
  }
};

namespace detail {
inline void check_shapes(const LinearMdp& m) {
  if (m.H < 1 || m.S < 1 || m.A < 1 || m.d < 1)
    throw StructuralError("LinearMdp: H, S, A, d must all be >= 1");
  if (int(m.phi.size()) != m.H || int(m.theta.size()) != m.H || int(m.mu.size()) != m.H)
    throw StructuralError("LinearMdp: phi/theta/mu must have H stages");
  for (int h = 0; h < m.H; ++h) {
    if (m.phi[h].rows() != int(m.S) * m.A || m.phi[h].cols() != m.d)
      throw StructuralError("LinearMdp: phi stage " + std::to_string(h) + " must be (S*A) x d");
    if (m.theta[h].size() != m.d)
      throw StructuralError("LinearMdp: theta stage " + std::to_string(h) + " must have d entries");
    if (m.mu[h].rows() != m.d || m.mu[h].cols() != m.S)
      throw StructuralError("LinearMdp: mu stage " + std::to_string(h) + " must be d x S");
  }
  if (m.rho.size() != m.S) throw StructuralError("LinearMdp: rho must have S entries");
  if (m.noise_sigma < 0) throw StructuralError("LinearMdp: noise_sigma must be >= 0");
}
}  // namespace detail

// Lists every broken model invariant (empty list = valid). Shape mismatches
// throw StructuralError instead of being reported.
inline ValidationReport validate(const LinearMdp& m) {
  detail::check_shapes(m);
  ValidationReport rep;
  auto flag = [&rep](std::string what, double mag) {
    rep.violations.push_back({std::move(what), mag});
  };
  const double sqrt_d = std::sqrt(double(m.d));
  for (int h = 0; h < m.H; ++h) {
    for (int s = 0; s < m.S; ++s)
      for (int a = 0; a < m.A; ++a) {
        const double n = m.feat(h, s, a).norm();
        if (n > 1.0 + 1e-12)
          flag("phi norm > 1 at (h=" + std::to_string(h) + ",s=" + std::to_string(s) +
                   ",a=" + std::to_string(a) + ")",
               n - 1.0);
        const double r = m.reward(h, s, a);
        if (r < -1e-9 || r > 1.0 + 1e-9)
          flag("reward outside [0,1] at (h=" + std::to_string(h) + ",s=" + std::to_string(s) +
                   ",a=" + std::to_string(a) + ")",
               std::max(-r, r - 1.0));
      }
    const double tn = m.theta[h].norm();
    if (tn > sqrt_d + 1e-9)
      flag("theta norm > sqrt(d) at h=" + std::to_string(h), tn - sqrt_d);
    for (int i = 0; i < m.d; ++i) {
      const double rs = m.mu[h].row(i).sum();
      if (std::abs(rs - 1.0) > 1e-9)
        flag("mu row sum != 1 at (h=" + std::to_string(h) + ",i=" + std::to_string(i) + ")",
             std::abs(rs - 1.0));
      const double mn = m.mu[h].row(i).minCoeff();
      if (mn < -1e-12)
        flag("mu row negative at (h=" + std::to_string(h) + ",i=" + std::to_string(i) + ")",
             -mn);
    }
    const Mat P = m.trans_table(h);
    for (int s = 0; s < m.S; ++s)
      for (int a = 0; a < m.A; ++a) {
        const auto prow = P.row(m.row(s, a));
        const double lo = prow.minCoeff(), hi = prow.maxCoeff(), sum = prow.sum();
        if (lo < -1e-9)
          flag("induced P negative at (h=" + std::to_string(h) + ",s=" + std::to_string(s) +
                   ",a=" + std::to_string(a) + ")",
               -lo);
        if (hi > 1.0 + 1e-9)
          flag("induced P > 1 at (h=" + std::to_string(h) + ",s=" + std::to_string(s) +
                   ",a=" + std::to_string(a) + ")",
               hi - 1.0);
        if (std::abs(sum - 1.0) > 1e-9)
          flag("induced P row sum != 1 at (h=" + std::to_string(h) + ",s=" + std::to_string(s) +
                   ",a=" + std::to_string(a) + ")",
               std::abs(sum - 1.0));
      }
  }
  if (m.rho.minCoeff() < 0) flag("rho negative entry", -m.rho.minCoeff());
  if (std::abs(m.rho.sum() - 1.0) > 1e-12) flag("rho sum != 1", std::abs(m.rho.sum() - 1.0));
  return rep;
}

inline void require_valid(const LinearMdp& m) {
  auto rep = validate(m);
  if (!rep.ok()) throw ValidationError("invalid LinearMdp:\n" + rep.to_string());
}

// ---------------------------------------------------------------------------
// Exact computations
// ---------------------------------------------------------------------------

// State-visitation recursion d_1 = rho, d_{h+1}(s') = sum_{s,a} d_h(s) pi P.
inline Occupancy occupancy(const LinearMdp& m, const Policy& pi) {
  require_valid(m);
  if (!pi.defined_for(m)) throw StructuralError("occupancy: policy shape mismatch");
  Occupancy occ;
  occ.d_occ = Mat::Zero(m.H, m.S);
  occ.d_occ.row(0) = m.rho.transpose();
  for (int h = 0; h + 1 < m.H; ++h) {
    Eigen::RowVectorXd next = Eigen::RowVectorXd::Zero(m.S);
    for (int s = 0; s < m.S; ++s) {
      const double ds = occ.d_occ(h, s);
      if (ds <= 0.0) continue;
      if (pi.stochastic) {
        for (int a = 0; a < m.A; ++a) {
          const double p = pi.prob(h, s, a);
          if (p > 0.0) next += ds * p * (m.feat(h, s, a) * m.mu[h]);
        }
      } else {
        next += ds * (m.feat(h, s, pi.at(h, s)) * m.mu[h]);
      }
    }
    occ.d_occ.row(h + 1) = next;
  }
  return occ;
}

namespace detail {
inline void fit_w(const LinearMdp& m, QFunction& qf) {
  qf.w.resize(m.H);
  qf.residual.resize(m.H);
  for (int h = 0; h < m.H; ++h) {
    Vec flat(m.S * m.A);
    for (int s = 0; s < m.S; ++s)
      for (int a = 0; a < m.A; ++a) flat(m.row(s, a)) = qf.q[h](s, a);
    qf.w[h] = m.phi[h].colPivHouseholderQr().solve(flat);
    qf.residual[h] = (m.phi[h] * qf.w[h] - flat).cwiseAbs().maxCoeff();
  }
}
}  // namespace detail

// Q of a fixed policy, optionally under replaced reward parameters theta'.
// Q_h(s,a) = <phi, theta'_h> + sum_{s'} P_h(s'|s,a) Q_{h+1}(s', pi(s')).
inline QFunction q_policy(const LinearMdp& m, const Policy& pi,
                          const std::vector<Vec>* theta_override = nullptr) {
  require_valid(m);
  if (!pi.defined_for(m)) throw StructuralError("q_policy: policy shape mismatch");
  if (theta_override) {
    if (int(theta_override->size()) != m.H) throw StructuralError("theta_override: need H vectors");
    for (const auto& t : *theta_override)
      if (t.size() != m.d) throw StructuralError("theta_override: vector dim != d");
  }
  QFunction qf;
  qf.q.assign(m.H, Mat::Zero(m.S, m.A));
  qf.v = Mat::Zero(m.H, m.S);
  Vec v_next = Vec::Zero(m.S);
  for (int h = m.H - 1; h >= 0; --h) {
    const Vec& th = theta_override ? (*theta_override)[h] : m.theta[h];
    Vec flat = m.phi[h] * th;
    if (h + 1 < m.H) flat += m.trans_table(h) * v_next;
    for (int s = 0; s < m.S; ++s)
      for (int a = 0; a < m.A; ++a) qf.q[h](s, a) = flat(m.row(s, a));
    for (int s = 0; s < m.S; ++s) {
      double v = 0.0;
      if (pi.stochastic)
        for (int a = 0; a < m.A; ++a) v += pi.prob(h, s, a) * qf.q[h](s, a);
      else
        v = qf.q[h](s, pi.at(h, s));
      qf.v(h, s) = v;
    }
    v_next = qf.v.row(h).transpose();
  }
  detail::fit_w(m, qf);
  return qf;
}

// Backward induction for Q*; greedy ties break to the lowest action index.
inline std::pair<QFunction, Policy> q_optimal(const LinearMdp& m) {
  require_valid(m);
  QFunction qf;
  qf.q.assign(m.H, Mat::Zero(m.S, m.A));
  qf.v = Mat::Zero(m.H, m.S);
  Eigen::MatrixXi greedy(m.H, m.S);
  Vec v_next = Vec::Zero(m.S);
  for (int h = m.H - 1; h >= 0; --h) {
    Vec flat = m.phi[h] * m.theta[h];
    if (h + 1 < m.H) flat += m.trans_table(h) * v_next;
    for (int s = 0; s < m.S; ++s) {
      int best = 0;
      for (int a = 0; a < m.A; ++a) {
        qf.q[h](s, a) = flat(m.row(s, a));
        if (qf.q[h](s, a) > qf.q[h](s, best)) best = a;
      }
      greedy(h, s) = best;
      qf.v(h, s) = qf.q[h](s, best);
    }
    v_next = qf.v.row(h).transpose();
  }
  detail::fit_w(m, qf);
  return {std::move(qf), Policy::deterministic(std::move(greedy))};
}

// One-hot embedding of a reward/transition table (Def.-2-style tabular MDP).
// rewards: H of S x A in [0,1]; transitions: H of (S*A) x S stochastic rows.
inline LinearMdp make_tabular(const std::vector<Mat>& rewards,
                              const std::vector<Mat>& transitions, const Vec& rho) {
  if (rewards.empty() || rewards.size() != transitions.size())
    throw StructuralError("make_tabular: rewards/transitions stage mismatch");
  const int H = int(rewards.size());
  const int S = int(rewards[0].rows());
  const int A = int(rewards[0].cols());
  LinearMdp m;
  m.H = H;
  m.S = S;
  m.A = A;
  m.d = S * A;
  m.rho = rho;
  m.phi.assign(H, Mat::Zero(S * A, m.d));
  m.theta.assign(H, Vec::Zero(m.d));
  m.mu.assign(H, Mat::Zero(m.d, S));
  for (int h = 0; h < H; ++h) {
    if (rewards[h].rows() != S || rewards[h].cols() != A ||
        transitions[h].rows() != S * A || transitions[h].cols() != S)
      throw StructuralError("make_tabular: stage " + std::to_string(h) + " shape mismatch");
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const int i = s * A + a;
        const double r = rewards[h](s, a);
        if (r < 0.0 || r > 1.0)
          throw ValidationError("make_tabular: reward outside [0,1] at (h=" + std::to_string(h) +
                                ",s=" + std::to_string(s) + ",a=" + std::to_string(a) + ")");
        const double rowsum = transitions[h].row(i).sum();
        if (std::abs(rowsum - 1.0) > 1e-9 || transitions[h].row(i).minCoeff() < 0.0)
          throw ValidationError("make_tabular: non-stochastic transition row at (h=" +
                                std::to_string(h) + ",s=" + std::to_string(s) +
                                ",a=" + std::to_string(a) + ")");
        m.phi[h](i, i) = 1.0;
        m.theta[h](i) = r;
        m.mu[h].row(i) = transitions[h].row(i);
      }
  }
  require_valid(m);
  return m;
}

// One executed step of an episode; s_next = -1 on the final stage (the
// environment draws no successor there).
struct Step {
  int h = 0, s = 0, a = 0;
  double clean_reward = 0.0;
  int s_next = -1;
};
using Episode = std::vector<Step>;  // exactly H steps

// ---------------------------------------------------------------------------
// Environment sampling. Draw order per episode is fixed and documented:
//   1 draw for the initial state, then per step h: 1 draw for the next state
//   (only for h < H), then 1 gaussian noise draw (only when noise_sigma > 0).
// ---------------------------------------------------------------------------
inline int sample_initial(const LinearMdp& m, Rng& rng) {
  return rng.categorical(m.rho.data(), m.S);
}

// Entries in [-1e-9, 0) are treated as zero mass (validation already bounds
// how negative they may be).
inline int sample_next(const LinearMdp& m, int h, int s, int a, Rng& rng) {
  const Vec p = m.trans(h, s, a);
  return rng.categorical(p.data(), m.S);
}

inline double sample_reward(const LinearMdp& m, int h, int s, int a, Rng& rng) {
  double r = m.reward(h, s, a);
  if (m.noise_sigma > 0.0)
    r = std::clamp(r + m.noise_sigma * rng.gaussian(), 0.0, 1.0);
  return r;
}

}  // namespace rpmdp
