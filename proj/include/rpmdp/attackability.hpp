#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpmdp/linmdp.hpp"
#include "rpmdp/mdp_io.hpp"
#include "rpmdp/qcqp.hpp"

namespace rpmdp {

// ---------------------------------------------------------------------------
// Affine expansion of target-branch Q-values: for stacked parameters
// y = (theta_1; ...; theta_H) in R^{H*d},
//   Q_h(s,a) under (reward = y, follow pi after (s,a)) = coeff(h,s,a)' y
// with coeff(h,s,a) = e_h (x) phi_h(s,a) + sum_s' P_h(s'|s,a) tgt[h+1][s'].
// tgt rows are kept for every state: deviations can exit the support.
// ---------------------------------------------------------------------------
struct QCoefficients {
  int H = 0, d = 0;
  std::vector<Mat> tgt;  // (H+1) of S x (H*d); tgt[H] = 0
};

inline QCoefficients q_coefficients(const LinearMdp& m, const Policy& pi) {
  if (pi.stochastic) throw ValidationError("q_coefficients: target must be deterministic");
  require_policy_for(pi, m);
  QCoefficients qc;
  qc.H = m.H;
  qc.d = m.d;
  qc.tgt.assign(m.H + 1, Mat::Zero(m.S, m.H * m.d));
  for (int h = m.H - 1; h >= 0; --h) {
    for (int s = 0; s < m.S; ++s) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m.H * m.d);
      row.segment(h * m.d, m.d) = m.feat(h, s, pi.at(h, s));
      if (h + 1 < m.H)
        row.noalias() += (m.feat(h, s, pi.at(h, s)) * m.mu[h]) * qc.tgt[h + 1];
      qc.tgt[h].row(s) = row;
    }
  }
  return qc;
}

inline Vec q_coefficient_row(const LinearMdp& m, const QCoefficients& qc, int h, int s, int a) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m.H * m.d);
  row.segment(h * m.d, m.d) = m.feat(h, s, a);
  if (h + 1 < m.H) row.noalias() += (m.feat(h, s, a) * m.mu[h]) * qc.tgt[h + 1];
  return row.transpose();
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------
struct SolverInfo {
  int iterations = 0;
  double gap = 0.0;
};

struct AttackCertificate {
  double epsilon_star = std::numeric_limits<double>::quiet_NaN();
  std::string verdict;  // attackable | boundary | robust | withheld
  std::string status;   // optimal | numerical_failure
  std::vector<Vec> theta_dagger;
  std::string mode;  // norm_ball | delta_bound
  SolverInfo solver;
  std::optional<double> delta;
  std::optional<Policy> chosen_policy;  // set variant only
  std::optional<std::string> strategy;  // set variant: enumeration | greedy

  bool attackable() const { return verdict == "attackable"; }
};

inline std::string verdict_of(double eps_star) {
  if (eps_star > kDecisionEps) return "attackable";
  if (eps_star < -kDecisionEps) return "robust";
  return "boundary";
}

inline json certificate_to_json(const AttackCertificate& c) {
  json j;
  j["epsilon_star"] = c.epsilon_star;
  j["verdict"] = c.verdict;
  j["status"] = c.status;
  json th = json::array();
  for (const auto& t : c.theta_dagger) {
    json row = json::array();
    for (int i = 0; i < t.size(); ++i) row.push_back(t(i));
    th.push_back(std::move(row));
  }
  j["theta_dagger"] = std::move(th);
  j["mode"] = c.mode;
  j["solver"] = {{"iterations", c.solver.iterations}, {"gap", c.solver.gap}};
  if (c.delta) j["delta"] = *c.delta;
  if (c.chosen_policy) j["chosen_policy"] = policy_to_json(*c.chosen_policy);
  if (c.strategy) j["strategy"] = *c.strategy;
  return j;
}

enum class AttackMode { norm_ball, delta_bound };

namespace detail {

// One assembled instance of the attackability program. branch = policy whose
// Q-values must dominate; is_protected(h,s,a) = true for actions that get no
// margin constraint at a support pair (the branch action itself, or every
// permissible action in the set variant).
struct AssembledProgram {
  Mat margins;   // rows: coeff(branch) - coeff(a), over stacked theta
  Mat eq;        // rows: e_h (x) phi(s, branch)
  Vec eq_rhs;    // clean branch rewards
  std::vector<std::pair<int, int>> support_pairs;
};

inline AssembledProgram assemble(
    const LinearMdp& m, const Policy& branch, const Occupancy& occ,
    const std::function<bool(int, int, int)>& is_protected) {
  AssembledProgram prog;
  const QCoefficients qc = q_coefficients(m, branch);
  const int n = m.H * m.d;
  std::vector<Vec> margin_rows;
  std::vector<Vec> eq_rows;
  std::vector<double> eq_rhs;
  for (int h = 0; h < m.H; ++h)
    for (int s = 0; s < m.S; ++s) {
      if (!occ.on(h, s)) continue;
      prog.support_pairs.emplace_back(h, s);
      const int b = branch.at(h, s);
      Vec eq_row = Vec::Zero(n);
      eq_row.segment(h * m.d, m.d) = m.feat(h, s, b).transpose();
      eq_rows.push_back(std::move(eq_row));
      eq_rhs.push_back(m.reward(h, s, b));
      const Vec c_branch = q_coefficient_row(m, qc, h, s, b);
      for (int a = 0; a < m.A; ++a) {
        if (is_protected(h, s, a)) continue;
        margin_rows.push_back(c_branch - q_coefficient_row(m, qc, h, s, a));
      }
    }
  prog.margins.resize(int(margin_rows.size()), n);
  for (int i = 0; i < int(margin_rows.size()); ++i)
    prog.margins.row(i) = margin_rows[i].transpose();
  prog.eq.resize(int(eq_rows.size()), n);
  prog.eq_rhs.resize(int(eq_rows.size()));
  for (int i = 0; i < int(eq_rows.size()); ++i) {
    prog.eq.row(i) = eq_rows[i].transpose();
    prog.eq_rhs(i) = eq_rhs[i];
  }
  return prog;
}

inline std::vector<Vec> split_stages(const Vec& stacked, int H, int d) {
  std::vector<Vec> out(H);
  for (int h = 0; h < H; ++h) out[h] = stacked.segment(h * d, d);
  return out;
}

inline Vec stack_stages(const std::vector<Vec>& per_stage) {
  const int H = int(per_stage.size());
  const int d = int(per_stage[0].size());
  Vec out(H * d);
  for (int h = 0; h < H; ++h) out.segment(h * d, d) = per_stage[h];
  return out;
}

// Core solve shared by the single-target and set variants.
inline AttackCertificate solve_core(const LinearMdp& m, const Policy& branch,
                                    const Occupancy& occ,
                                    const std::function<bool(int, int, int)>& is_protected,
                                    AttackMode mode, double delta) {
  AttackCertificate cert;
  cert.mode = mode == AttackMode::norm_ball ? "norm_ball" : "delta_bound";
  if (mode == AttackMode::delta_bound) cert.delta = delta;
  const AssembledProgram prog = assemble(m, branch, occ, is_protected);
  const int n_theta = m.H * m.d;
  const Vec theta0 = stack_stages(m.theta);

  if (prog.margins.rows() == 0) {
    cert.epsilon_star = kNoMarginSentinel;
    cert.verdict = "attackable";
    cert.status = "optimal";
    cert.theta_dagger = split_stages(theta0, m.H, m.d);
    return cert;
  }

  auto exact_eps = [&prog](const Vec& theta) {
    return (prog.margins * theta).minCoeff();
  };
  auto polish_equalities = [&prog](Vec theta) {
    // Project onto the equality manifold (min-norm correction) so margins and
    // preserved rewards are exact to machine precision, not solver tolerance.
    if (prog.eq.rows() > 0) {
      const Vec resid = prog.eq_rhs - prog.eq * theta;
      Eigen::CompleteOrthogonalDecomposition<Mat> cod(prog.eq);
      theta += cod.solve(resid);
    }
    return theta;
  };

  if (mode == AttackMode::delta_bound && delta == 0.0) {
    // Rewards are pinned: the program degenerates to evaluating clean margins.
    cert.epsilon_star = exact_eps(theta0);
    cert.verdict = verdict_of(cert.epsilon_star);
    cert.status = "optimal";
    cert.theta_dagger = split_stages(theta0, m.H, m.d);
    return cert;
  }

  // Variables x = (stacked theta; eps).
  const int n = n_theta + 1;
  QcqpProblem qp;
  qp.f = Vec::Zero(n);
  qp.f(n_theta) = -1.0;  // maximize eps
  qp.A_eq = Mat::Zero(prog.eq.rows(), n);
  qp.A_eq.leftCols(n_theta) = prog.eq;
  qp.b_eq = prog.eq_rhs;

  std::vector<Vec> g_rows;
  std::vector<double> g_rhs;
  for (int i = 0; i < prog.margins.rows(); ++i) {
    Vec row = Vec::Zero(n);
    row.head(n_theta) = -prog.margins.row(i).transpose();
    row(n_theta) = 1.0;  // eps <= margin_i
    g_rows.push_back(std::move(row));
    g_rhs.push_back(0.0);
  }
  Vec x0 = Vec::Zero(n);
  if (mode == AttackMode::norm_ball) {
    for (int h = 0; h < m.H; ++h)
      qp.balls.push_back({h * m.d, m.d, std::sqrt(double(m.d))});
    double max_norm = 0.0;
    for (const auto& t : m.theta) max_norm = std::max(max_norm, t.norm());
    const double shrink =
        0.999 * std::min(1.0, max_norm > 0 ? std::sqrt(double(m.d)) / max_norm : 1.0);
    x0.head(n_theta) = shrink * theta0;
  } else {
    for (const auto& [h, s] : prog.support_pairs)
      for (int a = 0; a < m.A; ++a) {
        Vec row = Vec::Zero(n);
        row.segment(h * m.d, m.d) = m.feat(h, s, a).transpose();
        const double clean = m.reward(h, s, a);
        g_rows.push_back(row);
        g_rhs.push_back(clean + delta);
        g_rows.push_back(-row);
        g_rhs.push_back(delta - clean);
      }
    // Margins can be unbounded when deviations reach states outside the
    // support (their branch rewards are unconstrained); cap eps far above any
    // decision-relevant magnitude to keep the program bounded.
    Vec cap = Vec::Zero(n);
    cap(n_theta) = 1.0;
    g_rows.push_back(std::move(cap));
    g_rhs.push_back(10.0 * m.H * (1.0 + delta) + 10.0);
    x0.head(n_theta) = theta0;
  }
  qp.G.resize(int(g_rows.size()), n);
  qp.h.resize(int(g_rows.size()));
  for (int i = 0; i < int(g_rows.size()); ++i) {
    qp.G.row(i) = g_rows[i].transpose();
    qp.h(i) = g_rhs[i];
  }
  x0(n_theta) = (prog.margins * x0.head(n_theta)).minCoeff() - 1.0;

  try {
    const QcqpResult res = solve_qcqp(qp, x0);
    const Vec theta_star = polish_equalities(res.x.head(n_theta));
    cert.epsilon_star = exact_eps(theta_star);
    cert.verdict = verdict_of(cert.epsilon_star);
    cert.status = "optimal";
    cert.theta_dagger = split_stages(theta_star, m.H, m.d);
    cert.solver = {res.iterations, res.gap};
  } catch (const SolverError&) {
    cert.status = "numerical_failure";
    cert.verdict = "withheld";
  }
  return cert;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-target attackability: maximize the worst dominance margin eps of the
// target policy over all deviations at support pairs, preserving the fed
// reward on the target branch, within the chosen perturbation budget.
// ---------------------------------------------------------------------------
inline AttackCertificate solve_attackability(const LinearMdp& m, const Policy& target,
                                             AttackMode mode = AttackMode::norm_ball,
                                             double delta = 0.0) {
  require_valid(m);
  if (target.stochastic) throw ValidationError("solve_attackability: target must be deterministic");
  require_policy_for(target, m);
  if (mode == AttackMode::delta_bound && delta < 0)
    throw ValidationError("solve_attackability: delta must be >= 0");
  const Occupancy occ = occupancy(m, target);
  auto is_protected = [&target](int h, int s, int a) { return target.at(h, s) == a; };
  return detail::solve_core(m, target, occ, is_protected, mode, delta);
}

// ---------------------------------------------------------------------------
// Set variant: the attacker may steer the learner to any policy whose action
// at each state lies in permissible[s]; margins are only required against
// actions outside the set. Chosen policy is reported in the certificate.
// ---------------------------------------------------------------------------
inline constexpr int kEnumerationCap = 64;

inline AttackCertificate solve_attackability_set(
    const LinearMdp& m, const std::vector<std::vector<int>>& permissible,
    const Policy& target_support_policy) {
  require_valid(m);
  if (target_support_policy.stochastic)
    throw ValidationError("solve_attackability_set: target must be deterministic");
  require_policy_for(target_support_policy, m);
  if (int(permissible.size()) != m.S)
    throw ValidationError("solve_attackability_set: need one permissible set per state");
  for (int s = 0; s < m.S; ++s) {
    if (permissible[s].empty())
      throw ValidationError("solve_attackability_set: empty permissible set at state " +
                            std::to_string(s));
    for (int a : permissible[s])
      if (a < 0 || a >= m.A)
        throw ValidationError("solve_attackability_set: action out of range at state " +
                              std::to_string(s));
  }
  auto permitted = [&permissible](int s, int a) {
    for (int x : permissible[s])
      if (x == a) return true;
    return false;
  };
  const Occupancy occ = occupancy(m, target_support_policy);
  for (int h = 0; h < m.H; ++h)
    for (int s = 0; s < m.S; ++s) {
      if (!occ.on(h, s)) continue;
      if (!permitted(s, target_support_policy.at(h, s)))
        throw ValidationError(
            "solve_attackability_set: permissible set must contain the target action at state " +
            std::to_string(s));
      // Closure check: permissible deviations must stay inside the support,
      // otherwise the product of sets does not share one occupancy support.
      if (h + 1 < m.H)
        for (int a : permissible[s]) {
          const Vec p = m.trans(h, s, a);
          for (int s2 = 0; s2 < m.S; ++s2)
            if (p(s2) > kSupportEps && !occ.on(h + 1, s2))
              throw ValidationError(
                  "support_mismatch: permissible action " + std::to_string(a) + " at state " +
                  std::to_string(s) + " stage " + std::to_string(h) +
                  " reaches state " + std::to_string(s2) + " outside the support");
        }
    }

  auto is_protected = [&permitted](int, int s, int a) { return permitted(s, a); };
  auto solve_with = [&](const Policy& branch) {
    return detail::solve_core(m, branch, occ, is_protected, AttackMode::norm_ball, 0.0);
  };
  auto better = [](const AttackCertificate& a, const AttackCertificate& b) {
    if (a.status != "optimal") return false;
    if (b.status != "optimal") return true;
    return a.epsilon_star > b.epsilon_star;  // ties keep the earlier candidate
  };

  // The chosen policy is a per-state (stage-constant) selection; states whose
  // set is a singleton are forced, so only multi-action states enumerate.
  std::vector<int> free_states;
  double product_size = 1.0;
  for (int s = 0; s < m.S; ++s) {
    if (permissible[s].size() > 1) free_states.push_back(s);
    product_size *= double(permissible[s].size());
  }
  auto broadcast = [&](const std::vector<int>& choice_by_state) {
    Eigen::MatrixXi acts(m.H, m.S);
    for (int h = 0; h < m.H; ++h)
      for (int s = 0; s < m.S; ++s) acts(h, s) = choice_by_state[s];
    return Policy::deterministic(std::move(acts));
  };
  std::vector<int> base_choice(m.S);
  for (int s = 0; s < m.S; ++s) base_choice[s] = target_support_policy.at(0, s);

  AttackCertificate best;
  best.status = "numerical_failure";
  best.verdict = "withheld";
  std::vector<int> best_choice = base_choice;

  if (product_size <= double(kEnumerationCap)) {
    std::vector<int> idx(free_states.size(), 0);
    while (true) {
      std::vector<int> choice = base_choice;
      for (size_t k = 0; k < free_states.size(); ++k)
        choice[free_states[k]] = permissible[free_states[k]][idx[k]];
      AttackCertificate cand = solve_with(broadcast(choice));
      if (better(cand, best)) {
        best = std::move(cand);
        best_choice = choice;
      }
      size_t k = 0;
      for (; k < idx.size(); ++k) {
        if (++idx[k] < int(permissible[free_states[k]].size())) break;
        idx[k] = 0;
      }
      if (k == idx.size()) break;
      if (free_states.empty()) break;
    }
    best.strategy = "enumeration";
  } else {
    std::vector<int> choice = base_choice;
    best = solve_with(broadcast(choice));
    best_choice = choice;
    for (int s : free_states) {
      for (int a : permissible[s]) {
        if (a == best_choice[s]) continue;
        std::vector<int> trial = best_choice;
        trial[s] = a;
        AttackCertificate cand = solve_with(broadcast(trial));
        if (better(cand, best)) {
          best = std::move(cand);
          best_choice = trial;
        }
      }
    }
    best.strategy = "greedy";
  }
  best.chosen_policy = broadcast(best_choice);
  return best;
}

// ---------------------------------------------------------------------------
// Independent feasibility recheck of a certificate: returns the largest
// constraint violation (margins at eps_star, branch-reward equalities, and
// the budget constraint for the certificate's mode).
// ---------------------------------------------------------------------------
inline double check_certificate(const LinearMdp& m, const Policy& target,
                                const AttackCertificate& cert,
                                const std::vector<std::vector<int>>* permissible = nullptr) {
  if (cert.status != "optimal") throw ValidationError("check_certificate: no solution to check");
  const Policy& branch = cert.chosen_policy ? *cert.chosen_policy : target;
  const Occupancy occ = occupancy(m, target);
  const QCoefficients qc = q_coefficients(m, branch);
  const Vec theta = detail::stack_stages(cert.theta_dagger);
  auto no_margin = [&](int h, int s, int a) {
    if (permissible) {
      for (int x : (*permissible)[s])
        if (x == a) return true;
      return false;
    }
    return branch.at(h, s) == a;
  };
  double viol = 0.0;
  const bool sentinel = cert.epsilon_star >= kNoMarginSentinel;
  for (int h = 0; h < m.H; ++h)
    for (int s = 0; s < m.S; ++s) {
      if (!occ.on(h, s)) continue;
      const int b = branch.at(h, s);
      viol = std::max(viol, std::abs(m.feat(h, s, b).dot(cert.theta_dagger[h]) -
                                     m.reward(h, s, b)));
      if (!sentinel) {
        const Vec cb = q_coefficient_row(m, qc, h, s, b);
        for (int a = 0; a < m.A; ++a) {
          if (no_margin(h, s, a)) continue;
          const Vec ca = q_coefficient_row(m, qc, h, s, a);
          viol = std::max(viol, cert.epsilon_star + ca.dot(theta) - cb.dot(theta));
        }
      }
    }
  if (cert.mode == "norm_ball") {
    for (const auto& t : cert.theta_dagger)
      viol = std::max(viol, t.norm() - std::sqrt(double(m.d)));
  } else {
    const double delta = cert.delta.value_or(0.0);
    for (int h = 0; h < m.H; ++h)
      for (int s = 0; s < m.S; ++s) {
        if (!occ.on(h, s)) continue;
        for (int a = 0; a < m.A; ++a)
          viol = std::max(viol, std::abs(m.feat(h, s, a).dot(m.theta[h] -
                                                             cert.theta_dagger[h])) -
                                    delta);
      }
  }
  return viol;
}

// Closed-form feasibility margin for the discounted tabular special case:
// two perturbation radii and a discount give eps* = 2/(1+gamma) (D - D3).
inline double remark_gap_discounted(double D, double D3, double gamma) {
  if (D < 0 || D3 < 0) throw ValidationError("remark_gap_discounted: radii must be >= 0");
  if (gamma < 0 || gamma >= 1)
    throw ValidationError("remark_gap_discounted: domain error, gamma must be in [0,1)");
  return 2.0 / (1.0 + gamma) * (D - D3);
}

}  // namespace rpmdp
