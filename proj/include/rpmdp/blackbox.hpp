#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rpmdp/linmdp.hpp"
#include "rpmdp/qcqp.hpp"

namespace rpmdp {

// Two-stage reward poisoning without model knowledge. The attacker sees only
// the feature map, the target policy, and (per executed step) the visited
// indices and realized clean reward — never theta or mu.
//
// Stage 1 (episodes 1..T1): feed a geometric steering reward phi'(q0 - bhat),
// where q0 comes from a per-stage max-margin program over a small ball and
// bhat is a ridge estimate of the continuation term; freeze the linear form
// once a lower-confidence margin clears eta1. Stage 2 (episodes > T1): fit
// the target branch from clean compliant episodes, design per-stage penalty
// directions orthogonal to the target features, feed clean-minus-penalty on
// deviations, and repay the target-branch debt accumulated in Stage 1.
struct BlackboxConfig {
  long T1 = 1;
  double S_budget = 1.0;
  double eta1 = 0.0;  // <= 0 means the default 1/(2 S_budget)
  double lambda_ridge = 1.0;
  double delta = 0.01;
  std::vector<std::vector<int>> certified_support;  // per stage; empty = all states
  double alpha_scale = 0.5;
  double comp_cap = 1.0;

  double eta1_effective() const { return eta1 > 0 ? eta1 : 1.0 / (2.0 * S_budget); }
};

struct Stage1Program {
  double eps0_star = 0.0;
  std::vector<Vec> q0;  // per stage, = S_budget * w0
  std::string status;   // ok | non_attackable | numerical_failure
};

struct BlackboxReport {
  std::string status = "active";  // active | non_attackable | insufficient_data |
                                  // numerical_failure
  double eps0_star = std::numeric_limits<double>::quiet_NaN();
  long tau_fix = -1;
  bool frozen = false;
  double eps2_star = std::numeric_limits<double>::quiet_NaN();
  long n_clean = 0;
  std::vector<double> debt;          // D_h per stage
  double debt_mass = 0.0;            // sum |D_h|
  double comp_scheduled_mass = 0.0;  // sum of scheduled |c|
};

class BlackboxAttacker {
 public:
  BlackboxAttacker(FeatureMap fm, Policy target, BlackboxConfig cfg)
      : fm_(std::move(fm)), target_(std::move(target)), cfg_(std::move(cfg)) {
    if (target_.stochastic) throw ValidationError("blackbox: target must be deterministic");
    if (target_.actions.rows() != fm_.H || target_.actions.cols() != fm_.S)
      throw ValidationError("blackbox: target policy shape mismatch");
    if (cfg_.T1 < 1) throw ValidationError("blackbox: T1 must be >= 1");
    if (cfg_.S_budget <= 0) throw ValidationError("blackbox: S_budget must be > 0");
    if (cfg_.lambda_ridge <= 0) throw ValidationError("blackbox: lambda_ridge must be > 0");
    if (cfg_.delta <= 0 || cfg_.delta >= 1)
      throw ValidationError("blackbox: delta must be in (0,1)");
    if (!cfg_.certified_support.empty() && int(cfg_.certified_support.size()) != fm_.H)
      throw ValidationError("blackbox: certified_support needs one state set per stage");
    certified_.assign(fm_.H, std::vector<char>(fm_.S, 1));
    if (!cfg_.certified_support.empty()) {
      for (auto& row : certified_) row.assign(fm_.S, 0);
      for (int h = 0; h < fm_.H; ++h)
        for (int s : cfg_.certified_support[h]) {
          if (s < 0 || s >= fm_.S)
            throw ValidationError("blackbox: certified state out of range");
          certified_[h][s] = 1;
        }
      for (int h = 0; h < fm_.H; ++h)
        if (cfg_.certified_support[h].empty())
          throw ValidationError("blackbox: certified support empty at stage " +
                                std::to_string(h));
    }

    stage1_ = stage1_solve(fm_, target_, cfg_, certified_);
    report_.eps0_star = stage1_.eps0_star;
    if (stage1_.status == "numerical_failure") {
      report_.status = "numerical_failure";
    } else if (stage1_.status == "non_attackable") {
      report_.status = "non_attackable";
    }
    lam0_.assign(fm_.H, cfg_.lambda_ridge * Mat::Identity(fm_.d, fm_.d));
    y0_.assign(fm_.H, Vec::Zero(fm_.d));
    bhat_.assign(fm_.H, Vec::Zero(fm_.d));
    theta0_.assign(fm_.H, Vec::Zero(fm_.d));
    debt_.assign(fm_.H, 0.0);
  }

  bool certified(int h, int s) const { return certified_[h][s] != 0; }

  // --- Stage-1 geometric program (feature-only) -----------------------------
  static Stage1Program stage1_solve(const FeatureMap& fm, const Policy& target,
                                    const BlackboxConfig& cfg,
                                    const std::vector<std::vector<char>>& certified) {
    Stage1Program prog;
    prog.q0.assign(fm.H, Vec::Zero(fm.d));
    prog.status = "ok";
    double worst = std::numeric_limits<double>::infinity();
    for (int h = 0; h < fm.H; ++h) {
      std::vector<Vec> rows;  // phi_dagger(s) - phi(s,a)
      for (int s = 0; s < fm.S; ++s) {
        if (!certified[h][s]) continue;
        const int tgt = target.at(h, s);
        for (int a = 0; a < fm.A; ++a) {
          if (a == tgt) continue;
          rows.push_back((fm.feat(h, s, tgt) - fm.feat(h, s, a)).transpose());
        }
      }
      if (rows.empty()) continue;  // no deviation at this stage: vacuous
      const int n = fm.d + 1;
      QcqpProblem qp;
      qp.f = Vec::Zero(n);
      qp.f(fm.d) = -1.0;
      qp.A_eq.resize(0, n);
      qp.b_eq.resize(0);
      qp.G.resize(int(rows.size()), n);
      qp.h = Vec::Zero(int(rows.size()));
      for (int i = 0; i < int(rows.size()); ++i) {
        qp.G.row(i).head(fm.d) = -rows[i].transpose();
        qp.G(i, fm.d) = 1.0;  // eps <= <row, w>
      }
      qp.balls.push_back({0, fm.d, 1.0 / (2.0 * cfg.S_budget)});
      Vec x0 = Vec::Zero(n);
      x0(fm.d) = -1.0;
      try {
        const QcqpResult res = solve_qcqp(qp, x0);
        const Vec w = res.x.head(fm.d);
        double eps_h = std::numeric_limits<double>::infinity();
        for (const auto& r : rows) eps_h = std::min(eps_h, r.dot(w));
        worst = std::min(worst, eps_h);
        prog.q0[h] = cfg.S_budget * w;
      } catch (const SolverError&) {
        prog.status = "numerical_failure";
        return prog;
      }
    }
    if (!std::isfinite(worst)) worst = kNoMarginSentinel;  // no deviations anywhere
    prog.eps0_star = worst;
    if (prog.eps0_star <= 0) prog.status = "non_attackable";
    return prog;
  }

  // Lower-confidence steering margin at episode t computed from the current
  // ridge state: min_h ( S eps0 - 2 sum_{j>=h} Ubar_j ) with per-stage Ubar =
  // sup over certified pairs of beta0 ||phi||_{Lambda0^-1}.
  double gamma1(long t) const {
    const double beta0 =
        cfg_.alpha_scale * std::sqrt(fm_.d * std::log((1.0 + double(t)) / cfg_.delta));
    std::vector<double> ubar(fm_.H, 0.0);
    for (int h = 0; h < fm_.H; ++h) {
      Eigen::LLT<Mat> llt(lam0_[h]);
      double sup = 0.0;
      for (int s = 0; s < fm_.S; ++s) {
        if (!certified(h, s)) continue;
        for (int a = 0; a < fm_.A; ++a) {
          const Vec phi = fm_.feat(h, s, a).transpose();
          sup = std::max(sup, std::sqrt(phi.dot(llt.solve(phi))));
        }
      }
      ubar[h] = beta0 * sup;
    }
    double best = std::numeric_limits<double>::infinity();
    double tail = 0.0;
    for (int h = fm_.H - 1; h >= 0; --h) {
      tail += ubar[h];
      best = std::min(best, cfg_.S_budget * stage1_.eps0_star - 2.0 * tail);
    }
    return best;
  }

  // Process one Stage-1 episode: refresh bhat from history tau < t, check the
  // freeze condition, emit fed rewards, then absorb the episode into the
  // ridge statistics. Returns fed rewards aligned with ep.
  std::vector<double> stage1_update(long t, const Episode& ep) {
    if (int(ep.size()) != fm_.H) throw ValidationError("blackbox: episode must have H steps");
    for (size_t i = 0; i < ep.size(); ++i)
      if (ep[i].h != int(i)) throw ValidationError("blackbox: episode steps out of order");
    for (int h = 0; h < fm_.H; ++h) {
      Eigen::LLT<Mat> llt(lam0_[h]);
      bhat_[h] = llt.solve(y0_[h]);
    }
    if (!frozen_ && gamma1(t) >= cfg_.eta1_effective()) {
      frozen_ = true;
      tau_fix_ = t;
      for (int h = 0; h < fm_.H; ++h) theta0_[h] = stage1_.q0[h] - bhat_[h];
      report_.frozen = true;
      report_.tau_fix = t;
    }
    std::vector<double> fed(ep.size());
    for (size_t i = 0; i < ep.size(); ++i) {
      const Step& st = ep[i];
      if (!certified(st.h, st.s)) {
        fed[i] = st.clean_reward;
        continue;
      }
      const Vec form = frozen_ ? theta0_[st.h] : Vec(stage1_.q0[st.h] - bhat_[st.h]);
      fed[i] = std::clamp(fm_.feat(st.h, st.s, st.a).dot(form), 0.0, 1.0);
      if (st.a == target_.at(st.h, st.s)) debt_[st.h] += fed[i] - st.clean_reward;
    }
    bool compliant = true;
    for (const Step& st : ep) {
      if (certified(st.h, st.s) && st.a != target_.at(st.h, st.s)) compliant = false;
      const Vec phi = fm_.feat(st.h, st.s, st.a).transpose();
      lam0_[st.h].noalias() += phi * phi.transpose();
      double v_next = 0.0;
      if (st.h + 1 < fm_.H) {
        const int s2 = st.s_next;
        v_next = fm_.feat(st.h + 1, s2, target_.at(st.h + 1, s2)).dot(stage1_.q0[st.h + 1]);
      }
      y0_[st.h].noalias() += phi * v_next;
    }
    stage1_log_.push_back(ep);
    stage1_compliant_.push_back(compliant);
    return fed;
  }

  // --- Stage-2 fitting and design -------------------------------------------
  void stage2_fit() {
    if (!frozen_) {
      report_.status = "non_attackable";
      return;
    }
    clean_episodes_.clear();
    for (long t = tau_fix_; t <= long(stage1_log_.size()); ++t)
      if (stage1_compliant_[t - 1]) clean_episodes_.push_back(t - 1);
    report_.n_clean = long(clean_episodes_.size());
    if (clean_episodes_.empty()) {
      report_.status = "insufficient_data";
      return;
    }
    const double n = double(clean_episodes_.size());
    gamma_ls_.assign(fm_.H, cfg_.lambda_ridge * Mat::Identity(fm_.d, fm_.d));
    what_.assign(fm_.H, Vec::Zero(fm_.d));
    std::vector<Vec> z(fm_.H, Vec::Zero(fm_.d));
    for (long idx : clean_episodes_) {
      const Episode& ep = stage1_log_[idx];
      double suffix = 0.0;
      std::vector<double> G(fm_.H, 0.0);
      for (int h = fm_.H - 1; h >= 0; --h) {
        suffix += ep[h].clean_reward;
        G[h] = suffix;
      }
      for (int h = 0; h < fm_.H; ++h) {
        const int s = ep[h].s;
        const Vec phit = fm_.feat(h, s, target_.at(h, s)).transpose();
        gamma_ls_[h].noalias() += phit * phit.transpose();
        z[h].noalias() += phit * G[h];
      }
    }
    alpha_.assign(fm_.H, cfg_.alpha_scale * fm_.H *
                             std::sqrt(fm_.d * std::log((1.0 + n) / cfg_.delta)));
    g_.assign(fm_.H, Mat::Zero(fm_.S, fm_.A));
    for (int h = 0; h < fm_.H; ++h) {
      Eigen::LLT<Mat> llt(gamma_ls_[h]);
      what_[h] = llt.solve(z[h]);
      for (int s = 0; s < fm_.S; ++s) {
        if (!certified(h, s)) continue;
        const Vec phit = fm_.feat(h, s, target_.at(h, s)).transpose();
        const double tgt_norm = std::sqrt(phit.dot(llt.solve(phit)));
        const double q_tgt = phit.dot(what_[h]);
        for (int a = 0; a < fm_.A; ++a) {
          const Vec phi = fm_.feat(h, s, a).transpose();
          const double gap = std::max(0.0, phi.dot(what_[h]) - q_tgt);
          const double dev_norm = std::sqrt(phi.dot(llt.solve(phi)));
          g_[h](s, a) = gap + alpha_[h] * (dev_norm + tgt_norm);
        }
      }
    }
    fitted_ = true;
  }

  void stage2_design() {
    report_.debt = debt_;
    report_.debt_mass = 0.0;
    for (double dh : debt_) report_.debt_mass += std::abs(dh);
    if (report_.status != "active" || !fitted_) return;
    u_.assign(fm_.H, Vec::Zero(fm_.d));
    double worst = std::numeric_limits<double>::infinity();
    for (int h = 0; h < fm_.H; ++h) {
      std::vector<Vec> dev_rows;
      std::vector<double> dev_g;
      std::vector<Vec> eq_rows;
      for (int s = 0; s < fm_.S; ++s) {
        if (!certified(h, s)) continue;
        const int tgt = target_.at(h, s);
        eq_rows.push_back(fm_.feat(h, s, tgt).transpose());
        for (int a = 0; a < fm_.A; ++a) {
          if (a == tgt) continue;
          dev_rows.push_back(fm_.feat(h, s, a).transpose());
          dev_g.push_back(g_[h](s, a));
        }
      }
      if (dev_rows.empty()) continue;
      const int n = fm_.d + 1;
      QcqpProblem qp;
      qp.f = Vec::Zero(n);
      qp.f(fm_.d) = -1.0;
      qp.A_eq = Mat::Zero(int(eq_rows.size()), n);
      qp.b_eq = Vec::Zero(int(eq_rows.size()));
      for (int i = 0; i < int(eq_rows.size()); ++i)
        qp.A_eq.row(i).head(fm_.d) = eq_rows[i].transpose();
      qp.G = Mat::Zero(int(dev_rows.size()), n);
      qp.h = Vec::Zero(int(dev_rows.size()));
      for (int i = 0; i < int(dev_rows.size()); ++i) {
        qp.G.row(i).head(fm_.d) = -dev_rows[i].transpose();
        qp.G(i, fm_.d) = 1.0;
        qp.h(i) = -dev_g[i];
      }
      qp.balls.push_back({0, fm_.d, std::sqrt(double(fm_.d))});
      Vec x0 = Vec::Zero(n);
      double worst_g = 0.0;
      for (double gv : dev_g) worst_g = std::max(worst_g, gv);
      x0(fm_.d) = -worst_g - 1.0;
      try {
        const QcqpResult res = solve_qcqp(qp, x0);
        Vec u = res.x.head(fm_.d);
        // Exact target-branch neutrality: project out the equality residual.
        Mat E(int(eq_rows.size()), fm_.d);
        for (int i = 0; i < int(eq_rows.size()); ++i) E.row(i) = eq_rows[i].transpose();
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(E);
        u -= cod.solve(Vec(E * u));
        double eps_h = std::numeric_limits<double>::infinity();
        for (int i = 0; i < int(dev_rows.size()); ++i)
          eps_h = std::min(eps_h, dev_rows[i].dot(u) - dev_g[i]);
        u_[h] = u;
        worst = std::min(worst, eps_h);
      } catch (const SolverError&) {
        report_.status = "numerical_failure";
        return;
      }
    }
    if (!std::isfinite(worst)) worst = kNoMarginSentinel;
    eps2_star_ = worst;
    report_.eps2_star = worst;
    if (eps2_star_ <= 0) {
      report_.status = "non_attackable";
      return;
    }
    comp_sign_.assign(fm_.H, 0.0);
    comp_remaining_.assign(fm_.H, 0.0);
    for (int h = 0; h < fm_.H; ++h) {
      comp_sign_[h] = debt_[h] > 0 ? 1.0 : (debt_[h] < 0 ? -1.0 : 0.0);
      comp_remaining_[h] = std::abs(debt_[h]);
    }
    designed_ = true;
  }

  // fed reward and cost for one Stage-2 step; mutates the compensation
  // schedule on target visits.
  std::pair<double, double> stage2_perturb(int h, int s, int a, double clean_r) {
    if (!designed_ || !certified(h, s)) return {clean_r, 0.0};
    double fed;
    if (a == target_.at(h, s)) {
      double c = 0.0;
      if (comp_remaining_[h] > 0.0) {
        const double mag = std::min(cfg_.comp_cap, comp_remaining_[h]);
        comp_remaining_[h] -= mag;
        report_.comp_scheduled_mass += mag;
        c = -comp_sign_[h] * mag;
      }
      fed = std::clamp(clean_r + c, 0.0, 1.0);
    } else {
      fed = std::clamp(clean_r - fm_.feat(h, s, a).dot(u_[h]), 0.0, 1.0);
    }
    return {fed, std::abs(fed - clean_r)};
  }

  // --- Episode entry point ---------------------------------------------------
  std::vector<double> feed(long t, const Episode& ep) {
    std::vector<double> fed(ep.size());
    for (size_t i = 0; i < ep.size(); ++i) fed[i] = ep[i].clean_reward;
    if (report_.status == "numerical_failure" || report_.status == "non_attackable") {
      if (t <= cfg_.T1 || !designed_) return fed;  // passive passthrough
    }
    if (t <= cfg_.T1) return stage1_update(t, ep);
    if (!stage2_ran_) {
      stage2_ran_ = true;
      stage2_fit();
      stage2_design();
    }
    if (!designed_) return fed;
    for (size_t i = 0; i < ep.size(); ++i)
      fed[i] = stage2_perturb(ep[i].h, ep[i].s, ep[i].a, ep[i].clean_reward).first;
    return fed;
  }

  const BlackboxReport& report() const { return report_; }
  const Stage1Program& stage1() const { return stage1_; }
  Vec bhat(int h) const { return bhat_[h]; }
  const Vec& theta0_frozen(int h) const { return theta0_[h]; }
  bool frozen() const { return frozen_; }
  long tau_fix() const { return tau_fix_; }
  bool designed() const { return designed_; }
  double eps2_star() const { return eps2_star_; }
  const Vec& penalty(int h) const { return u_[h]; }
  double gap_bound(int h, int s, int a) const { return g_[h](s, a); }
  double alpha(int h) const { return alpha_[h]; }
  const Mat& stage2_gram(int h) const { return gamma_ls_[h]; }
  const Vec& stage2_what(int h) const { return what_[h]; }
  long n_clean() const { return long(clean_episodes_.size()); }
  const std::vector<double>& debt() const { return debt_; }
  double comp_remaining(int h) const { return comp_remaining_[h]; }

 private:
  FeatureMap fm_;
  Policy target_;
  BlackboxConfig cfg_;
  std::vector<std::vector<char>> certified_;
  Stage1Program stage1_;
  BlackboxReport report_;

  // Stage-1 ridge state
  std::vector<Mat> lam0_;
  std::vector<Vec> y0_;
  std::vector<Vec> bhat_;
  std::vector<Vec> theta0_;
  bool frozen_ = false;
  long tau_fix_ = -1;
  std::vector<Episode> stage1_log_;
  std::vector<char> stage1_compliant_;
  std::vector<double> debt_;

  // Stage-2 state
  bool stage2_ran_ = false;
  bool fitted_ = false;
  bool designed_ = false;
  std::vector<long> clean_episodes_;
  std::vector<Mat> gamma_ls_;
  std::vector<Vec> what_;
  std::vector<double> alpha_;
  std::vector<Mat> g_;
  std::vector<Vec> u_;
  double eps2_star_ = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> comp_sign_;
  std::vector<double> comp_remaining_;
};

}  // namespace rpmdp
