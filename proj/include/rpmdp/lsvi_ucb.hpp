#pragma once

#include <Eigen/Cholesky>
#include <cmath>
#include <vector>

#include "rpmdp/linmdp.hpp"

namespace rpmdp {

// Optimistic least-squares value iteration with a time-growing regularizer
// lambda_t = 4 H S sqrt(d t). The victim learner: plans a fresh optimistic
// Q-table each episode from its full fed-reward history, acts greedily on it,
// and records transitions at episode end.
//
// Because phi is a function of (h,s,a), the per-stage regression over the
// whole history collapses exactly into sufficient statistics:
//   M_h = sum phi phi',  b_h = sum phi rhat,  visit counts N_h[(s,a), s'].
// The regression vector is b_h + Phi_h' (N_h V_{h+1}), identical to replaying
// the history (same terms, grouped), so planning is O(1) per episode in t.
class LsviUcb {
 public:
  explicit LsviUcb(FeatureMap fm, double delta = 0.01, double c0 = 1.0)
      : fm_(std::move(fm)), delta_(delta), c0_(c0) {
    if (delta_ <= 0 || delta_ >= 1) throw ValidationError("LsviUcb: delta must be in (0,1)");
    M_.assign(fm_.H, Mat::Zero(fm_.d, fm_.d));
    b_.assign(fm_.H, Vec::Zero(fm_.d));
    next_counts_.assign(fm_.H, Mat::Zero(fm_.S * fm_.A, fm_.S));
    visits_.assign(fm_.H, Mat::Zero(fm_.S, fm_.A));
    q_.assign(fm_.H, Mat::Zero(fm_.S, fm_.A));
    w_.assign(fm_.H, Vec::Zero(fm_.d));
    beta_.assign(fm_.H, 0.0);
    lambda_cur_ = 0.0;
  }

  double lambda_t(long t) const {
    return 4.0 * fm_.H * fm_.S * std::sqrt(double(fm_.d) * double(t));
  }

  // Backward pass over stages; Cholesky refactor per stage (the diagonal
  // shift lambda_t grows every episode, so rank-1 inverse updates don't
  // apply). t is the 1-based episode index.
  void plan(int /*initial_state*/, long t) {
    if (t < 1) throw ValidationError("LsviUcb::plan: episode index must be >= 1");
    t_ = t;
    const double lam = lambda_t(t);
    lambda_cur_ = lam;
    Vec v_next = Vec::Zero(fm_.S);
    for (int h = fm_.H - 1; h >= 0; --h) {
      Mat Lambda = lam * Mat::Identity(fm_.d, fm_.d) + M_[h];
      Eigen::LLT<Mat> llt(Lambda);
      if (llt.info() != Eigen::Success)
        throw SolverError("LsviUcb: design matrix factorization failed");
      double logdet = 0.0;
      for (int i = 0; i < fm_.d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
      const double det_term = std::max(0.0, logdet - fm_.d * std::log(lam));
      const double beta = c0_ * fm_.d * fm_.H *
                              (std::sqrt(det_term) + std::sqrt(2.0 * std::log(1.0 / delta_))) +
                          std::sqrt(lam) / (2.0 * fm_.S);
      beta_[h] = beta;
      Vec target = b_[h];
      if (h + 1 < fm_.H)
        target.noalias() += fm_.phi[h].transpose() * (next_counts_[h] * v_next);
      w_[h] = llt.solve(target);
      for (int s = 0; s < fm_.S; ++s)
        for (int a = 0; a < fm_.A; ++a) {
          const Vec phi = fm_.feat(h, s, a).transpose();
          const double bonus = beta * std::sqrt(phi.dot(llt.solve(phi)));
          q_[h](s, a) = std::min(w_[h].dot(phi) + bonus, double(fm_.H));
        }
      for (int s = 0; s < fm_.S; ++s) v_next(s) = q_[h].row(s).maxCoeff();
    }
    planned_ = true;
  }

  int act(int h, int s) const {
    if (!planned_) throw ValidationError("LsviUcb::act before plan");
    int best = 0;
    for (int a = 1; a < fm_.A; ++a)
      if (q_[h](s, a) > q_[h](s, best)) best = a;
    return best;
  }

  // s_next is ignored for the final stage (no continuation value); pass -1.
  void observe(int h, int s, int a, double fed_reward, int s_next) {
    const Vec phi = fm_.feat(h, s, a).transpose();
    M_[h].noalias() += phi * phi.transpose();
    b_[h].noalias() += phi * fed_reward;
    visits_[h](s, a) += 1.0;
    if (h + 1 < fm_.H) {
      if (s_next < 0 || s_next >= fm_.S)
        throw ValidationError("LsviUcb::observe: next state out of range");
      next_counts_[h](fm_.row(s, a), s_next) += 1.0;
    }
  }

  // Introspection (tests, harness metrics).
  const Mat& q_table(int h) const { return q_[h]; }
  const Vec& weights(int h) const { return w_[h]; }
  double beta(int h) const { return beta_[h]; }
  double current_lambda() const { return lambda_cur_; }
  Mat design_matrix(int h) const {
    return lambda_cur_ * Mat::Identity(fm_.d, fm_.d) + M_[h];
  }
  double visit_count(int h, int s, int a) const { return visits_[h](s, a); }
  double bonus(int h, int s, int a) const {
    const Vec phi = fm_.feat(h, s, a).transpose();
    Mat Lambda = design_matrix(h);
    return beta_[h] * std::sqrt(phi.dot(Lambda.llt().solve(phi)));
  }
  const FeatureMap& features() const { return fm_; }
  long episode() const { return t_; }

 private:
  FeatureMap fm_;
  double delta_, c0_;
  long t_ = 0;
  bool planned_ = false;
  double lambda_cur_;
  std::vector<Mat> M_;            // per stage: sum phi phi'
  std::vector<Vec> b_;            // per stage: sum phi * fed reward
  std::vector<Mat> next_counts_;  // per stage: (S*A) x S visit counts
  std::vector<Mat> visits_;       // per stage: S x A visit counts
  std::vector<Mat> q_;            // planned optimistic Q
  std::vector<Vec> w_;
  std::vector<double> beta_;
};

}  // namespace rpmdp
