#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "rpmdp/attackability.hpp"
#include "rpmdp/linmdp.hpp"

namespace rpmdp {

enum class ClipMode { clip_to_unit, raw };

// Reward overwrite driven by a positive certificate: pay nothing when the
// learner takes the target action on the support, overwrite with the
// certified linear reward everywhere else.
class WhiteboxStrategy {
 public:
  // force = true runs the overwrite despite a non-positive verdict (used by
  // the robust-separation experiments); by default construction refuses.
  WhiteboxStrategy(FeatureMap fm, AttackCertificate cert, Policy target, Occupancy support,
                   ClipMode clip = ClipMode::clip_to_unit, bool force = false)
      : fm_(std::move(fm)),
        cert_(std::move(cert)),
        target_(std::move(target)),
        support_(std::move(support)),
        clip_(clip) {
    if (cert_.status != "optimal")
      throw ValidationError("whitebox: certificate carries no usable solution");
    if (!force && !cert_.attackable())
      throw ValidationError("whitebox: refusing to attack, certificate verdict is '" +
                            cert_.verdict + "'");
    if (int(cert_.theta_dagger.size()) != fm_.H)
      throw ValidationError("whitebox: certificate stage count mismatch");
  }

  struct Perturbed {
    double fed = 0.0;
    double cost = 0.0;
    bool deviation = false;  // support step that left the target action
  };

  Perturbed perturb(int h, int s, int a, double clean_r) const {
    if (h < 0 || h >= fm_.H || s < 0 || s >= fm_.S || a < 0 || a >= fm_.A)
      throw ValidationError("whitebox: step indices out of range");
    Perturbed out;
    const bool on_support = support_.on(h, s);
    if (on_support && a == target_.at(h, s)) {
      out.fed = clean_r;
      return out;
    }
    out.deviation = on_support;
    double fed = fm_.feat(h, s, a).dot(cert_.theta_dagger[h]);
    if (clip_ == ClipMode::clip_to_unit) fed = std::clamp(fed, 0.0, 1.0);
    out.fed = fed;
    out.cost = std::abs(clean_r - fed);
    return out;
  }

  const AttackCertificate& certificate() const { return cert_; }
  const Policy& target() const { return target_; }
  const Occupancy& support() const { return support_; }

 private:
  FeatureMap fm_;
  AttackCertificate cert_;
  Policy target_;
  Occupancy support_;
  ClipMode clip_;
};

// Attack-cost bookkeeping: cumulative perturbation mass and the number of
// episodes containing at least one support deviation.
struct CostLedger {
  std::vector<double> episode_cost;
  double cumulative = 0.0;
  long n_dev = 0;

  void update(const std::vector<double>& step_costs, int deviation_steps) {
    double total = 0.0;
    for (double c : step_costs) {
      if (c < 0) throw ValidationError("ledger: negative step cost");
      total += c;
    }
    episode_cost.push_back(total);
    cumulative += total;
    if (deviation_steps > 0) ++n_dev;
  }
};

}  // namespace rpmdp
