#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "rpmdp/linmdp.hpp"
#include "rpmdp/rng.hpp"

namespace rpmdp {

struct GenParams {
  int H = 3, S = 5, A = 3;
  int d = 0;  // 0 = family default (random: 8, structured families: S*A)
  double noise_sigma = 0.0;
};

struct Instance {
  LinearMdp mdp;
  Policy target;
};

namespace detail {
// Strictly positive simplex draw: (floor + u)/sum keeps every entry bounded
// away from zero so induced supports stay full.
inline Vec positive_simplex(int n, Rng& rng, double floor_mass = 0.05) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = floor_mass + rng.uniform01();
  return v / v.sum();
}
}  // namespace detail

// Generic family: simplex features (which also makes the induced transitions
// stochastic automatically), simplex mu rows, theta in [0,1]^d, random
// deterministic target policy.
inline Instance gen_random(const GenParams& p, std::uint64_t seed) {
  if (p.H < 1 || p.S < 1 || p.A < 1) throw GenerationError("gen_random: H,S,A must be >= 1");
  const int d = p.d > 0 ? p.d : 8;
  Rng rng(seed);
  LinearMdp m;
  m.H = p.H;
  m.S = p.S;
  m.A = p.A;
  m.d = d;
  m.noise_sigma = p.noise_sigma;
  m.phi.assign(p.H, Mat::Zero(p.S * p.A, d));
  m.theta.assign(p.H, Vec::Zero(d));
  m.mu.assign(p.H, Mat::Zero(d, p.S));
  for (int h = 0; h < p.H; ++h) {
    for (int s = 0; s < p.S; ++s)
      for (int a = 0; a < p.A; ++a)
        m.phi[h].row(m.row(s, a)) = detail::positive_simplex(d, rng).transpose();
    for (int i = 0; i < d; ++i) m.theta[h](i) = rng.uniform01();
    for (int i = 0; i < d; ++i)
      m.mu[h].row(i) = detail::positive_simplex(p.S, rng).transpose();
  }
  m.rho = detail::positive_simplex(p.S, rng);
  require_valid(m);
  Eigen::MatrixXi acts(p.H, p.S);
  for (int h = 0; h < p.H; ++h)
    for (int s = 0; s < p.S; ++s) acts(h, s) = int(rng.uniform01() * p.A) % p.A;
  return {std::move(m), Policy::deterministic(std::move(acts))};
}

// Attackable-by-construction family: one-hot features (d = S*A), transitions
// independent of the action, target rewards strictly dominant by a margin in
// [0.05, 0.35], every state reachable under any policy.
inline Instance gen_attackable(const GenParams& p, std::uint64_t seed) {
  if (p.H < 1 || p.S < 1 || p.A < 2)
    throw GenerationError("gen_attackable: needs H,S >= 1 and A >= 2");
  if (p.d != 0 && p.d != p.S * p.A)
    throw GenerationError("gen_attackable: one-hot family needs d = S*A (or d = 0)");
  const int d = p.S * p.A;
  Rng rng(seed);
  LinearMdp m;
  m.H = p.H;
  m.S = p.S;
  m.A = p.A;
  m.d = d;
  m.noise_sigma = p.noise_sigma;
  m.phi.assign(p.H, Mat::Zero(p.S * p.A, d));
  m.theta.assign(p.H, Vec::Zero(d));
  m.mu.assign(p.H, Mat::Zero(d, p.S));
  Eigen::MatrixXi acts(p.H, p.S);
  for (int h = 0; h < p.H; ++h)
    for (int s = 0; s < p.S; ++s) acts(h, s) = int(rng.uniform01() * p.A) % p.A;
  for (int h = 0; h < p.H; ++h) {
    for (int s = 0; s < p.S; ++s) {
      const double r_tgt = 0.75 + 0.2 * rng.uniform01();
      const Vec q = detail::positive_simplex(p.S, rng);  // shared by all actions
      for (int a = 0; a < p.A; ++a) {
        const int i = m.row(s, a);
        m.phi[h](i, i) = 1.0;
        m.theta[h](i) = (a == acts(h, s)) ? r_tgt : r_tgt - (0.05 + 0.3 * rng.uniform01());
        m.mu[h].row(i) = q.transpose();
      }
    }
  }
  m.rho = detail::positive_simplex(p.S, rng);
  require_valid(m);
  return {std::move(m), Policy::deterministic(std::move(acts))};
}

// Not-attackable-by-construction family. Every action's feature equals some
// state's target-action feature, so reward-preservation on the (full)
// support pins every margin; states are paired and action 0 swaps in the
// partner's feature, making one margin of each pair strictly negative.
// Transitions are a single shared strictly-positive distribution per stage.
inline Instance gen_robust(const GenParams& p, std::uint64_t seed) {
  if (p.H < 1 || p.S < 2 || p.A < 2)
    throw GenerationError("gen_robust: needs H >= 1, S >= 2, A >= 2");
  if (p.d != 0 && p.d != p.S * p.A)
    throw GenerationError("gen_robust: one-hot family needs d = S*A (or d = 0)");
  const int d = p.S * p.A;
  const int target_action = 1;
  Rng rng(seed);
  LinearMdp m;
  m.H = p.H;
  m.S = p.S;
  m.A = p.A;
  m.d = d;
  m.noise_sigma = p.noise_sigma;
  m.phi.assign(p.H, Mat::Zero(p.S * p.A, d));
  m.theta.assign(p.H, Vec::Zero(d));
  m.mu.assign(p.H, Mat::Zero(d, p.S));
  auto partner = [&p](int s) {
    const int t = s ^ 1;
    return t < p.S ? t : s;
  };
  for (int h = 0; h < p.H; ++h) {
    const Vec q = detail::positive_simplex(p.S, rng);  // one distribution per stage
    for (int i = 0; i < d; ++i) m.mu[h].row(i) = q.transpose();
    for (int s = 0; s < p.S; ++s) {
      // Paired target rewards kept far apart so the pinned margin is large.
      const double v = (s % 2 == 0) ? 0.30 + 0.1 * rng.uniform01()
                                    : 0.75 + 0.1 * rng.uniform01();
      m.theta[h](m.row(s, target_action)) = v;
    }
    for (int s = 0; s < p.S; ++s)
      for (int a = 0; a < p.A; ++a) {
        const int owner = (a == 0) ? partner(s) : s;
        m.phi[h](m.row(s, a), m.row(owner, target_action)) = 1.0;
      }
  }
  m.rho = detail::positive_simplex(p.S, rng);
  require_valid(m);
  return {std::move(m), Policy::constant(p.H, p.S, target_action)};
}

inline Instance generate(const std::string& family, const GenParams& p, std::uint64_t seed) {
  if (family == "random") return gen_random(p, seed);
  if (family == "attackable") return gen_attackable(p, seed);
  if (family == "robust") return gen_robust(p, seed);
  throw GenerationError("unknown family: " + family +
                        " (expected random | attackable | robust)");
}

}  // namespace rpmdp
