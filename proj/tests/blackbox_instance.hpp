// Hand-built two-state instance used by the black-box tests and the
// acceptance run. Geometry:
//   - d = 3; per-state target anchors phi+(s0) = (.8,.1,.1), phi+(s1) =
//     (.1,.8,.1); the deviation feature mixes the anchor with the corner
//     chi = (0,0,1): phi(s,dev) = 0.4 phi+(s) + 0.6 chi.
//   - all feature rows sum to 1, so a single shared per-stage distribution
//     q_h makes every induced transition row equal to q_h (action- and
//     state-independent continuations).
//   - theta = (.8,.8,.1) gives clean rewards 0.73 on target, 0.352 off it.
// The anchor/corner split leaves a full-rank deviation direction orthogonal
// to both anchors, so the stage-2 penalty program has plenty of room.
#pragma once

#include <algorithm>
#include <cmath>

#include "rpmdp/blackbox.hpp"
#include "rpmdp/generators.hpp"
#include "rpmdp/linmdp.hpp"

namespace testbed {

inline rpmdp::Instance blackbox_instance() {
  using rpmdp::Mat;
  using rpmdp::Vec;
  rpmdp::LinearMdp m;
  m.H = 2;
  m.S = 2;
  m.A = 2;
  m.d = 3;
  Vec anchor0(3), anchor1(3), chi(3);
  anchor0 << 0.8, 0.1, 0.1;
  anchor1 << 0.1, 0.8, 0.1;
  chi << 0.0, 0.0, 1.0;
  Mat phi(4, 3);
  phi.row(0) = anchor0.transpose();                       // (s0, target)
  phi.row(1) = (0.4 * anchor0 + 0.6 * chi).transpose();   // (s0, deviation)
  phi.row(2) = anchor1.transpose();                       // (s1, target)
  phi.row(3) = (0.4 * anchor1 + 0.6 * chi).transpose();   // (s1, deviation)
  m.phi.assign(2, phi);
  Vec theta(3);
  theta << 0.8, 0.8, 0.1;
  m.theta.assign(2, theta);
  Mat mu(3, 2);
  mu << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;  // every measure row = shared q_h
  m.mu.assign(2, mu);
  m.rho = Vec::Constant(2, 0.5);
  m.noise_sigma = 0.0;
  rpmdp::require_valid(m);
  return {m, rpmdp::Policy::constant(2, 2, 0)};
}

inline rpmdp::BlackboxConfig blackbox_config(long T) {
  rpmdp::BlackboxConfig cfg;
  cfg.T1 = std::min<long>(long(std::ceil(200.0 * std::sqrt(double(T)))), T / 4);
  cfg.S_budget = 4.0;
  cfg.lambda_ridge = 400.0;
  cfg.alpha_scale = 0.15;
  cfg.comp_cap = 1.0;
  return cfg;
}

}  // namespace testbed
