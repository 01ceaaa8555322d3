#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rpmdp/linmdp.hpp"

namespace rpmdp {

using nlohmann::json;

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------
inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StructuralError("cannot write file: " + path);
  out << content;
}

// ---------------------------------------------------------------------------
// MDP <-> JSON
// {"H":..,"S":..,"A":..,"d":..,
//  "phi":[h][s][a][d], "theta":[h][d], "mu":[h][d][S], "rho":[S],
//  "noise_sigma":..}
// ---------------------------------------------------------------------------
inline json mdp_to_json(const LinearMdp& m) {
  json j;
  j["H"] = m.H;
  j["S"] = m.S;
  j["A"] = m.A;
  j["d"] = m.d;
  json phi = json::array();
  for (int h = 0; h < m.H; ++h) {
    json stage = json::array();
    for (int s = 0; s < m.S; ++s) {
      json per_state = json::array();
      for (int a = 0; a < m.A; ++a) {
        json row = json::array();
        for (int i = 0; i < m.d; ++i) row.push_back(m.feat(h, s, a)(i));
        per_state.push_back(std::move(row));
      }
      stage.push_back(std::move(per_state));
    }
    phi.push_back(std::move(stage));
  }
  j["phi"] = std::move(phi);
  json theta = json::array();
  for (int h = 0; h < m.H; ++h) {
    json row = json::array();
    for (int i = 0; i < m.d; ++i) row.push_back(m.theta[h](i));
    theta.push_back(std::move(row));
  }
  j["theta"] = std::move(theta);
  json mu = json::array();
  for (int h = 0; h < m.H; ++h) {
    json stage = json::array();
    for (int i = 0; i < m.d; ++i) {
      json row = json::array();
      for (int s = 0; s < m.S; ++s) row.push_back(m.mu[h](i, s));
      stage.push_back(std::move(row));
    }
    mu.push_back(std::move(stage));
  }
  j["mu"] = std::move(mu);
  json rho = json::array();
  for (int s = 0; s < m.S; ++s) rho.push_back(m.rho(s));
  j["rho"] = std::move(rho);
  j["noise_sigma"] = m.noise_sigma;
  return j;
}

namespace detail {
inline void need(const json& j, const char* key) {
  if (!j.contains(key)) throw StructuralError(std::string("missing field: ") + key);
}
}  // namespace detail

// Parses and shape-checks; then runs the model validator and rejects invalid
// inputs with the full violation list.
inline LinearMdp mdp_from_json(const json& j) {
  for (const char* k : {"H", "S", "A", "d", "phi", "theta", "mu", "rho"}) detail::need(j, k);
  LinearMdp m;
  m.H = j.at("H").get<int>();
  m.S = j.at("S").get<int>();
  m.A = j.at("A").get<int>();
  m.d = j.at("d").get<int>();
  m.noise_sigma = j.value("noise_sigma", 0.0);
  if (m.H < 1 || m.S < 1 || m.A < 1 || m.d < 1)
    throw StructuralError("H, S, A, d must all be >= 1");
  const auto& phi = j.at("phi");
  const auto& theta = j.at("theta");
  const auto& mu = j.at("mu");
  const auto& rho = j.at("rho");
  if (int(phi.size()) != m.H || int(theta.size()) != m.H || int(mu.size()) != m.H)
    throw StructuralError("phi/theta/mu must have H stages");
  m.phi.assign(m.H, Mat::Zero(m.S * m.A, m.d));
  m.theta.assign(m.H, Vec::Zero(m.d));
  m.mu.assign(m.H, Mat::Zero(m.d, m.S));
  for (int h = 0; h < m.H; ++h) {
    if (int(phi[h].size()) != m.S) throw StructuralError("phi stage must have S entries");
    for (int s = 0; s < m.S; ++s) {
      if (int(phi[h][s].size()) != m.A) throw StructuralError("phi state must have A entries");
      for (int a = 0; a < m.A; ++a) {
        if (int(phi[h][s][a].size()) != m.d) throw StructuralError("phi row must have d entries");
        for (int i = 0; i < m.d; ++i)
          m.phi[h](m.row(s, a), i) = phi[h][s][a][i].get<double>();
      }
    }
    if (int(theta[h].size()) != m.d) throw StructuralError("theta row must have d entries");
    for (int i = 0; i < m.d; ++i) m.theta[h](i) = theta[h][i].get<double>();
    if (int(mu[h].size()) != m.d) throw StructuralError("mu stage must have d rows");
    for (int i = 0; i < m.d; ++i) {
      if (int(mu[h][i].size()) != m.S) throw StructuralError("mu row must have S entries");
      for (int s = 0; s < m.S; ++s) m.mu[h](i, s) = mu[h][i][s].get<double>();
    }
  }
  if (int(rho.size()) != m.S) throw StructuralError("rho must have S entries");
  m.rho = Vec::Zero(m.S);
  for (int s = 0; s < m.S; ++s) m.rho(s) = rho[s].get<double>();
  require_valid(m);
  return m;
}

inline LinearMdp load_mdp(const std::string& path) {
  return mdp_from_json(json::parse(read_file(path)));
}

inline void save_mdp(const LinearMdp& m, const std::string& path) {
  write_file(path, mdp_to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Policy <-> JSON: {"actions":[h][s]} or {"probs":[h][s][a]}.
// ---------------------------------------------------------------------------
inline json policy_to_json(const Policy& p) {
  json j;
  if (p.stochastic) {
    json probs = json::array();
    for (const auto& stage : p.probs) {
      json st = json::array();
      for (int s = 0; s < stage.rows(); ++s) {
        json row = json::array();
        for (int a = 0; a < stage.cols(); ++a) row.push_back(stage(s, a));
        st.push_back(std::move(row));
      }
      probs.push_back(std::move(st));
    }
    j["probs"] = std::move(probs);
  } else {
    json acts = json::array();
    for (int h = 0; h < p.actions.rows(); ++h) {
      json row = json::array();
      for (int s = 0; s < p.actions.cols(); ++s) row.push_back(p.actions(h, s));
      acts.push_back(std::move(row));
    }
    j["actions"] = std::move(acts);
  }
  return j;
}

inline Policy policy_from_json(const json& j) {
  if (j.contains("actions")) {
    const auto& acts = j.at("actions");
    const int H = int(acts.size());
    if (H == 0) throw StructuralError("policy actions empty");
    const int S = int(acts[0].size());
    Eigen::MatrixXi a(H, S);
    for (int h = 0; h < H; ++h) {
      if (int(acts[h].size()) != S) throw StructuralError("policy actions ragged");
      for (int s = 0; s < S; ++s) a(h, s) = acts[h][s].get<int>();
    }
    return Policy::deterministic(std::move(a));
  }
  if (j.contains("probs")) {
    const auto& pr = j.at("probs");
    const int H = int(pr.size());
    if (H == 0) throw StructuralError("policy probs empty");
    const int S = int(pr[0].size());
    const int A = int(pr[0][0].size());
    std::vector<Mat> probs(H, Mat::Zero(S, A));
    for (int h = 0; h < H; ++h) {
      if (int(pr[h].size()) != S) throw StructuralError("policy probs ragged");
      for (int s = 0; s < S; ++s) {
        if (int(pr[h][s].size()) != A) throw StructuralError("policy probs ragged");
        double sum = 0.0;
        for (int a = 0; a < A; ++a) {
          probs[h](s, a) = pr[h][s][a].get<double>();
          if (probs[h](s, a) < 0) throw ValidationError("policy probability negative");
          sum += probs[h](s, a);
        }
        if (std::abs(sum - 1.0) > 1e-9)
          throw ValidationError("policy probabilities must sum to 1 per state");
      }
    }
    return Policy::from_probs(std::move(probs));
  }
  throw StructuralError("policy JSON needs \"actions\" or \"probs\"");
}

inline Policy load_policy(const std::string& path) {
  return policy_from_json(json::parse(read_file(path)));
}

inline void save_policy(const Policy& p, const std::string& path) {
  write_file(path, policy_to_json(p).dump(2) + "\n");
}

// Bounds-check a deterministic policy against a model before use.
inline void require_policy_for(const Policy& p, const LinearMdp& m) {
  if (!p.defined_for(m)) throw ValidationError("policy shape does not match model");
  if (!p.stochastic) {
    for (int h = 0; h < m.H; ++h)
      for (int s = 0; s < m.S; ++s)
        if (p.at(h, s) < 0 || p.at(h, s) >= m.A)
          throw ValidationError("policy action out of range at (h=" + std::to_string(h) +
                                ",s=" + std::to_string(s) + ")");
  }
}

}  // namespace rpmdp
