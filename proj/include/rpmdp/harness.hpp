#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpmdp/attackability.hpp"
#include "rpmdp/blackbox.hpp"
#include "rpmdp/generators.hpp"
#include "rpmdp/lsvi_ucb.hpp"
#include "rpmdp/mdp_io.hpp"
#include "rpmdp/metrics.hpp"
#include "rpmdp/report.hpp"
#include "rpmdp/rng.hpp"
#include "rpmdp/whitebox.hpp"

namespace rpmdp {

// ---------------------------------------------------------------------------
// Scenario configuration (JSON schema documented in README).
// ---------------------------------------------------------------------------
struct ScenarioConfig {
  // model source: either a file pair or a generator spec
  std::string mdp_file;     // non-empty -> load from file
  std::string target_file;  // may be empty when the generator supplies the target
  bool use_generator = false;
  std::string gen_family;
  std::uint64_t gen_seed = 0;
  GenParams gen_params;

  std::string attacker = "none";  // none | whitebox | blackbox
  AttackMode wb_mode = AttackMode::norm_ball;
  double wb_delta = 0.0;
  ClipMode wb_clip = ClipMode::clip_to_unit;
  bool wb_force = false;
  BlackboxConfig bb;

  double learner_delta = 0.01;
  double learner_c0 = 1.0;

  long T = 0;
  int trials = 1;
  std::uint64_t base_seed = 0;
  long m1_window = 500;
  double m2_threshold = 0.9;
  double m2_tail = 0.25;
  std::string output_dir;

  void validate_fields() const {
    if (m1_window < 2) throw ValidationError("scenario: m1_window must be >= 2");
    if (T < m1_window) throw ValidationError("scenario: T must be >= m1_window");
    if (trials < 1) throw ValidationError("scenario: trials must be >= 1");
    if (attacker != "none" && attacker != "whitebox" && attacker != "blackbox")
      throw ValidationError("scenario: attacker must be none | whitebox | blackbox");
    if (mdp_file.empty() && !use_generator)
      throw ValidationError("scenario: need an mdp file or a generator spec");
    if (!mdp_file.empty() && target_file.empty())
      throw ValidationError("scenario: file-based mdp needs a target policy file");
  }
};

inline ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig c;
  if (!j.contains("mdp")) throw StructuralError("scenario: missing 'mdp'");
  const auto& mdp = j.at("mdp");
  if (mdp.contains("file")) {
    c.mdp_file = mdp.at("file").get<std::string>();
  } else if (mdp.contains("generator")) {
    c.use_generator = true;
    const auto& g = mdp.at("generator");
    c.gen_family = g.at("family").get<std::string>();
    c.gen_seed = g.at("seed").get<std::uint64_t>();
    c.gen_params.H = g.value("H", c.gen_params.H);
    c.gen_params.S = g.value("S", c.gen_params.S);
    c.gen_params.A = g.value("A", c.gen_params.A);
    c.gen_params.d = g.value("d", 0);
    c.gen_params.noise_sigma = g.value("noise_sigma", 0.0);
  } else {
    throw StructuralError("scenario: mdp needs 'file' or 'generator'");
  }
  if (j.contains("target") && j.at("target").contains("file"))
    c.target_file = j.at("target").at("file").get<std::string>();
  if (j.contains("attacker")) {
    const auto& a = j.at("attacker");
    c.attacker = a.value("type", std::string("none"));
    if (c.attacker == "whitebox") {
      const std::string mode = a.value("mode", std::string("norm"));
      if (mode == "norm") {
        c.wb_mode = AttackMode::norm_ball;
      } else if (mode == "delta") {
        c.wb_mode = AttackMode::delta_bound;
        c.wb_delta = a.value("delta", 0.0);
      } else {
        throw ValidationError("scenario: whitebox mode must be norm | delta");
      }
      const std::string clip = a.value("clip", std::string("unit"));
      if (clip == "unit") {
        c.wb_clip = ClipMode::clip_to_unit;
      } else if (clip == "raw") {
        c.wb_clip = ClipMode::raw;
      } else {
        throw ValidationError("scenario: whitebox clip must be unit | raw");
      }
      c.wb_force = a.value("force", false);
    } else if (c.attacker == "blackbox") {
      c.bb.T1 = a.value("T1", 0L);
      c.bb.S_budget = a.value("S_budget", 1.0);
      c.bb.eta1 = a.value("eta1", 0.0);
      c.bb.lambda_ridge = a.value("lambda_ridge", 1.0);
      c.bb.delta = a.value("delta", 0.01);
      c.bb.alpha_scale = a.value("alpha_scale", 0.5);
      c.bb.comp_cap = a.value("comp_cap", 1.0);
      if (a.contains("certified_support"))
        c.bb.certified_support =
            a.at("certified_support").get<std::vector<std::vector<int>>>();
    }
  }
  if (j.contains("learner")) {
    c.learner_delta = j.at("learner").value("delta", 0.01);
    c.learner_c0 = j.at("learner").value("c0", 1.0);
  }
  c.T = j.at("T").get<long>();
  c.trials = j.value("trials", 1);
  c.base_seed = j.value("base_seed", std::uint64_t(0));
  c.m1_window = j.value("m1_window", 500L);
  c.m2_threshold = j.value("m2_threshold", 0.9);
  c.m2_tail = j.value("m2_tail", 0.25);
  c.output_dir = j.value("output_dir", std::string("out"));
  if (c.attacker == "blackbox" && c.bb.T1 == 0) {
    // Stage-1 budget default: 200 sqrt(T), capped at a quarter of the run.
    c.bb.T1 = std::min<long>(long(std::ceil(200.0 * std::sqrt(double(c.T)))), c.T / 4);
    c.bb.T1 = std::max<long>(1, c.bb.T1);
  }
  c.validate_fields();
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  return scenario_from_json(json::parse(read_file(path)));
}

// ---------------------------------------------------------------------------
// Trial execution
// ---------------------------------------------------------------------------
struct TrialReport {
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<double> cumulative_cost, episode_cost, agreement;
  M1Result m1;
  M2Result m2;
  double total_cost = 0.0;
  long n_dev = 0;
  bool refused = false;
  std::optional<AttackCertificate> certificate;
  std::optional<BlackboxReport> bb_report;
  bool bb_support_closed = true;
  double wall_ms = 0.0;
};

inline Instance load_instance(const ScenarioConfig& c) {
  if (!c.mdp_file.empty()) {
    Instance inst{load_mdp(c.mdp_file), Policy{}};
    inst.target = load_policy(c.target_file);
    require_policy_for(inst.target, inst.mdp);
    return inst;
  }
  Instance inst = generate(c.gen_family, c.gen_params, c.gen_seed);
  if (!c.target_file.empty()) {
    inst.target = load_policy(c.target_file);
    require_policy_for(inst.target, inst.mdp);
  }
  return inst;
}

// True-model closure check of the certified support (reported, not enforced).
inline bool certified_support_closed(const LinearMdp& m, const BlackboxConfig& bb) {
  std::vector<std::vector<char>> cert(m.H, std::vector<char>(m.S, 1));
  if (!bb.certified_support.empty()) {
    for (auto& row : cert) row.assign(m.S, 0);
    for (int h = 0; h < m.H; ++h)
      for (int s : bb.certified_support[h]) cert[h][s] = 1;
  }
  for (int h = 0; h + 1 < m.H; ++h)
    for (int s = 0; s < m.S; ++s) {
      if (!cert[h][s]) continue;
      for (int a = 0; a < m.A; ++a) {
        const Vec p = m.trans(h, s, a);
        for (int s2 = 0; s2 < m.S; ++s2)
          if (p(s2) > kSupportEps && !cert[h + 1][s2]) return false;
      }
    }
  return true;
}

inline TrialReport run_trial(const ScenarioConfig& cfg, int trial) {
  const auto t_start = std::chrono::steady_clock::now();
  TrialReport rep;
  rep.trial = trial;
  rep.seed = derive_stream(cfg.base_seed, std::uint64_t(trial));
  Rng rng(rep.seed);

  const Instance inst = load_instance(cfg);
  const LinearMdp& m = inst.mdp;
  const Policy& target = inst.target;
  require_policy_for(target, m);
  const Occupancy occ = occupancy(m, target);

  std::optional<WhiteboxStrategy> whitebox;
  std::optional<BlackboxAttacker> blackbox;
  if (cfg.attacker == "whitebox") {
    AttackCertificate cert = solve_attackability(m, target, cfg.wb_mode, cfg.wb_delta);
    rep.certificate = cert;
    if (cert.status != "optimal")
      throw SolverError("whitebox attack: attackability solve failed (" + cert.status + ")");
    if (!cert.attackable() && !cfg.wb_force) {
      rep.refused = true;  // certificate reported; no episodes run
      rep.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t_start)
                        .count();
      return rep;
    }
    whitebox.emplace(FeatureMap::of(m), std::move(cert), target, occ, cfg.wb_clip,
                     cfg.wb_force);
  } else if (cfg.attacker == "blackbox") {
    blackbox.emplace(FeatureMap::of(m), target, cfg.bb);
    rep.bb_support_closed = certified_support_closed(m, cfg.bb);
  }

  LsviUcb learner(FeatureMap::of(m), cfg.learner_delta, cfg.learner_c0);
  CostLedger ledger;
  rep.agreement.reserve(cfg.T);

  for (long t = 1; t <= cfg.T; ++t) {
    const int s0 = sample_initial(m, rng);
    learner.plan(s0, t);
    Episode ep;
    ep.reserve(m.H);
    int s = s0;
    for (int h = 0; h < m.H; ++h) {
      const int a = learner.act(h, s);
      const int s_next = (h + 1 < m.H) ? sample_next(m, h, s, a, rng) : -1;
      const double clean = sample_reward(m, h, s, a, rng);
      ep.push_back({h, s, a, clean, s_next});
      s = s_next >= 0 ? s_next : s;
    }

    std::vector<double> fed(ep.size());
    if (whitebox) {
      for (size_t i = 0; i < ep.size(); ++i)
        fed[i] = whitebox->perturb(ep[i].h, ep[i].s, ep[i].a, ep[i].clean_reward).fed;
    } else if (blackbox) {
      fed = blackbox->feed(t, ep);
    } else {
      for (size_t i = 0; i < ep.size(); ++i) fed[i] = ep[i].clean_reward;
    }
    for (size_t i = 0; i < ep.size(); ++i)
      learner.observe(ep[i].h, ep[i].s, ep[i].a, fed[i], ep[i].s_next);

    std::vector<double> costs(ep.size());
    int deviations = 0, support_steps = 0, matches = 0;
    for (size_t i = 0; i < ep.size(); ++i) {
      costs[i] = std::abs(ep[i].clean_reward - fed[i]);
      if (occ.on(ep[i].h, ep[i].s)) {
        ++support_steps;
        if (ep[i].a == target.at(ep[i].h, ep[i].s))
          ++matches;
        else
          ++deviations;
      }
    }
    ledger.update(costs, deviations);
    rep.agreement.push_back(support_steps > 0 ? double(matches) / support_steps : 1.0);
  }

  rep.episode_cost = ledger.episode_cost;
  rep.cumulative_cost.resize(rep.episode_cost.size());
  double running = 0.0;
  for (size_t i = 0; i < rep.episode_cost.size(); ++i) {
    running += rep.episode_cost[i];
    rep.cumulative_cost[i] = running;
  }
  rep.total_cost = ledger.cumulative;
  rep.n_dev = ledger.n_dev;
  rep.m1 = metric_m1(rep.cumulative_cost, cfg.m1_window);
  rep.m2 = metric_m2(rep.agreement, cfg.m2_threshold, cfg.m2_tail);
  if (blackbox) rep.bb_report = blackbox->report();
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          t_start)
                    .count();
  return rep;
}

inline std::vector<TrialReport> run_batch(const ScenarioConfig& cfg) {
  std::vector<TrialReport> reports;
  reports.reserve(cfg.trials);
  for (int k = 0; k < cfg.trials; ++k) reports.push_back(run_trial(cfg, k));
  return reports;
}

// ---------------------------------------------------------------------------
// Reporting: per-trial CSV, one summary JSON, two SVG charts.
// ---------------------------------------------------------------------------
inline std::string trial_csv_name(int trial) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "trial_%03d.csv", trial);
  return buf;
}

inline json summary_json(const std::vector<TrialReport>& reports) {
  json trials = json::array();
  int m1_count = 0, m2_count = 0, counted = 0;
  for (const auto& r : reports) {
    json t;
    t["trial"] = r.trial;
    t["seed"] = r.seed;
    t["refused"] = r.refused;
    t["wall_ms"] = r.wall_ms;
    if (!r.refused) {
      t["m1"] = {{"verdict", r.m1.sublinear ? "sublinear" : "not_sublinear"},
                 {"statistic", r.m1.statistic},
                 {"deadband", r.m1.deadband}};
      t["m2"] = {{"verdict", r.m2.success ? "success" : "failure"},
                 {"mean_tail_agreement", r.m2.mean_tail_agreement}};
      t["total_cost"] = r.total_cost;
      t["n_dev"] = r.n_dev;
      ++counted;
      if (r.m1.sublinear) ++m1_count;
      if (r.m2.success) ++m2_count;
    }
    if (r.certificate) t["certificate"] = certificate_to_json(*r.certificate);
    if (r.bb_report) {
      const auto& b = *r.bb_report;
      json bb;
      bb["status"] = b.status;
      bb["eps0_star"] = b.eps0_star;
      bb["tau_fix"] = b.tau_fix;
      bb["frozen"] = b.frozen;
      bb["eps2_star"] = b.eps2_star;
      bb["n_clean"] = b.n_clean;
      bb["debt"] = b.debt;
      bb["debt_mass"] = b.debt_mass;
      bb["comp_scheduled_mass"] = b.comp_scheduled_mass;
      bb["certified_support_closed"] = r.bb_support_closed;
      t["blackbox"] = std::move(bb);
    }
    trials.push_back(std::move(t));
  }
  json j;
  j["trials"] = std::move(trials);
  j["aggregate"] = {
      {"trials", int(reports.size())},
      {"m1_sublinear_rate", counted > 0 ? double(m1_count) / counted : 0.0},
      {"m2_success_rate", counted > 0 ? double(m2_count) / counted : 0.0}};
  return j;
}

inline void emit_report(const std::vector<TrialReport>& reports, const std::string& out_dir) {
  if (reports.empty()) throw ValidationError("emit_report: no trials");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw StructuralError("emit_report: cannot create directory " + out_dir);
  std::vector<std::vector<double>> cost_series, agree_series;
  for (const auto& r : reports) {
    write_file(out_dir + "/" + trial_csv_name(r.trial),
               trial_csv(r.cumulative_cost, r.episode_cost, r.agreement));
    cost_series.push_back(r.cumulative_cost);
    agree_series.push_back(r.agreement);
  }
  write_file(out_dir + "/summary.json", summary_json(reports).dump(2) + "\n");
  write_file(out_dir + "/cost.svg",
             svg_line_chart("cumulative attack cost", "cumulative cost", cost_series));
  write_file(out_dir + "/agreement.svg",
             svg_line_chart("target-policy agreement", "agreement", agree_series));
}

// Rebuild summary.json and the SVGs from the CSVs already in a directory.
inline void regenerate_report(const std::string& dir, long m1_window = 500,
                              double m2_threshold = 0.9, double m2_tail = 0.25) {
  namespace fs = std::filesystem;
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") csvs.push_back(e.path());
  if (csvs.empty()) throw ValidationError("report: no trial CSVs in " + dir);
  std::sort(csvs.begin(), csvs.end());
  std::vector<TrialReport> reports;
  for (size_t i = 0; i < csvs.size(); ++i) {
    const ParsedTrialCsv parsed = parse_trial_csv(read_file(csvs[i].string()));
    TrialReport r;
    r.trial = int(i);
    r.cumulative_cost = parsed.cumulative_cost;
    r.episode_cost = parsed.episode_cost;
    r.agreement = parsed.agreement;
    r.total_cost = parsed.cumulative_cost.empty() ? 0.0 : parsed.cumulative_cost.back();
    const long n = long(r.cumulative_cost.size());
    if (n < 3) throw ValidationError("report: trial CSV too short for metrics");
    const long m_eff = std::min(m1_window, n - 1);
    r.m1 = metric_m1(r.cumulative_cost, std::max<long>(2, m_eff));
    r.m2 = metric_m2(r.agreement, m2_threshold, m2_tail);
    reports.push_back(std::move(r));
  }
  std::vector<std::vector<double>> cost_series, agree_series;
  for (const auto& r : reports) {
    cost_series.push_back(r.cumulative_cost);
    agree_series.push_back(r.agreement);
  }
  write_file(dir + "/summary.json", summary_json(reports).dump(2) + "\n");
  write_file(dir + "/cost.svg",
             svg_line_chart("cumulative attack cost", "cumulative cost", cost_series));
  write_file(dir + "/agreement.svg",
             svg_line_chart("target-policy agreement", "agreement", agree_series));
}

}  // namespace rpmdp
