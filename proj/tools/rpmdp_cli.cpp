// Command-line front end: characterize / attack / simulate / report / gen.
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rpmdp/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

int cmd_characterize(const std::string& mdp_path, const std::string& policy_path,
                     const std::string& mode, bool set_variant) {
  const rpmdp::LinearMdp m = rpmdp::load_mdp(mdp_path);
  const rpmdp::json pj = rpmdp::json::parse(rpmdp::read_file(policy_path));
  const rpmdp::Policy target = rpmdp::policy_from_json(pj);

  rpmdp::AttackCertificate cert;
  if (set_variant) {
    if (!pj.contains("permissible"))
      throw rpmdp::StructuralError("characterize --set: policy file lacks 'permissible'");
    const auto permissible = pj.at("permissible").get<std::vector<std::vector<int>>>();
    cert = rpmdp::solve_attackability_set(m, permissible, target);
  } else {
    rpmdp::AttackMode am = rpmdp::AttackMode::norm_ball;
    double delta = 0.0;
    if (mode == "norm") {
      am = rpmdp::AttackMode::norm_ball;
    } else if (mode.rfind("delta:", 0) == 0) {
      am = rpmdp::AttackMode::delta_bound;
      delta = std::stod(mode.substr(6));
    } else {
      throw rpmdp::ValidationError("characterize: --mode must be norm or delta:<value>");
    }
    cert = rpmdp::solve_attackability(m, target, am, delta);
  }
  std::cout << rpmdp::certificate_to_json(cert).dump(2) << "\n";
  return cert.status == "optimal" ? kExitOk : kExitSolver;
}

int cmd_run(const std::string& config_path, bool force_clean) {
  rpmdp::ScenarioConfig cfg = rpmdp::load_scenario(config_path);
  if (force_clean) cfg.attacker = "none";
  const auto reports = rpmdp::run_batch(cfg);
  rpmdp::emit_report(reports, cfg.output_dir);
  std::cout << rpmdp::summary_json(reports)["aggregate"].dump(2) << "\n";
  std::cout << "report written to " << cfg.output_dir << "\n";
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  rpmdp::regenerate_report(dir);
  std::cout << "report regenerated in " << dir << "\n";
  return kExitOk;
}

int cmd_gen(const std::string& family, std::uint64_t seed, const std::string& out,
            std::string target_out, const rpmdp::GenParams& params) {
  const rpmdp::Instance inst = rpmdp::generate(family, params, seed);
  rpmdp::save_mdp(inst.mdp, out);
  if (target_out.empty()) {
    const auto dot = out.rfind(".json");
    target_out = (dot == std::string::npos ? out : out.substr(0, dot)) + ".target.json";
  }
  rpmdp::save_policy(inst.target, target_out);
  std::cout << "wrote " << out << " and " << target_out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reward-poisoning toolkit for finite-horizon linear MDPs"};
  app.require_subcommand(1);

  // characterize
  auto* characterize = app.add_subcommand(
      "characterize", "decide attackability of a target policy and print the certificate");
  std::string ch_mdp, ch_policy, ch_mode = "norm";
  bool ch_set = false;
  characterize->add_option("mdp", ch_mdp, "model JSON")->required();
  characterize->add_option("policy", ch_policy, "target policy JSON")->required();
  characterize->add_option("--mode", ch_mode, "norm | delta:<bound> (default norm)");
  characterize->add_flag("--set", ch_set,
                         "permissible-set variant; reads 'permissible' from the policy file");

  // attack / simulate
  auto* attack = app.add_subcommand("attack", "run poisoned training per a scenario config");
  std::string at_config;
  attack->add_option("--config", at_config, "scenario JSON")->required();
  auto* simulate =
      app.add_subcommand("simulate", "run clean training (attacker disabled) per a config");
  std::string si_config;
  simulate->add_option("--config", si_config, "scenario JSON")->required();

  // report
  auto* report = app.add_subcommand("report", "rebuild summary + charts from trial CSVs");
  std::string rp_dir;
  report->add_option("dir", rp_dir, "directory holding trial_*.csv")->required();

  // gen
  auto* gen = app.add_subcommand("gen", "generate a model instance + target policy");
  std::string g_family, g_out, g_target_out;
  std::uint64_t g_seed = 0;
  rpmdp::GenParams g_params;
  gen->add_option("--family", g_family, "random | attackable | robust")->required();
  gen->add_option("--seed", g_seed, "generator seed")->required();
  gen->add_option("-o,--out", g_out, "output model JSON")->required();
  gen->add_option("--target-out", g_target_out,
                  "output target policy JSON (default: <out>.target.json)");
  gen->add_option("--H", g_params.H, "horizon");
  gen->add_option("--S", g_params.S, "state count");
  gen->add_option("--A", g_params.A, "action count");
  gen->add_option("--d", g_params.d, "feature dimension (0 = family default)");
  gen->add_option("--noise-sigma", g_params.noise_sigma, "reward noise std dev");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (characterize->parsed()) return cmd_characterize(ch_mdp, ch_policy, ch_mode, ch_set);
    if (attack->parsed()) return cmd_run(at_config, false);
    if (simulate->parsed()) return cmd_run(si_config, true);
    if (report->parsed()) return cmd_report(rp_dir);
    if (gen->parsed()) return cmd_gen(g_family, g_seed, g_out, g_target_out, g_params);
  } catch (const rpmdp::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const rpmdp::StructuralError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const rpmdp::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const rpmdp::GenerationError& e) {
    std::cerr << "generation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const rpmdp::json::exception& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
