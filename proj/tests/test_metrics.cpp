// Metrics, CSV/SVG reporting, and the scenario harness. Oracles: closed-form
// least-squares fits on synthetic curves (a line reproduces its own slope and
// intercept exactly; sqrt growth falls below the extrapolation; a power > 1
// rises above it), hand-counted tail means for the adoption metric, and
// round-trip identities for the shortest-form CSV serialization.
#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rpmdp/harness.hpp"

namespace {

namespace fs = std::filesystem;

using rpmdp::metric_m1;
using rpmdp::metric_m2;
using rpmdp::ScenarioConfig;
using rpmdp::ValidationError;

std::vector<double> curve(long T, double (*f)(double)) {
  std::vector<double> c(static_cast<size_t>(T));
  for (long t = 1; t <= T; ++t) c[size_t(t - 1)] = f(double(t));
  return c;
}

// ---------------------------------------------------------------------------
// M1: cost sublinearity
// ---------------------------------------------------------------------------

TEST(MetricM1, ExactLineIsNotSublinearAndFitIsExact) {
  const auto c = curve(20000, [](double t) { return 3.0 * t + 11.0; });
  const auto r = metric_m1(c, 500);
  EXPECT_FALSE(r.sublinear);
  EXPECT_NEAR(r.slope, 3.0, 1e-9);
  EXPECT_NEAR(r.intercept, 11.0, 1e-6);
  EXPECT_LE(std::abs(r.statistic), r.deadband);
  EXPECT_NEAR(r.deadband, 1e-9 * 20000.0 * c.back(), 1e-12 * r.deadband);
}

TEST(MetricM1, SquareRootGrowthIsSublinear) {
  const auto c = curve(20000, [](double t) { return std::sqrt(t); });
  const auto r = metric_m1(c, 500);
  EXPECT_TRUE(r.sublinear);
  EXPECT_GT(r.statistic, r.deadband);
  // The early fit has positive slope, so the extrapolation really is a line
  // being beaten, not a degenerate zero fit.
  EXPECT_GT(r.slope, 0.0);
}

TEST(MetricM1, SuperlinearGrowthIsNotSublinear) {
  const auto c = curve(20000, [](double t) { return std::pow(t, 1.2); });
  const auto r = metric_m1(c, 500);
  EXPECT_FALSE(r.sublinear);
  EXPECT_LT(r.statistic, 0.0);
}

TEST(MetricM1, VerdictIsScaleInvariant) {
  const auto base = curve(20000, [](double t) { return std::sqrt(t); });
  std::vector<double> scaled = base;
  for (double& v : scaled) v *= 7.3;
  const auto ra = metric_m1(base, 500);
  const auto rb = metric_m1(scaled, 500);
  EXPECT_TRUE(ra.sublinear);
  EXPECT_TRUE(rb.sublinear);
  EXPECT_NEAR(rb.statistic, 7.3 * ra.statistic, 1e-9 * std::abs(rb.statistic));

  const auto line = curve(20000, [](double t) { return 0.4 * t; });
  std::vector<double> scaled_line = line;
  for (double& v : scaled_line) v *= 7.3;
  EXPECT_FALSE(metric_m1(line, 500).sublinear);
  EXPECT_FALSE(metric_m1(scaled_line, 500).sublinear);
}

TEST(MetricM1, RejectsDegenerateWindows) {
  const auto c = curve(10, [](double t) { return t; });
  EXPECT_THROW(metric_m1(c, 1), ValidationError);
  EXPECT_THROW(metric_m1(c, 10), ValidationError);
  EXPECT_THROW(metric_m1(c, 11), ValidationError);
  EXPECT_NO_THROW(metric_m1(c, 9));
}

// ---------------------------------------------------------------------------
// M2: target adoption
// ---------------------------------------------------------------------------

TEST(MetricM2, TrivialSeriesAndExactThresholdBoundary) {
  const std::vector<double> ones(40, 1.0);
  const auto r1 = metric_m2(ones, 0.9, 0.25);
  EXPECT_TRUE(r1.success);
  EXPECT_EQ(r1.mean_tail_agreement, 1.0);
  EXPECT_EQ(r1.tail_episodes, 10);

  const std::vector<double> zeros(40, 0.0);
  EXPECT_FALSE(metric_m2(zeros, 0.9, 0.25).success);

  // Tail of 10 with nine 1s and one 0: mean exactly 9/10 -> success at 0.9.
  std::vector<double> boundary(40, 0.0);
  for (int i = 30; i < 40; ++i) boundary[size_t(i)] = 1.0;
  boundary[30] = 0.0;
  const auto rb = metric_m2(boundary, 0.9, 0.25);
  EXPECT_EQ(rb.mean_tail_agreement, 0.9);
  EXPECT_TRUE(rb.success);
  boundary[31] = 0.0;  // 8/10 fails
  EXPECT_FALSE(metric_m2(boundary, 0.9, 0.25).success);
}

TEST(MetricM2, TailWindowRoundsDownButNeverBelowOne) {
  std::vector<double> v(7, 0.0);
  v.back() = 1.0;
  const auto r = metric_m2(v, 0.9, 0.25);  // floor(1.75) = 1 episode
  EXPECT_EQ(r.tail_episodes, 1);
  EXPECT_TRUE(r.success);

  std::vector<double> three(3, 0.5);
  EXPECT_EQ(metric_m2(three, 0.9, 0.25).tail_episodes, 1);  // max(1, floor(.75))

  std::vector<double> all(8, 1.0);
  EXPECT_EQ(metric_m2(all, 0.9, 1.0).tail_episodes, 8);
}

TEST(MetricM2, RejectsBadInput) {
  EXPECT_THROW(metric_m2({}, 0.9, 0.25), ValidationError);
  const std::vector<double> v(5, 1.0);
  EXPECT_THROW(metric_m2(v, 0.9, 0.0), ValidationError);
  EXPECT_THROW(metric_m2(v, 0.9, 1.5), ValidationError);
}

// ---------------------------------------------------------------------------
// CSV and SVG emission
// ---------------------------------------------------------------------------

TEST(TrialCsv, RoundTripsEveryValueBitForBit) {
  const std::vector<double> cum = {1.0 / 3.0, 0.1 + 0.2, 1e-17, 4.5e8, 7.25};
  const std::vector<double> epi = {1.0 / 3.0, 0.0, 1.0, 1e-300, 0.3333333333333333};
  const std::vector<double> agr = {0.0, 1.0, 0.5, 2.0 / 3.0, 1.0};
  const std::string csv = rpmdp::trial_csv(cum, epi, agr);
  // header + one row per episode
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.rfind("episode,cumulative_cost,episode_cost,agreement\n", 0), 0u);
  const rpmdp::ParsedTrialCsv p = rpmdp::parse_trial_csv(csv);
  ASSERT_EQ(p.cumulative_cost.size(), cum.size());
  for (size_t i = 0; i < cum.size(); ++i) {
    EXPECT_EQ(p.cumulative_cost[i], cum[i]);
    EXPECT_EQ(p.episode_cost[i], epi[i]);
    EXPECT_EQ(p.agreement[i], agr[i]);
  }
}

TEST(TrialCsv, ParserRejectsGarbage) {
  EXPECT_THROW(rpmdp::parse_trial_csv("no newline at all"), ValidationError);
  EXPECT_THROW(rpmdp::parse_trial_csv("h\n1,2,x,4\n"), ValidationError);
}

TEST(SvgChart, EmitsOnePolylinePerSeriesWithStriding) {
  std::vector<std::vector<double>> series(3);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 10000; ++i)
      series[size_t(k)].push_back(double(i * (k + 1)));
  const std::string svg = rpmdp::svg_line_chart("t", "y", series);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  size_t count = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++count;
    pos += 9;
  }
  EXPECT_EQ(count, 3u);
  // Striding keeps every polyline at <= 2001 points (pairs have one space
  // separator each, last one trimmed).
  const size_t first = svg.find("points=\"");
  const size_t close = svg.find('"', first + 8);
  const std::string pts = svg.substr(first + 8, close - first - 8);
  EXPECT_LE(std::count(pts.begin(), pts.end(), ' ') + 1, 2001);
}

// ---------------------------------------------------------------------------
// Harness: scenario parsing, trial execution, report round trip
// ---------------------------------------------------------------------------

ScenarioConfig tiny_scenario(const std::string& family, const std::string& attacker) {
  ScenarioConfig c;
  c.use_generator = true;
  c.gen_family = family;
  c.gen_seed = 7;
  c.gen_params.H = 2;
  c.gen_params.S = 2;
  c.gen_params.A = 2;
  c.gen_params.d = family == "random" ? 4 : 0;
  c.attacker = attacker;
  c.T = 60;
  c.trials = 1;
  c.base_seed = 99;
  c.m1_window = 10;
  c.validate_fields();
  return c;
}

TEST(Harness, CleanRunsCostExactlyZero) {
  const auto rep = rpmdp::run_trial(tiny_scenario("random", "none"), 0);
  EXPECT_FALSE(rep.refused);
  EXPECT_EQ(rep.total_cost, 0.0);
  ASSERT_EQ(rep.cumulative_cost.size(), 60u);
  for (double c : rep.cumulative_cost) EXPECT_EQ(c, 0.0);
  for (double a : rep.agreement) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
  EXPECT_FALSE(rep.m1.sublinear);  // zero curve sits inside the deadband
  // n_dev counts target disagreements, which a clean learner is free to make;
  // it is bounded by the number of support steps, not zero.
  EXPECT_GE(rep.n_dev, 0);
  EXPECT_LE(rep.n_dev, 60 * 2);
}

TEST(Harness, TrialsAreBitIdenticalAcrossReruns) {
  const ScenarioConfig cfg = tiny_scenario("attackable", "whitebox");
  const auto a = rpmdp::run_trial(cfg, 3);
  const auto b = rpmdp::run_trial(cfg, 3);
  EXPECT_EQ(a.seed, b.seed);
  const std::string csv_a = rpmdp::trial_csv(a.cumulative_cost, a.episode_cost, a.agreement);
  const std::string csv_b = rpmdp::trial_csv(b.cumulative_cost, b.episode_cost, b.agreement);
  EXPECT_EQ(csv_a, csv_b);
  EXPECT_EQ(a.m1.statistic, b.m1.statistic);
  EXPECT_EQ(a.m2.mean_tail_agreement, b.m2.mean_tail_agreement);
  ASSERT_TRUE(a.certificate.has_value());
  EXPECT_EQ(a.certificate->epsilon_star, b.certificate->epsilon_star);

  // Different trial index -> different seed stream.
  const auto c = rpmdp::run_trial(cfg, 4);
  EXPECT_NE(c.seed, a.seed);
}

TEST(Harness, RobustTargetIsRefusedWithoutForce) {
  const ScenarioConfig cfg = tiny_scenario("robust", "whitebox");
  const auto rep = rpmdp::run_trial(cfg, 0);
  EXPECT_TRUE(rep.refused);
  EXPECT_TRUE(rep.cumulative_cost.empty());
  ASSERT_TRUE(rep.certificate.has_value());
  EXPECT_EQ(rep.certificate->verdict, "robust");

  const rpmdp::json j = rpmdp::summary_json({rep});
  EXPECT_TRUE(j.at("trials").at(0).at("refused").get<bool>());
  EXPECT_FALSE(j.at("trials").at(0).contains("m1"));
  EXPECT_EQ(j.at("aggregate").at("m1_sublinear_rate").get<double>(), 0.0);
}

TEST(Harness, EmitAndRegenerateReportRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "rpmdp_metrics_report_test";
  fs::remove_all(dir);
  ScenarioConfig cfg = tiny_scenario("attackable", "whitebox");
  cfg.trials = 2;
  const auto reports = rpmdp::run_batch(cfg);
  ASSERT_EQ(reports.size(), 2u);
  rpmdp::emit_report(reports, dir.string());
  for (const char* name :
       {"trial_000.csv", "trial_001.csv", "summary.json", "cost.svg", "agreement.svg"})
    EXPECT_TRUE(fs::exists(dir / name)) << name;

  const rpmdp::json before = rpmdp::json::parse(rpmdp::read_file((dir / "summary.json").string()));
  ASSERT_EQ(before.at("trials").size(), 2u);

  // Regeneration from the CSVs alone reproduces the metric verdicts exactly
  // (the CSV serialization is round-trip lossless).
  fs::remove(dir / "summary.json");
  rpmdp::regenerate_report(dir.string(), cfg.m1_window, cfg.m2_threshold, cfg.m2_tail);
  const rpmdp::json after = rpmdp::json::parse(rpmdp::read_file((dir / "summary.json").string()));
  ASSERT_EQ(after.at("trials").size(), 2u);
  for (size_t k = 0; k < 2; ++k) {
    const auto& tb = before.at("trials").at(k);
    const auto& ta = after.at("trials").at(k);
    EXPECT_EQ(tb.at("m1").at("verdict"), ta.at("m1").at("verdict"));
    EXPECT_EQ(tb.at("m1").at("statistic").get<double>(),
              ta.at("m1").at("statistic").get<double>());
    EXPECT_EQ(tb.at("m2").at("verdict"), ta.at("m2").at("verdict"));
  }
  fs::remove_all(dir);
}

TEST(Harness, RegenerateClampsTheFitWindowOnShortSeries) {
  const fs::path dir = fs::temp_directory_path() / "rpmdp_metrics_short_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  // Five episodes but the default window is 500: the window clamps to n-1.
  std::vector<double> cum = {1, 2, 3, 4, 5}, epi = {1, 1, 1, 1, 1},
                      agr = {1, 1, 1, 1, 1};
  rpmdp::write_file((dir / "trial_000.csv").string(), rpmdp::trial_csv(cum, epi, agr));
  EXPECT_NO_THROW(rpmdp::regenerate_report(dir.string()));

  // Two episodes cannot support any fit.
  fs::remove_all(dir);
  fs::create_directories(dir);
  cum = {1, 2};
  epi = {1, 1};
  agr = {1, 1};
  rpmdp::write_file((dir / "trial_000.csv").string(), rpmdp::trial_csv(cum, epi, agr));
  EXPECT_THROW(rpmdp::regenerate_report(dir.string()), ValidationError);
  fs::remove_all(dir);
}

TEST(Harness, ScenarioJsonMapsEveryField) {
  const rpmdp::json j = {
      {"mdp",
       {{"generator",
         {{"family", "attackable"}, {"seed", 5}, {"H", 2}, {"S", 3}, {"A", 2}}}}},
      {"attacker",
       {{"type", "whitebox"},
        {"mode", "delta"},
        {"delta", 0.2},
        {"clip", "raw"},
        {"force", true}}},
      {"learner", {{"delta", 0.05}, {"c0", 2.0}}},
      {"T", 500},
      {"trials", 3},
      {"base_seed", 42},
      {"m1_window", 50},
      {"m2_threshold", 0.8},
      {"m2_tail", 0.5},
      {"output_dir", "somewhere"}};
  const ScenarioConfig c = rpmdp::scenario_from_json(j);
  EXPECT_TRUE(c.use_generator);
  EXPECT_EQ(c.gen_family, "attackable");
  EXPECT_EQ(c.gen_params.S, 3);
  EXPECT_EQ(c.attacker, "whitebox");
  EXPECT_EQ(c.wb_mode, rpmdp::AttackMode::delta_bound);
  EXPECT_EQ(c.wb_delta, 0.2);
  EXPECT_EQ(c.wb_clip, rpmdp::ClipMode::raw);
  EXPECT_TRUE(c.wb_force);
  EXPECT_EQ(c.learner_delta, 0.05);
  EXPECT_EQ(c.learner_c0, 2.0);
  EXPECT_EQ(c.T, 500);
  EXPECT_EQ(c.trials, 3);
  EXPECT_EQ(c.base_seed, 42u);
  EXPECT_EQ(c.m1_window, 50);
  EXPECT_EQ(c.m2_threshold, 0.8);
  EXPECT_EQ(c.m2_tail, 0.5);
  EXPECT_EQ(c.output_dir, "somewhere");
}

TEST(Harness, BlackboxStageOneBudgetDefaultsAndOverrides) {
  rpmdp::json j = {{"mdp", {{"generator", {{"family", "random"}, {"seed", 1}}}}},
                   {"attacker", {{"type", "blackbox"}, {"S_budget", 4.0}}},
                   {"T", 40000},
                   {"m1_window", 500}};
  EXPECT_EQ(rpmdp::scenario_from_json(j).bb.T1, 10000);  // min(ceil(200 sqrt(T)), T/4)

  j["T"] = 600;
  EXPECT_EQ(rpmdp::scenario_from_json(j).bb.T1, 150);  // capped by T/4

  j["attacker"]["T1"] = 77;
  EXPECT_EQ(rpmdp::scenario_from_json(j).bb.T1, 77);  // explicit wins
}

TEST(Harness, ScenarioJsonRejectsBadShapes) {
  rpmdp::json j = {{"T", 100}};
  EXPECT_THROW(rpmdp::scenario_from_json(j), rpmdp::StructuralError);

  j = {{"mdp", {{"generator", {{"family", "random"}, {"seed", 1}}}}},
       {"attacker", {{"type", "sideways"}}},
       {"T", 600}};
  EXPECT_THROW(rpmdp::scenario_from_json(j), ValidationError);

  j = {{"mdp", {{"generator", {{"family", "random"}, {"seed", 1}}}}}, {"T", 100}};
  EXPECT_THROW(rpmdp::scenario_from_json(j), ValidationError);  // T < m1_window

  j = {{"mdp", {{"file", "m.json"}}}, {"T", 600}};
  EXPECT_THROW(rpmdp::scenario_from_json(j), ValidationError);  // missing target

  j = {{"mdp", {{"generator", {{"family", "random"}, {"seed", 1}}}}},
       {"attacker", {{"type", "whitebox"}, {"mode", "banana"}}},
       {"T", 600}};
  EXPECT_THROW(rpmdp::scenario_from_json(j), ValidationError);
}

TEST(Harness, CertifiedSupportClosureUsesTrueDynamics) {
  // Deterministic chain: s0 -> s1 always. Certifying only s0 at stage 0 and
  // s0 at stage 1 leaves the reachable s1 uncertified -> not closed.
  rpmdp::Mat rewards(2, 2);
  rewards << 0.5, 0.25, 0.5, 0.25;
  rpmdp::Mat trans(4, 2);
  trans << 0, 1, 0, 1, 0, 1, 0, 1;
  rpmdp::Vec rho(2);
  rho << 1.0, 0.0;
  const rpmdp::LinearMdp m =
      rpmdp::make_tabular({rewards, rewards}, {trans, trans}, rho);
  rpmdp::BlackboxConfig bb;
  bb.certified_support = {{0}, {0}};
  EXPECT_FALSE(rpmdp::certified_support_closed(m, bb));
  bb.certified_support = {{0}, {1}};
  EXPECT_TRUE(rpmdp::certified_support_closed(m, bb));
  bb.certified_support.clear();  // all states certified
  EXPECT_TRUE(rpmdp::certified_support_closed(m, bb));
}

}  // namespace
