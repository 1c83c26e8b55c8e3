#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "listflow/verify.hpp"

using namespace listflow;

namespace {

constexpr double kPi = std::numbers::pi;

FlowState winding_state(int n, RescalePolicy policy = RescalePolicy::zero()) {
    const auto g = TorusGrid::make(n, 2 * kPi, kPi / 2);
    auto d = presets::winding(g, {.mu = 1.0});
    return make_state(g, d.metric, d.dilaton, 2.0, policy);
}

FlowState flat_state(int n) {
    const auto g = TorusGrid::make(n, 2 * kPi, 2 * kPi);
    auto d = presets::flat(g);
    return make_state(g, d.metric, d.dilaton, 2.0);
}

VerificationReport manual(CheckKind kind, std::vector<double> lhs, std::vector<double> rhs, double tol) {
    VerificationReport rep;
    rep.check.name = "manual";
    rep.check.kind = kind;
    rep.check.tolerance = tol;
    rep.lhs = std::move(lhs);
    rep.rhs = std::move(rhs);
    rep.times.assign(rep.lhs.size(), 0.0);
    return rep;
}

ScenarioConfig small_winding() {
    ScenarioConfig c;
    c.name = "small_winding";
    c.N = 32;
    c.preset = "winding";
    c.params.mu = 1.0;
    c.T = 0.05;
    return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("listflow_test_verify_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST(Finalize, IdentityResidualIsScaledByRhs) {
    auto rep = manual(CheckKind::Identity, {1.0, 2.1}, {1.0, 2.0}, 0.05);
    finalize(rep);
    EXPECT_DOUBLE_EQ(rep.residual[0], 0.0);
    EXPECT_NEAR(rep.residual[1], 0.1 / 3.0, 1e-15);
    EXPECT_NEAR(rep.residual_max, 0.1 / 3.0, 1e-15);
    EXPECT_TRUE(rep.pass);
    EXPECT_TRUE(rep.asserted);
    EXPECT_EQ(rep.status(), "pass");
    set_tolerance(rep, 0.01);
    EXPECT_FALSE(rep.pass);
    EXPECT_EQ(rep.status(), "FAIL");
    EXPECT_TRUE(rep.fails_suite());
}

TEST(Finalize, MonotonicityComparesWithPreviousSample) {
    auto up = manual(CheckKind::Monotonicity, {1.0, 1.0, 2.0, 3.0}, {}, 1e-12);
    finalize(up);
    EXPECT_TRUE(up.pass);
    EXPECT_EQ(up.residual_max, 0.0);

    auto dip = manual(CheckKind::Monotonicity, {1.0, 2.0, 1.5, 3.0}, {}, 1e-3);
    finalize(dip);
    EXPECT_FALSE(dip.pass);
    EXPECT_NEAR(dip.residual_max, 0.5 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(dip.rhs[2], 2.0);
}

TEST(Finalize, LowerBoundOnlyPenalisesViolations) {
    auto rep = manual(CheckKind::LowerBound, {5.0, 1.0}, {0.0, 2.0}, 0.1);
    finalize(rep);
    EXPECT_EQ(rep.residual[0], 0.0);
    EXPECT_NEAR(rep.residual[1], 1.0 / 3.0, 1e-15);
    EXPECT_FALSE(rep.pass);
}

TEST(Finalize, NanResidualFails) {
    auto rep = manual(CheckKind::Identity, {1.0, std::nan("")}, {1.0, 1.0}, 1.0);
    finalize(rep);
    EXPECT_TRUE(std::isnan(rep.residual_max));
    EXPECT_FALSE(rep.pass);
}

TEST(Finalize, DegenerateSamplesAreExcluded) {
    auto rep = manual(CheckKind::Identity, {1.0, 9.0}, {1.0, 1.0}, 1e-12);
    rep.degenerate_flags = {false, true};
    finalize(rep);
    EXPECT_EQ(rep.residual_max, 0.0);
    EXPECT_TRUE(rep.pass);
}

TEST(Finalize, FalseHypothesisDowngradesToReported) {
    auto rep = manual(CheckKind::Identity, {1.0, 9.0}, {1.0, 1.0}, 1e-12);
    rep.hypothesis_flags = {true, false};
    finalize(rep);
    EXPECT_FALSE(rep.pass);
    EXPECT_FALSE(rep.asserted);
    EXPECT_FALSE(rep.fails_suite());
    EXPECT_EQ(rep.status(), "reported, not asserted");
    EXPECT_NE(rep.note.find("1 of 2"), std::string::npos);
}

TEST(AttachOrder, SecondOrderPassesFirstOrderFails) {
    auto coarse = manual(CheckKind::Identity, {}, {}, 1.0);
    coarse.residual_max = 4e-4;
    auto fine = coarse;
    fine.residual_max = 1e-4;
    attach_order(fine, coarse, 64);
    ASSERT_TRUE(fine.order_estimate);
    EXPECT_NEAR(*fine.order_estimate, 2.0, 1e-12);
    EXPECT_TRUE(fine.pass);
    EXPECT_EQ(fine.check.refinement, std::make_pair(64, 128));

    auto slow = coarse;
    slow.residual_max = 2e-4;
    attach_order(slow, coarse, 64);
    EXPECT_NEAR(*slow.order_estimate, 1.0, 1e-12);
    EXPECT_FALSE(slow.pass);
}

TEST(AttachOrder, RoundoffResidualsAreNotOrderTested) {
    auto coarse = manual(CheckKind::Identity, {}, {}, 1.0);
    coarse.residual_max = 1e-13;
    auto fine = coarse;
    fine.residual_max = 5e-13;
    attach_order(fine, coarse, 64);
    EXPECT_FALSE(fine.order_estimate);
    EXPECT_TRUE(fine.pass);
    EXPECT_NE(fine.note.find("roundoff"), std::string::npos);
}

TEST(Hypotheses, WindingFailsDilatonAndPinching) {
    const auto s = winding_state(32);
    const auto f = check_hypotheses(s, s.geometry(), 0.5);
    EXPECT_FALSE(f.dilaton_gradient);
    EXPECT_FALSE(f.pinched);
    EXPECT_FALSE(f.s_nonneg);
    EXPECT_FALSE(f.s_tensor_nonneg);
    EXPECT_NEAR(f.pinch_margin, -1.0, 1e-12);
    EXPECT_NEAR(f.s_min, -2.0, 1e-12);
    EXPECT_NEAR(f.dilaton_margin, -1.0, 1e-12);
}

TEST(Hypotheses, FlatSatisfiesEverything) {
    const auto s = flat_state(16);
    const auto f = check_hypotheses(s, s.geometry(), 0.5);
    EXPECT_TRUE(f.pinched);
    EXPECT_TRUE(f.s_tensor_nonneg);
    EXPECT_TRUE(f.dilaton_gradient);
    EXPECT_TRUE(f.s_nonneg);
    // theta = 1/2 makes eps infinite: the curvature condition is only recorded for theta > 1/2
    EXPECT_FALSE(f.curvature_dilaton);
    const auto g = check_hypotheses(s, s.geometry(), 0.75);
    EXPECT_TRUE(g.curvature_dilaton);
}

TEST(Hypotheses, ReportsAreRecordedNotAsserted) {
    const auto traj = run(winding_state(16), 0.01, 1e-3);
    const auto reps = hypothesis_reports(traj, 0.5);
    ASSERT_EQ(reps.size(), 5u);
    for (const auto& r : reps) {
        EXPECT_EQ(r.status(), "recorded");
        EXPECT_FALSE(r.fails_suite());
        EXPECT_EQ(r.times.size(), traj.states.size());
    }
}

TEST(SEvolution, WindingMatchesClosedForm) {
    const auto traj = run(winding_state(32), 0.02, 5e-5);
    const auto rep = check_S_evolution(traj);
    EXPECT_TRUE(rep.pass) << rep.residual_max;
    ASSERT_FALSE(rep.times.empty());
    for (std::size_t j = 0; j < rep.times.size(); ++j) {
        const double t = rep.times[j];
        const double exact = 8.0 / ((1 + 4 * t) * (1 + 4 * t));
        EXPECT_NEAR(rep.rhs[j], exact, 1e-6);
        EXPECT_NEAR(rep.lhs[j], exact, 1e-6);
    }
}

TEST(SEvolution, NeedsThreeStates) {
    const auto traj = run(winding_state(16), 1e-3, 1e-3);
    EXPECT_THROW(check_S_evolution(traj), Error);
}

TEST(AreaLaw, HoldsOnWindingAndConservedUnderAverageS) {
    const auto traj = run(winding_state(32), 0.1, 1e-3);
    EXPECT_TRUE(check_area_law(traj).pass);
    const auto avg = run(winding_state(32, RescalePolicy::average_s()), 0.5, 1e-3);
    const auto cons = check_area_conservation(avg);
    EXPECT_TRUE(cons.pass) << cons.residual_max;
    EXPECT_TRUE(cons.asserted);
    const auto gated = check_area_conservation(traj);
    EXPECT_FALSE(gated.asserted);
}

TEST(WeightedMonotone, ConstantAndDecayingSeries) {
    const std::vector<double> t = {0.0, 0.1, 0.2, 0.3};
    std::vector<double> decaying, Ir;
    for (double x : t) {
        decaying.push_back(std::exp(-x));
        Ir.push_back(x);
    }
    EXPECT_TRUE(check_weighted_monotone(t, decaying, Ir, 1.0).pass);
    EXPECT_FALSE(check_weighted_monotone(t, decaying, Ir, 0.0).pass);
    EXPECT_TRUE(check_weighted_monotone(t, decaying, Ir, 2.0, "custom").pass);
    EXPECT_EQ(check_weighted_monotone(t, decaying, Ir, 2.0, "custom").check.name, "custom");
    EXPECT_THROW(check_weighted_monotone(t, decaying, {0.0}, 1.0), Error);
}

TEST(ComparisonBound, WindingStaysAboveRiccatiSolution) {
    const auto traj = run(winding_state(32), 0.3, 1e-3, 10);
    const auto rep = check_comparison_bound(traj);
    EXPECT_TRUE(rep.pass);
    // S = -2/(1+4t) against x = -2/(1+2t)
    for (std::size_t j = 0; j < rep.times.size(); ++j) {
        const double t = rep.times[j];
        EXPECT_NEAR(rep.lhs[j], -2.0 / (1 + 4 * t), 1e-8);
        EXPECT_NEAR(rep.rhs[j], -2.0 / (1 + 2 * t), 1e-8);
    }
}

TEST(EigenDerivative, WindingLaplacianBranch) {
    const auto traj = run(winding_state(64), 0.05, 1e-4);
    auto [rep, forms] = check_eigen_derivative(traj, 0.0, {0, 1}, 5);
    EXPECT_TRUE(rep.pass) << rep.residual_max;
    EXPECT_TRUE(forms.pass) << forms.residual_max;
    EXPECT_EQ(rep.check.name, "eigen_derivative_laplacian");
    EXPECT_EQ(forms.check.name, "eigen_forms_laplacian");
    ASSERT_FALSE(rep.rhs.empty());
    // lambda_1 = c_h / a^2 with c_h = 1 - O(h^2) and a^2 = 1 + 4t
    EXPECT_NEAR(rep.rhs.front(), -4.0, 2e-2);
    for (std::size_t j = 0; j < rep.times.size(); ++j) {
        const double a2 = 1 + 4 * rep.times[j];
        EXPECT_NEAR(rep.rhs[j] * a2 * a2, rep.rhs.front(), 1e-10);
    }
}

TEST(EigenDerivative, FormsAgreeOnBump) {
    const auto g = TorusGrid::make(48, 2 * kPi, kPi / 2);
    auto d = presets::bump_b(g, {.eps = 0.2});
    const auto s0 = make_state(g, d.metric, d.dilaton, 2.0, RescalePolicy::prescribed(0.3));
    const auto traj = run(s0, 0.02, default_dt(s0));
    auto [rep, forms] = check_eigen_derivative(traj, 0.5, {0, 1}, 2);
    EXPECT_EQ(rep.check.name, "eigen_derivative_shifted");
    EXPECT_TRUE(forms.pass) << forms.residual_max;
    EXPECT_LT(forms.residual_max, 1e-9);
    EXPECT_TRUE(rep.pass) << rep.residual_max;
}

TEST(BranchTrace, RejectsBadSampleAndMissingBranch) {
    const auto traj = run(winding_state(16), 0.01, 1e-3);
    EXPECT_THROW(trace_branch(traj, OperatorSpec::shifted(0.0, 0), {0, 1}, 0), Error);
    try {
        trace_branch(traj, OperatorSpec::shifted(0.0, 0), {0, 100}, 1);
        FAIL() << "expected AllZero";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::AllZero);
    }
}

TEST(LowerBounds, GatingOnWinding) {
    const auto traj = run(winding_state(32), 0.1, 1e-3);
    const auto lap = trace_branch(traj, OperatorSpec::shifted(0.0, 0), {0, 1}, 5);
    const auto shf = trace_branch(traj, OperatorSpec::shifted(0.5, 0), {0, 1}, 5);
    const auto reps = check_lower_bounds(traj, lap, shf, 0.5, 0.5);
    ASSERT_EQ(reps.size(), 5u);
    // every hypothesis fails on the winding torus: nothing is asserted
    for (const auto& r : reps) {
        EXPECT_FALSE(r.asserted) << r.check.name;
        EXPECT_FALSE(r.fails_suite()) << r.check.name;
    }
}

TEST(LowerBounds, FlatSatisfiesAll) {
    const auto traj = run(flat_state(16), 0.05, 1e-3);
    const auto lap = trace_branch(traj, OperatorSpec::shifted(0.0, 0), {0, 1}, 5);
    const auto shf = trace_branch(traj, OperatorSpec::shifted(0.5, 0), {0, 1}, 5);
    for (const auto& r : check_lower_bounds(traj, lap, shf, 0.5, 0.5)) {
        EXPECT_FALSE(r.fails_suite()) << r.check.name << " " << r.residual_max;
    }
}

TEST(CheckNames, SortedAndUnique) {
    const auto& names = check_names();
    EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
    EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
    EXPECT_NE(std::find(names.begin(), names.end(), "s_evolution"), names.end());
    EXPECT_NE(std::find(names.begin(), names.end(), "entropy_dW"), names.end());
}

TEST(Suite, EmptyCheckListPasses) {
    auto cfg = small_winding();
    cfg.verify.checks = std::vector<std::string>{};
    const auto result = run_suite(cfg);
    EXPECT_TRUE(result.pass());
    EXPECT_TRUE(result.reports.empty());
}

TEST(Suite, UnknownCheckIsUsageError) {
    auto cfg = small_winding();
    cfg.verify.checks = std::vector<std::string>{"s_evolution", "no_such_check"};
    try {
        run_suite(cfg);
        FAIL() << "expected UsageError";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UsageError);
        EXPECT_NE(e.message().find("no_such_check"), std::string::npos);
    }
}

TEST(Suite, UnstableStepNamesTheCheck) {
    auto cfg = small_winding();
    cfg.dt = 1.0;
    cfg.verify.checks = std::vector<std::string>{"s_evolution"};
    try {
        run_suite(cfg);
        FAIL() << "expected StabilityViolation";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StabilityViolation);
        EXPECT_TRUE(e.is_numerical());
        EXPECT_NE(e.message().find("check s_evolution"), std::string::npos);
        EXPECT_NE(e.message().find("small_winding"), std::string::npos);
    }
}

TEST(Suite, SelectedChecksAreSortedAndTolerancesApply) {
    auto cfg = small_winding();
    cfg.verify.checks = std::vector<std::string>{"s_evolution", "comparison_bound", "area_law"};
    cfg.verify.tolerances["area_law"] = 1e-2;
    const auto result = run_suite(cfg);
    ASSERT_EQ(result.reports.size(), 3u);
    EXPECT_EQ(result.reports[0].check.name, "area_law");
    EXPECT_EQ(result.reports[0].check.tolerance, 1e-2);
    EXPECT_EQ(result.reports[1].check.name, "comparison_bound");
    EXPECT_EQ(result.reports[2].check.name, "s_evolution");
    EXPECT_TRUE(result.pass());
}

TEST(Suite, RefinementAttachesOrder) {
    auto cfg = small_winding();
    cfg.preset = "bump_b";
    cfg.params.mu = 0.0;
    cfg.N = 32;
    cfg.verify.checks = std::vector<std::string>{"s_evolution"};
    cfg.verify.refine = true;
    const auto result = run_suite(cfg);
    ASSERT_EQ(result.reports.size(), 1u);
    const auto& rep = result.reports[0];
    ASSERT_TRUE(rep.order_estimate);
    EXPECT_GE(*rep.order_estimate, 1.8);
    EXPECT_EQ(rep.check.refinement, std::make_pair(32, 64));
    EXPECT_TRUE(result.pass());
}

TEST(Report, JsonAndSeriesFiles) {
    auto cfg = small_winding();
    cfg.verify.checks = std::vector<std::string>{"s_evolution", "hypothesis_pinching", "laplacian_lower_bound"};
    const auto result = run_suite(cfg);
    const auto dir = scratch_dir("report");
    write_report(result, dir);

    std::ifstream in(dir / "report.json");
    const auto doc = nlohmann::json::parse(in);
    EXPECT_EQ(doc["suite"], "small_winding");
    EXPECT_EQ(doc["pass"], true);
    EXPECT_EQ(doc["summary"]["checks"], 3);
    EXPECT_EQ(doc["summary"]["passed"], 1);
    EXPECT_EQ(doc["summary"]["failed"], 0);
    EXPECT_EQ(doc["summary"]["hypotheses_recorded"], 1);
    EXPECT_EQ(doc["summary"]["reported_not_asserted"], 1);
    ASSERT_EQ(doc["checks"].size(), 3u);
    for (const auto& c : doc["checks"]) {
        for (const char* key : {"name", "kind", "status", "pass", "asserted", "residual_max", "order_estimate",
                                "tolerance", "flags_summary", "series_file", "note"}) {
            EXPECT_TRUE(c.contains(key)) << key;
        }
        const auto series = dir / c["series_file"].get<std::string>();
        ASSERT_TRUE(std::filesystem::exists(series));
        std::ifstream s(series);
        std::string header;
        std::getline(s, header);
        EXPECT_EQ(header, "t,lhs,rhs,residual,hypothesis_ok,degenerate");
        int rows = 0;
        for (std::string line; std::getline(s, line);) ++rows;
        EXPECT_EQ(rows, c["flags_summary"]["samples"].get<int>());
    }
    EXPECT_EQ(doc["checks"][0]["name"], "hypothesis_pinching");
    EXPECT_EQ(doc["checks"][0]["status"], "recorded");
    EXPECT_EQ(doc["checks"][1]["status"], "reported, not asserted");
    EXPECT_TRUE(doc["checks"][2]["order_estimate"].is_null());
    std::filesystem::remove_all(dir);
}

TEST(Report, IsDeterministic) {
    auto cfg = small_winding();
    cfg.verify.checks = std::vector<std::string>{"s_evolution", "comparison_bound"};
    const auto d1 = scratch_dir("det1");
    const auto d2 = scratch_dir("det2");
    write_report(run_suite(cfg), d1);
    write_report(run_suite(cfg), d2);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(slurp(d1 / "report.json"), slurp(d2 / "report.json"));
    EXPECT_EQ(slurp(d1 / "series_s_evolution.csv"), slurp(d2 / "series_s_evolution.csv"));
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}
