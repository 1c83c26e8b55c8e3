#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "listflow/flow.hpp"
#include "listflow/presets.hpp"

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

} // namespace

TEST(FlowRhs, FlatIsStationary) {
    const auto r = flow_rhs(flat_state(32));
    EXPECT_EQ(r.r, 0.0);
    for (int i = 0; i < 32; ++i) {
        EXPECT_EQ(r.da[i], 0.0);
        EXPECT_EQ(r.db[i], 0.0);
        EXPECT_EQ(r.dp[i], 0.0);
    }
}

TEST(FlowRhs, WindingUnrescaled) {
    const auto r = flow_rhs(winding_state(32));
    for (int i = 0; i < 32; ++i) {
        EXPECT_DOUBLE_EQ(r.da[i], 2.0);
        EXPECT_EQ(r.db[i], 0.0);
        EXPECT_EQ(r.dp[i], 0.0);
    }
}

TEST(FlowRhs, WindingAverageS) {
    const auto r = flow_rhs(winding_state(32, RescalePolicy::average_s()));
    EXPECT_NEAR(r.r, -2.0, 1e-14);
    for (int i = 0; i < 32; ++i) {
        EXPECT_NEAR(r.da[i], 1.0, 1e-14);
        EXPECT_NEAR(r.db[i], -1.0, 1e-14);
    }
}

TEST(FlowRhs, MatchesTensorEvolution) {
    // d/dt a^2 = -2 (Sxx - (r/2) a^2), d/dt b^2 = -2 (Syy - (r/2) b^2)
    const auto g = TorusGrid::make(64, 2 * kPi, 1.0);
    auto d = presets::dilaton_bump(g, {.mu = 0.7, .eps = 0.2, .eps_b = 0.1});
    const auto s = make_state(g, d.metric, d.dilaton, 2.0, RescalePolicy::prescribed(0.3));
    const auto c = s.geometry();
    const auto r = flow_rhs(s, c);
    EXPECT_EQ(r.r, 0.3);
    for (int i = 0; i < g.n; ++i) {
        const double a = s.metric.a[i], b = s.metric.b[i];
        EXPECT_NEAR(2 * a * r.da[i], -2 * (c.Sxx[i] - 0.15 * a * a), 1e-12);
        EXPECT_NEAR(2 * b * r.db[i], -2 * (c.Syy[i] - 0.15 * b * b), 1e-12);
        EXPECT_EQ(r.dp[i], c.lapPhi[i]);
    }
}

TEST(MakeState, RecordsInitialMinimumOfS) {
    const auto s = winding_state(32);
    EXPECT_DOUBLE_EQ(s.Smin0, -2.0);
    EXPECT_EQ(s.Ir, 0.0);
    EXPECT_EQ(s.n, 2);
    const auto g = TorusGrid::make(32, 1, 1);
    auto d = presets::flat(g);
    EXPECT_THROW(make_state(g, d.metric, d.dilaton, 0.0), Error);
}

TEST(StepRk4, FlatStateOnlyAdvancesTime) {
    const auto s0 = flat_state(32);
    const auto s1 = step_rk4(s0, default_dt(s0));
    EXPECT_DOUBLE_EQ(s1.t, default_dt(s0));
    EXPECT_EQ(s1.metric.a, s0.metric.a);
    EXPECT_EQ(s1.metric.b, s0.metric.b);
    EXPECT_EQ(s1.dilaton.p, s0.dilaton.p);
}

TEST(StepRk4, GuardsStability) {
    const auto s0 = winding_state(128);
    EXPECT_LE(1e-3, dt_max(s0));
    try {
        step_rk4(s0, 2.0 * dt_max(s0));
        FAIL() << "expected StabilityViolation";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StabilityViolation);
    }
    EXPECT_THROW(step_rk4(s0, 0.0), Error);
}

TEST(StepRk4, DetectsCollapse) {
    // A huge negative prescribed r drives a stage through zero within one step.
    auto s = flat_state(16);
    s.policy = RescalePolicy::prescribed(-1e4);
    try {
        run(s, 1.0, default_dt(s));
        FAIL() << "expected NonPositiveMetric";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonPositiveMetric);
        EXPECT_NE(e.message().find("from t ="), std::string::npos);
    }
}

TEST(Run, ZeroHorizonKeepsOneSnapshot) {
    const auto traj = run(winding_state(32), 0.0, 1e-3);
    ASSERT_EQ(traj.states.size(), 1u);
    EXPECT_EQ(traj.r_series.size(), 1u);
}

TEST(Run, WindingReproducesClosedForm) {
    const auto traj = run(winding_state(128), 0.5, 1e-3, 50);
    ASSERT_EQ(traj.states.size(), 11u);
    const auto& last = traj.states.back();
    EXPECT_NEAR(last.t, 0.5, 1e-12);
    const double exact = std::sqrt(3.0);
    for (double a : last.metric.a) EXPECT_NEAR(a / exact, 1.0, 1e-6);
    EXPECT_EQ(last.dilaton.mu, 1.0);
    const auto t = traj.times();
    for (std::size_t i = 1; i < t.size(); ++i) EXPECT_NEAR(t[i] - t[i - 1], traj.spacing(), 1e-12);
}

TEST(Run, AverageSConservesAreaAndTracksIntegralOfR) {
    const auto g = TorusGrid::make(64, 2 * kPi, kPi / 2);
    auto d = presets::dilaton_bump(g, {.mu = 0.5, .eps = 0.3, .eps_b = 0.1});
    const auto s0 = make_state(g, d.metric, d.dilaton, 2.0, RescalePolicy::average_s());
    const auto traj = run(s0, 1.0, default_dt(s0), 100);
    const double area0 = s0.geometry().area;
    for (const auto& s : traj.states) EXPECT_NEAR(s.geometry().area / area0, 1.0, 1e-6);
    // Ir against trapezoid of the stored r samples
    double trap = 0.0;
    const auto ts = traj.times();
    for (std::size_t i = 1; i < ts.size(); ++i)
        trap += 0.5 * (ts[i] - ts[i - 1]) * (traj.r_series[i] + traj.r_series[i - 1]);
    EXPECT_NEAR(traj.states.back().Ir, trap, 1e-3 * (1 + std::abs(trap)));
}

TEST(Run, WindingAverageSIntegratesRExactly) {
    // r = S = -2/a^2 stays spatially constant along the rescaled winding solution.
    const auto traj = run(winding_state(32, RescalePolicy::average_s()), 0.2, 1e-3, 200);
    const auto& s = traj.states.back();
    const auto c = s.geometry();
    EXPECT_NEAR(traj.r_series.back(), c.S[0], 1e-12);
    // a_t = 2/a + (r/2) a = 1/a, so a^2 = 1 + 2t.
    EXPECT_NEAR(s.metric.a[0], std::sqrt(1.4), 1e-9);
    // Ir = int -2/(1 + 2t) dt = -ln(1 + 2t)
    EXPECT_NEAR(s.Ir, -std::log(1.4), 1e-9);
}

TEST(Trajectory, CsvExport) {
    const auto traj = run(winding_state(32), 0.01, 1e-3, 5);
    const auto path = std::filesystem::temp_directory_path() / "listflow_traj_test.csv";
    write_trajectory_csv(traj, path);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    EXPECT_EQ(header, "t,r,Ir,area,Smin,Smax,min_a,min_b");
    int rows = 0;
    while (std::getline(in, row)) ++rows;
    EXPECT_EQ(rows, 3);
    std::filesystem::remove(path);
}

TEST(ExactWinding, Examples) {
    EXPECT_NEAR(exact_winding_solution(1.3, 0.0, 2.0, 5.0), 1.3, 1e-15);
    EXPECT_NEAR(exact_winding_solution(1.0, 1.0, 2.0, 0.5), 1.7320508075689376, 1e-12);  // oracle: scalar ODE at rtol 1e-13
    EXPECT_NEAR(exact_winding_solution(1.0, 1.0, 2.0, 2.0), 3.0, 1e-12);
    EXPECT_THROW(exact_winding_solution(0.0, 1.0, 2.0, 1.0), Error);
}

TEST(ComparisonSolution, Examples) {
    const auto zero = RSeries::constant(0.0, 1.0);
    EXPECT_NEAR(comparison_solution(-2.0, 2, zero, 0.5), -1.0, 1e-14);
    EXPECT_NEAR(comparison_riccati(-2.0, 2, zero, 0.5), -1.0, 1e-10);
    EXPECT_EQ(comparison_solution(0.0, 2, zero, 0.7), 0.0);

    // r = 1: x(1) = -1 / (2e - 1), trapezoid quadrature on a fine r sampling
    const auto one = RSeries::constant(1.0, 1.0, 2001);
    const double oracle = -0.22539967356057097;
    EXPECT_NEAR(comparison_solution(-1.0, 2, one, 1.0), oracle, 1e-6 * std::abs(oracle));
    EXPECT_NEAR(comparison_riccati(-1.0, 2, one, 1.0), oracle, 1e-10);
    EXPECT_NEAR(comparison_solution(-1.0, 2, one, 1.0) / comparison_riccati(-1.0, 2, one, 1.0), 1.0, 1e-6);

    const auto xs = comparison_series(-1.0, 2, one);
    EXPECT_NEAR(xs.back(), comparison_solution(-1.0, 2, one, 1.0), 1e-15);
}

TEST(ComparisonSolution, BlowUp) {
    const auto zero = RSeries::constant(0.0, 2.0, 201);
    // x = 1 / (1 - t) for Smin0 = 1 blows up at t = 1
    try {
        comparison_solution(1.0, 2, zero, 1.5);
        FAIL() << "expected BoundBlowup";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BoundBlowup);
    }
    EXPECT_THROW(comparison_series(1.0, 2, zero), Error);
    EXPECT_THROW(comparison_solution(-1.0, 2, zero, 3.0), Error);
}
