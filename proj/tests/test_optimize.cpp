#include <doctest.h>

#include <random>

#include "eva/optimize.hpp"
#include "support/oracles.hpp"

using namespace eva;
using namespace eva::opt;

namespace {

LinearProgram empty_lp(int n) {
    LinearProgram lp;
    lp.c = Eigen::VectorXd::Zero(n);
    lp.A_eq.resize(0, n);
    lp.b_eq.resize(0);
    lp.A_in.resize(0, n);
    lp.b_in.resize(0);
    lp.lower = Eigen::VectorXd::Constant(n, -kInf);
    lp.upper = Eigen::VectorXd::Constant(n, kInf);
    return lp;
}

LinearProgram random_lp(std::mt19937_64& rng, int n, int mi) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LinearProgram lp = empty_lp(n);
    for (int j = 0; j < n; ++j) lp.c[j] = u(rng);
    lp.A_in.resize(mi, n);
    lp.b_in.resize(mi);
    Eigen::VectorXd x0(n);
    for (int j = 0; j < n; ++j) {
        lp.lower[j] = -5.0 + 2.0 * u(rng);
        lp.upper[j] = 5.0 + 2.0 * u(rng);
        x0[j] = 0.5 * (lp.lower[j] + lp.upper[j]);
    }
    for (int i = 0; i < mi; ++i) {
        for (int j = 0; j < n; ++j) lp.A_in(i, j) = u(rng);
        lp.b_in[i] = lp.A_in.row(i).dot(x0) + 0.5 + std::abs(u(rng));
    }
    return lp;
}

QuadraticProgram random_box_qp(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = u(rng);
    Eigen::MatrixXd Qd = M.transpose() * M;
    QuadraticProgram qp;
    qp.Q = Qd.sparseView();
    qp.c.resize(n);
    qp.lower.resize(n);
    qp.upper.resize(n);
    for (int j = 0; j < n; ++j) {
        qp.c[j] = 2.0 * u(rng);
        qp.lower[j] = -1.0 - std::abs(u(rng));
        qp.upper[j] = 1.0 + std::abs(u(rng));
    }
    qp.A_eq.resize(0, n);
    qp.b_eq.resize(0);
    qp.A_in.resize(0, n);
    qp.b_in.resize(0);
    return qp;
}

}  // namespace

TEST_CASE("lp: single lower bound") {
    LinearProgram lp = empty_lp(1);
    lp.c[0] = 1.0;
    lp.lower[0] = 1.0;
    auto sol = solve_lp(lp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("lp: textbook simplex facet") {
    LinearProgram lp = empty_lp(2);
    lp.c << -1.0, -1.0;
    lp.A_in.resize(1, 2);
    lp.A_in << 1.0, 1.0;
    lp.b_in.resize(1);
    lp.b_in << 1.0;
    lp.lower.setZero();
    auto sol = solve_lp(lp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(sol.x[0] + sol.x[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sol.row_active[0] == kActiveRow);
}

TEST_CASE("lp: unbounded and infeasible statuses") {
    LinearProgram lp = empty_lp(1);
    lp.c[0] = -1.0;
    lp.lower[0] = 0.0;
    CHECK(solve_lp(lp).status == SolveStatus::Unbounded);

    LinearProgram lp2 = empty_lp(1);
    lp2.A_eq.resize(1, 1);
    lp2.A_eq << 1.0;
    lp2.b_eq.resize(1);
    lp2.b_eq << 5.0;
    lp2.lower[0] = 0.0;
    lp2.upper[0] = 1.0;
    CHECK(solve_lp(lp2).status == SolveStatus::Infeasible);
}

TEST_CASE("lp: equality with free variable") {
    LinearProgram lp = empty_lp(2);
    lp.c << 0.0, 1.0;
    lp.A_eq.resize(1, 2);
    lp.A_eq << 1.0, -1.0;
    lp.b_eq.resize(1);
    lp.b_eq << 2.0;   // x - y = 2, both free, minimize y
    lp.lower[1] = -3.0;
    auto sol = solve_lp(lp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x[1] == doctest::Approx(-3.0));
    CHECK(sol.x[0] == doctest::Approx(-1.0));
}

TEST_CASE("lp: random instances match vertex enumeration") {
    std::mt19937_64 rng(42);
    int solved = 0;
    for (int k = 0; k < 25; ++k) {
        LinearProgram lp = random_lp(rng, 8, 6);
        auto truth = oracle::vertex_enum_lp(lp);
        auto sol = solve_lp(lp);
        REQUIRE(sol.status == SolveStatus::Optimal);
        REQUIRE(truth.has_value());
        CHECK(std::abs(sol.objective - *truth) <= 1e-8 * (1.0 + std::abs(*truth)));
        ++solved;
    }
    CHECK(solved == 25);
}

TEST_CASE("lp: weak duality on 250 random instances") {
    std::mt19937_64 rng(7);
    for (int k = 0; k < 250; ++k) {
        LinearProgram lp = random_lp(rng, 6, 4);
        auto sol = solve_lp(lp);
        REQUIRE(sol.status == SolveStatus::Optimal);
        CHECK(sol.dual_objective <= sol.objective + 1e-7);
        // duals actually certify: strong duality holds at a simplex optimum
        CHECK(sol.dual_objective == doctest::Approx(sol.objective).epsilon(1e-7));
    }
}

TEST_CASE("lp: deterministic resolves") {
    std::mt19937_64 rng(11);
    LinearProgram lp = random_lp(rng, 8, 6);
    auto a = solve_lp(lp);
    auto b = solve_lp(lp);
    REQUIRE(a.status == SolveStatus::Optimal);
    CHECK(a.x == b.x);  // bit-for-bit
    CHECK(a.objective == b.objective);
    CHECK(a.active_set_id == b.active_set_id);
}

TEST_CASE("qp: unconstrained stationary point") {
    QuadraticProgram qp;
    qp.Q.resize(1, 1);
    qp.Q.insert(0, 0) = 2.0;
    qp.c.resize(1);
    qp.c << -6.0;  // (x-3)^2 = x^2 - 6x + 9
    qp.lower = Eigen::VectorXd::Constant(1, -kInf);
    qp.upper = Eigen::VectorXd::Constant(1, kInf);
    qp.A_eq.resize(0, 1);
    qp.b_eq.resize(0);
    qp.A_in.resize(0, 1);
    qp.b_in.resize(0);
    auto sol = solve_qp(qp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x[0] == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("qp: active bound") {
    QuadraticProgram qp;
    qp.Q.resize(1, 1);
    qp.Q.insert(0, 0) = 2.0;
    qp.c = Eigen::VectorXd::Zero(1);
    qp.lower = Eigen::VectorXd::Constant(1, 2.0);
    qp.upper = Eigen::VectorXd::Constant(1, kInf);
    qp.A_eq.resize(0, 1);
    qp.b_eq.resize(0);
    qp.A_in.resize(0, 1);
    qp.b_in.resize(0);
    auto sol = solve_qp(qp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x[0] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(sol.objective == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(sol.var_active[0] == kAtLower);
}

TEST_CASE("qp: random PSD instances match projected gradient") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 40; ++k) {
        QuadraticProgram qp = random_box_qp(rng, 6);
        auto sol = solve_qp(qp);
        REQUIRE(sol.status == SolveStatus::Optimal);
        double ref = oracle::projected_gradient_qp(Eigen::MatrixXd(qp.Q), qp.c, qp.lower, qp.upper);
        CHECK(std::abs(sol.objective - ref) <= 1e-6 * (1.0 + std::abs(ref)));
        auto res = kkt_residuals(qp, sol);
        CHECK(res.primal <= 1e-8);
        CHECK(res.stationarity <= 1e-7 * (1.0 + qp.c.cwiseAbs().maxCoeff()));
        CHECK(res.complementarity <= 1e-7 * (1.0 + std::abs(sol.objective)));
    }
}

TEST_CASE("qp: equality constrained with duals") {
    // min x^2 + y^2 s.t. x + y = 2 -> (1,1), dual -2
    QuadraticProgram qp;
    qp.Q.resize(2, 2);
    qp.Q.insert(0, 0) = 2.0;
    qp.Q.insert(1, 1) = 2.0;
    qp.c = Eigen::VectorXd::Zero(2);
    qp.A_eq.resize(1, 2);
    qp.A_eq.insert(0, 0) = 1.0;
    qp.A_eq.insert(0, 1) = 1.0;
    qp.b_eq.resize(1);
    qp.b_eq << 2.0;
    qp.A_in.resize(0, 2);
    qp.b_in.resize(0);
    qp.lower = Eigen::VectorXd::Constant(2, -kInf);
    qp.upper = Eigen::VectorXd::Constant(2, kInf);
    auto sol = solve_qp(qp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(sol.dual_eq[0] == doctest::Approx(-2.0).epsilon(1e-6));
}

TEST_CASE("qp: infeasible detection") {
    QuadraticProgram qp;
    qp.Q.resize(1, 1);
    qp.c = Eigen::VectorXd::Zero(1);
    qp.A_eq.resize(1, 1);
    qp.A_eq.insert(0, 0) = 1.0;
    qp.b_eq.resize(1);
    qp.b_eq << 5.0;
    qp.A_in.resize(0, 1);
    qp.b_in.resize(0);
    qp.lower = Eigen::VectorXd::Constant(1, 0.0);
    qp.upper = Eigen::VectorXd::Constant(1, 1.0);
    auto sol = solve_qp(qp);
    CHECK(sol.status != SolveStatus::Optimal);
}

TEST_CASE("qp: rejects indefinite Q") {
    QuadraticProgram qp;
    qp.Q.resize(2, 2);
    qp.Q.insert(0, 1) = 1.0;
    qp.Q.insert(1, 0) = 1.0;  // eigenvalues +-1
    qp.c = Eigen::VectorXd::Zero(2);
    qp.A_eq.resize(0, 2);
    qp.b_eq.resize(0);
    qp.A_in.resize(0, 2);
    qp.b_in.resize(0);
    qp.lower = Eigen::VectorXd::Constant(2, 0.0);
    qp.upper = Eigen::VectorXd::Constant(2, 1.0);
    CHECK_THROWS_AS(qp.validate(), ValidationError);
}

namespace {

// small MIQP: binaries steer a quadratic tracking objective
QuadraticProgram knapsack_miqp(std::mt19937_64& rng, int nb) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = nb + 1;  // binaries + one continuous
    QuadraticProgram qp;
    qp.Q.resize(n, n);
    qp.Q.insert(nb, nb) = 2.0;
    qp.c.resize(n);
    for (int j = 0; j < nb; ++j) qp.c[j] = u(rng);
    qp.c[nb] = 2.0 * u(rng);
    qp.lower = Eigen::VectorXd::Zero(n);
    qp.upper = Eigen::VectorXd::Ones(n);
    qp.lower[nb] = -5.0;
    qp.upper[nb] = 5.0;
    // y >= sum a_j z_j - b  (one inequality row)
    qp.A_in.resize(1, n);
    for (int j = 0; j < nb; ++j) qp.A_in.insert(0, j) = 1.0 + u(rng);
    qp.A_in.insert(0, nb) = -1.0;
    qp.b_in.resize(1);
    qp.b_in << 1.0;
    qp.A_eq.resize(0, n);
    qp.b_eq.resize(0);
    return qp;
}

}  // namespace

TEST_CASE("miqp: fixed binaries reduce to the qp") {
    std::mt19937_64 rng(3);
    QuadraticProgram qp = knapsack_miqp(rng, 4);
    for (int j = 0; j < 4; ++j) {
        qp.lower[j] = 1.0;
        qp.upper[j] = 1.0;
    }
    auto ref = solve_qp(qp);
    auto sol = solve_miqp(qp, {0, 1, 2, 3});
    REQUIRE(sol.status == SolveStatus::Optimal);
    REQUIRE(ref.status == SolveStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(ref.objective).epsilon(1e-9));
    CHECK(sol.nodes <= 1);
}

TEST_CASE("miqp: four binaries match exhaustive enumeration") {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 10; ++k) {
        QuadraticProgram qp = knapsack_miqp(rng, 4);
        auto sol = solve_miqp(qp, {0, 1, 2, 3});
        REQUIRE(sol.status == SolveStatus::Optimal);
        double best = kInf;
        for (int mask = 0; mask < 16; ++mask) {
            QuadraticProgram fixed = qp;
            for (int j = 0; j < 4; ++j) {
                double v = (mask >> j) & 1 ? 1.0 : 0.0;
                fixed.lower[j] = v;
                fixed.upper[j] = v;
            }
            auto s = solve_qp(fixed);
            if (s.status == SolveStatus::Optimal) best = std::min(best, s.objective);
        }
        CHECK(std::abs(sol.objective - best) <= 1e-6);
        // binaries integral within tolerance
        for (int j = 0; j < 4; ++j)
            CHECK(std::abs(sol.x[j] - std::round(sol.x[j])) <= 1e-9);
    }
}

TEST_CASE("miqp: infeasible root propagates") {
    QuadraticProgram qp;
    qp.Q.resize(2, 2);
    qp.c = Eigen::VectorXd::Zero(2);
    qp.A_eq.resize(1, 2);
    qp.A_eq.insert(0, 0) = 1.0;
    qp.A_eq.insert(0, 1) = 1.0;
    qp.b_eq.resize(1);
    qp.b_eq << 5.0;  // but both vars in [0,1]
    qp.A_in.resize(0, 2);
    qp.b_in.resize(0);
    qp.lower = Eigen::VectorXd::Zero(2);
    qp.upper = Eigen::VectorXd::Ones(2);
    auto sol = solve_miqp(qp, {0});
    CHECK(sol.status == SolveStatus::Infeasible);
}

TEST_CASE("miqp: incumbent history is nonincreasing") {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 5; ++k) {
        QuadraticProgram qp = knapsack_miqp(rng, 6);
        auto sol = solve_miqp(qp, {0, 1, 2, 3, 4, 5});
        REQUIRE(sol.status == SolveStatus::Optimal);
        for (size_t i = 1; i < sol.incumbent_history.size(); ++i)
            CHECK(sol.incumbent_history[i] <= sol.incumbent_history[i - 1] + 1e-12);
    }
}

TEST_CASE("parametric sweep: two-segment toy") {
    // min x s.t. x >= theta, x in [0, 2]; theta in [-1, 1]
    // x*(theta) = max(0, theta): two segments
    LinearProgram lp = empty_lp(1);
    lp.c[0] = 1.0;
    lp.lower[0] = 0.0;
    lp.upper[0] = 2.0;
    lp.A_in.resize(1, 1);
    lp.A_in << -1.0;  // -x <= -theta
    lp.b_in.resize(1);
    lp.b_in << 0.0;
    Eigen::VectorXd f_eq(0), f_in(1);
    f_in << -1.0;
    auto segs = opt::parametric_sweep(lp, f_eq, f_in, -1.0, 1.0);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].lo == doctest::Approx(-1.0));
    CHECK(segs[0].hi == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(segs[0].x_slope[0] == doctest::Approx(0.0));
    CHECK(segs[1].x_slope[0] == doctest::Approx(1.0));
    CHECK(segs[1].hi == doctest::Approx(1.0));
}
