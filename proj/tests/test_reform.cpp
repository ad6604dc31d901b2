#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gen.hpp"

using namespace bdl;

namespace {

VectorXd vec1(double a) {
    VectorXd v(1);
    v << a;
    return v;
}

std::size_t node_of(const BilevelInstance& inst, double x, double y) {
    return fuse_joint(inst, inst.xgrid.nearest_node(vec1(x)), inst.ygrid.nearest_node(vec1(y)));
}

bool argmin_contains(const BilevelInstance& inst, const PrimalSolution& s, double x, double y) {
    std::size_t id = node_of(inst, x, y);
    return std::find(s.argmin.begin(), s.argmin.end(), id) != s.argmin.end();
}

}  // namespace

TEST_CASE("llvf feasibility on t1") {
    BilevelInstance inst = testgen::t1();
    Tols tols = inst.default_tols();
    GridFunction phi = inst.compute_phi(tols.feas);
    CHECK(llvf_feasible(inst, phi, node_of(inst, 0.0, 0.0), tols));
    CHECK_FALSE(llvf_feasible(inst, phi, node_of(inst, 0.0, 0.5), tols));  // f - phi = 0.25
    CHECK_FALSE(llvf_feasible(inst, phi, node_of(inst, -1.0, -1.0), tols));  // G1 = 1 > 0
}

TEST_CASE("solve_llvf on the reference instances") {
    BilevelInstance t1 = testgen::t1();
    Tols tols = t1.default_tols();
    GridFunction phi1 = t1.compute_phi(tols.feas);
    PrimalSolution s1 = solve_llvf(t1, phi1, tols);
    CHECK(s1.value.raw() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(s1.argmin.size() == 1);
    CHECK(argmin_contains(t1, s1, 0.0, 0.0));

    BilevelInstance t2 = testgen::t2();
    GridFunction phi2 = t2.compute_phi(tols.feas);
    PrimalSolution s2 = solve_geometric(t2, phi2, tols);
    CHECK(s2.value.raw() == Catch::Approx(-1.0));
    CHECK(argmin_contains(t2, s2, 1.0, -1.0));

    // brute-force oracle for t2: phi(x) = -|x|, y must minimize x*y
    for (std::size_t i = 0; i < t2.xgrid.node_count(); ++i) {
        double x = t2.xgrid.coord(0, static_cast<int>(i));
        CHECK(phi2.values[i].raw() == Catch::Approx(-std::abs(x)).margin(1e-12));
    }
}

TEST_CASE("infeasible instance reports +inf with empty argmin") {
    BilevelInstance inst = testgen::parse_or_die(
        "problem \"inf\"\n"
        "dim x 1\ndim y 1\n"
        "xdomain -1 1 grid 5\n"
        "ydomain -1 1 grid 5\n"
        "upper objective: x1\n"
        "lower objective: y1\n"
        "upper constraint G1: x1 + 10\n");  // G1 >= 9 > 0 everywhere
    Tols tols;
    GridFunction phi = inst.compute_phi(tols.feas);
    PrimalSolution s = solve_llvf(inst, phi, tols);
    CHECK(s.value == XReal::pos_inf());
    CHECK(s.argmin.empty());
}

TEST_CASE("perturbed feasibility bands") {
    BilevelInstance inst = testgen::t1();
    Tols tols;
    GridFunction phi = inst.compute_phi(tols.feas);
    CHECK(perturbed_feasible(inst, phi, node_of(inst, 0.0, 0.5), -0.25, tols));
    CHECK(perturbed_feasible(inst, phi, node_of(inst, 0.0, 0.0), 0.0, tols));
    CHECK_FALSE(perturbed_feasible(inst, phi, node_of(inst, 0.0, 0.5), 0.0, tols));

    // every feasible triple has t <= tol: the slack f - phi is nonnegative
    for (std::size_t i = 0; i < inst.xgrid.node_count() * inst.ygrid.node_count(); i += 7) {
        XReal w = value_slack(inst, phi, i);
        if (!w.is_finite()) continue;
        double t = -w.raw();  // the only t making the equality hold
        if (perturbed_feasible(inst, phi, i, t, tols)) CHECK(t <= tols.value + 1e-12);
    }
}

TEST_CASE("penalized solver on t1") {
    BilevelInstance inst = testgen::t1();
    Tols tols;
    GridFunction phi = inst.compute_phi(tols.feas);
    PrimalSolution p1 = solve_penalized(inst, phi, 1.0, tols);
    CHECK(p1.value.raw() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(p1.argmin.size() == 1);
    CHECK(argmin_contains(inst, p1, 0.0, 0.0));

    // exactness across scales on this instance
    PrimalSolution pa = solve_penalized(inst, phi, 10.0, tols);
    PrimalSolution pb = solve_penalized(inst, phi, 0.1, tols);
    CHECK(pa.argmin == p1.argmin);
    CHECK(pb.argmin == p1.argmin);

    CHECK_THROWS_AS(solve_penalized(inst, phi, 0.0, tols), std::invalid_argument);

    // on lower-level optima the penalty vanishes: objective = F / lambda
    std::size_t id = node_of(inst, 0.5, 0.5);
    XReal w = value_slack(inst, phi, id);
    CHECK(w.raw() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("regularized solver") {
    BilevelInstance inst = testgen::t1();
    Tols tols;
    GridFunction phi = inst.compute_phi(tols.feas);
    PrimalSolution r = solve_regularized(inst, phi, 0.25, tols);
    CHECK(r.value.raw() == Catch::Approx(0.0).margin(1e-12));
    CHECK(argmin_contains(inst, r, 0.0, 0.0));

    // value nonincreasing in eps
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 8; ++trial) {
        BilevelInstance m = testgen::random_mixed(rng);
        GridFunction mphi = m.compute_phi(tols.feas);
        double eps[] = {0.01, 0.1, 0.5, 2.0};
        XReal prev = XReal::pos_inf();
        for (double e : eps) {
            PrimalSolution s = solve_regularized(m, mphi, e, tols);
            CHECK(s.value <= prev);
            prev = s.value;
        }
        // once eps dominates the slack range, the value constraint is vacuous
        PrimalSolution wide = solve_regularized(m, mphi, 1e9, tols);
        PrimalSolution free = detail::scan_minimize(
            m,
            [&](std::size_t i) {
                VectorXd xy = joint_node(m, i);
                return upper_feasible(m, xy, tols.feas) && lower_feasible(m.lower, xy, tols.feas);
            },
            [&](std::size_t i) { return m.F.evaluate(joint_node(m, i)); }, tols);
        CHECK(wide.value == free.value);
    }
    CHECK_THROWS_AS(solve_regularized(inst, phi, -1.0, tols), std::invalid_argument);
}

TEST_CASE("geometric solver special cases") {
    Tols tols;
    // constant upper objective
    BilevelInstance c = testgen::parse_or_die(
        "problem \"cf\"\n"
        "dim x 1\ndim y 1\n"
        "xdomain -1 1 grid 5\n"
        "ydomain -1 1 grid 5\n"
        "geometric: true\n"
        "upper objective: 3\n"
        "lower objective: y1^2\n");
    GridFunction cphi = c.compute_phi(tols.feas);
    PrimalSolution cs = solve_geometric(c, cphi, tols);
    CHECK(cs.value.raw() == Catch::Approx(3.0));

    // single-x-node geometric instance reduces to the inner minimization
    BilevelInstance sx = testgen::parse_or_die(
        "problem \"sx\"\n"
        "dim x 1\ndim y 1\n"
        "xdomain 0.5 0.5 grid 1\n"
        "ydomain -1 1 grid 21\n"
        "geometric: true\n"
        "upper objective: (y1 - 1)^2\n"
        "lower objective: (y1 - x1)^2\n");
    GridFunction sphi = sx.compute_phi(tols.feas);
    PrimalSolution ss = solve_geometric(sx, sphi, tols);
    CHECK(ss.value.raw() == Catch::Approx(0.25));  // y = 0.5 forced by the lower level

    // non-geometric instances are rejected
    BilevelInstance t1 = testgen::t1();
    GridFunction phi1 = t1.compute_phi(tols.feas);
    CHECK_THROWS_AS(solve_geometric(t1, phi1, tols), std::invalid_argument);
}

TEST_CASE("set classification on t2") {
    BilevelInstance t2 = testgen::t2();
    Tols tols;
    GridFunction phi = t2.compute_phi(tols.feas);
    SetClassification cls = classify_sets(t2, phi, tols);
    // with the grid-exact value function the strict-slack set is empty
    CHECK(cls.f_minus.empty());
    // every feasible node sits in the equality slice
    CHECK(cls.f_eq.size() + cls.f_plus.size() ==
          t2.xgrid.node_count() * t2.ygrid.node_count());
    std::size_t opt = node_of(t2, 1.0, -1.0);
    CHECK(std::find(cls.xi_eq.begin(), cls.xi_eq.end(), opt) != cls.xi_eq.end());
    // (-1,1): feasible (slack -1 + 1 = 0) with F = 1 > -1
    std::size_t up = node_of(t2, -1.0, 1.0);
    CHECK(std::find(cls.f_eq.begin(), cls.f_eq.end(), up) != cls.f_eq.end());
    CHECK(std::find(cls.xi_plus.begin(), cls.xi_plus.end(), up) != cls.xi_plus.end());
    // optimal solutions are feasible
    for (auto id : cls.optimal) {
        bool in_eq = std::find(cls.f_eq.begin(), cls.f_eq.end(), id) != cls.f_eq.end();
        bool in_minus = std::find(cls.f_minus.begin(), cls.f_minus.end(), id) != cls.f_minus.end();
        CHECK((in_eq || in_minus));
    }

    // constant F: no strict sublevel or superlevel nodes
    BilevelInstance c = testgen::parse_or_die(
        "problem \"c2\"\n"
        "dim x 1\ndim y 1\n"
        "xdomain -1 1 grid 5\n"
        "ydomain -1 1 grid 5\n"
        "geometric: true\n"
        "upper objective: 2\n"
        "lower objective: y1^2\n");
    GridFunction cphi = c.compute_phi(tols.feas);
    SetClassification ccls = classify_sets(c, cphi, tols);
    CHECK(ccls.xi_minus.empty());
    CHECK(ccls.xi_plus.empty());
    CHECK(ccls.xi_eq.size() == c.xgrid.node_count() * c.ygrid.node_count());
}

TEST_CASE("penalization lower bound at penalty-free optima") {
    std::mt19937_64 rng(31);
    Tols tols;
    for (int trial = 0; trial < 6; ++trial) {
        BilevelInstance m = testgen::random_convex(rng);
        GridFunction phi = m.compute_phi(tols.feas);
        PrimalSolution llvf = solve_llvf(m, phi, tols);
        if (!llvf.value.is_finite()) continue;
        for (double lambda : {0.5, 1.0, 4.0}) {
            PrimalSolution pen = solve_penalized(m, phi, lambda, tols);
            XReal w = value_slack(m, phi, llvf.argmin.front());
            if (std::abs(w.raw()) <= 1e-12)
                CHECK(pen.value.raw() <= llvf.value.raw() / lambda + 1e-9);
        }
    }
}

TEST_CASE("lipschitz estimates are finite and reported") {
    BilevelInstance t1 = testgen::t1();
    GridFunction phi = t1.compute_phi(1e-9);
    auto [kf, kphi] = lipschitz_estimates(t1, phi);
    CHECK(kf > 0);
    CHECK(kphi >= 0);
    CHECK(kf < 100);
}
