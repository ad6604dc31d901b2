#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "bilevel/conjugate.hpp"

using namespace bdl;

namespace {

VectorXd vec1(double a) {
    VectorXd v(1);
    v << a;
    return v;
}

GridFunction tabulate(const GridSpec& g, const std::function<double(const VectorXd&)>& fn) {
    std::vector<XReal> vals(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) vals[i] = XReal(fn(g.node(i)));
    return GridFunction(g, std::move(vals));
}

/// Test-only oracle: lower convex envelope of a 1-D table via the lower hull
/// of the finite points, evaluated back at the nodes.
std::vector<double> convex_envelope_1d(const GridFunction& f) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < f.grid.node_count(); ++i)
        if (f.values[i].is_finite()) pts.emplace_back(f.grid.coord(0, static_cast<int>(i)), f.values[i].raw());
    std::vector<std::pair<double, double>> hull;
    for (const auto& p : pts) {
        while (hull.size() >= 2) {
            auto& a = hull[hull.size() - 2];
            auto& b = hull[hull.size() - 1];
            double cross = (b.first - a.first) * (p.second - a.second) -
                           (p.first - a.first) * (b.second - a.second);
            if (cross <= 0) hull.pop_back();
            else break;
        }
        hull.push_back(p);
    }
    std::vector<double> env(f.grid.node_count());
    for (std::size_t i = 0; i < f.grid.node_count(); ++i) {
        double x = f.grid.coord(0, static_cast<int>(i));
        double v = hull.back().second;
        for (std::size_t s = 0; s + 1 < hull.size(); ++s) {
            if (x >= hull[s].first - 1e-12 && x <= hull[s + 1].first + 1e-12) {
                double t = (x - hull[s].first) / (hull[s + 1].first - hull[s].first);
                v = (1 - t) * hull[s].second + t * hull[s + 1].second;
                break;
            }
        }
        env[i] = v;
    }
    return env;
}

GridFunction random_convex_1d(std::mt19937_64& rng, int n, double lo, double hi) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> pos(0.01, 1.5);
    GridSpec g(Box({lo}, {hi}), {n});
    std::vector<XReal> vals(n);
    double v = u(rng);
    double slope = -std::abs(u(rng)) * 3;
    double h = g.step(0);
    vals[0] = XReal(v);
    for (int i = 1; i < n; ++i) {
        v += slope * h;
        vals[i] = XReal(v);
        slope += pos(rng);  // nondecreasing slopes -> convex table
    }
    return GridFunction(g, std::move(vals));
}

}  // namespace

TEST_CASE("conj_brute on reference inputs") {
    // half-square is self-conjugate up to grid resolution
    GridSpec g(Box({-4.0}, {4.0}), {257});
    GridFunction f = tabulate(g, [](const VectorXd& x) { return 0.5 * x[0] * x[0]; });
    DualGridSpec dual = auto_dual_grid(f);
    GridFunction fs = conj_brute(f, dual.grid);
    XReal at1 = conj_value_at(f, vec1(1.0));
    CHECK(std::abs(at1.raw() - 0.5) <= g.step(0));

    // conjugate of a box indicator is its support function
    GridFunction ind = tabulate(g, [](const VectorXd&) { return 0.0; });
    std::vector<XReal> iv(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        double x = g.coord(0, static_cast<int>(i));
        iv[i] = (x >= -1.0 - 1e-12 && x <= 1.0 + 1e-12) ? XReal(0.0) : XReal::pos_inf();
    }
    GridFunction indf(g, iv);
    CHECK(conj_value_at(indf, vec1(2.0)).raw() == Catch::Approx(2.0));

    // |x| on the box [-4,4]: the box-relative conjugate differs from the
    // real-line conjugate once |p| > 1
    GridFunction absf = tabulate(g, [](const VectorXd& x) { return std::abs(x[0]); });
    CHECK(conj_value_at(absf, vec1(0.5)).raw() == Catch::Approx(0.0).margin(1e-12));
    // box-relative: sup of 2x - |x| over [-4,4] attained at x = 4, value 8 - 4
    CHECK(conj_value_at(absf, vec1(2.0)).raw() == Catch::Approx(4.0));

    // conj_brute tabulation agrees with direct sup at the dual nodes
    for (std::size_t j = 0; j < dual.grid.node_count(); j += 16)
        CHECK(fs.values[j] == conj_value_at(f, dual.grid.node(j)));
}

TEST_CASE("improper input yields the flagged -inf conjugate") {
    GridSpec g(Box({0.0}, {1.0}), {4});
    GridFunction allinf(g, std::vector<XReal>(4, XReal::pos_inf()), /*improper=*/true);
    GridFunction c = conj_brute(allinf, g);
    CHECK(c.improper);
    for (const auto& v : c.values) CHECK(v == XReal::neg_inf());
}

TEST_CASE("conj_fast matches conj_brute on random convex tables") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        GridFunction f = random_convex_1d(rng, 257, -3.0, 3.0);
        DualGridSpec dual = auto_dual_grid(f);
        GridFunction a = conj_brute(f, dual.grid);
        GridFunction b = conj_fast(f, dual.grid);
        for (std::size_t i = 0; i < a.values.size(); ++i)
            CHECK(std::abs(a.values[i].raw() - b.values[i].raw()) <= 1e-12);
    }
}

TEST_CASE("conj_fast on an affine table hits zero at its own slope") {
    GridSpec g(Box({-1.0}, {1.0}), {33});
    GridFunction f = tabulate(g, [](const VectorXd& x) { return 2.0 * x[0]; });
    GridSpec dual(Box({0.0}, {4.0}), {9});  // p = 2 is a node
    GridFunction fs = conj_fast(f, dual);
    CHECK(fs.values[4].raw() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("conj_fast rejects nonconvex input") {
    GridSpec g(Box({-2.0}, {2.0}), {41});
    GridFunction dw = tabulate(g, [](const VectorXd& x) {
        double a = (x[0] + 1) * (x[0] + 1), b = (x[0] - 1) * (x[0] - 1);
        return std::min(a, b);
    });
    CHECK_THROWS_WITH(conj_fast(dw, g), Catch::Matchers::ContainsSubstring("not convex"));
}

TEST_CASE("conj_analytic closed forms") {
    MatrixXd Q(1, 1);
    Q << 1.0;
    auto halfsq = conj_analytic(Analytic::quadratic(Q, VectorXd::Zero(1), 0.0));
    REQUIRE(halfsq);
    CHECK(halfsq->eval(vec1(3.0)).raw() == Catch::Approx(4.5));  // (1/2)p^2

    VectorXd a(2);
    a << 1.0, 2.0;
    auto aff = conj_analytic(Analytic::affine(a, 3.0));
    REQUIRE(aff);
    VectorXd p(2);
    p << 1.0, 2.0;
    CHECK(aff->eval(p).raw() == Catch::Approx(-3.0));
    p << 0.0, 2.0;
    CHECK(aff->eval(p) == XReal::pos_inf());

    auto box = conj_analytic(Analytic::box_indicator(Box({-1.0, -1.0}, {1.0, 1.0})));
    REQUIRE(box);
    p << 1.0, 1.0;
    CHECK(box->eval(p).raw() == Catch::Approx(2.0));
    p << -3.0, 0.5;
    CHECK(box->eval(p).raw() == Catch::Approx(3.5));

    // unsupported forms fall back
    Analytic withabs = Analytic::zero(1);
    withabs.abs_terms.push_back({1.0, {vec1(1.0), 0.0}});
    CHECK_FALSE(conj_analytic(withabs).has_value());
}

TEST_CASE("biconjugate reproduces convex functions and hulls nonconvex ones") {
    GridSpec g(Box({-2.0}, {2.0}), {41});
    GridFunction f = tabulate(g, [](const VectorXd& x) { return 0.5 * x[0] * x[0]; });
    DualGridSpec dual = auto_dual_grid(f);
    GridFunction fss = biconjugate(f, dual.grid);
    for (int i = 5; i < 36; ++i)
        CHECK(std::abs(fss.values[i].raw() - f.values[i].raw()) <= 1e-6);

    GridFunction dw = tabulate(g, [](const VectorXd& x) {
        double a = (x[0] + 1) * (x[0] + 1), b = (x[0] - 1) * (x[0] - 1);
        return std::min(a, b);
    });
    DualGridSpec dwd = auto_dual_grid(dw);
    GridFunction hull = biconjugate(dw, dwd.grid);
    CHECK(std::abs(hull.values[20].raw()) <= 1e-9);  // node x = 0

    // matches the independent envelope oracle at every node
    auto env = convex_envelope_1d(dw);
    for (std::size_t i = 0; i < g.node_count(); ++i)
        CHECK(hull.values[i].raw() == Catch::Approx(env[i]).margin(1e-8));
}

TEST_CASE("biconjugate invariants on random tables") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 50; ++trial) {
        GridSpec g(Box({-2.0}, {2.0}), {33});
        std::vector<XReal> vals(33);
        for (auto& v : vals) v = XReal(u(rng));
        GridFunction f(g, vals);
        DualGridSpec dual = auto_dual_grid(f);
        GridFunction fss = biconjugate(f, dual.grid);
        // lower bound and no -inf for proper bounded-below input
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            CHECK(fss.values[i].raw() <= f.values[i].raw() + 1e-12);
            CHECK_FALSE(fss.values[i].is_neg_inf());
        }
        // idempotence
        GridFunction fss2 = biconjugate(fss, dual.grid);
        for (std::size_t i = 0; i < f.values.size(); ++i)
            CHECK(std::abs(fss2.values[i].raw() - fss.values[i].raw()) <= 1e-9);
    }
}

TEST_CASE("Young-Fenchel inequality is structural for brute conjugates") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 5; ++trial) {
        GridSpec g(Box({-2.0}, {2.0}), {41});
        std::vector<XReal> vals(41);
        for (auto& v : vals) v = XReal(u(rng));
        GridFunction f(g, vals);
        DualGridSpec dual = auto_dual_grid(f);
        GridFunction fs = conj_brute(f, dual.grid);
        for (std::size_t i = 0; i < g.node_count(); i += 3)
            for (std::size_t j = 0; j < dual.grid.node_count(); j += 3) {
                double x = g.coord(0, static_cast<int>(i));
                double p = dual.grid.coord(0, static_cast<int>(j));
                CHECK(f.values[i].raw() + fs.values[j].raw() >= p * x - 1e-9);
            }
    }
}

TEST_CASE("monotone conjugation") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_real_distribution<double> bump(0.0, 2.0);
    GridSpec g(Box({-1.0}, {1.0}), {21});
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<XReal> fv(21), gv(21);
        for (int i = 0; i < 21; ++i) {
            double base = u(rng);
            fv[i] = XReal(base);
            gv[i] = XReal(base + bump(rng));  // g >= f pointwise
        }
        GridFunction f(g, fv), gg(g, gv);
        DualGridSpec dual = auto_dual_grid(f);
        GridFunction fs = conj_brute(f, dual.grid);
        GridFunction gs = conj_brute(gg, dual.grid);
        for (std::size_t j = 0; j < dual.grid.node_count(); ++j)
            CHECK(fs.values[j].raw() >= gs.values[j].raw() - 1e-12);
    }
}

TEST_CASE("Fenchel equality at gradients of smooth convex forms") {
    // f(x) = 1/2 x'Qx + a'x, p = grad f(x) => <p,x> = f(x) + f*(p)
    MatrixXd Q(2, 2);
    Q << 2.0, 0.3, 0.3, 1.0;
    VectorXd a(2);
    a << 0.5, -1.0;
    Analytic f = Analytic::quadratic(Q, a, 0.25);
    auto fstar = conj_analytic(f);
    REQUIRE(fstar);
    VectorXd x(2);
    x << 0.7, -0.2;
    VectorXd p = Q * x + a;
    double lhs = p.dot(x);
    double rhs = f.eval(x).raw() + fstar->eval(p).raw();
    CHECK(std::abs(lhs - rhs) <= 1e-8);
}

TEST_CASE("infimal convolution of strictly convex quadratics") {
    MatrixXd Q(1, 1);
    Q << 1.0;
    Analytic f1 = Analytic::quadratic(Q, VectorXd::Zero(1), 0.0);  // 1/2 x^2
    auto [l1, r1] = inf_convolution_check({f1, f1}, vec1(2.0));
    CHECK(l1.raw() == Catch::Approx(1.0));
    CHECK(r1.raw() == Catch::Approx(1.0));

    VectorXd a(1);
    a << -1.0;
    Analytic f2 = Analytic::quadratic(Q, a, 0.5);  // 1/2 (x-1)^2
    auto [l2, r2] = inf_convolution_check({f1, f2}, vec1(0.0));
    CHECK(l2.raw() == Catch::Approx(-0.25));
    CHECK(std::abs(l2.raw() - r2.raw()) <= 1e-9);

    auto [l3, r3] = inf_convolution_check({f2}, vec1(0.7));
    CHECK(l3.raw() == Catch::Approx(r3.raw()));

    // 1-D scan oracle for the split on a fresh pair
    MatrixXd Q2(1, 1);
    Q2 << 2.0;
    Analytic f3 = Analytic::quadratic(Q2, vec1(0.3), -0.1);
    auto [l4, r4] = inf_convolution_check({f1, f3}, vec1(1.1));
    auto c1 = conj_analytic(f1);
    auto c3 = conj_analytic(f3);
    double best = std::numeric_limits<double>::infinity();
    for (double u1 = -8; u1 <= 8; u1 += 1e-3)
        best = std::min(best, c1->eval(vec1(u1)).raw() + c3->eval(vec1(1.1 - u1)).raw());
    CHECK(std::abs(r4.raw() - best) <= 1e-5);
    CHECK(std::abs(l4.raw() - r4.raw()) <= 1e-9);
}

TEST_CASE("epi_sample ladders") {
    GridSpec g(Box({-1.0}, {1.0}), {3});
    FuncHandle zero = make_analytic_handle(Analytic::constant(1, 0.0));
    EpiSample es = epi_sample(zero, g, 1.0, 0.5);
    CHECK(es.points.size() == 9);  // 3 nodes x heights {0, 0.5, 1}

    // indicator of the middle node only records pairs above it
    std::vector<XReal> iv = {XReal::pos_inf(), XReal(0.0), XReal::pos_inf()};
    FuncHandle mid = make_grid_handle(GridFunction(g, iv));
    EpiSample em = epi_sample(mid, g, 1.0, 0.5);
    CHECK(em.points.size() == 3);
    for (const auto& [pt, h] : em.points) CHECK(pt[0] == 0.0);
}

TEST_CASE("shift identity moves conjugate epigraphs") {
    // (h + <p,.> + alpha)* (q) = h*(q - p) - alpha, box-relative on the grid
    GridSpec g(Box({-2.0}, {2.0}), {41});
    GridFunction h = tabulate(g, [](const VectorXd& x) { return x[0] * x[0]; });
    const double p = 1.0, alpha = 0.75;
    GridFunction shifted = tabulate(g, [&](const VectorXd& x) { return x[0] * x[0] + p * x[0] + alpha; });
    DualGridSpec dual = auto_dual_grid(shifted);
    for (std::size_t j = 0; j < dual.grid.node_count(); j += 5) {
        double q = dual.grid.coord(0, static_cast<int>(j));
        XReal lhs = conj_value_at(shifted, vec1(q));
        XReal rhs = xsub(conj_value_at(h, vec1(q - p)), XReal(alpha));
        CHECK(std::abs(lhs.raw() - rhs.raw()) <= 1e-9);
    }
    // the epigraph samples of both sides coincide after the (p, -alpha) shift
    GridFunction hs = conj_brute(h, auto_dual_grid(h).grid);
    GridFunction ss = conj_brute(shifted, auto_dual_grid(h).grid);  // shared dual grid
    for (std::size_t j = 0; j < hs.grid.node_count(); ++j) {
        double q = hs.grid.coord(0, static_cast<int>(j));
        XReal translated = xsub(conj_value_at(h, vec1(q - p)), XReal(alpha));
        CHECK(std::abs(ss.values[j].raw() - translated.raw()) <= 1e-9);
    }
}

TEST_CASE("epi of a max is the intersection of epis") {
    GridSpec g(Box({-1.0}, {1.0}), {9});
    FuncHandle f1 = make_grid_handle(tabulate(g, [](const VectorXd& x) { return x[0]; }));
    FuncHandle f2 = make_grid_handle(tabulate(g, [](const VectorXd& x) { return -x[0]; }));
    FuncHandle fmax = make_grid_handle(tabulate(g, [](const VectorXd& x) { return std::abs(x[0]); }));
    EpiSample e1 = epi_sample(f1, g, 2.0, 0.25);
    EpiSample e2 = epi_sample(f2, g, 2.0, 0.25);
    EpiSample em = epi_sample(fmax, g, 2.0, 0.25);
    auto key = [](const std::pair<VectorXd, double>& p) {
        return std::make_pair(p.first[0], p.second);
    };
    std::set<std::pair<double, double>> s1, s2, sm;
    for (const auto& p : e1.points) s1.insert(key(p));
    for (const auto& p : e2.points) s2.insert(key(p));
    for (const auto& p : em.points) sm.insert(key(p));
    std::set<std::pair<double, double>> isect;
    for (const auto& q : s1)
        if (s2.count(q)) isect.insert(q);
    CHECK(sm == isect);
}
