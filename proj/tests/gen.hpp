#pragma once

// Test-side helpers: inline instances and seeded random instance generators.
// Everything here is independent of the solver internals it is used to check.

#include <random>
#include <sstream>
#include <string>

#include "bilevel/probfile.hpp"
#include "bilevel/reform.hpp"

namespace testgen {

using namespace bdl;

inline BilevelInstance parse_or_die(const std::string& text) {
    ParseResult r = parse_problem(text);
    if (!r.ok()) throw std::runtime_error("test instance failed to parse: " + r.error->pretty());
    return *r.instance;
}

/// Grammar-safe numeric literal: negatives spelled as (0 - v).
inline std::string num_lit(double v) {
    if (v < 0) return "(0 - " + fmt_double(-v) + ")";
    return fmt_double(v);
}

/// T1: convex quadratics with one upper and one lower constraint.
inline BilevelInstance t1(int nodes = 41) {
    std::ostringstream os;
    os << "problem \"t1\"\n"
       << "dim x 1\ndim y 1\n"
       << "xdomain -2 2 grid " << nodes << "\n"
       << "ydomain -2 2 grid " << nodes << "\n"
       << "upper objective: x1^2 + y1^2\n"
       << "lower objective: (x1 - y1)^2\n"
       << "upper constraint G1: 0 - x1\n"
       << "lower constraint g1: y1 - 1\n";
    return parse_or_die(os.str());
}

/// T2: the geometric bilinear instance.
inline BilevelInstance t2(int nodes = 41) {
    std::ostringstream os;
    os << "problem \"t2\"\n"
       << "dim x 1\ndim y 1\n"
       << "xdomain -1 1 grid " << nodes << "\n"
       << "ydomain -1 1 grid " << nodes << "\n"
       << "geometric: true\n"
       << "upper objective: y1\n"
       << "lower objective: x1 * y1\n";
    return parse_or_die(os.str());
}

/// Random convex instance: strictly convex quadratic F and f, affine G and g,
/// boxes [-2,2], n = m = k = p = 1.
inline BilevelInstance random_convex(std::mt19937_64& rng, int nodes = 41) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.4, 1.6);
    auto num = [](double v) { return num_lit(v); };
    double fa = pos(rng), fb = pos(rng);     // curvatures
    double cx = 0.5 * u(rng), cy = 0.5 * u(rng);
    double la = pos(rng), lb = 0.5 * u(rng);  // lower objective: la*(x-y)^2 + lb*y
    double gslope = pos(rng);
    std::ostringstream os;
    os << "problem \"rand\"\n"
       << "dim x 1\ndim y 1\n"
       << "xdomain -2 2 grid " << nodes << "\n"
       << "ydomain -2 2 grid " << nodes << "\n"
       << "upper objective: " << num(fa) << " * (x1 - " << num(cx) << ")^2 + " << num(fb)
       << " * (y1 - " << num(cy) << ")^2\n"
       << "lower objective: " << num(la) << " * (x1 - y1)^2 + " << num(lb) << " * y1 + "
       << num(lb) << " * x1\n"
       << "upper constraint G1: x1 + y1 - 3\n"
       << "lower constraint g1: " << num(gslope) << " * y1 - 2\n";
    return parse_or_die(os.str());
}

/// Random (possibly nonconvex) instance drawn from the analytic family.
inline BilevelInstance random_mixed(std::mt19937_64& rng, int nodes = 21) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.2, 1.2);
    auto num = [](double v) { return num_lit(v); };
    int pick = static_cast<int>(rng() % 3);
    std::string fobj, lobj;
    switch (pick) {
        case 0:
            fobj = num(pos(rng)) + " * x1^2 + " + num(u(rng)) + " * y1";
            lobj = "(x1 - y1)^2 + " + num(u(rng)) + " * y1";
            break;
        case 1:
            fobj = "abs(x1 - " + num(0.5 * u(rng)) + ") + " + num(pos(rng)) + " * y1^2";
            lobj = num(pos(rng)) + " * (y1 - x1)^2";
            break;
        default:
            fobj = "x1 * y1 + " + num(pos(rng)) + " * y1^2";  // nonconvex upper
            lobj = "(y1 - " + num(0.5 * u(rng)) + ")^2 + " + num(0.3 * u(rng)) + " * x1 * y1";
            break;
    }
    std::ostringstream os;
    os << "problem \"mix\"\n"
       << "dim x 1\ndim y 1\n"
       << "xdomain -2 2 grid " << nodes << "\n"
       << "ydomain -2 2 grid " << nodes << "\n"
       << "upper objective: " << fobj << "\n"
       << "lower objective: " << lobj << "\n"
       << "upper constraint G1: x1 - " << num(1.0 + pos(rng)) << "\n"
       << "lower constraint g1: y1 - " << num(1.0 + pos(rng)) << "\n";
    return parse_or_die(os.str());
}

/// Random instance whose lower-level feasible set is the whole y box (the
/// bound sits beyond it), so f - phi is nonnegative over the entire scan.
inline BilevelInstance random_boxfeasible(std::mt19937_64& rng, int nodes = 21) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.2, 1.2);
    auto num = [](double v) { return num_lit(v); };
    std::ostringstream os;
    os << "problem \"boxfeas\"\n"
       << "dim x 1\ndim y 1\n"
       << "xdomain -2 2 grid " << nodes << "\n"
       << "ydomain -2 2 grid " << nodes << "\n"
       << "upper objective: " << num(pos(rng)) << " * (x1 - " << num(0.5 * u(rng)) << ")^2 + "
       << num(pos(rng)) << " * y1^2\n"
       << "lower objective: " << num(pos(rng)) << " * (y1 - " << num(0.5 * u(rng))
       << " * x1)^2 + " << num(0.4 * u(rng)) << " * y1\n"
       << "upper constraint G1: x1 + y1 - " << num(2.0 + pos(rng)) << "\n"
       << "lower constraint g1: y1 - " << num(6.0 + pos(rng)) << "\n";
    return parse_or_die(os.str());
}

/// Random geometric instance; f - phi stays grid-derived (no override).
inline BilevelInstance random_geometric(std::mt19937_64& rng, int nodes = 21) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.2, 1.2);
    auto num = [](double v) { return num_lit(v); };
    std::ostringstream os;
    os << "problem \"geo\"\n"
       << "dim x 1\ndim y 1\n"
       << "xdomain -1 1 grid " << nodes << "\n"
       << "ydomain -1 1 grid " << nodes << "\n"
       << "geometric: true\n"
       << "upper objective: " << num(pos(rng)) << " * (y1 - " << num(0.5 * u(rng)) << ")^2 + "
       << num(u(rng)) << " * x1\n"
       << "lower objective: " << num(pos(rng)) << " * (y1 - " << num(0.5 * u(rng)) << ")^2\n";
    return parse_or_die(os.str());
}

}  // namespace testgen
