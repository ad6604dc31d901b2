#pragma once

#include <vector>

#include "conjugate.hpp"
#include "func.hpp"
#include "parallel.hpp"

namespace bdl {

/// Lower-level data: min over y of f(x,y) subject to g_j(x,y) <= 0, with y
/// scanned on its grid. All functions live on the joint (x,y) space.
struct LowerLevelProblem {
    FuncHandle f;
    std::vector<FuncHandle> g;
    GridSpec ygrid;
    int nx = 0, ny = 0;
};

inline VectorXd joint_point(const VectorXd& x, const VectorXd& y) {
    VectorXd xy(x.size() + y.size());
    xy << x, y;
    return xy;
}

inline bool lower_feasible(const LowerLevelProblem& L, const VectorXd& xy, double tol) {
    for (const auto& gj : L.g) {
        XReal v = gj.evaluate(xy);
        if (v.is_pos_inf() || (v.is_finite() && v.raw() > tol)) return false;
    }
    return true;
}

/// phi(x) = min over feasible y nodes of f(x,y); +inf when K(x) is empty
/// (the inf over the empty set).
inline GridFunction value_function(const LowerLevelProblem& L, const GridSpec& xgrid, double tol) {
    std::vector<XReal> phi(xgrid.node_count(), XReal::pos_inf());
    parallel_chunks(xgrid.node_count(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            VectorXd x = xgrid.node(i);
            XReal best = XReal::pos_inf();
            for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
                VectorXd xy = joint_point(x, L.ygrid.node(j));
                if (!lower_feasible(L, xy, tol)) continue;
                best = xmin(best, L.f.evaluate(xy));
            }
            phi[i] = best;
        }
    });
    bool proper = false;
    for (const auto& v : phi)
        if (v.is_finite()) {
            proper = true;
            break;
        }
    return GridFunction(xgrid, std::move(phi), !proper);
}

/// All feasible y nodes with f(x,y) <= phi(x) + tol. Empty when K(x) is.
inline std::vector<std::size_t> solution_set(const LowerLevelProblem& L, const VectorXd& x,
                                             double tol) {
    XReal phi = XReal::pos_inf();
    for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
        VectorXd xy = joint_point(x, L.ygrid.node(j));
        if (lower_feasible(L, xy, tol)) phi = xmin(phi, L.f.evaluate(xy));
    }
    std::vector<std::size_t> out;
    if (!phi.is_finite()) return out;
    for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
        VectorXd xy = joint_point(x, L.ygrid.node(j));
        if (!lower_feasible(L, xy, tol)) continue;
        XReal v = L.f.evaluate(xy);
        if (v.is_finite() && v.raw() <= phi.raw() + tol) out.push_back(j);
    }
    return out;
}

/// Feasible y nodes within eps of the optimal value; a superset of
/// solution_set for any eps > 0.
inline std::vector<std::size_t> eps_solution_set(const LowerLevelProblem& L, const VectorXd& x,
                                                 double eps, double tol) {
    if (!(eps > 0)) throw std::invalid_argument("eps_solution_set: eps must be positive");
    XReal phi = XReal::pos_inf();
    for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
        VectorXd xy = joint_point(x, L.ygrid.node(j));
        if (lower_feasible(L, xy, tol)) phi = xmin(phi, L.f.evaluate(xy));
    }
    std::vector<std::size_t> out;
    if (!phi.is_finite()) return out;
    for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
        VectorXd xy = joint_point(x, L.ygrid.node(j));
        if (!lower_feasible(L, xy, tol)) continue;
        XReal v = L.f.evaluate(xy);
        if (v.is_finite() && v.raw() - phi.raw() <= eps + tol) out.push_back(j);
    }
    return out;
}

/// True when every lower constraint is independent of x (constant K).
inline bool constraints_y_only(const LowerLevelProblem& L, const GridSpec& xgrid, double tol = 1e-12) {
    for (const auto& gj : L.g) {
        if (gj.is_analytic()) {
            for (int d = 0; d < L.nx; ++d)
                if (gj.analytic->depends_on_axis(d, tol)) return false;
        } else {
            // sampled probe: compare slices at the two extreme x corners
            VectorXd x0 = xgrid.node(0);
            VectorXd x1 = xgrid.node(xgrid.node_count() - 1);
            for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
                VectorXd y = L.ygrid.node(j);
                XReal a = gj.evaluate(joint_point(x0, y));
                XReal b = gj.evaluate(joint_point(x1, y));
                if (a.is_finite() != b.is_finite()) return false;
                if (a.is_finite() && std::abs(a.raw() - b.raw()) > tol) return false;
            }
        }
    }
    return true;
}

/// Both sides of the value-function conjugate identity for constant K:
/// lhs = phi*(x*) over the x grid, rhs = sup over x nodes and feasible y
/// nodes of <x*,x> - f(x,y). Rejected when K depends on x.
inline std::pair<XReal, XReal> conj_value_identity(const LowerLevelProblem& L,
                                                   const GridSpec& xgrid, const VectorXd& x_star,
                                                   double tol) {
    if (!constraints_y_only(L, xgrid))
        throw std::invalid_argument("conj_value_identity: lower constraints depend on x");
    GridFunction phi = value_function(L, xgrid, tol);
    XReal lhs = conj_value_at(phi, x_star);

    XReal rhs = XReal::neg_inf();
    for (std::size_t i = 0; i < xgrid.node_count(); ++i) {
        VectorXd x = xgrid.node(i);
        double px = x_star.dot(x);
        for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
            VectorXd xy = joint_point(x, L.ygrid.node(j));
            if (!lower_feasible(L, xy, tol)) continue;
            rhs = xmax(rhs, xsub(XReal(px), L.f.evaluate(xy)));
        }
    }
    return {lhs, rhs};
}

/// Heuristic probe for value-function jumps: x nodes where phi exceeds every
/// neighbor by more than 10x the local variation of f.
inline std::vector<std::size_t> lsc_suspects(const GridFunction& phi, const LowerLevelProblem& L,
                                             double tol) {
    std::vector<std::size_t> out;
    const GridSpec& gx = phi.grid;
    for (std::size_t i = 0; i < gx.node_count(); ++i) {
        if (!phi.values[i].is_finite()) continue;
        auto idx = gx.multi_index(i);
        double worst_neighbor = std::numeric_limits<double>::infinity();
        double local_var = 0;
        bool has_neighbor = false;
        for (int d = 0; d < gx.dim(); ++d) {
            for (int s : {-1, 1}) {
                auto nb = idx;
                nb[d] += s;
                if (nb[d] < 0 || nb[d] >= gx.counts[d]) continue;
                std::size_t jn = gx.flat_index(nb);
                if (!phi.values[jn].is_finite()) continue;
                has_neighbor = true;
                worst_neighbor = std::min(worst_neighbor, phi.values[jn].raw());
                VectorXd xa = gx.node(i), xb = gx.node(jn);
                for (std::size_t j = 0; j < L.ygrid.node_count(); ++j) {
                    VectorXd y = L.ygrid.node(j);
                    XReal fa = L.f.evaluate(joint_point(xa, y));
                    XReal fb = L.f.evaluate(joint_point(xb, y));
                    if (fa.is_finite() && fb.is_finite())
                        local_var = std::max(local_var, std::abs(fa.raw() - fb.raw()));
                }
            }
        }
        if (!has_neighbor) continue;
        if (phi.values[i].raw() - worst_neighbor > 10.0 * std::max(local_var, tol)) out.push_back(i);
    }
    return out;
}

}  // namespace bdl
