#pragma once

#include <string>
#include <vector>

#include "instance.hpp"
#include "parallel.hpp"

namespace bdl {

enum class ProblemTag { LLVF, P_t, P_lambda, LLVF_eps, LLVF_s };

inline const char* tag_name(ProblemTag t) {
    switch (t) {
        case ProblemTag::LLVF: return "LLVF";
        case ProblemTag::P_t: return "P_t";
        case ProblemTag::P_lambda: return "P_lambda";
        case ProblemTag::LLVF_eps: return "LLVF_eps";
        case ProblemTag::LLVF_s: return "LLVF_s";
    }
    return "?";
}

struct PrimalSolution {
    ProblemTag tag = ProblemTag::LLVF;
    XReal value = XReal::pos_inf();
    std::vector<std::size_t> argmin;  // flat joint-node indices, ascending
    double lambda = 0, eps = 0, t = 0;

    std::pair<VectorXd, VectorXd> argmin_xy(const BilevelInstance& inst, std::size_t which) const {
        auto [xi, yj] = split_joint(inst, argmin[which]);
        return {inst.xgrid.node(xi), inst.ygrid.node(yj)};
    }
};

namespace detail {

/// Scans feasible joint nodes, minimizing `objective(joint_flat)`. Ties within
/// tols.tie of the minimum are all reported, in ascending node order.
template <class Feasible, class Objective>
PrimalSolution scan_minimize(const BilevelInstance& inst, const Feasible& feasible,
                             const Objective& objective, const Tols& tols) {
    const std::size_t nn = inst.xgrid.node_count() * inst.ygrid.node_count();
    // two passes keep it simple and deterministic: find the min, then collect ties
    XReal best = parallel_reduce<XReal>(
        nn, XReal::pos_inf(),
        [&](std::size_t b, std::size_t e) {
            XReal acc = XReal::pos_inf();
            for (std::size_t i = b; i < e; ++i) {
                if (!feasible(i)) continue;
                acc = xmin(acc, objective(i));
            }
            return acc;
        },
        [](const XReal& a, const XReal& b2) { return xmin(a, b2); });

    PrimalSolution sol;
    sol.value = best;
    if (!best.is_finite()) {
        if (best.is_pos_inf()) return sol;  // infeasible: value +inf, empty argmin
        // -inf minimum: report witnesses
        for (std::size_t i = 0; i < nn; ++i)
            if (feasible(i) && objective(i).is_neg_inf()) sol.argmin.push_back(i);
        return sol;
    }
    for (std::size_t i = 0; i < nn; ++i) {
        if (!feasible(i)) continue;
        XReal v = objective(i);
        if (v.is_finite() && v.raw() <= best.raw() + tols.tie) sol.argmin.push_back(i);
    }
    return sol;
}

}  // namespace detail

/// Evaluation helpers over joint nodes.
inline VectorXd joint_node(const BilevelInstance& inst, std::size_t flat) {
    auto [xi, yj] = split_joint(inst, flat);
    return joint_point(inst.xgrid.node(xi), inst.ygrid.node(yj));
}

inline bool upper_feasible(const BilevelInstance& inst, const VectorXd& xy, double tol) {
    for (const auto& Gi : inst.G) {
        XReal v = Gi.evaluate(xy);
        if (v.is_pos_inf() || (v.is_finite() && v.raw() > tol)) return false;
    }
    return true;
}

/// f(x,y) - phi(x) under the extended rules; phi read off the x grid node.
inline XReal value_slack(const BilevelInstance& inst, const GridFunction& phi, std::size_t flat) {
    auto [xi, yj] = split_joint(inst, flat);
    (void)yj;
    return xsub(inst.lower.f.evaluate(joint_node(inst, flat)), phi.values[xi]);
}

/// Feasibility for the value reformulation: G <= 0, g <= 0, f - phi <= 0.
inline bool llvf_feasible(const BilevelInstance& inst, const GridFunction& phi, std::size_t flat,
                          const Tols& tols) {
    if (phi.values.size() != inst.xgrid.node_count())
        throw std::invalid_argument("llvf_feasible: phi missing; run the value function first");
    VectorXd xy = joint_node(inst, flat);
    if (!upper_feasible(inst, xy, tols.feas)) return false;
    if (!lower_feasible(inst.lower, xy, tols.feas)) return false;
    XReal slack = value_slack(inst, phi, flat);
    if (slack.is_pos_inf()) return false;
    return slack.is_neg_inf() || slack.raw() <= tols.value;
}

inline PrimalSolution solve_llvf(const BilevelInstance& inst, const GridFunction& phi,
                                 const Tols& tols) {
    PrimalSolution s = detail::scan_minimize(
        inst, [&](std::size_t i) { return llvf_feasible(inst, phi, i, tols); },
        [&](std::size_t i) { return inst.F.evaluate(joint_node(inst, i)); }, tols);
    s.tag = ProblemTag::LLVF;
    return s;
}

/// Feasibility for the linearly perturbed equality form: |f - phi + t| <= band.
inline bool perturbed_feasible(const BilevelInstance& inst, const GridFunction& phi,
                               std::size_t flat, double t, const Tols& tols) {
    VectorXd xy = joint_node(inst, flat);
    if (!upper_feasible(inst, xy, tols.feas)) return false;
    if (!lower_feasible(inst.lower, xy, tols.feas)) return false;
    XReal slack = value_slack(inst, phi, flat);
    if (!slack.is_finite()) return false;
    return std::abs(slack.raw() + t) <= std::max(tols.value, 1e-9);
}

/// min lambda^-1 F + f - phi over the inequality-feasible nodes.
inline PrimalSolution solve_penalized(const BilevelInstance& inst, const GridFunction& phi,
                                      double lambda, const Tols& tols) {
    if (!(lambda > 0)) throw std::invalid_argument("solve_penalized: lambda must be positive");
    PrimalSolution s = detail::scan_minimize(
        inst,
        [&](std::size_t i) {
            VectorXd xy = joint_node(inst, i);
            return upper_feasible(inst, xy, tols.feas) && lower_feasible(inst.lower, xy, tols.feas);
        },
        [&](std::size_t i) {
            VectorXd xy = joint_node(inst, i);
            XReal u = xadd(xscale(1.0 / lambda, inst.F.evaluate(xy)), inst.lower.f.evaluate(xy));
            auto [xi, yj] = split_joint(inst, i);
            (void)yj;
            return xsub(u, phi.values[xi]);
        },
        tols);
    s.tag = ProblemTag::P_lambda;
    s.lambda = lambda;
    return s;
}

/// min F with the relaxed value constraint f - phi <= eps.
inline PrimalSolution solve_regularized(const BilevelInstance& inst, const GridFunction& phi,
                                        double eps, const Tols& tols) {
    if (!(eps > 0)) throw std::invalid_argument("solve_regularized: eps must be positive");
    PrimalSolution s = detail::scan_minimize(
        inst,
        [&](std::size_t i) {
            VectorXd xy = joint_node(inst, i);
            if (!upper_feasible(inst, xy, tols.feas)) return false;
            if (!lower_feasible(inst.lower, xy, tols.feas)) return false;
            XReal slack = value_slack(inst, phi, i);
            if (slack.is_pos_inf()) return false;
            return slack.is_neg_inf() || slack.raw() <= eps + tols.value;
        },
        [&](std::size_t i) { return inst.F.evaluate(joint_node(inst, i)); }, tols);
    s.tag = ProblemTag::LLVF_eps;
    s.eps = eps;
    return s;
}

/// Geometric form: min F over the boxes with f - phi <= 0.
inline PrimalSolution solve_geometric(const BilevelInstance& inst, const GridFunction& phi,
                                      const Tols& tols) {
    if (!inst.geometric) throw std::invalid_argument("solve_geometric: not a geometric instance");
    PrimalSolution s = detail::scan_minimize(
        inst,
        [&](std::size_t i) {
            XReal slack = value_slack(inst, phi, i);
            if (slack.is_pos_inf()) return false;
            return slack.is_neg_inf() || slack.raw() <= tols.value;
        },
        [&](std::size_t i) { return inst.F.evaluate(joint_node(inst, i)); }, tols);
    s.tag = ProblemTag::LLVF_s;
    return s;
}

/// Node partitions of the geometric problem: by the sign of f - phi, and by
/// F against the optimal value. O is the full argmin set.
struct SetClassification {
    std::vector<std::size_t> f_minus, f_eq, f_plus;
    std::vector<std::size_t> xi_minus, xi_eq, xi_plus;
    std::vector<std::size_t> optimal;
    XReal value = XReal::pos_inf();
};

inline SetClassification classify_sets(const BilevelInstance& inst, const GridFunction& phi,
                                       const Tols& tols) {
    if (!inst.geometric) throw std::invalid_argument("classify_sets: not a geometric instance");
    PrimalSolution sol = solve_geometric(inst, phi, tols);
    if (!sol.value.is_finite())
        throw std::invalid_argument("classify_sets: geometric value not finite");
    SetClassification cls;
    cls.value = sol.value;
    cls.optimal = sol.argmin;
    const double V = sol.value.raw();
    const std::size_t nn = inst.xgrid.node_count() * inst.ygrid.node_count();
    for (std::size_t i = 0; i < nn; ++i) {
        XReal w = value_slack(inst, phi, i);
        if (w.is_pos_inf() || (w.is_finite() && w.raw() > tols.value))
            cls.f_plus.push_back(i);
        else if (w.is_neg_inf() || w.raw() < -tols.value)
            cls.f_minus.push_back(i);
        else
            cls.f_eq.push_back(i);
        XReal Fv = inst.F.evaluate(joint_node(inst, i));
        if (Fv.is_pos_inf() || (Fv.is_finite() && Fv.raw() > V + tols.tie))
            cls.xi_plus.push_back(i);
        else if (Fv.is_neg_inf() || Fv.raw() < V - tols.tie)
            cls.xi_minus.push_back(i);
        else
            cls.xi_eq.push_back(i);
    }
    return cls;
}

/// Grid Lipschitz estimates of f and phi by forward differences; feeds the
/// neighborhood bands of the calmness probe.
inline std::pair<double, double> lipschitz_estimates(const BilevelInstance& inst,
                                                     const GridFunction& phi) {
    double kf = 0;
    GridSpec joint = inst.joint_grid();
    for (std::size_t i = 0; i < joint.node_count(); ++i) {
        auto idx = joint.multi_index(i);
        XReal v0 = inst.lower.f.evaluate(joint.node(i));
        if (!v0.is_finite()) continue;
        for (int d = 0; d < joint.dim(); ++d) {
            if (idx[d] + 1 >= joint.counts[d]) continue;
            auto nb = idx;
            nb[d] += 1;
            XReal v1 = inst.lower.f.evaluate(joint.node(joint.flat_index(nb)));
            if (!v1.is_finite()) continue;
            kf = std::max(kf, std::abs(v1.raw() - v0.raw()) / joint.step(d));
        }
    }
    double kphi = 0;
    for (std::size_t i = 0; i < phi.grid.node_count(); ++i) {
        auto idx = phi.grid.multi_index(i);
        if (!phi.values[i].is_finite()) continue;
        for (int d = 0; d < phi.grid.dim(); ++d) {
            if (idx[d] + 1 >= phi.grid.counts[d]) continue;
            auto nb = idx;
            nb[d] += 1;
            const XReal& v1 = phi.values[phi.grid.flat_index(nb)];
            if (!v1.is_finite()) continue;
            kphi = std::max(kphi, std::abs(v1.raw() - phi.values[i].raw()) / phi.grid.step(d));
        }
    }
    return {kf, kphi};
}

}  // namespace bdl
