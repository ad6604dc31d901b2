#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lowerlevel.hpp"

namespace bdl {

/// Tolerances used across solvers and checkers. Strict inequalities are
/// tested as "< -feas"; the value constraint carries its own band.
struct Tols {
    double feas = 1e-9;   // g <= 0, G <= 0 slack
    double value = 1e-9;  // f - phi <= 0 band
    double tie = 1e-9;    // argmin tie width
};

/// A full bilevel problem on boxed grids. Geometric instances have no G or g
/// constraints and may carry an explicit value-function override, which
/// replaces the grid-computed phi in every reformulation and dual.
struct BilevelInstance {
    std::string name;
    int n = 0, m = 0;
    GridSpec xgrid, ygrid;
    FuncHandle F;
    LowerLevelProblem lower;
    std::vector<FuncHandle> G;
    bool geometric = false;
    std::optional<FuncHandle> phi_override;  // defined on the x space

    int k() const { return static_cast<int>(G.size()); }
    int p() const { return static_cast<int>(lower.g.size()); }
    GridSpec joint_grid() const { return concat(xgrid, ygrid); }

    /// Default feasibility slack: analytic data keeps 1e-9; grid-backed data
    /// widens to 10x the largest grid step.
    Tols default_tols() const {
        Tols t;
        bool any_grid = F.is_grid() || lower.f.is_grid();
        for (const auto& gi : G) any_grid = any_grid || gi.is_grid();
        for (const auto& gj : lower.g) any_grid = any_grid || gj.is_grid();
        if (any_grid) {
            double h = std::max(xgrid.max_step(), ygrid.max_step());
            // keep the slack meaningful only for constraint tables; objective
            // tables do not affect feasibility
            bool constraint_grid = false;
            for (const auto& gi : G) constraint_grid = constraint_grid || gi.is_grid();
            for (const auto& gj : lower.g) constraint_grid = constraint_grid || gj.is_grid();
            if (constraint_grid) t.feas = 10.0 * h;
        }
        return t;
    }

    void validate_shape() const {
        if (n < 1 || m < 1) throw std::invalid_argument("BilevelInstance: dims must be >= 1");
        if (n + m > kMaxDim) throw std::invalid_argument("BilevelInstance: dimension cap exceeded");
        if (xgrid.dim() != n || ygrid.dim() != m)
            throw std::invalid_argument("BilevelInstance: grid dims inconsistent");
        std::size_t joint = xgrid.node_count() * ygrid.node_count();
        if (joint > kMaxGridNodes) throw std::invalid_argument("BilevelInstance: joint node cap");
        if (F.dim != n + m || lower.f.dim != n + m)
            throw std::invalid_argument("BilevelInstance: objective dims inconsistent");
        for (const auto& gi : G)
            if (gi.dim != n + m) throw std::invalid_argument("BilevelInstance: G dim mismatch");
        for (const auto& gj : lower.g)
            if (gj.dim != n + m) throw std::invalid_argument("BilevelInstance: g dim mismatch");
        if (geometric && (!G.empty() || !lower.g.empty()))
            throw std::invalid_argument("BilevelInstance: geometric instances take no constraints");
        if (phi_override && phi_override->dim != n)
            throw std::invalid_argument("BilevelInstance: phi override lives on the x space");
    }

    /// The value function used everywhere downstream: the override sampled on
    /// the x grid when present, else the exhaustive lower-level scan.
    GridFunction compute_phi(double feas_tol) const {
        if (phi_override) return sample(*phi_override, xgrid);
        return value_function(lower, xgrid, feas_tol);
    }
};

/// Flat joint-node index <-> (x node, y node) split. The joint grid is the
/// concatenation (x dims first), so the y block is the fastest-running one.
inline std::pair<std::size_t, std::size_t> split_joint(const BilevelInstance& inst,
                                                       std::size_t joint_flat) {
    std::size_t ycount = inst.ygrid.node_count();
    return {joint_flat / ycount, joint_flat % ycount};
}

inline std::size_t fuse_joint(const BilevelInstance& inst, std::size_t xi, std::size_t yj) {
    return xi * inst.ygrid.node_count() + yj;
}

}  // namespace bdl
