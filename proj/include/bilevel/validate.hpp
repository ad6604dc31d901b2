#pragma once

#include <string>
#include <vector>

#include "dual.hpp"
#include "probfile.hpp"

namespace bdl {

/// Runs the instance-level invariant suite; returns human-readable violation
/// descriptions (empty = all good).
inline std::vector<std::string> validate_instance(const BilevelInstance& inst) {
    std::vector<std::string> bad;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) bad.push_back(what);
    };

    try {
        inst.validate_shape();
    } catch (const std::exception& ex) {
        bad.push_back(std::string("shape: ") + ex.what());
        return bad;
    }

    Tols tols = inst.default_tols();
    GridSpec joint = inst.joint_grid();

    // sampling agrees with direct evaluation at every node
    {
        GridFunction s = sample(inst.F, joint);
        bool ok = true;
        for (std::size_t i = 0; i < joint.node_count() && ok; i += 1)
            ok = s.values[i] == inst.F.evaluate(joint.node(i));
        expect(ok, "sample/evaluate disagree at a node (upper objective)");
    }

    GridFunction phi = inst.compute_phi(tols.feas);

    // min property of the value function on the scan
    if (!inst.phi_override) {
        bool ok = true;
        for (std::size_t i = 0; i < joint.node_count() && ok; ++i) {
            VectorXd xy = joint.node(i);
            if (!lower_feasible(inst.lower, xy, tols.feas)) continue;
            auto [xi, yj] = split_joint(inst, i);
            (void)yj;
            XReal w = xsub(inst.lower.f.evaluate(xy), phi.values[xi]);
            ok = w.is_pos_inf() || w.raw() >= -1e-12;
        }
        expect(ok, "value function exceeds a feasible objective value");
    }

    // solution sets: nested in their eps relaxations
    {
        VectorXd x0 = inst.xgrid.node(inst.xgrid.node_count() / 2);
        auto s = solution_set(inst.lower, x0, tols.feas);
        auto se = eps_solution_set(inst.lower, x0, 0.5, tols.feas);
        bool ok = true;
        for (auto id : s) ok = ok && std::find(se.begin(), se.end(), id) != se.end();
        expect(ok, "solution set escapes its eps relaxation");
    }

    // primal solvers: argmin entries are feasible and attain the value
    {
        PrimalSolution sol = inst.geometric ? solve_geometric(inst, phi, tols)
                                            : solve_llvf(inst, phi, tols);
        bool ok = true;
        for (auto id : sol.argmin) {
            XReal Fv = inst.F.evaluate(joint.node(id));
            ok = ok && Fv.is_finite() && sol.value.is_finite() &&
                 std::abs(Fv.raw() - sol.value.raw()) <= tols.tie + 1e-12;
            if (!inst.geometric) ok = ok && llvf_feasible(inst, phi, id, tols);
        }
        expect(ok, "argmin set inconsistent with the reported value");
    }

    // serialization round trip
    try {
        bool has_grid = inst.F.is_grid() || inst.lower.f.is_grid() || inst.phi_override.has_value();
        for (const auto& gi : inst.G) has_grid = has_grid || gi.is_grid();
        for (const auto& gj : inst.lower.g) has_grid = has_grid || gj.is_grid();
        bool sources_ok = inst.F.source && inst.lower.f.source;
        if (sources_ok) {
            std::string text = serialize_problem(inst);
            ParseResult r = parse_problem(text);
            expect(r.ok(), "canonical serialization fails to reparse");
            if (r.ok()) expect(structurally_equal(inst, *r.instance), "round trip not structural identity");
        }
        (void)has_grid;
    } catch (const std::exception& ex) {
        bad.push_back(std::string("serialization: ") + ex.what());
    }

    return bad;
}

}  // namespace bdl
