#pragma once

#include <json.hpp>

#include "analytic_dual.hpp"
#include "cqcheck.hpp"
#include "probfile.hpp"

namespace bdl {

inline ordered_json json_vec(const VectorXd& v) {
    ordered_json a = ordered_json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline ordered_json json_xreal(const XReal& v) {
    if (v.is_finite()) return v.raw();
    return v.to_string();
}

inline ordered_json primal_to_json(const BilevelInstance& inst, const PrimalSolution& s) {
    ordered_json j;
    j["problem"] = tag_name(s.tag);
    ordered_json params = ordered_json::object();
    if (s.tag == ProblemTag::P_lambda) params["lambda"] = s.lambda;
    if (s.tag == ProblemTag::LLVF_eps) params["eps"] = s.eps;
    if (s.tag == ProblemTag::P_t) params["t"] = s.t;
    j["params"] = params;
    j["value"] = json_xreal(s.value);
    ordered_json argmin = ordered_json::array();
    for (std::size_t w = 0; w < s.argmin.size(); ++w) {
        auto [x, y] = s.argmin_xy(inst, w);
        argmin.push_back({{"x", json_vec(x)}, {"y", json_vec(y)}});
    }
    j["argmin"] = argmin;
    return j;
}

inline ordered_json dual_point_to_json(const DualPoint& p) {
    ordered_json j;
    j["scheme"] = scheme_name(p.scheme);
    auto put_vec = [&](const char* name, const VectorXd& v) {
        if (v.size() > 0) j[name] = json_vec(v);
    };
    put_vec("alpha_star", p.alpha_star);
    put_vec("beta_star", p.beta_star);
    if (p.scheme == DualScheme::D_EQ) j["gamma_star"] = p.gamma_star;
    put_vec("x_star", p.x_star);
    put_vec("y_star", p.y_star);
    put_vec("z_star", p.z_star);
    put_vec("q_star", p.q_star);
    put_vec("alpha", p.alpha);
    put_vec("beta", p.beta);
    if (!p.uG.empty() || !p.ug.empty()) {
        ordered_json cps = ordered_json::array();
        for (std::size_t i = 0; i < p.uG.size(); ++i)
            cps.push_back({{"constraint", "G" + std::to_string(i + 1)},
                           {"u", json_vec(p.uG[i])},
                           {"v", json_vec(p.vG[i])}});
        for (std::size_t i = 0; i < p.ug.size(); ++i)
            cps.push_back({{"constraint", "g" + std::to_string(i + 1)},
                           {"u", json_vec(p.ug[i])},
                           {"v", json_vec(p.vg[i])}});
        j["conjugate_points"] = cps;
    }
    if (p.scheme == DualScheme::D_EPS || p.scheme == DualScheme::D_GEO) j["gamma"] = p.gamma;
    return j;
}

inline ordered_json gap_to_json(const GapReport& r) {
    ordered_json j;
    j["scheme"] = scheme_name(r.scheme);
    ordered_json params = ordered_json::object();
    if (r.scheme == DualScheme::D_LAMBDA || r.scheme == DualScheme::D_LAMBDA_MOD ||
        r.scheme == DualScheme::D_TFL)
        params["lambda"] = r.params.lambda;
    if (r.scheme == DualScheme::D_EPS) params["eps"] = r.params.eps;
    j["params"] = params;
    j["primal"] = json_xreal(r.primal);
    j["dual"] = json_xreal(r.dual);
    j["gap"] = json_xreal(r.gap);
    j["polarity"] =
        r.polarity == Polarity::TRUE_LOWER_BOUND ? "TRUE_LOWER_BOUND" : "HEURISTIC_ESTIMATE";
    j["point"] = dual_point_to_json(r.best);
    j["budget"] = r.budget_used;
    j["seed"] = r.seed;
    j["notes"] = r.notes;
    if (!r.per_outer.empty()) {
        ordered_json po = ordered_json::array();
        for (const auto& [xs, v] : r.per_outer)
            po.push_back({{"x_star", json_vec(xs)}, {"inner_value", json_xreal(v)}});
        j["per_outer"] = po;
    }
    return j;
}

inline ordered_json cq_to_json(const CQReport& r) {
    ordered_json j;
    j["kind"] = cq_name(r.kind);
    j["verdict"] = verdict_name(r.verdict);
    j["heuristic"] = r.heuristic;
    j["witness"] = r.witness;
    j["tol"] = r.tol;
    if (!r.notes.empty()) j["notes"] = r.notes;
    return j;
}

}  // namespace bdl
