#pragma once

#include <json.hpp>
#include <map>
#include <set>

#include "dual.hpp"

namespace bdl {

using ordered_json = nlohmann::ordered_json;

enum class CQKind {
    SLATER_GENERALIZED,
    SLATER_LLVF_FAILURE,
    CONTINGENT_PROBE,
    CONE_34_FAILURE,
    SLATER_LAMBDA,
    SFRC,
    FRC,
    CC_PROBE,
    REGUL,
    POINTED_HIGH_DIM,
    INTERIOR_NONEMPTY,
    ASSUM_NOT_INTERIOR,
};

inline const char* cq_name(CQKind k) {
    switch (k) {
        case CQKind::SLATER_GENERALIZED: return "slater_generalized";
        case CQKind::SLATER_LLVF_FAILURE: return "slater_llvf_failure";
        case CQKind::CONTINGENT_PROBE: return "contingent_probe";
        case CQKind::CONE_34_FAILURE: return "cone_34_failure";
        case CQKind::SLATER_LAMBDA: return "slater_lambda";
        case CQKind::SFRC: return "sfrc";
        case CQKind::FRC: return "frc";
        case CQKind::CC_PROBE: return "cc_probe";
        case CQKind::REGUL: return "regul";
        case CQKind::POINTED_HIGH_DIM: return "pointed_high_dim";
        case CQKind::INTERIOR_NONEMPTY: return "interior_nonempty";
        case CQKind::ASSUM_NOT_INTERIOR: return "assum_not_interior";
    }
    return "?";
}

inline std::optional<CQKind> cq_from_name(const std::string& s) {
    for (CQKind k : {CQKind::SLATER_GENERALIZED, CQKind::SLATER_LLVF_FAILURE,
                     CQKind::CONTINGENT_PROBE, CQKind::CONE_34_FAILURE, CQKind::SLATER_LAMBDA,
                     CQKind::SFRC, CQKind::FRC, CQKind::CC_PROBE, CQKind::REGUL,
                     CQKind::POINTED_HIGH_DIM, CQKind::INTERIOR_NONEMPTY,
                     CQKind::ASSUM_NOT_INTERIOR})
        if (s == cq_name(k)) return k;
    return std::nullopt;
}

enum class Verdict { HOLDS, FAILS, INCONCLUSIVE };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::HOLDS: return "HOLDS";
        case Verdict::FAILS: return "FAILS";
        case Verdict::INCONCLUSIVE: return "INCONCLUSIVE";
    }
    return "?";
}

struct CQReport {
    CQKind kind = CQKind::SLATER_LLVF_FAILURE;
    Verdict verdict = Verdict::INCONCLUSIVE;
    bool heuristic = true;
    double tol = 1e-9;
    ordered_json witness = ordered_json::object();
    std::vector<std::string> notes;
};

struct CheckParams {
    double lambda = 1.0;
    double eps = 0.1;
    double tol = 1e-9;
    long budget = 20000;
    unsigned long long seed = 0;
};

/// Sampled image clouds: rows of (F, f-phi-eps, G, g) for the regularized
/// Lagrangian study, or (F, f-phi) for the geometric one. Rows with any
/// non-finite coordinate are dropped and counted.
struct FeatureCloud {
    std::vector<VectorXd> points;
    std::size_t skipped_nonfinite = 0;
};

inline FeatureCloud psi_eps_cloud(const BilevelInstance& inst, const DualPrecomp& pre, double eps) {
    FeatureCloud fc;
    const int d = 2 + inst.k() + inst.p();
    for (std::size_t i = 0; i < pre.node.size(); ++i) {
        VectorXd row(d);
        bool finite = pre.Fv[i].is_finite() && pre.slack[i].is_finite();
        if (finite) {
            row[0] = pre.Fv[i].raw();
            row[1] = pre.slack[i].raw() - eps;
        }
        for (int c = 0; c < inst.k() && finite; ++c) {
            finite = pre.Gv[c][i].is_finite();
            if (finite) row[2 + c] = pre.Gv[c][i].raw();
        }
        for (int c = 0; c < inst.p() && finite; ++c) {
            finite = pre.gv[c][i].is_finite();
            if (finite) row[2 + inst.k() + c] = pre.gv[c][i].raw();
        }
        if (finite) fc.points.push_back(row);
        else ++fc.skipped_nonfinite;
    }
    return fc;
}

inline FeatureCloud psi_geo_cloud(const BilevelInstance& inst, const DualPrecomp& pre) {
    FeatureCloud fc;
    for (std::size_t i = 0; i < pre.node.size(); ++i) {
        if (!pre.Fv[i].is_finite() || !pre.slack[i].is_finite()) {
            ++fc.skipped_nonfinite;
            continue;
        }
        VectorXd row(2);
        row << pre.Fv[i].raw(), pre.slack[i].raw();
        fc.points.push_back(row);
    }
    return fc;
}

namespace cq_detail {

inline ordered_json vec_json(const VectorXd& v) {
    ordered_json a = ordered_json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline bool is_affine_handle(const FuncHandle& f) {
    return f.is_analytic() && f.analytic->is_affine();
}

}  // namespace cq_detail

/// 2-D pointedness of the cone generated by the translated cloud plus the
/// open positive quadrant: exact on the sampled generators via the angular
/// interval hull. Pointed iff the hull spans strictly less than pi.
inline CQReport pointedness_2d(const FeatureCloud& cloud, double V, double tol = 1e-9) {
    CQReport rep;
    rep.kind = CQKind::POINTED_HIGH_DIM;  // reported under its own name below
    rep.tol = tol;
    rep.heuristic = false;
    std::vector<double> angles;
    for (const auto& p : cloud.points) {
        double a = p[0] - V, b = p[1];
        if (a == 0 && b == 0) continue;
        angles.push_back(std::atan2(b, a));
    }
    if (angles.empty()) {
        // only the quadrant directions remain: pointed
        rep.verdict = Verdict::HOLDS;
        rep.witness["note"] = "degenerate cloud: quadrant only";
        return rep;
    }
    const double pi = std::acos(-1.0);
    // the open quadrant occupies (0, pi/2); add its endpoints as directions
    angles.push_back(0.0);
    angles.push_back(pi / 2);
    for (auto& a : angles)
        if (a < 0) a += 2 * pi;
    std::sort(angles.begin(), angles.end());
    angles.erase(std::unique(angles.begin(), angles.end()), angles.end());
    // largest empty arc, ignoring gaps inside the occupied quadrant interval
    double max_gap = 0, gap_lo = 0, gap_hi = 0;
    for (std::size_t i = 0; i < angles.size(); ++i) {
        double a = angles[i];
        double b = i + 1 < angles.size() ? angles[i + 1] : angles[0] + 2 * pi;
        if (a >= -1e-15 && b <= pi / 2 + 1e-15) continue;  // inside the quadrant
        if (b - a > max_gap) {
            max_gap = b - a;
            gap_lo = a;
            gap_hi = b;
        }
    }
    double span = 2 * pi - max_gap;
    rep.witness["span_rad"] = span;
    rep.witness["extreme_gap"] = ordered_json::array({gap_lo, gap_hi});
    if (span < pi - tol) {
        rep.verdict = Verdict::HOLDS;
    } else {
        rep.verdict = Verdict::FAILS;
        // witness: the two extreme directions bounding the occupied arc
        rep.witness["arc_from"] = gap_hi >= 2 * pi ? gap_hi - 2 * pi : gap_hi;
        rep.witness["arc_to"] = gap_lo;
    }
    return rep;
}

struct CalmnessResult {
    std::optional<double> lambda_hat;   // smallest validated multiplier
    ordered_json per_lambda = ordered_json::array();
    std::optional<ordered_json> counterexample;
    double k_f = 0, k_phi = 0;
};

/// Exhaustive partial-calmness probe around a feasible candidate: tests
/// F(x,y) - F(cand) + lambda |t| >= 0 over the perturbed-feasible triples in
/// shrinking node-radius boxes, with the t band scaled by the grid Lipschitz
/// estimates.
inline CalmnessResult partial_calmness_probe(const BilevelInstance& inst, const DualPrecomp& pre,
                                             std::size_t cand_joint,
                                             const std::vector<double>& lambda_grid,
                                             const std::vector<int>& radii = {3, 2, 1}) {
    if (!llvf_feasible(inst, pre.phi, cand_joint, pre.tols))
        throw std::invalid_argument("partial_calmness_probe: candidate infeasible");
    CalmnessResult res;
    auto [kf, kphi] = lipschitz_estimates(inst, pre.phi);
    res.k_f = kf;
    res.k_phi = kphi;
    const double Fbar = inst.F.evaluate(pre.node[cand_joint]).raw();
    auto cidx = pre.joint.multi_index(cand_joint);
    const double h = pre.joint.max_step();

    auto violation_at_radius = [&](double lambda, int r, ordered_json* out) {
        double t_cap = (kf + kphi) * r * h + pre.tols.value;
        std::size_t nn = pre.node.size();
        for (std::size_t i = 0; i < nn; ++i) {
            auto idx = pre.joint.multi_index(i);
            bool inside = true;
            for (int d = 0; d < pre.joint.dim(); ++d)
                inside = inside && std::abs(idx[d] - cidx[d]) <= r;
            if (!inside || !pre.ineq_ok[i]) continue;
            if (!pre.slack[i].is_finite()) continue;
            double t = -pre.slack[i].raw();  // the t making the equality hold
            if (std::abs(t) > t_cap) continue;
            if (!pre.Fv[i].is_finite()) continue;
            double lhs = pre.Fv[i].raw() - Fbar + lambda * std::abs(t);
            if (lhs < -pre.tols.value) {
                if (out) {
                    (*out)["x"] = cq_detail::vec_json(pre.node[i].head(inst.n));
                    (*out)["y"] = cq_detail::vec_json(pre.node[i].tail(inst.m));
                    (*out)["t"] = t;
                    (*out)["violation"] = lhs;
                    (*out)["lambda"] = lambda;
                    (*out)["radius"] = r;
                }
                return true;
            }
        }
        return false;
    };

    for (double lambda : lambda_grid) {
        bool validated = false;
        ordered_json detail;
        detail["lambda"] = lambda;
        ordered_json per_radius = ordered_json::array();
        for (int r : radii) {
            ordered_json ce;
            bool bad = violation_at_radius(lambda, r, &ce);
            per_radius.push_back({{"radius", r}, {"violated", bad}});
            if (!bad) validated = true;  // some neighborhood works
        }
        detail["radii"] = per_radius;
        detail["validated"] = validated;
        res.per_lambda.push_back(detail);
        if (validated && !res.lambda_hat) res.lambda_hat = lambda;
    }
    if (!res.lambda_hat && !lambda_grid.empty()) {
        ordered_json ce;
        violation_at_radius(lambda_grid.back(), radii.back(), &ce);
        res.counterexample = ce;
    }
    return res;
}

/// Node-set characterization of the geometric pointedness assumption,
/// cross-checked against the angular test; disagreement is flagged.
inline CQReport characterize_geo(const BilevelInstance& inst, const DualPrecomp& pre,
                                 double tol = 1e-9) {
    SetClassification cls = classify_sets(inst, pre.phi, pre.tols);
    std::set<std::size_t> feq(cls.f_eq.begin(), cls.f_eq.end());
    bool opt_meets_feq = false;
    for (auto id : cls.optimal) opt_meets_feq = opt_meets_feq || feq.count(id);
    bool xiplus_meets_feq = false;
    for (auto id : cls.xi_plus)
        if (feq.count(id)) {
            xiplus_meets_feq = true;
            break;
        }
    // finite scans attain their minima, so the optimal set is nonempty here;
    // the empty-O branch is reachable only through the tolerance band
    bool predicted_pointed =
        cls.optimal.empty() ? xiplus_meets_feq : (opt_meets_feq && xiplus_meets_feq);

    FeatureCloud cloud = psi_geo_cloud(inst, pre);
    CQReport angular = pointedness_2d(cloud, cls.value.raw(), tol);

    CQReport rep;
    rep.kind = CQKind::POINTED_HIGH_DIM;
    rep.tol = tol;
    rep.heuristic = false;
    rep.verdict = angular.verdict;
    rep.witness["set_characterization"] = predicted_pointed ? "pointed" : "not_pointed";
    rep.witness["angular_test"] = verdict_name(angular.verdict);
    rep.witness["angular_witness"] = angular.witness;
    rep.witness["optimal_meets_f_eq"] = opt_meets_feq;
    rep.witness["xi_plus_meets_f_eq"] = xiplus_meets_feq;
    bool agree = predicted_pointed == (angular.verdict == Verdict::HOLDS);
    rep.witness["disagreement"] = !agree;
    if (!agree)
        rep.notes.push_back("set characterization and angular test disagree on this instance");
    return rep;
}

/// Searches a nonzero multiplier vector (sigma, gamma, alpha, beta) with
/// inf L_eps = sigma * V; reports the degenerate sigma = 0 case when found.
struct Thm52Result {
    bool found = false;
    double sigma = 1.0;
    double gamma = 0;
    VectorXd alpha, beta;
    double inf_value = 0;
};

inline Thm52Result thm52_multiplier_search(const BilevelInstance& inst, const DualPrecomp& pre,
                                           double eps, long budget) {
    Thm52Result out;
    DualParams params;
    params.eps = eps;
    PrimalSolution prim = solve_regularized(inst, pre.phi, eps, pre.tols);
    if (!prim.value.is_finite()) return out;
    // sigma = 1 route: the regularized dual search
    GapReport rep = search_dual(inst, pre, DualScheme::D_EPS, params, budget, 0);
    if (rep.dual.is_finite() && std::abs(rep.dual.raw() - prim.value.raw()) <= 1e-6) {
        out.found = true;
        out.sigma = 1.0;
        out.gamma = rep.best.gamma;
        out.alpha = rep.best.alpha;
        out.beta = rep.best.beta;
        out.inf_value = rep.dual.raw();
        return out;
    }
    // sigma = 0 route: nonzero (gamma, alpha, beta) with inf of the
    // objective-free Lagrangian equal to zero
    auto inf0 = [&](double gamma, const VectorXd& a, const VectorXd& b) {
        XReal inner = XReal::pos_inf();
        for (std::size_t i = 0; i < pre.node.size(); ++i) {
            XReal s = xscale_signed(gamma, xsub(pre.slack[i], XReal(eps)));
            for (int c = 0; c < inst.k(); ++c) s = xadd(s, xscale(a[c], pre.Gv[c][i]));
            for (int c = 0; c < inst.p(); ++c) s = xadd(s, xscale(b[c], pre.gv[c][i]));
            inner = xmin(inner, s);
        }
        return inner;
    };
    for (double gamma : {0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
        for (int which = -1; which < inst.k() + inst.p(); ++which) {
            VectorXd a = VectorXd::Zero(inst.k()), b = VectorXd::Zero(inst.p());
            if (which >= 0 && which < inst.k()) a[which] = 1.0;
            else if (which >= inst.k()) b[which - inst.k()] = 1.0;
            if (gamma == 0 && which < 0) continue;  // multiplier must be nonzero
            XReal v = inf0(gamma, a, b);
            if (v.is_finite() && std::abs(v.raw()) <= 1e-9) {
                out.found = true;
                out.sigma = 0.0;
                out.gamma = gamma;
                out.alpha = a;
                out.beta = b;
                out.inf_value = v.raw();
                return out;
            }
        }
    }
    return out;
}

/// Dispatcher for the named constraint-qualification checks.
inline CQReport check(CQKind kind, const BilevelInstance& inst, const DualPrecomp& pre,
                      const CheckParams& params = {}) {
    CQReport rep;
    rep.kind = kind;
    rep.tol = params.tol;
    const std::size_t nn = pre.node.size();

    switch (kind) {
        case CQKind::SLATER_GENERALIZED: {
            // family (G, g, f-phi); strict < -tol for the non-affine members,
            // <= tol for the affine ones
            std::vector<char> affine;
            for (const auto& Gi : inst.G) affine.push_back(cq_detail::is_affine_handle(Gi));
            for (const auto& gj : inst.lower.g) affine.push_back(cq_detail::is_affine_handle(gj));
            affine.push_back(0);  // the value constraint is never affine here
            for (std::size_t i = 0; i < nn; ++i) {
                bool ok = true;
                int c = 0;
                for (int a = 0; a < inst.k() && ok; ++a, ++c) {
                    const XReal& v = pre.Gv[a][i];
                    ok = v.is_finite() && (affine[c] ? v.raw() <= params.tol : v.raw() < -params.tol);
                }
                for (int a = 0; a < inst.p() && ok; ++a, ++c) {
                    const XReal& v = pre.gv[a][i];
                    ok = v.is_finite() && (affine[c] ? v.raw() <= params.tol : v.raw() < -params.tol);
                }
                if (ok) {
                    const XReal& w = pre.slack[i];
                    ok = w.is_finite() && w.raw() < -params.tol;
                }
                if (ok) {
                    rep.verdict = Verdict::HOLDS;
                    rep.heuristic = false;
                    rep.witness["x"] = cq_detail::vec_json(pre.node[i].head(inst.n));
                    rep.witness["y"] = cq_detail::vec_json(pre.node[i].tail(inst.m));
                    return rep;
                }
            }
            rep.verdict = Verdict::FAILS;
            rep.heuristic = true;
            rep.notes.push_back("no strictly feasible node found (grid scan)");
            return rep;
        }
        case CQKind::SLATER_LLVF_FAILURE: {
            // the value constraint admits no strict point: min over the
            // lower-feasible nodes of f - phi is exactly zero
            XReal wmin = XReal::pos_inf();
            std::size_t argnode = 0;
            for (std::size_t i = 0; i < nn; ++i) {
                bool gok = true;
                for (int c = 0; c < inst.p() && gok; ++c) {
                    const XReal& v = pre.gv[c][i];
                    gok = !v.is_pos_inf() && (!v.is_finite() || v.raw() <= pre.tols.feas);
                }
                if (!gok) continue;
                if (pre.slack[i] < wmin) {
                    wmin = pre.slack[i];
                    argnode = i;
                }
            }
            if (!wmin.is_finite()) {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.notes.push_back("empty lower-level feasible scan");
                return rep;
            }
            rep.witness["min_slack"] = wmin.raw();
            rep.witness["at_x"] = cq_detail::vec_json(pre.node[argnode].head(inst.n));
            rep.witness["at_y"] = cq_detail::vec_json(pre.node[argnode].tail(inst.m));
            if (wmin.raw() >= -params.tol) {
                rep.verdict = Verdict::FAILS;  // the Slater CQ fails, certified
                rep.heuristic = false;
                rep.notes.push_back("value constraint has no strict interior point");
            } else {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.notes.push_back("negative slack found: value function is not the grid minimum");
            }
            return rep;
        }
        case CQKind::CONE_34_FAILURE: {
            XReal wmin = XReal::pos_inf();
            for (std::size_t i = 0; i < nn; ++i)
                if (pre.slack[i].is_finite()) wmin = xmin(wmin, pre.slack[i]);
            if (!wmin.is_finite()) {
                rep.verdict = Verdict::INCONCLUSIVE;
                return rep;
            }
            rep.witness["min_first_coordinate"] = wmin.raw();
            if (wmin.raw() >= -params.tol) {
                // every generated point keeps a nonnegative first coordinate,
                // so (a, 0, 0) with a < 0 is unreachable: the cone condition fails
                rep.verdict = Verdict::FAILS;
                rep.heuristic = false;
            } else {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.notes.push_back("negative slack present: sign argument unavailable");
            }
            return rep;
        }
        case CQKind::SLATER_LAMBDA: {
            for (std::size_t i = 0; i < nn; ++i) {
                if (!pre.joint.box.contains_strict(pre.node[i], 1e-12)) continue;
                bool ok = true;
                for (int c = 0; c < inst.k() && ok; ++c) {
                    const XReal& v = pre.Gv[c][i];
                    ok = v.is_finite() && v.raw() < -params.tol;
                }
                for (int c = 0; c < inst.p() && ok; ++c) {
                    const XReal& v = pre.gv[c][i];
                    ok = v.is_finite() && v.raw() < -params.tol;
                }
                if (ok) {
                    rep.verdict = Verdict::HOLDS;
                    rep.heuristic = false;
                    rep.witness["x"] = cq_detail::vec_json(pre.node[i].head(inst.n));
                    rep.witness["y"] = cq_detail::vec_json(pre.node[i].tail(inst.m));
                    return rep;
                }
            }
            rep.verdict = Verdict::FAILS;
            rep.heuristic = true;
            rep.notes.push_back("no strict interior node found (grid scan)");
            return rep;
        }
        case CQKind::REGUL: {
            // for each x passing the upper constraints somewhere, every
            // nonempty subset of lower constraints admits a strictly
            // feasible y node
            const std::size_t ny = inst.ygrid.node_count();
            const std::size_t nxn = inst.xgrid.node_count();
            ordered_json worst;
            double best_margin = std::numeric_limits<double>::infinity();
            for (std::size_t xi = 0; xi < nxn; ++xi) {
                bool upper_ok = false;
                for (std::size_t yj = 0; yj < ny && !upper_ok; ++yj) {
                    std::size_t id = fuse_joint(inst, xi, yj);
                    bool ok = true;
                    for (int c = 0; c < inst.k() && ok; ++c) {
                        const XReal& v = pre.Gv[c][id];
                        ok = !v.is_pos_inf() && (!v.is_finite() || v.raw() <= pre.tols.feas);
                    }
                    upper_ok = ok;
                }
                if (!upper_ok) continue;
                for (int mask = 1; mask < (1 << inst.p()); ++mask) {
                    double margin = -std::numeric_limits<double>::infinity();
                    for (std::size_t yj = 0; yj < ny; ++yj) {
                        std::size_t id = fuse_joint(inst, xi, yj);
                        double m = std::numeric_limits<double>::infinity();
                        for (int c = 0; c < inst.p(); ++c) {
                            if (!((mask >> c) & 1)) continue;
                            const XReal& v = pre.gv[c][id];
                            if (!v.is_finite()) {
                                m = -std::numeric_limits<double>::infinity();
                                break;
                            }
                            m = std::min(m, -v.raw());
                        }
                        margin = std::max(margin, m);
                    }
                    if (margin <= params.tol) {
                        rep.verdict = Verdict::FAILS;
                        rep.heuristic = true;
                        rep.witness["x"] = cq_detail::vec_json(inst.xgrid.node(xi));
                        rep.witness["subset_mask"] = mask;
                        rep.notes.push_back("no strictly feasible y node for this subset");
                        return rep;
                    }
                    if (margin < best_margin) {
                        best_margin = margin;
                        worst["x"] = cq_detail::vec_json(inst.xgrid.node(xi));
                        worst["subset_mask"] = mask;
                        worst["margin"] = margin;
                    }
                }
            }
            rep.verdict = Verdict::HOLDS;
            rep.heuristic = true;
            rep.witness = worst;
            rep.notes.push_back("x scanned on grid nodes only");
            return rep;
        }
        case CQKind::INTERIOR_NONEMPTY: {
            FeatureCloud fc = psi_eps_cloud(inst, pre, params.eps);
            if (fc.points.empty()) {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.notes.push_back("no all-finite cloud row");
                return rep;
            }
            // p + 2 tol * 1 carries a tol ball inside p + the open orthant
            VectorXd c = fc.points.front().array() + 2 * std::max(params.tol, 1e-6);
            rep.verdict = Verdict::HOLDS;
            rep.heuristic = true;
            rep.witness["interior_point"] = cq_detail::vec_json(c);
            rep.witness["ball_radius"] = std::max(params.tol, 1e-6);
            rep.notes.push_back("cloud stands in for the full image set");
            return rep;
        }
        case CQKind::ASSUM_NOT_INTERIOR: {
            FeatureCloud fc = psi_eps_cloud(inst, pre, params.eps);
            PrimalSolution prim = solve_regularized(inst, pre.phi, params.eps, pre.tols);
            if (fc.points.empty() || !prim.value.is_finite()) {
                rep.verdict = Verdict::INCONCLUSIVE;
                return rep;
            }
            const double V = prim.value.raw();
            const int d = static_cast<int>(fc.points.front().size());
            auto translated = [&](const VectorXd& p) {
                VectorXd t = p;
                t[0] -= V;
                return t;
            };
            // FAILS: a translated point strictly negative in all coordinates
            for (const auto& p : fc.points) {
                VectorXd t = translated(p);
                if ((t.array() < -params.tol).all()) {
                    rep.verdict = Verdict::FAILS;
                    rep.heuristic = true;
                    rep.witness["strictly_negative_point"] = cq_detail::vec_json(t);
                    return rep;
                }
            }
            // HOLDS: a nonnegative separating direction over the sample
            std::vector<VectorXd> dirs;
            for (int a = 0; a < d; ++a) dirs.push_back(VectorXd::Unit(d, a));
            dirs.push_back(VectorXd::Ones(d).normalized());
            std::mt19937_64 rng(params.seed);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (int s = 0; s < 64; ++s) {
                VectorXd v(d);
                for (int a = 0; a < d; ++a) v[a] = u(rng);
                if (v.norm() > 1e-12) dirs.push_back(v.normalized());
            }
            for (const auto& dir : dirs) {
                double worst = std::numeric_limits<double>::infinity();
                for (const auto& p : fc.points) worst = std::min(worst, dir.dot(translated(p)));
                if (worst >= -params.tol) {
                    rep.verdict = Verdict::HOLDS;
                    rep.heuristic = true;
                    rep.witness["direction"] = cq_detail::vec_json(dir);
                    rep.witness["min_inner_product"] = worst;
                    return rep;
                }
            }
            rep.verdict = Verdict::INCONCLUSIVE;
            rep.notes.push_back("no separating direction found in the sampled family");
            return rep;
        }
        case CQKind::POINTED_HIGH_DIM: {
            FeatureCloud fc = psi_eps_cloud(inst, pre, params.eps);
            PrimalSolution prim = solve_regularized(inst, pre.phi, params.eps, pre.tols);
            if (fc.points.empty() || !prim.value.is_finite()) {
                rep.verdict = Verdict::INCONCLUSIVE;
                return rep;
            }
            const double V = prim.value.raw();
            const int d = static_cast<int>(fc.points.front().size());
            std::vector<VectorXd> gens;
            for (const auto& p : fc.points) {
                VectorXd t = p;
                t[0] -= V;
                if (t.norm() > 1e-12) gens.push_back(t.normalized());
            }
            for (int a = 0; a < d; ++a) gens.push_back(VectorXd::Unit(d, a));
            const double angtol = 1e-6;
            for (std::size_t i = 0; i < gens.size(); ++i)
                for (std::size_t j = i + 1; j < gens.size(); ++j)
                    if (gens[i].dot(gens[j]) < -(1.0 - angtol)) {
                        rep.verdict = Verdict::FAILS;
                        rep.heuristic = true;
                        rep.witness["antipodal_pair"] = ordered_json::array(
                            {cq_detail::vec_json(gens[i]), cq_detail::vec_json(gens[j])});
                        return rep;
                    }
            rep.verdict = Verdict::INCONCLUSIVE;
            rep.heuristic = true;
            rep.notes.push_back("no antipodal generator pair: necessary condition only");
            return rep;
        }
        case CQKind::SFRC:
        case CQKind::FRC: {
            DualParams dp;
            dp.lambda = params.lambda;
            PrimalSolution prim = solve_penalized(inst, pre.phi, params.lambda, pre.tols);
            if (!prim.value.is_finite()) {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.notes.push_back("penalized value not finite");
                return rep;
            }
            const double V = prim.value.raw();
            // sampled vertical-axis threshold of the characteristic set:
            // zeta(x*) = min over sampled decompositions of height - phi*(x*),
            // then the axis slice is [max over x* of zeta, infinity)
            DualGridSpec phidual = auto_dual_grid(pre.phi);
            double zeta_star = -std::numeric_limits<double>::infinity();
            ordered_json per_xstar = ordered_json::array();
            std::vector<double> ladder = search_detail::multiplier_ladder();
            for (std::size_t xi = 0; xi < phidual.grid.node_count(); ++xi) {
                VectorXd xs = phidual.grid.node(xi);
                double ps = phi_star(pre, xs).raw();
                VectorXd base = joint_point(xs, VectorXd::Zero(inst.m));
                double hmin = conj_FL(pre, params.lambda, base).raw();  // mu = 0 route
                // one active constraint with a sampled conjugate point
                for (int c = 0; c < inst.k() + inst.p(); ++c) {
                    const auto& cv = c < inst.k() ? pre.Gv[c] : pre.gv[c - inst.k()];
                    DualGridSpec cd = auto_dual_grid(GridFunction(
                        pre.joint,
                        [&] {
                            std::vector<XReal> vals = cv;
                            return vals;
                        }(),
                        true));
                    for (std::size_t ui = 0; ui < cd.grid.node_count();
                         ui += std::max<std::size_t>(1, cd.grid.node_count() / 16)) {
                        VectorXd uv = cd.grid.node(ui);
                        XReal cstar = conj_single(pre, cv, uv);
                        if (!cstar.is_finite()) continue;
                        for (double mu : ladder) {
                            if (mu == 0) continue;
                            VectorXd zq = base - mu * uv;
                            XReal flc = conj_FL(pre, params.lambda, zq);
                            if (!flc.is_finite()) continue;
                            hmin = std::min(hmin, flc.raw() + mu * cstar.raw());
                        }
                    }
                }
                double zeta = hmin - ps;
                zeta_star = std::max(zeta_star, zeta);
                if (per_xstar.size() < 8)
                    per_xstar.push_back({{"x_star", cq_detail::vec_json(xs)}, {"zeta", zeta}});
            }
            rep.heuristic = true;
            rep.witness["zeta_star"] = zeta_star;
            rep.witness["minus_primal"] = -V;
            rep.witness["per_x_star_sample"] = per_xstar;
            const double band = std::max(params.tol, 1e-7);
            if (kind == CQKind::SFRC) {
                // the sampled threshold over-estimates the true one, so only
                // a clear shortfall is evidence against the inclusion
                if (zeta_star >= -V + band) rep.verdict = Verdict::HOLDS;
                else if (zeta_star <= -V - band) rep.verdict = Verdict::FAILS;
                else rep.verdict = Verdict::INCONCLUSIVE;
            } else {
                // FRC needs the axis slices to coincide
                if (std::abs(zeta_star + V) <= band) rep.verdict = Verdict::HOLDS;
                else rep.verdict = Verdict::FAILS;
            }
            return rep;
        }
        case CQKind::CC_PROBE: {
            // sampled Minkowski sum of the penalized conjugate epigraph and
            // the weighted constraint conjugate epigraphs; midpoints of
            // sample pairs should stay near the sample if the sum is closed
            DualGridSpec jd = auto_dual_grid(GridFunction(
                pre.joint,
                [&] {
                    std::vector<XReal> vals(pre.node.size());
                    for (std::size_t i = 0; i < vals.size(); ++i)
                        vals[i] = xadd(xscale(1.0 / params.lambda, pre.Fv[i]), pre.fv[i]);
                    return vals;
                }(),
                true));
            std::vector<VectorXd> pts;
            std::vector<double> ladder = {0.0, 0.1, 1.0, 10.0};
            std::size_t stride = std::max<std::size_t>(1, jd.grid.node_count() / 48);
            for (std::size_t i = 0; i < jd.grid.node_count(); i += stride) {
                VectorXd zq = jd.grid.node(i);
                XReal flc = conj_FL(pre, params.lambda, zq);
                if (!flc.is_finite()) continue;
                for (double mu : ladder) {
                    VectorXd alpha = VectorXd::Constant(std::max(1, inst.k()), mu).head(inst.k());
                    VectorXd beta = VectorXd::Constant(std::max(1, inst.p()), mu).head(inst.p());
                    XReal ws = conj_wsum(pre, alpha, beta, VectorXd::Zero(inst.n + inst.m));
                    if (!ws.is_finite()) continue;
                    VectorXd pt(inst.n + inst.m + 1);
                    pt << zq, flc.raw() + ws.raw();
                    pts.push_back(pt);
                }
            }
            if (pts.size() < 8) {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.notes.push_back("too few finite samples");
                return rep;
            }
            double worst = 0;
            ordered_json worst_pair;
            for (std::size_t i = 0; i + 1 < pts.size(); i += 2) {
                VectorXd mid = 0.5 * (pts[i] + pts[i + 1]);
                double dmin = std::numeric_limits<double>::infinity();
                for (const auto& q : pts) dmin = std::min(dmin, (q - mid).norm());
                // heights above the sum stay inside the epigraph: allow the
                // vertical ray before measuring
                for (const auto& q : pts)
                    if ((q.head(inst.n + inst.m) - mid.head(inst.n + inst.m)).norm() < dmin &&
                        q[inst.n + inst.m] <= mid[inst.n + inst.m])
                        dmin = (q.head(inst.n + inst.m) - mid.head(inst.n + inst.m)).norm();
                if (dmin > worst) {
                    worst = dmin;
                    worst_pair = ordered_json::array(
                        {cq_detail::vec_json(pts[i]), cq_detail::vec_json(pts[i + 1])});
                }
            }
            rep.heuristic = true;
            rep.witness["worst_midpoint_distance"] = worst;
            double scale = jd.grid.max_step() * 4;
            if (worst <= scale) {
                rep.verdict = Verdict::HOLDS;
                rep.notes.push_back("midpoints stay near the sample (closedness-biased probe)");
            } else {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.witness["worst_pair"] = worst_pair;
                rep.notes.push_back("midpoint strays from the sample: cannot certify closedness");
            }
            return rep;
        }
        case CQKind::CONTINGENT_PROBE: {
            PrimalSolution prim = inst.geometric ? solve_geometric(inst, pre.phi, pre.tols)
                                                 : solve_llvf(inst, pre.phi, pre.tols);
            if (!prim.value.is_finite() || prim.argmin.empty()) {
                rep.verdict = Verdict::INCONCLUSIVE;
                rep.notes.push_back("no optimal node to anchor the probe");
                return rep;
            }
            const double V = prim.value.raw();
            // corrected reading of the image set: points
            // (F(opt) - F(z) - sigma, -psi(z) - s, -omega(z)) with the slack
            // choices sigma = 0 and s = -psi(z) at inequality-feasible z;
            // a contingent direction (d, 0, 0), d > 0 needs feasible z with
            // F below V and vanishing omega = f - phi at every scale
            rep.notes.push_back("set display read as (phi(opt)-phi(z)-sigma, -psi(z)-z, -omega(z))");
            const double angle_tol = 0.1;
            int scales_hit = 0, scales_total = 0;
            ordered_json hits = ordered_json::array();
            for (int t = 0; t < 6; ++t) {
                double rho = std::pow(0.5, t);
                bool hit = false;
                for (std::size_t i = 0; i < nn && !hit; ++i) {
                    if (!pre.ineq_ok[i] || !pre.Fv[i].is_finite() || !pre.slack[i].is_finite())
                        continue;
                    double first = V - pre.Fv[i].raw();
                    double omega = pre.slack[i].raw();
                    if (first <= 0) continue;
                    double norm = std::hypot(first, omega);
                    if (norm > rho || norm < rho * 0.25) continue;
                    if (std::abs(omega) <= angle_tol * first) {
                        hit = true;
                        if (hits.size() < 4)
                            hits.push_back({{"scale", rho},
                                            {"first", first},
                                            {"omega", omega}});
                    }
                }
                ++scales_total;
                if (hit) ++scales_hit;
            }
            rep.heuristic = true;
            rep.witness["scales_hit"] = scales_hit;
            rep.witness["scales_total"] = scales_total;
            rep.witness["samples"] = hits;
            if (scales_hit >= scales_total - 1 && scales_hit >= 3) {
                rep.verdict = Verdict::FAILS;  // a contingent direction persists
            } else if (scales_hit == 0) {
                rep.verdict = Verdict::HOLDS;
            } else {
                rep.verdict = Verdict::INCONCLUSIVE;
            }
            return rep;
        }
    }
    throw std::logic_error("check: bad kind");
}

}  // namespace bdl
