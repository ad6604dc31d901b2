#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "conjugate.hpp"
#include "reform.hpp"

namespace bdl {

enum class DualScheme { D_IN, D_EQ, D_LAMBDA, D_LAMBDA_MOD, D_TFL, D_EPS, D_GEO };

inline const char* scheme_name(DualScheme s) {
    switch (s) {
        case DualScheme::D_IN: return "d_in";
        case DualScheme::D_EQ: return "d_eq";
        case DualScheme::D_LAMBDA: return "d_lambda";
        case DualScheme::D_LAMBDA_MOD: return "d_lambda_mod";
        case DualScheme::D_TFL: return "d_tfl";
        case DualScheme::D_EPS: return "d_eps";
        case DualScheme::D_GEO: return "d_geo";
    }
    return "?";
}

inline std::optional<DualScheme> scheme_from_name(const std::string& s) {
    for (DualScheme d : {DualScheme::D_IN, DualScheme::D_EQ, DualScheme::D_LAMBDA,
                         DualScheme::D_LAMBDA_MOD, DualScheme::D_TFL, DualScheme::D_EPS,
                         DualScheme::D_GEO})
        if (s == scheme_name(d)) return d;
    return std::nullopt;
}

/// True when the scheme is a pure supremum over multipliers, so every
/// evaluation is a certified lower bound of the matching primal.
inline bool pure_sup_scheme(DualScheme s) {
    return s == DualScheme::D_IN || s == DualScheme::D_EQ || s == DualScheme::D_EPS ||
           s == DualScheme::D_GEO;
}

struct DualParams {
    double lambda = 1.0;
    double eps = 0.1;
};

/// Variables of one dual scheme. Sign constraints are enforced by the
/// factory helpers; eval_dual validates the signature again.
struct DualPoint {
    DualScheme scheme = DualScheme::D_GEO;
    VectorXd alpha_star;              // objective conjugate point (joint space)
    VectorXd beta_star;               // inequality multipliers of the generic duals
    double gamma_star = 0;            // equality multiplier (free sign)
    VectorXd x_star, y_star, z_star, q_star;
    VectorXd alpha, beta;             // G / g multipliers, >= 0
    std::vector<VectorXd> uG, vG, ug, vg;  // per-constraint conjugate points
    double gamma = 0;                 // value-constraint multiplier
};

inline void require_nonneg(const VectorXd& v, const char* what) {
    for (int i = 0; i < v.size(); ++i)
        if (v[i] < 0) throw std::invalid_argument(std::string("DualPoint: ") + what + " must be >= 0");
}

inline DualPoint point_geo(double gamma) {
    if (gamma < 0) throw std::invalid_argument("DualPoint: gamma must be >= 0 for the geometric dual");
    DualPoint p;
    p.scheme = DualScheme::D_GEO;
    p.gamma = gamma;
    return p;
}

inline DualPoint point_eps(const VectorXd& alpha, const VectorXd& beta, double gamma) {
    require_nonneg(alpha, "alpha");
    require_nonneg(beta, "beta");
    DualPoint p;
    p.scheme = DualScheme::D_EPS;
    p.alpha = alpha;
    p.beta = beta;
    p.gamma = gamma;
    return p;
}

inline DualPoint point_eq(const VectorXd& beta_star, double gamma_star) {
    require_nonneg(beta_star, "beta*");
    DualPoint p;
    p.scheme = DualScheme::D_EQ;
    p.beta_star = beta_star;
    p.gamma_star = gamma_star;
    return p;
}

inline DualPoint point_in(const VectorXd& alpha_star, const VectorXd& beta_star) {
    require_nonneg(beta_star, "beta*");
    DualPoint p;
    p.scheme = DualScheme::D_IN;
    p.alpha_star = alpha_star;
    p.beta_star = beta_star;
    return p;
}

inline DualPoint point_lambda(const VectorXd& x_star, const VectorXd& z_star,
                              const VectorXd& q_star, const VectorXd& alpha,
                              const VectorXd& beta) {
    require_nonneg(alpha, "alpha");
    require_nonneg(beta, "beta");
    DualPoint p;
    p.scheme = DualScheme::D_LAMBDA;
    p.x_star = x_star;
    p.z_star = z_star;
    p.q_star = q_star;
    p.alpha = alpha;
    p.beta = beta;
    return p;
}

/// Precomputed node tables: every dual evaluation is a scan over these.
struct DualPrecomp {
    GridSpec joint;
    GridFunction phi;            // on the x grid (override-aware)
    std::vector<VectorXd> node;  // joint node coordinates
    std::vector<XReal> Fv, fv;
    std::vector<std::vector<XReal>> Gv, gv;
    std::vector<XReal> slack;    // f - phi per joint node
    std::vector<char> ineq_ok;   // G <= tol and g <= tol per joint node
    Tols tols;
};

inline DualPrecomp make_precomp(const BilevelInstance& inst, const Tols& tols) {
    DualPrecomp pre;
    pre.joint = inst.joint_grid();
    pre.tols = tols;
    pre.phi = inst.compute_phi(tols.feas);
    const std::size_t nn = pre.joint.node_count();
    pre.node.resize(nn);
    pre.Fv.resize(nn);
    pre.fv.resize(nn);
    pre.slack.resize(nn);
    pre.ineq_ok.assign(nn, 1);
    pre.Gv.assign(inst.k(), std::vector<XReal>(nn));
    pre.gv.assign(inst.p(), std::vector<XReal>(nn));
    parallel_chunks(nn, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            pre.node[i] = pre.joint.node(i);
            pre.Fv[i] = inst.F.evaluate(pre.node[i]);
            pre.fv[i] = inst.lower.f.evaluate(pre.node[i]);
            auto [xi, yj] = split_joint(inst, i);
            (void)yj;
            pre.slack[i] = xsub(pre.fv[i], pre.phi.values[xi]);
            bool ok = true;
            for (int c = 0; c < inst.k(); ++c) {
                pre.Gv[c][i] = inst.G[c].evaluate(pre.node[i]);
                const XReal& v = pre.Gv[c][i];
                ok = ok && !v.is_pos_inf() && (!v.is_finite() || v.raw() <= tols.feas);
            }
            for (int c = 0; c < inst.p(); ++c) {
                pre.gv[c][i] = inst.lower.g[c].evaluate(pre.node[i]);
                const XReal& v = pre.gv[c][i];
                ok = ok && !v.is_pos_inf() && (!v.is_finite() || v.raw() <= tols.feas);
            }
            pre.ineq_ok[i] = ok ? 1 : 0;
        }
    });
    return pre;
}

// ---- conjugate evaluators over the node tables ------------------------------

/// sup over joint nodes of <w, node> - F.
inline XReal conj_F(const DualPrecomp& pre, const VectorXd& w) {
    XReal best = XReal::neg_inf();
    for (std::size_t i = 0; i < pre.node.size(); ++i) {
        if (pre.Fv[i].is_pos_inf()) continue;
        best = xmax(best, xsub(XReal(w.dot(pre.node[i])), pre.Fv[i]));
    }
    return best;
}

/// sup over joint nodes of <(z*,q*), node> - (lambda^-1 F + f).
inline XReal conj_FL(const DualPrecomp& pre, double lambda, const VectorXd& zq) {
    XReal best = XReal::neg_inf();
    for (std::size_t i = 0; i < pre.node.size(); ++i) {
        XReal v = xadd(xscale(1.0 / lambda, pre.Fv[i]), pre.fv[i]);
        if (v.is_pos_inf()) continue;
        best = xmax(best, xsub(XReal(zq.dot(pre.node[i])), v));
    }
    return best;
}

/// sup over joint nodes of <w, node> - (sum alpha_i G_i + sum beta_j g_j),
/// with 0 * (+inf) = +inf kept.
inline XReal conj_wsum(const DualPrecomp& pre, const VectorXd& alpha, const VectorXd& beta,
                       const VectorXd& w) {
    XReal best = XReal::neg_inf();
    for (std::size_t i = 0; i < pre.node.size(); ++i) {
        XReal s(0.0);
        for (int c = 0; c < alpha.size(); ++c) s = xadd(s, xscale(alpha[c], pre.Gv[c][i]));
        for (int c = 0; c < beta.size(); ++c) s = xadd(s, xscale(beta[c], pre.gv[c][i]));
        if (s.is_pos_inf()) continue;
        best = xmax(best, xsub(XReal(w.dot(pre.node[i])), s));
    }
    return best;
}

/// sup over joint nodes of <(u,v), node> - c(node) for a single constraint.
inline XReal conj_single(const DualPrecomp& pre, const std::vector<XReal>& cv, const VectorXd& uv) {
    XReal best = XReal::neg_inf();
    for (std::size_t i = 0; i < pre.node.size(); ++i) {
        if (cv[i].is_pos_inf()) continue;
        best = xmax(best, xsub(XReal(uv.dot(pre.node[i])), cv[i]));
    }
    return best;
}

inline XReal phi_star(const DualPrecomp& pre, const VectorXd& x_star) {
    return conj_value_at(pre.phi, x_star);
}

/// Support function of the whole space: 0 at the origin and +inf elsewhere.
inline XReal delta_star_space(const VectorXd& w, double tol = 1e-9) {
    return w.cwiseAbs().maxCoeff() <= tol ? XReal(0.0) : XReal::pos_inf();
}

// ---- scheme evaluation ------------------------------------------------------

/// Exact evaluation of the scheme's inner expression at a dual point. All
/// conjugates are box-relative over the instance grids.
inline XReal eval_dual(const BilevelInstance& inst, const DualPrecomp& pre, DualScheme scheme,
                       const DualParams& params, const DualPoint& pt) {
    if (pt.scheme != scheme) throw std::invalid_argument("eval_dual: point/scheme mismatch");
    const std::size_t nn = pre.node.size();
    switch (scheme) {
        case DualScheme::D_IN: {
            // -F*(alpha*) + inf over nodes of <alpha*, node> + <beta*, psi(node)>
            // with psi = (G, g, f - phi)
            if (pt.alpha_star.size() != inst.n + inst.m ||
                pt.beta_star.size() != inst.k() + inst.p() + 1)
                throw std::invalid_argument("eval_dual: D_in signature mismatch");
            XReal head = xsub(XReal(0.0), conj_F(pre, pt.alpha_star));
            XReal inner = XReal::pos_inf();
            for (std::size_t i = 0; i < nn; ++i) {
                XReal s(pt.alpha_star.dot(pre.node[i]));
                for (int c = 0; c < inst.k(); ++c) s = xadd(s, xscale(pt.beta_star[c], pre.Gv[c][i]));
                for (int c = 0; c < inst.p(); ++c)
                    s = xadd(s, xscale(pt.beta_star[inst.k() + c], pre.gv[c][i]));
                s = xadd(s, xscale(pt.beta_star[inst.k() + inst.p()], pre.slack[i]));
                inner = xmin(inner, s);
            }
            return xadd(head, inner);
        }
        case DualScheme::D_EQ: {
            // inf over nodes of F + <beta*, (G,g)> + gamma* (f - phi)
            if (pt.beta_star.size() != inst.k() + inst.p())
                throw std::invalid_argument("eval_dual: D_eq signature mismatch");
            XReal inner = XReal::pos_inf();
            for (std::size_t i = 0; i < nn; ++i) {
                XReal s = pre.Fv[i];
                for (int c = 0; c < inst.k(); ++c) s = xadd(s, xscale(pt.beta_star[c], pre.Gv[c][i]));
                for (int c = 0; c < inst.p(); ++c)
                    s = xadd(s, xscale(pt.beta_star[inst.k() + c], pre.gv[c][i]));
                s = xadd(s, xscale_signed(pt.gamma_star, pre.slack[i]));
                inner = xmin(inner, s);
            }
            return inner;
        }
        case DualScheme::D_LAMBDA: {
            if (pt.x_star.size() != inst.n || pt.z_star.size() != inst.n ||
                pt.q_star.size() != inst.m || pt.alpha.size() != inst.k() ||
                pt.beta.size() != inst.p())
                throw std::invalid_argument("eval_dual: D_lambda signature mismatch");
            VectorXd zq = joint_point(pt.z_star, pt.q_star);
            VectorXd w = joint_point(VectorXd(pt.x_star - pt.z_star), VectorXd(-pt.q_star));
            XReal v = phi_star(pre, pt.x_star);
            v = xsub(v, conj_FL(pre, params.lambda, zq));
            v = xsub(v, conj_wsum(pre, pt.alpha, pt.beta, w));
            return v;
        }
        case DualScheme::D_LAMBDA_MOD: {
            if (static_cast<int>(pt.uG.size()) != inst.k() ||
                static_cast<int>(pt.ug.size()) != inst.p())
                throw std::invalid_argument("eval_dual: D_lambda_mod signature mismatch");
            VectorXd zq = joint_point(pt.z_star, pt.q_star);
            XReal v = phi_star(pre, pt.x_star);
            v = xsub(v, conj_FL(pre, params.lambda, zq));
            VectorXd s_star = pt.x_star - pt.z_star;
            VectorXd t_star = -pt.q_star;
            for (int c = 0; c < inst.k(); ++c) {
                VectorXd uv = joint_point(pt.uG[c], pt.vG[c]);
                v = xsub(v, xscale(pt.alpha[c], conj_single(pre, pre.Gv[c], uv)));
                s_star -= pt.alpha[c] * pt.uG[c];
                t_star -= pt.alpha[c] * pt.vG[c];
            }
            for (int c = 0; c < inst.p(); ++c) {
                VectorXd uv = joint_point(pt.ug[c], pt.vg[c]);
                v = xsub(v, xscale(pt.beta[c], conj_single(pre, pre.gv[c], uv)));
                s_star -= pt.beta[c] * pt.ug[c];
                t_star -= pt.beta[c] * pt.vg[c];
            }
            v = xsub(v, delta_star_space(joint_point(s_star, t_star)));
            return v;
        }
        case DualScheme::D_TFL: {
            if (pt.y_star.size() != inst.m)
                throw std::invalid_argument("eval_dual: D_tfl signature mismatch");
            VectorXd zq = joint_point(pt.z_star, pt.q_star);
            VectorXd w = joint_point(VectorXd(pt.x_star - pt.z_star), VectorXd(pt.y_star - pt.q_star));
            XReal v = phi_star(pre, pt.x_star);
            v = xadd(v, delta_star_space(pt.y_star));
            v = xsub(v, conj_FL(pre, params.lambda, zq));
            v = xsub(v, conj_wsum(pre, pt.alpha, pt.beta, w));
            return v;
        }
        case DualScheme::D_EPS: {
            if (pt.alpha.size() != inst.k() || pt.beta.size() != inst.p())
                throw std::invalid_argument("eval_dual: D_eps signature mismatch");
            XReal inner = XReal::pos_inf();
            for (std::size_t i = 0; i < nn; ++i) {
                XReal s = pre.Fv[i];
                s = xadd(s, xscale_signed(pt.gamma, xsub(pre.slack[i], XReal(params.eps))));
                for (int c = 0; c < inst.k(); ++c) s = xadd(s, xscale(pt.alpha[c], pre.Gv[c][i]));
                for (int c = 0; c < inst.p(); ++c) s = xadd(s, xscale(pt.beta[c], pre.gv[c][i]));
                inner = xmin(inner, s);
            }
            return inner;
        }
        case DualScheme::D_GEO: {
            if (pt.gamma < 0) throw std::invalid_argument("eval_dual: D_geo needs gamma >= 0");
            XReal inner = XReal::pos_inf();
            for (std::size_t i = 0; i < nn; ++i) {
                XReal s = xadd(pre.Fv[i], xscale(pt.gamma, pre.slack[i]));
                inner = xmin(inner, s);
            }
            return inner;
        }
    }
    throw std::logic_error("eval_dual: bad scheme");
}

/// Inner primal value at a fixed conjugate point x*: the minimum over the
/// inequality-feasible nodes of lambda^-1 F + f + phi*(x*) - <x*, x>.
inline XReal inner_primal_value(const BilevelInstance& inst, const DualPrecomp& pre, double lambda,
                                const VectorXd& x_star) {
    XReal ps = phi_star(pre, x_star);
    XReal best = XReal::pos_inf();
    for (std::size_t i = 0; i < pre.node.size(); ++i) {
        if (!pre.ineq_ok[i]) continue;
        XReal v = xadd(xscale(1.0 / lambda, pre.Fv[i]), pre.fv[i]);
        v = xadd(v, ps);
        v = xsub(v, XReal(x_star.dot(pre.node[i].head(inst.n))));
        best = xmin(best, v);
    }
    return best;
}

/// The primal problem a scheme bounds.
inline PrimalSolution matching_primal(const BilevelInstance& inst, const DualPrecomp& pre,
                                      DualScheme scheme, const DualParams& params) {
    switch (scheme) {
        case DualScheme::D_IN:
        case DualScheme::D_EQ:
            return inst.geometric ? solve_geometric(inst, pre.phi, pre.tols)
                                  : solve_llvf(inst, pre.phi, pre.tols);
        case DualScheme::D_LAMBDA:
        case DualScheme::D_LAMBDA_MOD:
        case DualScheme::D_TFL:
            return solve_penalized(inst, pre.phi, params.lambda, pre.tols);
        case DualScheme::D_EPS:
            return solve_regularized(inst, pre.phi, params.eps, pre.tols);
        case DualScheme::D_GEO:
            return solve_geometric(inst, pre.phi, pre.tols);
    }
    throw std::logic_error("matching_primal: bad scheme");
}

enum class Polarity { TRUE_LOWER_BOUND, HEURISTIC_ESTIMATE };

struct GapReport {
    DualScheme scheme = DualScheme::D_GEO;
    DualParams params;
    XReal primal = XReal::pos_inf();
    XReal dual = XReal::neg_inf();
    XReal gap = XReal::pos_inf();
    Polarity polarity = Polarity::TRUE_LOWER_BOUND;
    DualPoint best;
    long budget_used = 0;
    unsigned long long seed = 0;
    std::vector<std::string> notes;
    std::vector<std::pair<VectorXd, XReal>> per_outer;  // x* -> certified inner value
};

// ---- search ----------------------------------------------------------------

namespace search_detail {

inline std::vector<double> multiplier_ladder() {
    std::vector<double> v = {0.0};
    for (int e = -3; e <= 3; ++e) v.push_back(std::pow(10.0, e));
    return v;
}

/// Deterministic 1-D refinement of a unimodal-ish function by bracketed
/// trisection around a seed value.
template <class Fn>
double refine_scalar(const Fn& fn, double lo, double hi, double seed_value, int iters,
                     long& budget, long budget_cap, double* best_out) {
    double a = lo, b = hi;
    double best_x = seed_value;
    double best_v = fn(seed_value);
    ++budget;
    for (int it = 0; it < iters && budget + 2 <= budget_cap; ++it) {
        double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
        double v1 = fn(m1), v2 = fn(m2);
        budget += 2;
        if (v1 > best_v) {
            best_v = v1;
            best_x = m1;
        }
        if (v2 > best_v) {
            best_v = v2;
            best_x = m2;
        }
        if (v1 >= v2) b = m2;
        else a = m1;
    }
    if (best_out) *best_out = best_v;
    return best_x;
}

}  // namespace search_detail

/// Multi-start coordinate ascent over the scheme's multipliers and conjugate
/// points. Deterministic for a fixed seed and budget. For the inf-outer
/// schemes the outer variable scans its dual grid and the report keeps the
/// per-outer-point inner values; the aggregated estimate is then a heuristic
/// (a finite outer scan over-estimates an infimum).
inline GapReport search_dual(const BilevelInstance& inst, const DualPrecomp& pre, DualScheme scheme,
                             const DualParams& params, long budget, unsigned long long seed) {
    if (budget < 1) throw std::invalid_argument("search_dual: budget must be >= 1");
    GapReport rep;
    rep.scheme = scheme;
    rep.params = params;
    rep.seed = seed;
    rep.primal = matching_primal(inst, pre, scheme, params).value;
    rep.notes.push_back("conjugates are box-relative on the instance grids");
    long used = 0;

    auto track = [&](const DualPoint& pt, const XReal& v, XReal& incumbent, DualPoint& arg) {
        if (v > incumbent) {
            incumbent = v;
            arg = pt;
        }
    };

    const std::vector<double> ladder = search_detail::multiplier_ladder();

    if (scheme == DualScheme::D_GEO) {
        XReal best = XReal::neg_inf();
        DualPoint arg = point_geo(0.0);
        for (double g : ladder) {
            if (used >= budget) break;
            DualPoint pt = point_geo(g);
            XReal v = eval_dual(inst, pre, scheme, params, pt);
            ++used;
            track(pt, v, best, arg);
        }
        // multiplicative sweep upward around the incumbent
        double g0 = std::max(arg.gamma, 1e-3);
        for (double f : {0.1, 0.25, 0.5, 0.75, 1.5, 2.0, 4.0, 8.0, 16.0, 64.0}) {
            if (used >= budget) break;
            DualPoint pt = point_geo(g0 * f);
            XReal v = eval_dual(inst, pre, scheme, params, pt);
            ++used;
            track(pt, v, best, arg);
        }
        long cap = budget;
        auto fn = [&](double g) {
            return eval_dual(inst, pre, scheme, params, point_geo(std::max(0.0, g))).raw();
        };
        if (used + 2 < cap) {
            double g = search_detail::refine_scalar(fn, std::max(0.0, arg.gamma * 0.25),
                                                    std::max(1.0, arg.gamma * 4.0), arg.gamma, 40,
                                                    used, cap, nullptr);
            DualPoint pt = point_geo(std::max(0.0, g));
            XReal v = eval_dual(inst, pre, scheme, params, pt);
            ++used;
            track(pt, v, best, arg);
        }
        rep.dual = best;
        rep.best = arg;
        rep.polarity = Polarity::TRUE_LOWER_BOUND;
    } else if (scheme == DualScheme::D_EPS || scheme == DualScheme::D_EQ) {
        // coordinate ascent over the multiplier vector
        const int k = inst.k(), p = inst.p();
        const bool eps_scheme = scheme == DualScheme::D_EPS;
        // variables: gamma (or gamma*) then alpha then beta (D_eps) or beta* (D_eq)
        std::vector<double> vars(1 + k + p, 0.0);
        auto make_point = [&](const std::vector<double>& v) {
            if (eps_scheme) {
                VectorXd a(k), b(p);
                for (int i = 0; i < k; ++i) a[i] = v[1 + i];
                for (int i = 0; i < p; ++i) b[i] = v[1 + k + i];
                return point_eps(a, b, v[0]);
            }
            VectorXd bs(k + p);
            for (int i = 0; i < k + p; ++i) bs[i] = v[1 + i];
            return point_eq(bs, v[0]);
        };
        XReal best = eval_dual(inst, pre, scheme, params, make_point(vars));
        ++used;
        DualPoint arg = make_point(vars);
        std::vector<double> gamma_vals = ladder;
        if (!eps_scheme)
            for (int e = -3; e <= 3; ++e) gamma_vals.push_back(-std::pow(10.0, e));
        // the regularized dual keeps gamma >= 0: negative values are not
        // certified lower bounds (see the weak-duality notes)
        for (int round = 0; round < 3 && used < budget; ++round) {
            for (std::size_t vi = 0; vi < vars.size() && used < budget; ++vi) {
                const std::vector<double>& grid = vi == 0 ? gamma_vals : ladder;
                double best_val = -std::numeric_limits<double>::infinity();
                double best_here = vars[vi];
                for (double cand : grid) {
                    if (used >= budget) break;
                    std::vector<double> trial = vars;
                    trial[vi] = cand;
                    XReal v = eval_dual(inst, pre, scheme, params, make_point(trial));
                    ++used;
                    track(make_point(trial), v, best, arg);
                    if (v.is_finite() && v.raw() > best_val) {
                        best_val = v.raw();
                        best_here = cand;
                    }
                }
                vars[vi] = best_here;
            }
        }
        // scalar refinement per coordinate around the incumbent
        for (std::size_t vi = 0; vi < vars.size() && used + 3 < budget; ++vi) {
            auto fn = [&](double c) {
                std::vector<double> trial = vars;
                trial[vi] = (vi == 0 && !eps_scheme) ? c : std::max(0.0, c);
                return eval_dual(inst, pre, scheme, params, make_point(trial)).raw();
            };
            double lo = (vi == 0 && !eps_scheme) ? -std::abs(vars[vi]) * 4 - 1 : 0.0;
            double hi = std::abs(vars[vi]) * 4 + 1;
            double got = search_detail::refine_scalar(fn, lo, hi, vars[vi], 30, used, budget, nullptr);
            std::vector<double> trial = vars;
            trial[vi] = (vi == 0 && !eps_scheme) ? got : std::max(0.0, got);
            XReal v = eval_dual(inst, pre, scheme, params, make_point(trial));
            ++used;
            track(make_point(trial), v, best, arg);
            if (v.is_finite() && v >= best) vars = trial;
        }
        rep.dual = best;
        rep.best = arg;
        rep.polarity = Polarity::TRUE_LOWER_BOUND;
        if (eps_scheme)
            rep.notes.push_back("gamma searched over [0, inf): negative values are not lower bounds");
    } else if (scheme == DualScheme::D_IN) {
        const int dim = inst.n + inst.m;
        const int r = inst.k() + inst.p() + 1;
        std::mt19937_64 rng(seed);
        DualGridSpec fdual = auto_dual_grid(sample(inst.F, pre.joint));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        XReal best = XReal::neg_inf();
        DualPoint arg = point_in(VectorXd::Zero(dim), VectorXd::Zero(r));
        std::vector<VectorXd> starts;
        starts.push_back(VectorXd::Zero(dim));
        for (int s = 0; s < 8; ++s) {
            VectorXd a(dim);
            for (int d = 0; d < dim; ++d) {
                double lo = fdual.grid.box.lo[d], hi = fdual.grid.box.hi[d];
                a[d] = lo + (u(rng) * 0.5 + 0.5) * (hi - lo);
            }
            starts.push_back(a);
        }
        for (const VectorXd& a0 : starts) {
            if (used >= budget) break;
            VectorXd a = a0;
            VectorXd bs = VectorXd::Zero(r);
            for (int round = 0; round < 2; ++round) {
                for (int c = 0; c < r && used < budget; ++c) {
                    double best_val = -std::numeric_limits<double>::infinity();
                    double best_here = bs[c];
                    for (double cand : ladder) {
                        if (used >= budget) break;
                        VectorXd trial = bs;
                        trial[c] = cand;
                        XReal v = eval_dual(inst, pre, scheme, params, point_in(a, trial));
                        ++used;
                        track(point_in(a, trial), v, best, arg);
                        if (v.is_finite() && v.raw() > best_val) {
                            best_val = v.raw();
                            best_here = cand;
                        }
                    }
                    bs[c] = best_here;
                }
                for (int d = 0; d < dim && used + 3 < budget; ++d) {
                    auto fn = [&](double c) {
                        VectorXd trial = a;
                        trial[d] = c;
                        return eval_dual(inst, pre, scheme, params, point_in(trial, bs)).raw();
                    };
                    double span = fdual.grid.box.hi[d] - fdual.grid.box.lo[d];
                    a[d] = search_detail::refine_scalar(fn, a[d] - span, a[d] + span, a[d], 24, used,
                                                        budget, nullptr);
                }
            }
            XReal v = eval_dual(inst, pre, scheme, params, point_in(a, bs));
            ++used;
            track(point_in(a, bs), v, best, arg);
        }
        rep.dual = best;
        rep.best = arg;
        rep.polarity = Polarity::TRUE_LOWER_BOUND;
    } else {
        // inf-outer schemes: scan x* on the value-function dual grid
        DualGridSpec phidual = auto_dual_grid(pre.phi);
        std::vector<VectorXd> outer;
        for (std::size_t i = 0; i < phidual.grid.node_count(); ++i)
            outer.push_back(phidual.grid.node(i));
        XReal dual_est = XReal::pos_inf();
        DualPoint arg;
        bool have_arg = false;
        long per_outer_budget = std::max<long>(8, budget / std::max<std::size_t>(1, outer.size()));
        for (const VectorXd& xs : outer) {
            if (used >= budget) break;
            long cap = std::min(budget, used + per_outer_budget);
            XReal inner_best = XReal::neg_inf();
            DualPoint inner_arg;
            auto consider = [&](const DualPoint& pt) {
                XReal v = eval_dual(inst, pre, scheme, params, pt);
                ++used;
                if (v > inner_best) {
                    inner_best = v;
                    inner_arg = pt;
                }
            };
            if (scheme == DualScheme::D_LAMBDA || scheme == DualScheme::D_TFL) {
                VectorXd z = xs, q = VectorXd::Zero(inst.m);
                VectorXd al = VectorXd::Zero(inst.k()), be = VectorXd::Zero(inst.p());
                auto mk = [&](const VectorXd& zz, const VectorXd& qq, const VectorXd& a,
                              const VectorXd& b) {
                    if (scheme == DualScheme::D_LAMBDA) return point_lambda(xs, zz, qq, a, b);
                    DualPoint pt;
                    pt.scheme = DualScheme::D_TFL;
                    pt.x_star = xs;
                    pt.y_star = VectorXd::Zero(inst.m);  // support term pins y* = 0
                    pt.z_star = zz;
                    pt.q_star = qq;
                    pt.alpha = a;
                    pt.beta = b;
                    return pt;
                };
                consider(mk(z, q, al, be));
                for (int round = 0; round < 2 && used < cap; ++round) {
                    for (int c = 0; c < inst.k() + inst.p() && used < cap; ++c) {
                        double best_val = -std::numeric_limits<double>::infinity();
                        double best_here = c < inst.k() ? al[c] : be[c - inst.k()];
                        for (double cand : ladder) {
                            if (used >= cap) break;
                            VectorXd a2 = al, b2 = be;
                            (c < inst.k() ? a2[c] : b2[c - inst.k()]) = cand;
                            DualPoint pt = mk(z, q, a2, b2);
                            XReal v = eval_dual(inst, pre, scheme, params, pt);
                            ++used;
                            if (v > inner_best) {
                                inner_best = v;
                                inner_arg = pt;
                            }
                            if (v.is_finite() && v.raw() > best_val) {
                                best_val = v.raw();
                                best_here = cand;
                            }
                        }
                        (c < inst.k() ? al[c] : be[c - inst.k()]) = best_here;
                    }
                    for (int d = 0; d < inst.n + inst.m && used + 3 < cap; ++d) {
                        auto fn = [&](double cval) {
                            VectorXd z2 = z, q2 = q;
                            (d < inst.n ? z2[d] : q2[d - inst.n]) = cval;
                            return eval_dual(inst, pre, scheme, params, mk(z2, q2, al, be)).raw();
                        };
                        double cur = d < inst.n ? z[d] : q[d - inst.n];
                        double got = search_detail::refine_scalar(fn, cur - 8.0, cur + 8.0, cur, 20,
                                                                  used, cap, nullptr);
                        (d < inst.n ? z[d] : q[d - inst.n]) = got;
                    }
                }
                consider(mk(z, q, al, be));
            } else {  // D_LAMBDA_MOD
                // per-constraint conjugate points start at finite-difference
                // gradients; z*, q* follow from the aggregation
                std::vector<VectorXd> uG(inst.k()), vG(inst.k()), ug(inst.p()), vg(inst.p());
                auto grad_point = [&](const std::vector<XReal>& cv, VectorXd& u_out, VectorXd& v_out) {
                    // central differences at the joint box midpoint
                    VectorXd mid(inst.n + inst.m);
                    for (int d = 0; d < inst.n + inst.m; ++d)
                        mid[d] = 0.5 * (pre.joint.box.lo[d] + pre.joint.box.hi[d]);
                    u_out = VectorXd::Zero(inst.n);
                    v_out = VectorXd::Zero(inst.m);
                    std::size_t center = pre.joint.nearest_node(mid);
                    auto cidx = pre.joint.multi_index(center);
                    for (int d = 0; d < inst.n + inst.m; ++d) {
                        auto lo = cidx, hi = cidx;
                        if (cidx[d] > 0) lo[d] -= 1;
                        if (cidx[d] + 1 < pre.joint.counts[d]) hi[d] += 1;
                        const XReal& vl = cv[pre.joint.flat_index(lo)];
                        const XReal& vh = cv[pre.joint.flat_index(hi)];
                        double denom = pre.joint.step(d) * (hi[d] - lo[d]);
                        double g = (vl.is_finite() && vh.is_finite() && denom > 0)
                                       ? (vh.raw() - vl.raw()) / denom
                                       : 0.0;
                        if (d < inst.n) u_out[d] = g;
                        else v_out[d - inst.n] = g;
                    }
                };
                for (int c = 0; c < inst.k(); ++c) grad_point(pre.Gv[c], uG[c], vG[c]);
                for (int c = 0; c < inst.p(); ++c) grad_point(pre.gv[c], ug[c], vg[c]);
                VectorXd al = VectorXd::Zero(inst.k()), be = VectorXd::Zero(inst.p());
                auto mk = [&](const VectorXd& a, const VectorXd& b) {
                    DualPoint pt;
                    pt.scheme = DualScheme::D_LAMBDA_MOD;
                    pt.x_star = xs;
                    pt.alpha = a;
                    pt.beta = b;
                    pt.uG = uG;
                    pt.vG = vG;
                    pt.ug = ug;
                    pt.vg = vg;
                    VectorXd s = xs, t = VectorXd::Zero(inst.m);
                    for (int c = 0; c < inst.k(); ++c) {
                        s -= a[c] * uG[c];
                        t -= a[c] * vG[c];
                    }
                    for (int c = 0; c < inst.p(); ++c) {
                        s -= b[c] * ug[c];
                        t -= b[c] * vg[c];
                    }
                    pt.z_star = s;   // forces the aggregation to vanish
                    pt.q_star = -t;
                    return pt;
                };
                consider(mk(al, be));
                for (int round = 0; round < 2 && used < cap; ++round) {
                    for (int c = 0; c < inst.k() + inst.p() && used < cap; ++c) {
                        double best_val = -std::numeric_limits<double>::infinity();
                        double best_here = c < inst.k() ? al[c] : be[c - inst.k()];
                        for (double cand : ladder) {
                            if (used >= cap) break;
                            VectorXd a2 = al, b2 = be;
                            (c < inst.k() ? a2[c] : b2[c - inst.k()]) = cand;
                            DualPoint pt = mk(a2, b2);
                            XReal v = eval_dual(inst, pre, scheme, params, pt);
                            ++used;
                            if (v > inner_best) {
                                inner_best = v;
                                inner_arg = pt;
                            }
                            if (v.is_finite() && v.raw() > best_val) {
                                best_val = v.raw();
                                best_here = cand;
                            }
                        }
                        (c < inst.k() ? al[c] : be[c - inst.k()]) = best_here;
                    }
                }
                consider(mk(al, be));
            }
            rep.per_outer.emplace_back(xs, inner_best);
            if (inner_best < dual_est) {
                dual_est = inner_best;
                arg = inner_arg;
                have_arg = true;
            }
        }
        rep.dual = dual_est;
        if (have_arg) rep.best = arg;
        rep.polarity = Polarity::HEURISTIC_ESTIMATE;
        rep.notes.push_back("finite outer scan over-estimates the infimum: heuristic estimate");
        if (scheme == DualScheme::D_TFL)
            rep.notes.push_back("y* pinned to 0 by the support term of the whole space");
        rep.notes.push_back("dom phi* widened to the dual grid (box-relative conjugate is finite)");
    }
    rep.budget_used = used;
    rep.gap = xsub(rep.primal, rep.dual);
    return rep;
}

/// Worst weak-duality margins over a sample of dual points. For the pure-sup
/// schemes the margin is primal minus the evaluation; for the inf-outer
/// family each sample is compared against its own inner primal (certified)
/// and against the aggregated primal (diagnostic; can go negative exactly
/// when the aggregated weak duality fails).
struct MarginReport {
    double worst_per_outer = std::numeric_limits<double>::infinity();
    double worst_aggregate = std::numeric_limits<double>::infinity();
    std::size_t samples = 0;
};

inline MarginReport weak_duality_margin(const BilevelInstance& inst, const DualPrecomp& pre,
                                        DualScheme scheme, const DualParams& params,
                                        const std::vector<DualPoint>& sample) {
    MarginReport mr;
    XReal primal = matching_primal(inst, pre, scheme, params).value;
    std::map<std::vector<double>, XReal> inner_cache;
    for (const DualPoint& pt : sample) {
        XReal v = eval_dual(inst, pre, scheme, params, pt);
        ++mr.samples;
        if (v.is_neg_inf()) continue;  // vacuous bound
        double vr = v.is_pos_inf() ? std::numeric_limits<double>::infinity() : v.raw();
        if (pure_sup_scheme(scheme)) {
            double margin = primal.is_pos_inf() ? std::numeric_limits<double>::infinity()
                                                : primal.raw() - vr;
            mr.worst_per_outer = std::min(mr.worst_per_outer, margin);
            mr.worst_aggregate = std::min(mr.worst_aggregate, margin);
        } else {
            std::vector<double> key(pt.x_star.data(), pt.x_star.data() + pt.x_star.size());
            auto it = inner_cache.find(key);
            if (it == inner_cache.end())
                it = inner_cache.emplace(key, inner_primal_value(inst, pre, params.lambda, pt.x_star))
                         .first;
            const XReal& ip = it->second;
            double per = ip.is_pos_inf() ? std::numeric_limits<double>::infinity() : ip.raw() - vr;
            double agg = primal.is_pos_inf() ? std::numeric_limits<double>::infinity()
                                             : primal.raw() - vr;
            mr.worst_per_outer = std::min(mr.worst_per_outer, per);
            mr.worst_aggregate = std::min(mr.worst_aggregate, agg);
        }
    }
    return mr;
}

}  // namespace bdl
