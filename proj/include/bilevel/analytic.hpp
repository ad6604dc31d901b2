#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "expr.hpp"
#include "grid.hpp"
#include "xreal.hpp"

namespace bdl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct AffineFn {
    VectorXd a;
    double b = 0.0;
    double eval(const VectorXd& z) const { return a.dot(z) + b; }
};

/// Closed analytic form: 1/2 z'Qz + a'z + b, plus nonnegative-weighted
/// abs-of-affine and max-of-affine atoms, plus an optional box indicator.
struct Analytic {
    struct AbsTerm {
        double w = 1.0;
        AffineFn aff;
    };
    struct MaxTerm {
        double w = 1.0;
        std::vector<AffineFn> pieces;
    };

    int dim = 0;
    MatrixXd Q;  // symmetric
    VectorXd a;
    double b = 0.0;
    std::vector<AbsTerm> abs_terms;
    std::vector<MaxTerm> max_terms;
    std::optional<Box> indicator;
    bool empty_indicator = false;  // indicator of the empty set: identically +inf

    static Analytic zero(int dim) {
        Analytic f;
        f.dim = dim;
        f.Q = MatrixXd::Zero(dim, dim);
        f.a = VectorXd::Zero(dim);
        return f;
    }
    static Analytic constant(int dim, double c) {
        Analytic f = zero(dim);
        f.b = c;
        return f;
    }
    static Analytic affine(const VectorXd& a, double b) {
        Analytic f = zero(static_cast<int>(a.size()));
        f.a = a;
        f.b = b;
        return f;
    }
    static Analytic quadratic(const MatrixXd& Q, const VectorXd& a, double b) {
        Analytic f = zero(static_cast<int>(a.size()));
        f.Q = 0.5 * (Q + Q.transpose());
        f.a = a;
        f.b = b;
        return f;
    }
    static Analytic box_indicator(const Box& B) {
        Analytic f = zero(B.dim());
        f.indicator = B;
        return f;
    }

    bool has_atoms() const { return !abs_terms.empty() || !max_terms.empty(); }
    bool is_poly() const { return !has_atoms() && !indicator && !empty_indicator; }
    bool is_affine() const { return is_poly() && Q.cwiseAbs().maxCoeff() == 0.0; }
    bool is_constant() const { return is_affine() && a.cwiseAbs().maxCoeff() == 0.0; }
    bool is_pure_quadratic() const { return is_poly(); }

    XReal eval(const VectorXd& z) const {
        if (empty_indicator) return XReal::pos_inf();
        if (indicator && !indicator->contains(z)) return XReal::pos_inf();
        double v = 0.5 * z.dot(Q * z) + a.dot(z) + b;
        for (const auto& t : abs_terms) v += t.w * std::abs(t.aff.eval(z));
        for (const auto& t : max_terms) {
            double mx = t.pieces.front().eval(z);
            for (std::size_t i = 1; i < t.pieces.size(); ++i)
                mx = std::max(mx, t.pieces[i].eval(z));
            v += t.w * mx;
        }
        return XReal(v);
    }

    /// True when the form is certifiably convex (PSD quadratic part; all
    /// atoms are convex with nonnegative weights by construction).
    bool convex(double tol = 1e-10) const {
        if (empty_indicator) return true;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q);
        return es.eigenvalues().minCoeff() >= -tol;
    }

    bool depends_on_axis(int d, double tol = 0.0) const {
        if (Q.row(d).cwiseAbs().maxCoeff() > tol || std::abs(a[d]) > tol) return true;
        for (const auto& t : abs_terms)
            if (t.w != 0.0 && std::abs(t.aff.a[d]) > tol) return true;
        for (const auto& t : max_terms) {
            if (t.w == 0.0) continue;
            // a max term is d-independent only if all pieces share the d-slope
            for (const auto& p : t.pieces)
                if (std::abs(p.a[d] - t.pieces.front().a[d]) > tol) return true;
            if (std::abs(t.pieces.front().a[d]) > tol) return true;
        }
        if (indicator && (indicator->lo[d] != indicator->hi[d])) {
            // a proper bound on axis d constrains it unless it is the whole line,
            // which boxes never are; treat any indicator as depending on all axes
            return true;
        }
        return indicator.has_value();
    }

    /// w * f for w >= 0. Weight zero keeps indicators (0 * inf = inf) and
    /// drops the finite part.
    Analytic scaled(double w) const {
        if (w < 0) throw std::invalid_argument("Analytic: negative weight");
        Analytic r = zero(dim);
        r.indicator = indicator;
        r.empty_indicator = empty_indicator;
        if (w == 0) return r;
        r.Q = w * Q;
        r.a = w * a;
        r.b = w * b;
        r.abs_terms = abs_terms;
        for (auto& t : r.abs_terms) t.w *= w;
        r.max_terms = max_terms;
        for (auto& t : r.max_terms) t.w *= w;
        return r;
    }

    Analytic plus(const Analytic& o) const {
        if (o.dim != dim) throw std::invalid_argument("Analytic: dimension mismatch");
        Analytic r = *this;
        r.Q += o.Q;
        r.a += o.a;
        r.b += o.b;
        r.abs_terms.insert(r.abs_terms.end(), o.abs_terms.begin(), o.abs_terms.end());
        r.max_terms.insert(r.max_terms.end(), o.max_terms.begin(), o.max_terms.end());
        if (o.empty_indicator) r.empty_indicator = true;
        if (o.indicator) {
            if (!r.indicator) {
                r.indicator = o.indicator;
            } else {
                Box isect;
                if (!r.indicator->intersect(*o.indicator, isect))
                    r.empty_indicator = true;
                else
                    r.indicator = isect;
            }
        }
        return r;
    }

    /// Negation; defined for pure polynomials only.
    Analytic negated_poly() const {
        if (!is_poly()) throw std::invalid_argument("Analytic: cannot negate atoms");
        Analytic r = *this;
        r.Q = -Q;
        r.a = -a;
        r.b = -b;
        return r;
    }
};

namespace detail {

inline int poly_degree(const Analytic& f) {
    if (f.Q.cwiseAbs().maxCoeff() != 0.0) return 2;
    if (f.a.cwiseAbs().maxCoeff() != 0.0) return 1;
    return 0;
}

inline std::optional<Analytic> poly_mul(const Analytic& f, const Analytic& g) {
    int df = poly_degree(f), dg = poly_degree(g);
    if (df + dg > 2) return std::nullopt;
    Analytic r = Analytic::zero(f.dim);
    // (1/2 x'Qf x + af'x + bf)(...) with total degree <= 2
    r.b = f.b * g.b;
    r.a = f.b * g.a + g.b * f.a;
    MatrixXd cross = f.a * g.a.transpose();
    r.Q = f.b * g.Q + g.b * f.Q + cross + cross.transpose();
    return r;
}

}  // namespace detail

/// Flattens an expression into the supported analytic family. Returns nullopt
/// when the expression leaves the family (degree > 2, products of nonlinear
/// factors, subtracted or nonlinearly wrapped abs/max atoms).
inline std::optional<Analytic> flatten_expr(const Expr& e, int n, int m) {
    const int dim = n + m;
    using K = Expr::Kind;
    switch (e.kind) {
        case K::Num:
            return Analytic::constant(dim, e.num);
        case K::Var: {
            int axis = e.var_kind == 'x' ? e.var_index - 1 : n + e.var_index - 1;
            if (axis < 0 || axis >= dim) return std::nullopt;
            VectorXd a = VectorXd::Zero(dim);
            a[axis] = 1.0;
            return Analytic::affine(a, 0.0);
        }
        case K::Add: {
            auto l = flatten_expr(*e.kids[0], n, m);
            auto r = flatten_expr(*e.kids[1], n, m);
            if (!l || !r) return std::nullopt;
            return l->plus(*r);
        }
        case K::Sub: {
            auto l = flatten_expr(*e.kids[0], n, m);
            auto r = flatten_expr(*e.kids[1], n, m);
            if (!l || !r || !r->is_poly()) return std::nullopt;
            return l->plus(r->negated_poly());
        }
        case K::Mul: {
            auto l = flatten_expr(*e.kids[0], n, m);
            auto r = flatten_expr(*e.kids[1], n, m);
            if (!l || !r) return std::nullopt;
            if (l->is_constant() || r->is_constant()) {
                const Analytic& c = l->is_constant() ? *l : *r;
                const Analytic& f = l->is_constant() ? *r : *l;
                double w = c.b;
                if (f.is_poly()) {
                    Analytic s = f;
                    s.Q *= w;
                    s.a *= w;
                    s.b *= w;
                    return s;
                }
                if (w < 0) return std::nullopt;
                return f.scaled(w);
            }
            if (!l->is_poly() || !r->is_poly()) return std::nullopt;
            return detail::poly_mul(*l, *r);
        }
        case K::Pow: {
            if (e.pow_exp == 0) return Analytic::constant(dim, 1.0);
            auto base = flatten_expr(*e.kids[0], n, m);
            if (!base) return std::nullopt;
            if (e.pow_exp == 1) return base;
            if (base->is_constant()) {
                double r = 1.0;
                for (unsigned i = 0; i < e.pow_exp; ++i) r *= base->b;
                return Analytic::constant(dim, r);
            }
            if (e.pow_exp == 2 && base->is_poly()) return detail::poly_mul(*base, *base);
            return std::nullopt;
        }
        case K::Abs: {
            auto arg = flatten_expr(*e.kids[0], n, m);
            if (!arg) return std::nullopt;
            if (arg->is_constant()) return Analytic::constant(dim, std::abs(arg->b));
            if (!arg->is_affine()) return std::nullopt;
            Analytic r = Analytic::zero(dim);
            r.abs_terms.push_back({1.0, {arg->a, arg->b}});
            return r;
        }
        case K::Max: {
            auto l = flatten_expr(*e.kids[0], n, m);
            auto r = flatten_expr(*e.kids[1], n, m);
            if (!l || !r || !l->is_affine() || !r->is_affine()) return std::nullopt;
            Analytic out = Analytic::zero(dim);
            out.max_terms.push_back({1.0, {{l->a, l->b}, {r->a, r->b}}});
            return out;
        }
    }
    return std::nullopt;
}

}  // namespace bdl
