#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "xreal.hpp"

namespace bdl {

/// Arithmetic expression over variables x1..xn, y1..ym:
///   expr   := term (("+"|"-") term)*
///   term   := factor ("*" factor)*
///   factor := atom ["^" uint]
///   atom   := number | var | "(" expr ")" | "abs(" expr ")" | "max(" expr "," expr ")"
struct Expr {
    enum class Kind { Num, Var, Add, Sub, Mul, Pow, Abs, Max };

    Kind kind = Kind::Num;
    double num = 0.0;
    char var_kind = 'x';  // 'x' or 'y'
    int var_index = 1;    // 1-based
    unsigned pow_exp = 0;
    std::vector<std::shared_ptr<const Expr>> kids;

    static std::shared_ptr<const Expr> number(double v) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Num;
        e->num = v;
        return e;
    }
    static std::shared_ptr<const Expr> var(char kind, int index) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Var;
        e->var_kind = kind;
        e->var_index = index;
        return e;
    }
    static std::shared_ptr<const Expr> binary(Kind k, std::shared_ptr<const Expr> a,
                                              std::shared_ptr<const Expr> b) {
        auto e = std::make_shared<Expr>();
        e->kind = k;
        e->kids = {std::move(a), std::move(b)};
        return e;
    }
    static std::shared_ptr<const Expr> pow(std::shared_ptr<const Expr> a, unsigned exp) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Pow;
        e->pow_exp = exp;
        e->kids = {std::move(a)};
        return e;
    }
    static std::shared_ptr<const Expr> abs(std::shared_ptr<const Expr> a) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Abs;
        e->kids = {std::move(a)};
        return e;
    }
};

using ExprPtr = std::shared_ptr<const Expr>;

/// Evaluates at a joint point (x1..xn, y1..ym).
inline double eval_expr(const Expr& e, const Eigen::VectorXd& xy, int n, int m) {
    switch (e.kind) {
        case Expr::Kind::Num:
            return e.num;
        case Expr::Kind::Var: {
            int axis = e.var_kind == 'x' ? e.var_index - 1 : n + e.var_index - 1;
            if (axis < 0 || axis >= n + m) throw std::out_of_range("eval_expr: variable index");
            return xy[axis];
        }
        case Expr::Kind::Add:
            return eval_expr(*e.kids[0], xy, n, m) + eval_expr(*e.kids[1], xy, n, m);
        case Expr::Kind::Sub:
            return eval_expr(*e.kids[0], xy, n, m) - eval_expr(*e.kids[1], xy, n, m);
        case Expr::Kind::Mul:
            return eval_expr(*e.kids[0], xy, n, m) * eval_expr(*e.kids[1], xy, n, m);
        case Expr::Kind::Pow: {
            double base = eval_expr(*e.kids[0], xy, n, m);
            double r = 1.0;
            for (unsigned i = 0; i < e.pow_exp; ++i) r *= base;
            return r;
        }
        case Expr::Kind::Abs:
            return std::abs(eval_expr(*e.kids[0], xy, n, m));
        case Expr::Kind::Max:
            return std::max(eval_expr(*e.kids[0], xy, n, m), eval_expr(*e.kids[1], xy, n, m));
    }
    throw std::logic_error("eval_expr: bad node");
}

/// Max variable index used, per kind. Returns {max_x, max_y}.
inline void expr_var_span(const Expr& e, int& max_x, int& max_y) {
    if (e.kind == Expr::Kind::Var) {
        (e.var_kind == 'x' ? max_x : max_y) = std::max(e.var_kind == 'x' ? max_x : max_y, e.var_index);
    }
    for (const auto& k : e.kids) expr_var_span(*k, max_x, max_y);
}

inline bool expr_uses_kind(const Expr& e, char kind) {
    if (e.kind == Expr::Kind::Var && e.var_kind == kind) return true;
    for (const auto& k : e.kids) {
        if (expr_uses_kind(*k, kind)) return true;
    }
    return false;
}

namespace detail {
inline int precedence(Expr::Kind k) {
    switch (k) {
        case Expr::Kind::Add:
        case Expr::Kind::Sub: return 1;
        case Expr::Kind::Mul: return 2;
        case Expr::Kind::Pow: return 3;
        default: return 4;  // atoms
    }
}
}  // namespace detail

/// Canonical rendering; reparses to a structurally equal tree.
inline std::string expr_to_string(const Expr& e) {
    auto wrap = [](const Expr& child, int ctx_prec, bool strict) {
        std::string s = expr_to_string(child);
        int p = detail::precedence(child.kind);
        if (p < ctx_prec || (strict && p == ctx_prec)) return "(" + s + ")";
        return s;
    };
    switch (e.kind) {
        case Expr::Kind::Num:
            return fmt_double(e.num);
        case Expr::Kind::Var:
            return std::string(1, e.var_kind) + std::to_string(e.var_index);
        case Expr::Kind::Add:
            return wrap(*e.kids[0], 1, false) + " + " + wrap(*e.kids[1], 1, true);
        case Expr::Kind::Sub:
            return wrap(*e.kids[0], 1, false) + " - " + wrap(*e.kids[1], 1, true);
        case Expr::Kind::Mul:
            return wrap(*e.kids[0], 2, false) + " * " + wrap(*e.kids[1], 2, true);
        case Expr::Kind::Pow:
            return wrap(*e.kids[0], 4, false) + "^" + std::to_string(e.pow_exp);
        case Expr::Kind::Abs:
            return "abs(" + expr_to_string(*e.kids[0]) + ")";
        case Expr::Kind::Max:
            return "max(" + expr_to_string(*e.kids[0]) + ", " + expr_to_string(*e.kids[1]) + ")";
    }
    throw std::logic_error("expr_to_string: bad node");
}

inline bool expr_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case Expr::Kind::Num:
            if (a.num != b.num) return false;
            break;
        case Expr::Kind::Var:
            if (a.var_kind != b.var_kind || a.var_index != b.var_index) return false;
            break;
        case Expr::Kind::Pow:
            if (a.pow_exp != b.pow_exp) return false;
            break;
        default:
            break;
    }
    if (a.kids.size() != b.kids.size()) return false;
    for (std::size_t i = 0; i < a.kids.size(); ++i)
        if (!expr_equal(*a.kids[i], *b.kids[i])) return false;
    return true;
}

}  // namespace bdl
