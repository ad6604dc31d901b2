#pragma once

// Independent test-side oracles. These deliberately avoid the library's
// solver paths: plain loops and a small active-set QP solver.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "bilevel/instance.hpp"

namespace oracles {

using bdl::BilevelInstance;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// min 1/2 z'Qz + a'z + c  s.t.  A z + b <= 0, by active-set enumeration.
/// Q must be positive definite. Returns the optimal value and minimizer.
inline std::optional<std::pair<double, VectorXd>> solve_qp(const MatrixXd& Q, const VectorXd& a,
                                                           double c, const MatrixXd& A,
                                                           const VectorXd& b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    double best = std::numeric_limits<double>::infinity();
    VectorXd best_z;
    for (int mask = 0; mask < (1 << m); ++mask) {
        std::vector<int> act;
        for (int i = 0; i < m; ++i)
            if ((mask >> i) & 1) act.push_back(i);
        const int na = static_cast<int>(act.size());
        if (na > n) continue;
        // KKT: [Q  Aa'; Aa 0] [z; mu] = [-a; -ba]
        MatrixXd K(n + na, n + na);
        K.setZero();
        K.topLeftCorner(n, n) = Q;
        VectorXd rhs(n + na);
        rhs.head(n) = -a;
        for (int i = 0; i < na; ++i) {
            K.block(n + i, 0, 1, n) = A.row(act[i]);
            K.block(0, n + i, n, 1) = A.row(act[i]).transpose();
            rhs[n + i] = -b[act[i]];
        }
        Eigen::FullPivLU<MatrixXd> lu(K);
        if (!lu.isInvertible()) continue;
        VectorXd sol = lu.solve(rhs);
        VectorXd z = sol.head(n);
        VectorXd mu = sol.tail(na);
        bool ok = true;
        for (int i = 0; i < na && ok; ++i) ok = mu[i] >= -1e-9;
        for (int i = 0; i < m && ok; ++i) ok = A.row(i).dot(z) + b[i] <= 1e-9;
        if (!ok) continue;
        double val = 0.5 * z.dot(Q * z) + a.dot(z) + c;
        if (val < best) {
            best = val;
            best_z = z;
        }
    }
    if (!best_z.size()) return std::nullopt;
    return std::make_pair(best, best_z);
}

/// Continuous optimum of the penalized problem for the quadratic corpus
/// (phi identically zero there): min lambda^-1 F + f s.t. G <= 0, g <= 0.
inline std::optional<double> penalized_kkt_value(const BilevelInstance& inst, double lambda) {
    if (!inst.F.is_analytic() || !inst.F.analytic->is_pure_quadratic()) return std::nullopt;
    if (!inst.lower.f.is_analytic() || !inst.lower.f.analytic->is_pure_quadratic())
        return std::nullopt;
    bdl::Analytic obj = inst.F.analytic->scaled(1.0 / lambda).plus(*inst.lower.f.analytic);
    const int n = obj.dim;
    std::vector<VectorXd> rows;
    std::vector<double> offs;
    for (const auto& Gi : inst.G) {
        if (!Gi.is_analytic() || !Gi.analytic->is_affine()) return std::nullopt;
        rows.push_back(Gi.analytic->a);
        offs.push_back(Gi.analytic->b);
    }
    for (const auto& gj : inst.lower.g) {
        if (!gj.is_analytic() || !gj.analytic->is_affine()) return std::nullopt;
        rows.push_back(gj.analytic->a);
        offs.push_back(gj.analytic->b);
    }
    MatrixXd A(rows.size(), n);
    VectorXd b(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        A.row(i) = rows[i].transpose();
        b[i] = offs[i];
    }
    auto sol = solve_qp(obj.Q, obj.a, obj.b, A, b);
    if (!sol) return std::nullopt;
    return sol->first;
}

/// Exhaustive reference value of the value reformulation, written as plain
/// loops over the node grids.
inline double brute_llvf_value(const BilevelInstance& inst, double tol = 1e-9) {
    const auto& gx = inst.xgrid;
    const auto& gy = inst.ygrid;
    std::vector<double> phi(gx.node_count(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < gx.node_count(); ++i) {
        for (std::size_t j = 0; j < gy.node_count(); ++j) {
            VectorXd xy = bdl::joint_point(gx.node(i), gy.node(j));
            bool ok = true;
            for (const auto& g : inst.lower.g) {
                bdl::XReal v = g.evaluate(xy);
                ok = ok && !v.is_pos_inf() && (!v.is_finite() || v.raw() <= tol);
            }
            if (!ok) continue;
            bdl::XReal fv = inst.lower.f.evaluate(xy);
            if (fv.is_finite()) phi[i] = std::min(phi[i], fv.raw());
        }
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < gx.node_count(); ++i) {
        for (std::size_t j = 0; j < gy.node_count(); ++j) {
            VectorXd xy = bdl::joint_point(gx.node(i), gy.node(j));
            bool ok = true;
            for (const auto& g : inst.lower.g) {
                bdl::XReal v = g.evaluate(xy);
                ok = ok && !v.is_pos_inf() && (!v.is_finite() || v.raw() <= tol);
            }
            for (const auto& G : inst.G) {
                bdl::XReal v = G.evaluate(xy);
                ok = ok && !v.is_pos_inf() && (!v.is_finite() || v.raw() <= tol);
            }
            if (!ok) continue;
            bdl::XReal fv = inst.lower.f.evaluate(xy);
            if (!fv.is_finite() || fv.raw() - phi[i] > tol) continue;
            bdl::XReal Fv = inst.F.evaluate(xy);
            if (Fv.is_finite()) best = std::min(best, Fv.raw());
        }
    }
    return best;
}

}  // namespace oracles
