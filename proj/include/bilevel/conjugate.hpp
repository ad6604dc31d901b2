#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "func.hpp"
#include "parallel.hpp"

namespace bdl {

/// Grid over slope space for tabulating box-relative conjugates.
struct DualGridSpec {
    GridSpec grid;
};

/// Derives a dual grid from the finite-difference slopes of f, padded by one
/// step per dimension so the sup is attained interiorly.
inline DualGridSpec auto_dual_grid(const GridFunction& f, std::vector<int> counts = {}) {
    const int d = f.grid.dim();
    if (counts.empty()) counts = f.grid.counts;
    std::vector<double> lo(d), hi(d);
    for (int k = 0; k < d; ++k) {
        double smin = std::numeric_limits<double>::infinity();
        double smax = -std::numeric_limits<double>::infinity();
        double h = f.grid.step(k);
        if (h > 0) {
            for (std::size_t i = 0; i < f.grid.node_count(); ++i) {
                auto idx = f.grid.multi_index(i);
                if (idx[k] + 1 >= f.grid.counts[k]) continue;
                const XReal& v0 = f.values[i];
                idx[k] += 1;
                const XReal& v1 = f.values[f.grid.flat_index(idx)];
                if (!v0.is_finite() || !v1.is_finite()) continue;
                double s = (v1.raw() - v0.raw()) / h;
                smin = std::min(smin, s);
                smax = std::max(smax, s);
            }
        }
        if (!(smin <= smax)) {
            smin = -1;
            smax = 1;
        }
        if (smin == smax) {
            smin -= 0.5;
            smax += 0.5;
        }
        double step0 = counts[k] > 1 ? (smax - smin) / (counts[k] - 1) : 1.0;
        lo[k] = smin - step0;
        hi[k] = smax + step0;
    }
    return DualGridSpec{GridSpec(Box(lo, hi), counts)};
}

/// f*_D(p) = sup over the nodes of D of <p,x> - f(x).
inline XReal conj_value_at(const GridFunction& f, const VectorXd& p) {
    XReal best = XReal::neg_inf();
    for (std::size_t i = 0; i < f.grid.node_count(); ++i) {
        const XReal& v = f.values[i];
        if (v.is_pos_inf()) continue;  // contributes -inf
        XReal cand = xsub(XReal(p.dot(f.grid.node(i))), v);
        best = xmax(best, cand);
    }
    return best;
}

/// Box-relative conjugate tabulated on a dual grid. An improper input (all
/// +inf) yields the constant -inf table flagged improper.
inline GridFunction conj_brute(const GridFunction& f, const GridSpec& dual) {
    if (dual.dim() != f.grid.dim()) throw std::invalid_argument("conj_brute: dimension mismatch");
    const std::size_t np = f.grid.node_count();
    std::vector<VectorXd> primal_nodes(np);
    std::vector<double> primal_vals(np);
    std::vector<char> primal_fin(np);
    bool any_finite = false, any_neg_inf = false;
    for (std::size_t i = 0; i < np; ++i) {
        primal_nodes[i] = f.grid.node(i);
        primal_fin[i] = f.values[i].is_finite() ? 1 : 0;
        primal_vals[i] = primal_fin[i] ? f.values[i].raw() : 0.0;
        any_finite = any_finite || primal_fin[i];
        any_neg_inf = any_neg_inf || f.values[i].is_neg_inf();
    }
    std::vector<XReal> out(dual.node_count());
    if (!any_finite && !any_neg_inf) {
        std::fill(out.begin(), out.end(), XReal::neg_inf());
        return GridFunction(dual, std::move(out), /*improper=*/true);
    }
    parallel_chunks(dual.node_count(), [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            VectorXd p = dual.node(j);
            if (any_neg_inf) {
                out[j] = XReal::pos_inf();
                continue;
            }
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < np; ++i) {
                if (!primal_fin[i]) continue;
                best = std::max(best, p.dot(primal_nodes[i]) - primal_vals[i]);
            }
            out[j] = XReal(best);
        }
    });
    return GridFunction(dual, std::move(out), /*improper=*/any_neg_inf);
}

/// Linear-time 1-D conjugate for convex tables: the argmax index of
/// p*x_i - f_i is nondecreasing in p when the slopes are nondecreasing.
inline GridFunction conj_fast(const GridFunction& f, const GridSpec& dual) {
    if (f.grid.dim() != 1 || dual.dim() != 1)
        throw std::invalid_argument("conj_fast: one-dimensional input required");
    const int n = f.grid.counts[0];
    int first = -1, last = -1;
    for (int i = 0; i < n; ++i) {
        if (f.values[i].is_finite()) {
            if (first < 0) first = i;
            last = i;
        }
    }
    if (first < 0) throw std::invalid_argument("conj_fast: improper input");
    for (int i = first; i <= last; ++i)
        if (!f.values[i].is_finite())
            throw std::invalid_argument("conj_fast: not convex (disconnected domain)");
    const double h = f.grid.step(0);
    double prev_slope = -std::numeric_limits<double>::infinity();
    for (int i = first; i < last; ++i) {
        double s = (f.values[i + 1].raw() - f.values[i].raw()) / h;
        if (s < prev_slope - 1e-9) throw std::invalid_argument("conj_fast: not convex");
        prev_slope = std::max(prev_slope, s);
    }
    std::vector<XReal> out(dual.node_count());
    int j = first;
    auto line = [&](int i, double p) { return p * f.grid.coord(0, i) - f.values[i].raw(); };
    for (std::size_t q = 0; q < dual.node_count(); ++q) {
        double p = dual.coord(0, static_cast<int>(q));
        while (j < last && line(j + 1, p) >= line(j, p)) ++j;
        out[q] = XReal(line(j, p));
    }
    return GridFunction(dual, std::move(out));
}

/// Closed-form conjugates for the supported family. nullopt means the form
/// has no closed conjugate here and the caller should fall back to grids.
inline std::optional<Analytic> conj_analytic(const Analytic& f) {
    if (f.empty_indicator || f.has_atoms()) return std::nullopt;
    if (f.indicator) {
        // box indicator (plus constant): conjugate is the support function
        if (f.Q.cwiseAbs().maxCoeff() != 0.0 || f.a.cwiseAbs().maxCoeff() != 0.0)
            return std::nullopt;
        Analytic r = Analytic::constant(f.dim, -f.b);
        for (int d = 0; d < f.dim; ++d) {
            VectorXd alo = VectorXd::Zero(f.dim), ahi = VectorXd::Zero(f.dim);
            alo[d] = f.indicator->lo[d];
            ahi[d] = f.indicator->hi[d];
            r.max_terms.push_back({1.0, {{alo, 0.0}, {ahi, 0.0}}});
        }
        return r;
    }
    if (f.is_affine()) {
        // <a,.> + b  ->  indicator of {a} minus b
        Analytic r = Analytic::box_indicator(
            Box(std::vector<double>(f.a.data(), f.a.data() + f.dim),
                std::vector<double>(f.a.data(), f.a.data() + f.dim)));
        r.b = -f.b;
        return r;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(f.Q);
    if (es.eigenvalues().minCoeff() <= 1e-12) return std::nullopt;  // PD required
    MatrixXd Qinv = f.Q.inverse();
    Analytic r = Analytic::zero(f.dim);
    r.Q = 0.5 * (Qinv + Qinv.transpose());
    r.a = -(Qinv * f.a);
    r.b = 0.5 * f.a.dot(Qinv * f.a) - f.b;
    return r;
}

/// f** tabulated back on the primal grid; equals the lower convex envelope
/// of the node values there.
inline GridFunction biconjugate(const GridFunction& f, const GridSpec& dual) {
    GridFunction fstar = conj_brute(f, dual);
    return conj_brute(fstar, f.grid);
}

/// Both routes of the sum-conjugate identity for strictly convex quadratics:
/// lhs = (sum f_i)*(p), rhs = infimal convolution of the f_i* at p with the
/// split recovered from stationarity.
inline std::pair<XReal, XReal> inf_convolution_check(const std::vector<Analytic>& fs,
                                                     const VectorXd& p) {
    if (fs.empty()) throw std::invalid_argument("inf_convolution_check: empty list");
    const int d = fs.front().dim;
    MatrixXd Qsum = MatrixXd::Zero(d, d);
    VectorXd asum = VectorXd::Zero(d);
    double bsum = 0;
    for (const auto& f : fs) {
        if (!f.is_pure_quadratic()) throw std::invalid_argument("inf_convolution_check: unsupported form");
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(f.Q);
        if (es.eigenvalues().minCoeff() <= 1e-12)
            throw std::invalid_argument("inf_convolution_check: quadratic not strictly convex");
        Qsum += f.Q;
        asum += f.a;
        bsum += f.b;
    }
    auto conj_sum = conj_analytic(Analytic::quadratic(Qsum, asum, bsum));
    XReal lhs = conj_sum->eval(p);

    // stationarity of the split: all conjugate gradients equal nu
    VectorXd nu = Qsum.ldlt().solve(p - asum);
    double rhs = 0;
    for (const auto& f : fs) {
        VectorXd ui = f.a + f.Q * nu;
        rhs += 0.5 * (ui - f.a).dot(f.Q.inverse() * (ui - f.a)) - f.b;
    }
    return {lhs, XReal(rhs)};
}

/// Finite epigraph sample: all (node, height) pairs with
/// f(node) <= height <= cap, heights on a ladder of spacing hstep anchored at
/// the finite minimum of f over the grid.
struct EpiSample {
    std::vector<std::pair<VectorXd, double>> points;
};

inline EpiSample epi_sample(const FuncHandle& f, const GridSpec& grid, double cap, double hstep) {
    if (hstep <= 0) throw std::invalid_argument("epi_sample: height step must be positive");
    GridFunction table = f.is_grid() && f.grid->grid == grid ? *f.grid : sample(f, grid);
    XReal base = table.min_value();
    EpiSample out;
    if (!base.is_finite()) return out;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const XReal& v = table.values[i];
        if (!v.is_finite()) continue;
        for (double hgt = base.raw(); hgt <= cap + 1e-12; hgt += hstep) {
            if (v.raw() <= hgt + 1e-12) out.points.emplace_back(grid.node(i), hgt);
        }
    }
    return out;
}

}  // namespace bdl
