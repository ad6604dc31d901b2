#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

#include "analytic.hpp"
#include "expr.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "xreal.hpp"

namespace bdl {

/// Extended-real values tabulated on a uniform grid. Proper means at least
/// one finite value and no -inf anywhere, unless explicitly flagged improper.
struct GridFunction {
    GridSpec grid;
    std::vector<XReal> values;
    bool improper = false;

    GridFunction() = default;
    GridFunction(GridSpec g, std::vector<XReal> v, bool imp = false)
        : grid(std::move(g)), values(std::move(v)), improper(imp) {
        if (values.size() != grid.node_count())
            throw std::invalid_argument("GridFunction: value table size mismatch");
        if (!improper) check_proper();
    }

    void check_proper() const {
        bool any_finite = false;
        for (const auto& v : values) {
            if (v.is_neg_inf()) throw std::invalid_argument("GridFunction: -inf value in proper table");
            if (v.is_finite()) any_finite = true;
        }
        if (!any_finite) throw std::invalid_argument("GridFunction: no finite value in proper table");
    }

    const XReal& at(std::size_t flat) const { return values[flat]; }

    /// Multilinear interpolation. Any +inf corner makes the result +inf;
    /// queries outside the box are an error.
    XReal interpolate(const VectorXd& x) const {
        const int d = grid.dim();
        if (x.size() != d) throw std::invalid_argument("GridFunction: dimension mismatch");
        if (!grid.box.contains(x, 1e-12)) throw std::out_of_range("GridFunction: query outside box");
        std::vector<int> base(d);
        std::vector<double> frac(d);
        for (int k = 0; k < d; ++k) {
            double h = grid.step(k);
            if (h == 0) {
                base[k] = 0;
                frac[k] = 0;
                continue;
            }
            double t = (x[k] - grid.box.lo[k]) / h;
            int i = static_cast<int>(std::floor(t));
            i = std::min(std::max(i, 0), grid.counts[k] - 2);
            base[k] = i;
            frac[k] = std::min(std::max(t - i, 0.0), 1.0);
        }
        // Only corners with positive weight participate; a participating +inf
        // corner dominates, so node queries reproduce node values exactly.
        double acc = 0.0;
        bool saw_neg_inf = false;
        const int corners = 1 << d;
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            std::vector<int> idx(d);
            for (int k = 0; k < d; ++k) {
                bool hi = (c >> k) & 1;
                if (grid.counts[k] == 1) hi = false;
                idx[k] = base[k] + (hi ? 1 : 0);
                w *= hi ? frac[k] : (1.0 - frac[k]);
            }
            if (w == 0.0) continue;
            const XReal& v = values[grid.flat_index(idx)];
            if (v.is_pos_inf()) return XReal::pos_inf();
            if (v.is_neg_inf()) saw_neg_inf = true;
            else acc += w * v.raw();
        }
        if (saw_neg_inf) return XReal::neg_inf();
        return XReal(acc);
    }

    /// Finite minimum over nodes, or +inf if none.
    XReal min_value() const {
        XReal best = XReal::pos_inf();
        for (const auto& v : values) best = xmin(best, v);
        return best;
    }
};

/// A function carrier: either a closed analytic form or a grid table. The
/// original expression, when one exists, rides along for serialization.
struct FuncHandle {
    int dim = 0;
    std::optional<Analytic> analytic;
    std::shared_ptr<const GridFunction> grid;
    ExprPtr source;        // expression this handle was built from, if any
    bool convex = false;   // certified convex
    bool sampled_warning = false;  // expression left the analytic family

    bool is_analytic() const { return analytic.has_value(); }
    bool is_grid() const { return grid != nullptr; }

    XReal evaluate(const VectorXd& z) const {
        if (z.size() != dim) throw std::invalid_argument("FuncHandle: dimension mismatch");
        if (analytic) return analytic->eval(z);
        if (grid) return grid->interpolate(z);
        throw std::logic_error("FuncHandle: empty handle");
    }
};

inline FuncHandle make_analytic_handle(Analytic a, ExprPtr source = nullptr) {
    FuncHandle h;
    h.dim = a.dim;
    h.convex = a.convex();
    h.analytic = std::move(a);
    h.source = std::move(source);
    return h;
}

inline FuncHandle make_grid_handle(GridFunction g, ExprPtr source = nullptr, bool warned = false) {
    FuncHandle h;
    h.dim = g.grid.dim();
    h.grid = std::make_shared<GridFunction>(std::move(g));
    h.source = std::move(source);
    h.sampled_warning = warned;
    return h;
}

/// Exact sampling of a handle onto a grid.
inline GridFunction sample(const FuncHandle& f, const GridSpec& g) {
    if (f.dim != g.dim()) throw std::invalid_argument("sample: dimension mismatch");
    std::vector<XReal> vals(g.node_count());
    parallel_chunks(g.node_count(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) vals[i] = f.evaluate(g.node(i));
    });
    bool proper = false;
    for (const auto& v : vals)
        if (v.is_finite()) {
            proper = true;
            break;
        }
    return GridFunction(g, std::move(vals), !proper);
}

inline GridFunction sample(const Analytic& f, const GridSpec& g) {
    return sample(make_analytic_handle(f), g);
}

/// Builds a handle from an expression: flattened into the analytic family
/// when possible, otherwise sampled onto `g` with the warning flag set.
inline FuncHandle handle_from_expr(const ExprPtr& e, int n, int m, const GridSpec& g) {
    if (auto flat = flatten_expr(*e, n, m)) {
        FuncHandle h = make_analytic_handle(std::move(*flat), e);
        return h;
    }
    // sample the raw expression exactly at the nodes
    std::vector<XReal> vals(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) vals[i] = XReal(eval_expr(*e, g.node(i), n, m));
    FuncHandle h = make_grid_handle(GridFunction(g, std::move(vals)), e, /*warned=*/true);
    return h;
}

/// Pointwise sum of nonnegative-weighted terms under the extended-real rules.
/// Stays analytic when every term is analytic; otherwise all terms are
/// sampled on a common grid (the supplied one, or the shared grid of the
/// grid-backed terms).
inline FuncHandle combine(const std::vector<std::pair<double, FuncHandle>>& terms,
                          const std::optional<GridSpec>& on_grid = std::nullopt) {
    if (terms.empty()) throw std::invalid_argument("combine: empty term list");
    const int dim = terms.front().second.dim;
    for (const auto& [w, f] : terms) {
        if (w < 0) throw std::invalid_argument("combine: negative weight");
        if (f.dim != dim) throw std::invalid_argument("combine: dimension mismatch");
    }
    bool all_analytic = true;
    for (const auto& [w, f] : terms) all_analytic = all_analytic && f.is_analytic();
    if (all_analytic) {
        Analytic acc = terms.front().second.analytic->scaled(terms.front().first);
        for (std::size_t i = 1; i < terms.size(); ++i)
            acc = acc.plus(terms[i].second.analytic->scaled(terms[i].first));
        return make_analytic_handle(std::move(acc));
    }
    std::optional<GridSpec> g = on_grid;
    for (const auto& [w, f] : terms) {
        if (!f.is_grid()) continue;
        if (!g) g = f.grid->grid;
        else if (!(f.grid->grid == *g))
            throw std::invalid_argument("combine: grids differ and no common grid supplied");
    }
    std::vector<XReal> vals(g->node_count(), XReal(0.0));
    for (const auto& [w, f] : terms) {
        GridFunction s = sample(f, *g);
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = xadd(vals[i], xscale(w, s.values[i]));
    }
    bool proper = false;
    for (const auto& v : vals)
        if (v.is_finite()) {
            proper = true;
            break;
        }
    return make_grid_handle(GridFunction(*g, std::move(vals), !proper));
}

/// f + indicator of C.
inline FuncHandle restrict_to(const FuncHandle& f, const Box& C) {
    if (f.dim != C.dim()) throw std::invalid_argument("restrict_to: dimension mismatch");
    if (f.is_analytic()) {
        Analytic r = f.analytic->plus(Analytic::box_indicator(C));
        return make_analytic_handle(std::move(r), f.source);
    }
    GridFunction g = *f.grid;
    bool proper = false;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        if (!C.contains(g.grid.node(i))) g.values[i] = XReal::pos_inf();
        else if (g.values[i].is_finite()) proper = true;
    }
    g.improper = !proper;
    return make_grid_handle(std::move(g), f.source, f.sampled_warning);
}

// ---- CSV grid dumps -------------------------------------------------------

/// One row per node: coordinates then value ("+inf"/"-inf" tokens allowed).
/// Header comments record the grid so the dump can be reloaded.
inline std::string grid_to_csv(const GridFunction& f, const std::string& note = "") {
    std::ostringstream os;
    os << "# grid";
    for (int d = 0; d < f.grid.dim(); ++d)
        os << " " << fmt_double(f.grid.box.lo[d]) << " " << fmt_double(f.grid.box.hi[d]) << " "
           << f.grid.counts[d];
    os << "\n";
    if (!note.empty()) os << "# " << note << "\n";
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        VectorXd x = f.grid.node(i);
        for (int d = 0; d < x.size(); ++d) os << fmt_double(x[d]) << ",";
        os << f.values[i].to_string() << "\n";
    }
    return os.str();
}

inline GridFunction grid_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::optional<GridSpec> spec;
    std::vector<XReal> vals;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string tag;
            hs >> tag;
            if (tag == "grid") {
                std::vector<double> lo, hi;
                std::vector<int> counts;
                double l, h;
                int c;
                while (hs >> l >> h >> c) {
                    lo.push_back(l);
                    hi.push_back(h);
                    counts.push_back(c);
                }
                spec = GridSpec(Box(lo, hi), counts);
            }
            continue;
        }
        auto pos = line.find_last_of(',');
        if (pos == std::string::npos) throw std::invalid_argument("grid_from_csv: bad row");
        vals.push_back(XReal::parse(line.substr(pos + 1)));
    }
    if (!spec) throw std::invalid_argument("grid_from_csv: missing grid header");
    bool proper = false;
    for (const auto& v : vals)
        if (v.is_finite()) {
            proper = true;
            break;
        }
    return GridFunction(*spec, std::move(vals), !proper);
}

}  // namespace bdl
