#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "xreal.hpp"

namespace bdl {

using Eigen::VectorXd;

inline constexpr std::size_t kMaxGridNodes = 10'000'000;  // desk-scale cap
inline constexpr int kMaxDim = 4;

/// Axis-aligned box with finite bounds, lo <= hi per dimension.
struct Box {
    std::vector<double> lo, hi;

    Box() = default;
    Box(std::vector<double> l, std::vector<double> h) : lo(std::move(l)), hi(std::move(h)) {
        validate();
    }
    static Box cube(int dim, double l, double h) {
        return Box(std::vector<double>(dim, l), std::vector<double>(dim, h));
    }

    int dim() const { return static_cast<int>(lo.size()); }

    void validate() const {
        if (lo.size() != hi.size() || lo.empty()) throw std::invalid_argument("Box: bad shape");
        for (std::size_t d = 0; d < lo.size(); ++d) {
            if (!std::isfinite(lo[d]) || !std::isfinite(hi[d]) || lo[d] > hi[d])
                throw std::invalid_argument("Box: bounds must be finite with lo <= hi");
        }
    }

    bool contains(const VectorXd& x, double tol = 0.0) const {
        if (x.size() != dim()) return false;
        for (int d = 0; d < dim(); ++d)
            if (x[d] < lo[d] - tol || x[d] > hi[d] + tol) return false;
        return true;
    }

    /// Strict interior membership (open box).
    bool contains_strict(const VectorXd& x, double tol = 0.0) const {
        if (x.size() != dim()) return false;
        for (int d = 0; d < dim(); ++d)
            if (x[d] <= lo[d] + tol || x[d] >= hi[d] - tol) return false;
        return true;
    }

    friend Box concat(const Box& a, const Box& b) {
        Box r;
        r.lo = a.lo;
        r.lo.insert(r.lo.end(), b.lo.begin(), b.lo.end());
        r.hi = a.hi;
        r.hi.insert(r.hi.end(), b.hi.begin(), b.hi.end());
        return r;
    }

    /// Box intersection; returns false if empty.
    bool intersect(const Box& other, Box& out) const {
        if (other.dim() != dim()) throw std::invalid_argument("Box: dimension mismatch");
        out.lo.resize(lo.size());
        out.hi.resize(hi.size());
        for (int d = 0; d < dim(); ++d) {
            out.lo[d] = std::max(lo[d], other.lo[d]);
            out.hi[d] = std::min(hi[d], other.hi[d]);
            if (out.lo[d] > out.hi[d]) return false;
        }
        return true;
    }

    bool operator==(const Box& o) const { return lo == o.lo && hi == o.hi; }
};

/// Uniform grid over a box. Node 0 sits on the lower bound, the last node on
/// the upper bound. Flat indexing is row-major with the last dimension fastest.
/// A one-node dimension is allowed only when its bounds coincide.
struct GridSpec {
    Box box;
    std::vector<int> counts;

    GridSpec() = default;
    GridSpec(Box b, std::vector<int> c) : box(std::move(b)), counts(std::move(c)) { validate(); }
    static GridSpec uniform(const Box& b, int count) {
        return GridSpec(b, std::vector<int>(b.dim(), count));
    }

    void validate() const {
        box.validate();
        if (static_cast<int>(counts.size()) != box.dim())
            throw std::invalid_argument("GridSpec: counts/box dimension mismatch");
        if (box.dim() > kMaxDim) throw std::invalid_argument("GridSpec: dimension cap exceeded");
        std::size_t total = 1;
        for (int d = 0; d < box.dim(); ++d) {
            if (counts[d] < 1) throw std::invalid_argument("GridSpec: node count must be >= 1");
            if (counts[d] == 1 && box.lo[d] != box.hi[d])
                throw std::invalid_argument("GridSpec: single-node dimension needs lo == hi");
            total *= static_cast<std::size_t>(counts[d]);
            if (total > kMaxGridNodes) throw std::invalid_argument("GridSpec: node cap exceeded");
        }
    }

    int dim() const { return box.dim(); }

    std::size_t node_count() const {
        std::size_t total = 1;
        for (int c : counts) total *= static_cast<std::size_t>(c);
        return total;
    }

    double step(int d) const {
        return counts[d] > 1 ? (box.hi[d] - box.lo[d]) / (counts[d] - 1) : 0.0;
    }

    double max_step() const {
        double h = 0;
        for (int d = 0; d < dim(); ++d) h = std::max(h, step(d));
        return h;
    }

    double coord(int d, int i) const {
        if (i == counts[d] - 1) return box.hi[d];  // land exactly on the bound
        return box.lo[d] + i * step(d);
    }

    std::vector<int> multi_index(std::size_t flat) const {
        std::vector<int> idx(dim());
        for (int d = dim() - 1; d >= 0; --d) {
            idx[d] = static_cast<int>(flat % counts[d]);
            flat /= counts[d];
        }
        return idx;
    }

    std::size_t flat_index(const std::vector<int>& idx) const {
        std::size_t flat = 0;
        for (int d = 0; d < dim(); ++d) flat = flat * counts[d] + idx[d];
        return flat;
    }

    VectorXd node(std::size_t flat) const {
        auto idx = multi_index(flat);
        VectorXd x(dim());
        for (int d = 0; d < dim(); ++d) x[d] = coord(d, idx[d]);
        return x;
    }

    /// Flat index of the grid node nearest to x (clamped to the box).
    std::size_t nearest_node(const VectorXd& x) const {
        std::vector<int> idx(dim());
        for (int d = 0; d < dim(); ++d) {
            double h = step(d);
            int i = h > 0 ? static_cast<int>(std::lround((x[d] - box.lo[d]) / h)) : 0;
            idx[d] = std::min(std::max(i, 0), counts[d] - 1);
        }
        return flat_index(idx);
    }

    bool operator==(const GridSpec& o) const { return box == o.box && counts == o.counts; }

    friend GridSpec concat(const GridSpec& a, const GridSpec& b) {
        GridSpec r;
        r.box = concat(a.box, b.box);
        r.counts = a.counts;
        r.counts.insert(r.counts.end(), b.counts.begin(), b.counts.end());
        r.validate();
        return r;
    }
};

}  // namespace bdl
