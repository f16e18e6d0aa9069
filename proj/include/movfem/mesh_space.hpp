#pragma once

/// Free-knot piecewise-linear functions on an interval.
///
/// A Partition is the ordered node set a = x_0 < x_1 < ... < x_N = b, with
/// elements I_e = [x_e, x_{e+1}] for e = 0..N-1. A FreeKnotFn attaches nodal
/// values u_0..u_N to it; u_0 and u_N are Dirichlet data and the interior pairs
/// (u_k, x_k), k = 1..N-1, are the 2(N-1) free coordinates.
///
/// Node-position sensitivity: beta_k = d u_h / d x_k. On each element adjacent
/// to x_k it equals -(slope on that element) * phi_k, so it is double-valued at
/// x_k itself. The API therefore evaluates beta_k element-locally.

#include "movfem/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace movfem {

/// Which one-sided limit to use when a derivative is queried exactly at a node.
enum class Side { left, right };

class Partition {
public:
    /// Takes all N+1 nodes, endpoints included.
    explicit Partition(std::vector<double> nodes) : nodes_(std::move(nodes)) {
        require(nodes_.size() >= 3, ErrorCode::invalid_size,
                "partition needs N >= 2 elements, got " + std::to_string(nodes_.size()) + " nodes");
        require(nodes_.front() < nodes_.back(), ErrorCode::invalid_bounds, "partition requires a < b");
        for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
            require(std::isfinite(nodes_[i]) && nodes_[i] < nodes_[i + 1], ErrorCode::degenerate_mesh,
                    "partition nodes must be strictly increasing (index " + std::to_string(i) + ")");
        }
    }

    static Partition from_interior(double a, double b, std::span<const double> interior) {
        std::vector<double> nodes;
        nodes.reserve(interior.size() + 2);
        nodes.push_back(a);
        nodes.insert(nodes.end(), interior.begin(), interior.end());
        nodes.push_back(b);
        return Partition(std::move(nodes));
    }

    [[nodiscard]] double a() const noexcept { return nodes_.front(); }
    [[nodiscard]] double b() const noexcept { return nodes_.back(); }
    [[nodiscard]] double length() const noexcept { return b() - a(); }

    /// Number of elements N.
    [[nodiscard]] int elements() const noexcept { return static_cast<int>(nodes_.size()) - 1; }
    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }

    [[nodiscard]] std::span<const double> nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::span<const double> interior() const noexcept {
        return std::span<const double>(nodes_).subspan(1, nodes_.size() - 2);
    }
    [[nodiscard]] double node(int k) const { return nodes_[static_cast<std::size_t>(k)]; }

    /// Length of element e = [x_e, x_{e+1}].
    [[nodiscard]] double h(int e) const {
        return nodes_[static_cast<std::size_t>(e) + 1] - nodes_[static_cast<std::size_t>(e)];
    }

    /// Element containing x. A node x_k with k >= 1 belongs to element k-1.
    [[nodiscard]] int locate(double x) const {
        require(x >= a() && x <= b(), ErrorCode::out_of_domain,
                "x = " + std::to_string(x) + " outside [" + std::to_string(a()) + ", " + std::to_string(b()) + "]");
        const auto it = std::lower_bound(nodes_.begin() + 1, nodes_.end(), x);
        return std::clamp(static_cast<int>(it - nodes_.begin()) - 1, 0, elements() - 1);
    }

    bool operator==(const Partition&) const = default;

private:
    std::vector<double> nodes_;
};

/// Nodes x_k = a + k (b - a) / N.
inline Partition make_uniform_partition(double a, double b, int n) {
    require(a < b, ErrorCode::invalid_bounds, "uniform partition requires a < b");
    require(n >= 2, ErrorCode::invalid_size, "uniform partition requires N >= 2");
    std::vector<double> nodes(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        nodes[static_cast<std::size_t>(k)] = a + k * (b - a) / n;
    }
    nodes.back() = b;
    return Partition(std::move(nodes));
}

/// Hard degeneracy threshold: below this the solver aborts.
inline double hard_gap_threshold(const Partition& p) { return 1e-12 * p.length(); }
/// Soft threshold used only for diagnostics.
inline double warn_gap_threshold(const Partition& p) { return 1e-6 * p.length(); }

struct DegeneracyReport {
    double min_gap = 0.0;
    bool is_degenerate = false;
    std::optional<int> offending_index;  ///< element with the smallest gap, when degenerate
};

inline double min_gap(const Partition& p) {
    double gap = p.h(0);
    for (int e = 1; e < p.elements(); ++e) {
        gap = std::min(gap, p.h(e));
    }
    return gap;
}

inline DegeneracyReport degeneracy(const Partition& p, double threshold) {
    DegeneracyReport report;
    int worst = 0;
    report.min_gap = p.h(0);
    for (int e = 1; e < p.elements(); ++e) {
        if (p.h(e) < report.min_gap) {
            report.min_gap = p.h(e);
            worst = e;
        }
    }
    report.is_degenerate = report.min_gap < threshold;
    if (report.is_degenerate) {
        report.offending_index = worst;
    }
    return report;
}

inline DegeneracyReport degeneracy(const Partition& p) { return degeneracy(p, hard_gap_threshold(p)); }

inline void require_nondegenerate(const Partition& p) {
    const auto report = degeneracy(p);
    require(!report.is_degenerate, ErrorCode::degenerate_mesh,
            "element " + std::to_string(report.offending_index.value_or(-1)) + " has length " +
                std::to_string(report.min_gap));
}

/// Continuous piecewise-linear function with free knots.
class FreeKnotFn {
public:
    FreeKnotFn(Partition partition, std::vector<double> values)
        : partition_(std::move(partition)), values_(std::move(values)) {
        require(values_.size() == partition_.node_count(), ErrorCode::invalid_size,
                "value count " + std::to_string(values_.size()) + " != node count " +
                    std::to_string(partition_.node_count()));
    }

    [[nodiscard]] const Partition& partition() const noexcept { return partition_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] double value(int k) const { return values_[static_cast<std::size_t>(k)]; }
    [[nodiscard]] int elements() const noexcept { return partition_.elements(); }

    /// Slope D_h u_e on element e.
    [[nodiscard]] double slope(int e) const {
        return (value(e + 1) - value(e)) / partition_.h(e);
    }

    /// Value on element e at x, without locating.
    [[nodiscard]] double eval_on(int e, double x) const {
        const double t = (x - partition_.node(e)) / partition_.h(e);
        return (1.0 - t) * value(e) + t * value(e + 1);
    }

    [[nodiscard]] double eval(double x) const {
        const int e = partition_.locate(x);
        if (x == partition_.node(e + 1)) {
            return value(e + 1);
        }
        if (x == partition_.node(e)) {
            return value(e);
        }
        return eval_on(e, x);
    }

    /// d u_h / dx; `side` only matters exactly at a node.
    [[nodiscard]] double derivative(double x, Side side = Side::left) const {
        int e = partition_.locate(x);
        if (side == Side::right && x == partition_.node(e + 1) && e + 1 < elements()) {
            ++e;
        }
        return slope(e);
    }

private:
    Partition partition_;
    std::vector<double> values_;
};

inline double eval(const FreeKnotFn& fn, double x) { return fn.eval(x); }

/// Hat function of node k (0..N, boundary hats included), element-local form.
inline double hat_on(int k, const Partition& p, int e, double x) {
    if (e == k - 1) {
        return (x - p.node(k - 1)) / p.h(k - 1);
    }
    if (e == k) {
        return (p.node(k + 1) - x) / p.h(k);
    }
    return 0.0;
}

/// Hat function of node k, 0 <= k <= N.
inline double hat(int k, const Partition& p, double x) {
    require(k >= 0 && k <= p.elements(), ErrorCode::index_out_of_range, "hat index " + std::to_string(k));
    require(x >= p.a() && x <= p.b(), ErrorCode::out_of_domain, "hat evaluated outside the domain");
    if (k > 0 && x >= p.node(k - 1) && x <= p.node(k)) {
        return hat_on(k, p, k - 1, x);
    }
    if (k < p.elements() && x >= p.node(k) && x <= p.node(k + 1)) {
        return hat_on(k, p, k, x);
    }
    return 0.0;
}

/// Interior nodal basis phi_k, 1 <= k <= N-1.
inline double basis_phi(int k, const Partition& p, double x) {
    require(k >= 1 && k <= p.elements() - 1, ErrorCode::index_out_of_range,
            "phi index " + std::to_string(k) + " outside 1.." + std::to_string(p.elements() - 1));
    return hat(k, p, x);
}

/// beta_k on element `e` at x (x in the closure of e). Zero unless e is k-1 or k.
inline double basis_beta(int k, const FreeKnotFn& fn, int e, double x) {
    const Partition& p = fn.partition();
    require(k >= 1 && k <= p.elements() - 1, ErrorCode::index_out_of_range,
            "beta index " + std::to_string(k) + " outside 1.." + std::to_string(p.elements() - 1));
    require(e >= 0 && e < p.elements(), ErrorCode::index_out_of_range, "element index " + std::to_string(e));
    if (e != k - 1 && e != k) {
        return 0.0;
    }
    require(p.h(e) >= hard_gap_threshold(p), ErrorCode::degenerate_mesh,
            "element " + std::to_string(e) + " collapsed in support of beta_" + std::to_string(k));
    return -fn.slope(e) * hat_on(k, p, e, x);
}

/// Pointwise beta_k for x != x_k (where it is single-valued).
inline double basis_beta(int k, const FreeKnotFn& fn, double x) {
    const Partition& p = fn.partition();
    require(k >= 1 && k <= p.elements() - 1, ErrorCode::index_out_of_range, "beta index " + std::to_string(k));
    require(x != p.node(k), ErrorCode::invalid_argument,
            "beta_k is double-valued at x_k; use the element-local overload");
    if (x > p.node(k - 1) && x < p.node(k)) {
        return basis_beta(k, fn, k - 1, x);
    }
    if (x > p.node(k) && x < p.node(k + 1)) {
        return basis_beta(k, fn, k, x);
    }
    require(x >= p.a() && x <= p.b(), ErrorCode::out_of_domain, "beta evaluated outside the domain");
    return 0.0;
}

/// Nodal interpolant of `f` on `p`.
template <typename F>
FreeKnotFn interpolate(F&& f, const Partition& p) {
    std::vector<double> values(p.node_count());
    for (std::size_t k = 0; k < values.size(); ++k) {
        values[k] = f(p.nodes()[k]);
    }
    return FreeKnotFn(p, std::move(values));
}

}  // namespace movfem
