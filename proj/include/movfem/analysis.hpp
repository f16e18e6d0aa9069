#pragma once

/// Error norms, convergence orders and a best free-knot approximation oracle.

#include "movfem/error.hpp"
#include "movfem/mesh_space.hpp"
#include "movfem/problem.hpp"
#include "movfem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace movfem {

struct ErrorReport {
    double err_h1 = 0.0;
    double err_l2 = 0.0;
    std::optional<double> err_energy;
    int N = 0;
};

namespace detail {

/// Sorted union of the partition nodes and the breakpoints inside (a, b).
inline std::vector<double> union_nodes(const Partition& p, const std::vector<double>& breakpoints) {
    std::vector<double> pts(p.nodes().begin(), p.nodes().end());
    for (double bp : breakpoints) {
        if (bp > p.a() && bp < p.b()) pts.push_back(bp);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

template <typename Integrand>
double integrate_union(const FreeKnotFn& fn, const std::vector<double>& breakpoints, int panels,
                       Integrand&& integrand) {
    const auto pts = union_nodes(fn.partition(), breakpoints);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const int e = fn.partition().locate(0.5 * (pts[i] + pts[i + 1]));
        total += quad::integrate(quad::gauss5(), pts[i], pts[i + 1],
                                 [&](double x) { return integrand(e, x); }, panels);
    }
    return total;
}

}  // namespace detail

/// Default sub-panels per union cell. Integrands are smooth inside each cell,
/// but a coarse cell can contain a steep layer of the reference solution.
constexpr int default_error_panels = 16;

/// |u(t) - u_h|_{H1} (seminorm).
inline double h1_error(const FreeKnotFn& fn, const ExactSolution& exact, double t,
                       int panels = default_error_panels) {
    const double sq = detail::integrate_union(fn, exact.breakpoints, panels, [&](int e, double x) {
        const double d = exact.x_derivative(t, x) - fn.slope(e);
        return d * d;
    });
    return std::sqrt(sq);
}

inline double l2_error(const FreeKnotFn& fn, const ExactSolution& exact, double t,
                       int panels = default_error_panels) {
    const double sq = detail::integrate_union(fn, exact.breakpoints, panels, [&](int e, double x) {
        const double d = exact.value(t, x) - fn.eval_on(e, x);
        return d * d;
    });
    return std::sqrt(sq);
}

inline double energy_error(double discrete_energy, double exact_energy) {
    return std::abs(discrete_energy - exact_energy);
}

struct OrderRow {
    int N = 0;
    double err = 0.0;
    std::optional<double> order;
};

struct OrderTable {
    std::vector<OrderRow> rows;
    std::string norm_label;

    /// Mean of the orders of the last `count` increments.
    [[nodiscard]] double mean_last_orders(std::size_t count) const {
        require(count >= 1 && count < rows.size(), ErrorCode::invalid_argument, "not enough rows for mean order");
        double sum = 0.0;
        for (std::size_t i = rows.size() - count; i < rows.size(); ++i) sum += *rows[i].order;
        return sum / static_cast<double>(count);
    }
};

/// order_i = ln(err_{i-1} / err_i) / ln(N_i / N_{i-1}).
inline OrderTable orders(const std::vector<std::pair<int, double>>& rows, std::string label = {}) {
    OrderTable table;
    table.norm_label = std::move(label);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto [n, err] = rows[i];
        require(err > 0.0, ErrorCode::nonpositive_error, "error must be positive (row " + std::to_string(i) + ")");
        OrderRow row{n, err, std::nullopt};
        if (i > 0) {
            const auto [n_prev, err_prev] = rows[i - 1];
            require(n > n_prev, ErrorCode::invalid_argument, "N must be strictly increasing");
            row.order = std::log(err_prev / err) / std::log(static_cast<double>(n) / n_prev);
        }
        table.rows.push_back(row);
    }
    return table;
}

struct SigmaResult {
    double value = 0.0;  ///< upper bound on the best free-knot H1 error
    std::vector<double> knots;
    bool stalled = false;
};

namespace detail {

/// Sum over elements of (Delta u)^2 / h. For fixed knots the H1-best
/// piecewise-linear approximant with the same end values is the nodal
/// interpolant, and |u - I u|^2_{H1} = |u|^2_{H1} - this sum.
inline double captured_energy(const std::vector<double>& x, const std::vector<double>& ux) {
    double g = 0.0;
    for (std::size_t e = 0; e + 1 < x.size(); ++e) {
        const double du = ux[e + 1] - ux[e];
        g += du * du / (x[e + 1] - x[e]);
    }
    return g;
}

}  // namespace detail

/// Approximate sigma_N = inf over free-knot piecewise linears v_h (matching the
/// end values) of |u - v_h|_{H1}, by per-knot coordinate ascent of the captured
/// energy from a uniform start and `starts` random starts. The result is an
/// upper bound on sigma_N.
inline SigmaResult sigma_N_oracle(const ExactSolution& exact, double t, double a, double b, int n,
                                  std::uint64_t seed = 0, int starts = 5, int max_sweeps = 4000) {
    require(n >= 2, ErrorCode::invalid_size, "sigma_N needs N >= 2");
    require(a < b, ErrorCode::invalid_bounds, "sigma_N needs a < b");
    auto u = [&](double x) { return exact.value(t, x); };
    const double length = b - a;
    const double margin = 1e-12 * length;

    auto optimize = [&](std::vector<double> x) {
        std::vector<double> ux(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) ux[i] = u(x[i]);
        double g = detail::captured_energy(x, ux);
        bool converged = false;
        for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
            const double g_start = g;
            for (std::size_t k = 1; k + 1 < x.size(); ++k) {
                const double lo = x[k - 1] + margin;
                const double hi = x[k + 1] - margin;
                if (!(lo < hi)) continue;
                const double ul = ux[k - 1];
                const double ur = ux[k + 1];
                auto local = [&](double xk) {
                    const double v = u(xk);
                    return (v - ul) * (v - ul) / (xk - x[k - 1]) + (ur - v) * (ur - v) / (x[k + 1] - xk);
                };
                // Coarse scan, then golden section on the best bracket.
                constexpr int scan = 12;
                double best_x = x[k];
                double best = local(x[k]);
                for (int s = 1; s < scan; ++s) {
                    const double xs = lo + (hi - lo) * s / scan;
                    const double v = local(xs);
                    if (v > best) {
                        best = v;
                        best_x = xs;
                    }
                }
                const double step = (hi - lo) / scan;
                double left = std::max(lo, best_x - step);
                double right = std::min(hi, best_x + step);
                constexpr double inv_phi = 0.6180339887498949;
                double c = right - inv_phi * (right - left);
                double d = left + inv_phi * (right - left);
                double fc = local(c);
                double fd = local(d);
                for (int it = 0; it < 80 && right - left > 1e-15 * length; ++it) {
                    if (fc > fd) {
                        right = d;
                        d = c;
                        fd = fc;
                        c = right - inv_phi * (right - left);
                        fc = local(c);
                    } else {
                        left = c;
                        c = d;
                        fc = fd;
                        d = left + inv_phi * (right - left);
                        fd = local(d);
                    }
                }
                const double cand = fc > fd ? c : d;
                const double cand_val = std::max(fc, fd);
                if (cand_val > best) {
                    best = cand_val;
                    best_x = cand;
                }
                if (best > local(x[k])) {
                    x[k] = best_x;
                    ux[k] = u(best_x);
                }
            }
            g = detail::captured_energy(x, ux);
            converged = g - g_start <= 1e-14 * std::max(1.0, std::abs(g));
        }
        return std::pair{x, converged};
    };

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(a, b);
    SigmaResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (int s = 0; s <= starts; ++s) {
        std::vector<double> x(static_cast<std::size_t>(n) + 1);
        if (s == 0) {
            const auto p = make_uniform_partition(a, b, n);
            x.assign(p.nodes().begin(), p.nodes().end());
        } else {
            for (auto& xi : x) xi = dist(rng);
            x.front() = a;
            x.back() = b;
            std::sort(x.begin() + 1, x.end() - 1);
            // Spread any coincident draws.
            for (std::size_t i = 1; i + 1 < x.size(); ++i) {
                x[i] = std::max(x[i], x[i - 1] + 1e-6 * length);
            }
            if (!(x[x.size() - 2] < b)) continue;
        }
        auto [knots, converged] = optimize(std::move(x));
        const FreeKnotFn interp = interpolate(u, Partition(knots));
        const double value = h1_error(interp, exact, t, 64);
        if (value < best.value) {
            best.value = value;
            best.knots = std::move(knots);
            best.stalled = !converged;
        }
    }
    return best;
}

}  // namespace movfem
