#pragma once

/// Discrete energy and its gradient in the free-knot coordinates.
///
/// For u_h with slopes s_e on elements I_e,
///
///   dE/du_k = alpha (s_{k-1} - s_k) + int (f - g) phi_k - w phi_k(a0)
///   dE/dx_k = int alpha u_h' d_x beta_k + (f - g) beta_k dx
///             - (alpha/2) (s_k^2 - s_{k-1}^2) - w beta_k(a0) + dP/dx_k
///
/// where beta_k = -s_e phi_k on each adjacent element, w is the Dirac weight at
/// a0 and P is the logarithmic mesh penalty
///
///   P = (delta_tilde / N) sum_e ln(N h_e / L)^2,   L = b - a.
///
/// All element integrals use 3-point Gauss, exact for quartic reactions.

#include "movfem/error.hpp"
#include "movfem/mesh_space.hpp"
#include "movfem/problem.hpp"
#include "movfem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace movfem {

struct SimState {
    double t = 0.0;
    FreeKnotFn fn;
};

/// Gradient of E_penalized = E + P with respect to the interior coordinates.
struct GradReport {
    std::vector<double> dE_du;
    std::vector<double> dE_dx;
    double energy = 0.0;   ///< E (unpenalized)
    double penalty = 0.0;  ///< P

    [[nodiscard]] double penalized() const noexcept { return energy + penalty; }

    /// Largest gradient entry in absolute value.
    [[nodiscard]] double max_abs() const noexcept {
        double m = 0.0;
        for (double v : dE_du) m = std::max(m, std::abs(v));
        for (double v : dE_dx) m = std::max(m, std::abs(v));
        return m;
    }
};

namespace detail {

/// Nodes closer than this (relative to the domain) count as sitting on the Dirac.
constexpr double dirac_node_tolerance = 1e-14;

inline double source_density(const SourceTerm& source, double x) {
    if (const auto* smooth = std::get_if<SmoothSource>(&source)) {
        return smooth->g(x);
    }
    return 0.0;
}

}  // namespace detail

/// E(u_h): element-wise Gauss quadrature of alpha/2 u_x^2 + F minus the source pairing.
inline double energy(const FreeKnotFn& fn, const ProblemSpec& prob) {
    const Partition& p = fn.partition();
    require_nondegenerate(p);
    const auto& rule = quad::gauss3();
    double total = 0.0;
    for (int e = 0; e < p.elements(); ++e) {
        const double h = p.h(e);
        const double s = fn.slope(e);
        double local = 0.5 * prob.alpha * s * s;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double t = rule.nodes[q];
            const double x = p.node(e) + t * h;
            const double u = (1.0 - t) * fn.value(e) + t * fn.value(e + 1);
            local += rule.weights[q] * (prob.reaction.F(x, u) - detail::source_density(prob.source, x) * u);
        }
        total += local * h;
    }
    if (const auto* dirac = std::get_if<DiracSource>(&prob.source)) {
        total -= dirac->weight * fn.eval(dirac->location);
    }
    return total;
}

inline double energy(const SimState& state, const ProblemSpec& prob) { return energy(state.fn, prob); }

/// Logarithmic mesh penalty; zero exactly on uniform partitions.
inline double penalty_energy(const Partition& p, double delta_tilde) {
    require(delta_tilde >= 0.0, ErrorCode::invalid_argument, "delta_tilde must be >= 0");
    require_nondegenerate(p);
    if (delta_tilde == 0.0) {
        return 0.0;
    }
    const int n = p.elements();
    const double scale = n / p.length();
    double sum = 0.0;
    for (int e = 0; e < n; ++e) {
        const double l = std::log(scale * p.h(e));
        sum += l * l;
    }
    return delta_tilde / n * sum;
}

inline double penalized_energy(const FreeKnotFn& fn, const ProblemSpec& prob, double delta_tilde) {
    return energy(fn, prob) + penalty_energy(fn.partition(), delta_tilde);
}

/// Contribution -(alpha/2)(s_right^2 - s_left^2) of the moving slope discontinuity
/// at a node to dE/dx_k.
inline double slope_jump_term(double alpha, double s_left, double s_right) {
    return -0.5 * alpha * (s_right * s_right - s_left * s_left);
}

/// Full analytic gradient of E + P.
inline GradReport gradient(const SimState& state, const ProblemSpec& prob, double delta_tilde) {
    const FreeKnotFn& fn = state.fn;
    const Partition& p = fn.partition();
    require_nondegenerate(p);
    const int n = p.elements();
    const auto& rule = quad::gauss3();

    // Per element: int (f - g) * (hat of left node) and int (f - g) * (hat of right node).
    std::vector<double> load_left(static_cast<std::size_t>(n));
    std::vector<double> load_right(static_cast<std::size_t>(n));
    std::vector<double> slopes(static_cast<std::size_t>(n));
    for (int e = 0; e < n; ++e) {
        const double h = p.h(e);
        double left = 0.0;
        double right = 0.0;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double t = rule.nodes[q];
            const double x = p.node(e) + t * h;
            const double u = (1.0 - t) * fn.value(e) + t * fn.value(e + 1);
            const double density = prob.reaction.f(x, u) - detail::source_density(prob.source, x);
            left += rule.weights[q] * density * (1.0 - t);
            right += rule.weights[q] * density * t;
        }
        const auto i = static_cast<std::size_t>(e);
        load_left[i] = left * h;
        load_right[i] = right * h;
        slopes[i] = fn.slope(e);
    }

    GradReport report;
    report.dE_du.assign(static_cast<std::size_t>(n - 1), 0.0);
    report.dE_dx.assign(static_cast<std::size_t>(n - 1), 0.0);
    const double alpha = prob.alpha;
    for (int k = 1; k < n; ++k) {
        const auto l = static_cast<std::size_t>(k - 1);  // element left of x_k
        const auto r = static_cast<std::size_t>(k);      // element right of x_k
        const double sl = slopes[l];
        const double sr = slopes[r];
        const double phi_load = load_right[l] + load_left[r];
        report.dE_du[l] = alpha * (sl - sr) + phi_load;
        // int alpha u_h' d_x beta_k: d_x beta_k = -s_l / h_l on the left, s_r / h_r on the right.
        const double stiffness = -alpha * sl * sl + alpha * sr * sr;
        const double beta_load = -sl * load_right[l] - sr * load_left[r];
        report.dE_dx[l] = stiffness + beta_load + slope_jump_term(alpha, sl, sr);
    }

    if (const auto* dirac = std::get_if<DiracSource>(&prob.source)) {
        const double a0 = dirac->location;
        const double w = dirac->weight;
        const double tol = detail::dirac_node_tolerance * p.length();
        const int e = p.locate(a0);
        // Interior nodes whose hats touch a0: the two ends of element e.
        for (int k : {e, e + 1}) {
            if (k < 1 || k > n - 1) {
                continue;
            }
            const auto idx = static_cast<std::size_t>(k - 1);
            if (std::abs(a0 - p.node(k)) <= tol) {
                // Node on the Dirac: phi_k = 1, beta_k one-sided; use the mean.
                report.dE_du[idx] -= w;
                report.dE_dx[idx] -= w * (-0.5 * (slopes[idx] + slopes[idx + 1]));
                continue;
            }
            const double phi = hat_on(k, p, e, a0);
            report.dE_du[idx] -= w * phi;
            report.dE_dx[idx] -= w * (-slopes[static_cast<std::size_t>(e)] * phi);
        }
    }

    if (delta_tilde > 0.0) {
        const double scale = n / p.length();
        const double c = 2.0 * delta_tilde / n;
        for (int k = 1; k < n; ++k) {
            const double hl = p.h(k - 1);
            const double hr = p.h(k);
            report.dE_dx[static_cast<std::size_t>(k - 1)] +=
                c * (std::log(scale * hl) / hl - std::log(scale * hr) / hr);
        }
    }

    report.energy = energy(fn, prob);
    report.penalty = penalty_energy(p, delta_tilde);
    return report;
}

/// A node sitting on the Dirac location, where dE/dx_k has two one-sided values.
struct DiracNode {
    int k = 0;                      ///< node index, 1..N-1
    double dx_moving_left = 0.0;    ///< Dirac part of dE/dx_k valid for x_k' < 0
    double dx_moving_right = 0.0;   ///< valid for x_k' > 0
    double dx_average = 0.0;        ///< what `gradient` reports
};

inline std::optional<DiracNode> dirac_node(const FreeKnotFn& fn, const ProblemSpec& prob) {
    const auto* dirac = std::get_if<DiracSource>(&prob.source);
    if (dirac == nullptr) {
        return std::nullopt;
    }
    const Partition& p = fn.partition();
    const double tol = detail::dirac_node_tolerance * p.length();
    for (int k = 1; k < p.elements(); ++k) {
        if (std::abs(dirac->location - p.node(k)) <= tol) {
            // Moving left puts a0 in the right element (beta_k(a0) = -s_right), and vice versa.
            const double left_move = dirac->weight * fn.slope(k);
            const double right_move = dirac->weight * fn.slope(k - 1);
            return DiracNode{k, left_move, right_move, 0.5 * (left_move + right_move)};
        }
    }
    return std::nullopt;
}

/// dE/du_k for k = 1..N-1.
inline std::vector<double> grad_u(const SimState& state, const ProblemSpec& prob) {
    return gradient(state, prob, 0.0).dE_du;
}

/// d(E + P)/dx_k for k = 1..N-1.
inline std::vector<double> grad_x(const SimState& state, const ProblemSpec& prob, double delta_tilde) {
    return gradient(state, prob, delta_tilde).dE_dx;
}

/// Central-difference gradient of E + P. With `scaled`, the step for u_k is
/// h * max(1, |u_k|) and for x_k is h * min(h_{k-1}, h_k); otherwise h is absolute.
inline GradReport fd_gradient_oracle(const SimState& state, const ProblemSpec& prob, double delta_tilde,
                                     double h, bool scaled = true) {
    const FreeKnotFn& fn = state.fn;
    const Partition& p = fn.partition();
    const int n = p.elements();
    const std::vector<double> nodes(p.nodes().begin(), p.nodes().end());
    const std::vector<double> values(fn.values().begin(), fn.values().end());

    auto eval_energy = [&](const std::vector<double>& xs, const std::vector<double>& us) {
        return penalized_energy(FreeKnotFn(Partition(xs), us), prob, delta_tilde);
    };

    GradReport report;
    report.dE_du.resize(static_cast<std::size_t>(n - 1));
    report.dE_dx.resize(static_cast<std::size_t>(n - 1));
    for (int k = 1; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const double step_u = scaled ? h * std::max(1.0, std::abs(values[i])) : h;
        auto up = values;
        auto down = values;
        up[i] += step_u;
        down[i] -= step_u;
        report.dE_du[i - 1] = (eval_energy(nodes, up) - eval_energy(nodes, down)) / (2.0 * step_u);

        const double step_x = scaled ? h * std::min(p.h(k - 1), p.h(k)) : h;
        auto right = nodes;
        auto left = nodes;
        right[i] += step_x;
        left[i] -= step_x;
        require(right[i] < nodes[i + 1] && left[i] > nodes[i - 1], ErrorCode::perturbation_breaks_ordering,
                "perturbing x_" + std::to_string(k) + " by " + std::to_string(step_x) + " breaks node order");
        report.dE_dx[i - 1] = (eval_energy(right, values) - eval_energy(left, values)) / (2.0 * step_x);
    }
    report.energy = energy(fn, prob);
    report.penalty = penalty_energy(p, delta_tilde);
    return report;
}

}  // namespace movfem
