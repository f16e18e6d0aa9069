#pragma once

/// Randomized consistency suites: analytic gradient vs central differences,
/// positive definiteness of the stabilized matrix, and the first-order
/// dissipation identity of a forward Euler step.

#include "movfem/assembly.hpp"
#include "movfem/energy.hpp"
#include "movfem/integrator.hpp"
#include "movfem/mesh_space.hpp"
#include "movfem/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace movfem {

struct RandomStateOptions {
    int N = 10;
    /// Smallest element as a fraction of the uniform spacing (b - a) / N.
    double min_gap_fraction = 0.2;
    /// Nodes keep at least this distance, relative to b - a, from a Dirac source.
    double dirac_clearance = 1e-3;
};

/// A random nondegenerate state for a preset: random interior nodes and the
/// interpolated initial condition plus uniform noise of the same magnitude.
inline SimState random_state(const Preset& preset, std::mt19937_64& rng, const RandomStateOptions& opts = {}) {
    const ProblemSpec& prob = preset.problem;
    const double length = prob.b - prob.a;
    const double min_gap = opts.min_gap_fraction * length / opts.N;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto* dirac = std::get_if<DiracSource>(&prob.source);

    std::vector<double> nodes(static_cast<std::size_t>(opts.N) + 1);
    for (;;) {
        nodes.front() = prob.a;
        nodes.back() = prob.b;
        for (std::size_t i = 1; i + 1 < nodes.size(); ++i) nodes[i] = prob.a + length * unit(rng);
        std::sort(nodes.begin() + 1, nodes.end() - 1);
        bool ok = true;
        for (std::size_t i = 0; i + 1 < nodes.size() && ok; ++i) ok = nodes[i + 1] - nodes[i] >= min_gap;
        if (ok && dirac != nullptr) {
            for (std::size_t i = 1; i + 1 < nodes.size() && ok; ++i) {
                ok = std::abs(nodes[i] - dirac->location) >= opts.dirac_clearance * length;
            }
        }
        if (ok) break;
    }

    std::vector<double> values(nodes.size());
    double amplitude = 1.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        values[i] = preset.initial(nodes[i]);
        amplitude = std::max(amplitude, std::abs(values[i]));
    }
    for (std::size_t i = 1; i + 1 < nodes.size(); ++i) values[i] += amplitude * (unit(rng) - 0.5);
    values.front() = prob.u_left;
    values.back() = prob.u_right;
    return {0.0, FreeKnotFn(Partition(std::move(nodes)), std::move(values))};
}

/// Entrywise |analytic - fd| / max(|analytic|, 1), maximized over both gradients.
inline double gradient_mismatch(const GradReport& analytic, const GradReport& fd) {
    double worst = 0.0;
    auto scan = [&worst](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(a[i]), 1.0));
        }
    };
    scan(analytic.dE_du, fd.dE_du);
    scan(analytic.dE_dx, fd.dE_dx);
    return worst;
}

struct GradientCheck {
    std::string preset;
    int states = 0;
    double max_rel_error = 0.0;
    int worst_state = -1;
};

inline GradientCheck check_gradient(const Preset& preset, int states, std::uint64_t seed, double h = 1e-6,
                                    const RandomStateOptions& opts = {}) {
    std::mt19937_64 rng(seed);
    GradientCheck out{preset.name, states, 0.0, -1};
    for (int i = 0; i < states; ++i) {
        const SimState s = random_state(preset, rng, opts);
        const double dtilde = preset.defaults.delta_tilde;
        const double err =
            gradient_mismatch(gradient(s, preset.problem, dtilde), fd_gradient_oracle(s, preset.problem, dtilde, h));
        if (err > out.max_rel_error || out.worst_state < 0) {
            out.max_rel_error = err;
            out.worst_state = i;
        }
    }
    return out;
}

struct DefinitenessCheck {
    std::string preset;
    int states = 0;
    int factorized = 0;
    double min_pivot = 0.0;
};

/// Factorizes M_delta at random states; counts successes and tracks the smallest pivot.
inline DefinitenessCheck check_definiteness(const Preset& preset, int states, std::uint64_t seed, double delta,
                                            const RandomStateOptions& opts = {}) {
    std::mt19937_64 rng(seed);
    DefinitenessCheck out{preset.name, states, 0, std::numeric_limits<double>::infinity()};
    for (int i = 0; i < states; ++i) {
        const SimState s = random_state(preset, rng, opts);
        const CholeskyFactor f = factorize(assemble(s.fn, delta));
        if (f.ok) ++out.factorized;
        for (double p : f.pivots) out.min_pivot = std::min(out.min_pivot, p);
    }
    return out;
}

/// Defect of the energy identity dE/dt = -2 Phi_delta along one explicit step:
/// (E(s + dt z) - E(s)) / dt + xi z^T M_delta z. The defect is O(dt).
inline double dissipation_defect(const SimState& s, const ProblemSpec& prob, double delta, double delta_tilde,
                                 double dt) {
    RunConfig cfg;
    cfg.delta = delta;
    cfg.delta_tilde = delta_tilde;
    const GradReport grad = gradient(s, prob, delta_tilde);
    const auto z = rates(s, prob, cfg, grad);
    const auto mz = assemble(s.fn, delta).multiply(z);
    double phi2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) phi2 += z[i] * mz[i];
    phi2 *= prob.xi;
    const auto moved = detail::advance(s.fn, z, dt);
    require(moved.has_value(), ErrorCode::perturbation_breaks_ordering, "dissipation probe step breaks ordering");
    return (penalized_energy(*moved, prob, delta_tilde) - grad.penalized()) / dt + phi2;
}

/// A step size for the dissipation probe that moves every node by at most
/// `fraction` of its smaller neighbouring element and each value by `fraction`
/// of the value scale.
inline double dissipation_probe_dt(const SimState& s, const ProblemSpec& prob, double delta, double delta_tilde,
                                   double fraction) {
    RunConfig cfg;
    cfg.delta = delta;
    const auto z = rates(s, prob, cfg, gradient(s, prob, delta_tilde));
    const Partition& p = s.fn.partition();
    double scale = 1.0;
    for (double v : s.fn.values()) scale = std::max(scale, std::abs(v));
    double dt = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 2 < p.node_count(); ++i) {
        const int k = static_cast<int>(i) + 1;
        const double room = std::min(p.h(k - 1), p.h(k));
        if (z[x_index(i)] != 0.0) dt = std::min(dt, fraction * room / std::abs(z[x_index(i)]));
        if (z[u_index(i)] != 0.0) dt = std::min(dt, fraction * scale / std::abs(z[u_index(i)]));
    }
    return std::isfinite(dt) ? dt : fraction;
}

}  // namespace movfem
