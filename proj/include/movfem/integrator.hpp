#pragma once

/// Forward Euler for the stabilized moving-mesh system
///
///     M_delta(u, x) (u', x') = -(1/xi) grad E_penalized(u, x)
///
/// with two safeguards: a step that breaks node ordering or raises the
/// penalized energy is retried with half the step, up to `max_halvings` times.

#include "movfem/assembly.hpp"
#include "movfem/energy.hpp"
#include "movfem/error.hpp"
#include "movfem/mesh_space.hpp"
#include "movfem/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace movfem {

enum class Mode { moving, frozen_mesh };

enum class StopReason { horizon, stationary, stalled, degenerate, step_floor, step_limit };

constexpr std::string_view to_string(StopReason r) noexcept {
    switch (r) {
        case StopReason::horizon: return "horizon";
        case StopReason::stationary: return "stationary";
        case StopReason::stalled: return "stalled";
        case StopReason::degenerate: return "degenerate";
        case StopReason::step_floor: return "step_floor";
        case StopReason::step_limit: return "step_limit";
    }
    return "unknown";
}

struct RunConfig {
    int N = 10;
    double dt = 1e-5;
    double delta = 1e-4;
    double delta_tilde = 0.0;
    std::optional<double> t_end;
    std::optional<double> stationary_tol;
    std::vector<double> snapshot_times;
    Mode mode = Mode::moving;
    int max_halvings = 40;
    /// Trial dt multiplier after each accepted step (1 = fixed step).
    double dt_growth = 1.0;
    double dt_max = std::numeric_limits<double>::infinity();
    /// Stationary stop also needs max |grad E_penalized| <= this * max(1, |E_penalized|).
    double certificate_tol = 1e-5;
    /// Once the energy test passes, a run whose residual fails to halve within
    /// this much simulated time stops as `stalled`.
    double stall_window = 1.0;
    /// Energy increase tolerated on an accepted step.
    double energy_slack = 1e-12;
    std::size_t max_steps = 20'000'000;
    /// Node positions are recorded every `node_stride` accepted steps.
    std::size_t node_stride = 1;

    void validate() const {
        require(N >= 2, ErrorCode::invalid_size, "N must be >= 2");
        require(dt > 0.0, ErrorCode::invalid_argument, "dt must be positive");
        require(delta >= 0.0 && delta_tilde >= 0.0, ErrorCode::invalid_argument, "delta, delta_tilde must be >= 0");
        require(t_end.has_value() || stationary_tol.has_value(), ErrorCode::invalid_argument,
                "need t_end or stationary_tol");
        require(dt_growth >= 1.0, ErrorCode::invalid_argument, "dt_growth must be >= 1");
        require(max_halvings >= 0, ErrorCode::invalid_argument, "max_halvings must be >= 0");
        require(node_stride >= 1, ErrorCode::invalid_argument, "node_stride must be >= 1");
        require(stall_window > 0.0, ErrorCode::invalid_argument, "stall_window must be positive");
    }
};

/// Run configuration from a preset's defaults.
inline RunConfig config_for(const Preset& p, int n) {
    RunConfig cfg;
    cfg.N = n;
    cfg.dt = p.defaults.dt;
    cfg.delta = p.defaults.delta;
    cfg.delta_tilde = p.defaults.delta_tilde;
    cfg.t_end = p.defaults.t_end;
    cfg.stationary_tol = p.defaults.stationary_tol;
    cfg.snapshot_times = p.defaults.snapshot_times;
    cfg.dt_growth = p.defaults.dt_growth;
    cfg.dt_max = p.defaults.dt_max;
    cfg.node_stride = p.defaults.dt_growth > 1.0 ? 100 : 1;
    return cfg;
}

struct StepResult {
    SimState state;
    double dt = 0.0;
    int halvings = 0;
    double penalized_before = 0.0;
    double penalized_after = 0.0;
    double energy_after = 0.0;
    /// max |grad E_penalized| at the starting state.
    double residual = 0.0;
    /// Linearized decrease dt * (-grad . z) of the penalized energy.
    double predicted_decrease = 0.0;
};

namespace detail {

inline std::vector<double> interleaved_rhs(const GradReport& grad, double xi) {
    const std::size_t m = grad.dE_du.size();
    std::vector<double> rhs(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        rhs[u_index(i)] = -grad.dE_du[i] / xi;
        rhs[x_index(i)] = -grad.dE_dx[i] / xi;
    }
    return rhs;
}

/// Solves with x'_i forced to zero.
inline std::vector<double> solve_holding_node(BandedMatrix m, std::vector<double> rhs, std::size_t i) {
    const std::size_t row = x_index(i);
    const std::size_t lo = row > m.bandwidth() ? row - m.bandwidth() : 0;
    const std::size_t hi = std::min(m.order() - 1, row + m.bandwidth());
    for (std::size_t j = lo; j <= hi; ++j) {
        m.set(row, j, 0.0);
    }
    m.set(row, row, 1.0);
    rhs[row] = 0.0;
    return solve(m, rhs);
}

}  // namespace detail

/// Rates (u', x') at a state, interleaved (u_1, x_1, u_2, ...). In frozen-mesh
/// mode only the u-block is solved and x' = 0.
///
/// A node sitting on a Dirac source sees a kink of the energy in its position.
/// Its rate uses the one-sided derivative consistent with the direction it
/// would move; if neither side is consistent the node is held in place.
inline std::vector<double> rates(const SimState& s, const ProblemSpec& prob, const RunConfig& cfg,
                                 const GradReport& grad) {
    const std::size_t m = grad.dE_du.size();
    if (cfg.mode == Mode::frozen_mesh) {
        std::vector<double> z(2 * m, 0.0);
        std::vector<double> rhs(m);
        for (std::size_t i = 0; i < m; ++i) rhs[i] = -grad.dE_du[i] / prob.xi;
        const auto zu = solve(mass_matrix(s.fn.partition()), rhs);
        for (std::size_t i = 0; i < m; ++i) z[u_index(i)] = zu[i];
        return z;
    }
    const BandedMatrix mat = assemble(s.fn, cfg.delta);
    const auto pinned = dirac_node(s.fn, prob);
    if (!pinned) {
        return solve(mat, detail::interleaved_rhs(grad, prob.xi));
    }
    const auto i = static_cast<std::size_t>(pinned->k - 1);
    const auto f = factorize(mat);
    require(f.ok, ErrorCode::not_positive_definite,
            "nonpositive pivot at row " + std::to_string(f.failed_at.value_or(0)));
    GradReport one_sided = grad;
    const double smooth_part = grad.dE_dx[i] - pinned->dx_average;

    one_sided.dE_dx[i] = smooth_part + pinned->dx_moving_right;
    auto z = solve(f, detail::interleaved_rhs(one_sided, prob.xi));
    if (z[x_index(i)] > 0.0) {
        return z;
    }
    one_sided.dE_dx[i] = smooth_part + pinned->dx_moving_left;
    z = solve(f, detail::interleaved_rhs(one_sided, prob.xi));
    if (z[x_index(i)] < 0.0) {
        return z;
    }
    return detail::solve_holding_node(mat, detail::interleaved_rhs(grad, prob.xi), i);
}

namespace detail {

/// state + dt * z, or nullopt if the nodes would lose strict ordering. A node
/// that would step across a Dirac location `snap` lands on it instead.
inline std::optional<FreeKnotFn> advance(const FreeKnotFn& fn, std::span<const double> z, double dt,
                                         std::optional<double> snap = std::nullopt) {
    const Partition& p = fn.partition();
    std::vector<double> nodes(p.nodes().begin(), p.nodes().end());
    std::vector<double> values(fn.values().begin(), fn.values().end());
    for (std::size_t i = 0; i + 2 < nodes.size(); ++i) {
        values[i + 1] += dt * z[u_index(i)];
        const double old_x = nodes[i + 1];
        nodes[i + 1] += dt * z[x_index(i)];
        if (snap && (old_x - *snap) * (nodes[i + 1] - *snap) < 0.0) {
            nodes[i + 1] = *snap;
        }
    }
    const double floor = hard_gap_threshold(p);
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        if (!(nodes[i + 1] - nodes[i] >= floor)) {
            return std::nullopt;
        }
    }
    return FreeKnotFn(Partition(std::move(nodes)), std::move(values));
}

}  // namespace detail

namespace detail {

/// Per-step growth of the adaptive step ceiling.
constexpr double ceiling_creep = 1.002;

}  // namespace detail

/// One safeguarded forward Euler step starting from trial step `dt`.
inline StepResult step(const SimState& s, const ProblemSpec& prob, const RunConfig& cfg, double dt) {
    require_nondegenerate(s.fn.partition());
    const GradReport grad = gradient(s, prob, cfg.delta_tilde);
    const auto z = rates(s, prob, cfg, grad);
    const double before = grad.penalized();
    double slope = 0.0;
    for (std::size_t i = 0; i < grad.dE_du.size(); ++i) {
        slope -= grad.dE_du[i] * z[u_index(i)] + grad.dE_dx[i] * z[x_index(i)];
    }
    std::optional<double> snap;
    if (const auto* dirac = std::get_if<DiracSource>(&prob.source); dirac && cfg.mode == Mode::moving) {
        snap = dirac->location;
    }

    for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt, dt *= 0.5) {
        auto candidate = detail::advance(s.fn, z, dt, snap);
        if (!candidate) {
            continue;
        }
        const double e = energy(*candidate, prob);
        const double after = e + penalty_energy(candidate->partition(), cfg.delta_tilde);
        if (after <= before + cfg.energy_slack) {
            return {SimState{s.t + dt, std::move(*candidate)}, dt, attempt, before, after, e, grad.max_abs(),
                    dt * slope};
        }
    }
    throw Error(ErrorCode::step_floor_reached,
                "no acceptable step after " + std::to_string(cfg.max_halvings) + " halvings at t = " +
                    std::to_string(s.t));
}

inline StepResult step(const SimState& s, const ProblemSpec& prob, const RunConfig& cfg) {
    return step(s, prob, cfg, cfg.dt);
}

struct Snapshot {
    double t = 0.0;
    SimState state;
};

struct EnergySample {
    double t = 0.0;
    double penalized = 0.0;
    double energy = 0.0;
};

struct NodeSample {
    double t = 0.0;
    std::vector<double> interior;
};

struct StepStats {
    std::size_t accepted = 0;
    std::size_t halved = 0;  ///< accepted steps that needed at least one halving
    std::size_t halvings = 0;
};

struct Trajectory {
    std::vector<Snapshot> snapshots;
    std::vector<EnergySample> energy_series;
    std::vector<NodeSample> nodes;
    StepStats step_stats;
    StopReason stop_reason = StopReason::horizon;
    std::string message;
    SimState final_state;
    /// max |grad E_penalized| at final_state.
    double final_residual = 0.0;
};

/// Interpolates `initial` on `partition`, with the problem's boundary data at the ends.
template <typename F>
SimState initial_state(const ProblemSpec& prob, F&& initial, const Partition& partition) {
    const FreeKnotFn interp = interpolate(initial, partition);
    std::vector<double> values(interp.values().begin(), interp.values().end());
    values.front() = prob.u_left;
    values.back() = prob.u_right;
    return {0.0, FreeKnotFn(partition, std::move(values))};
}

/// Integrates from `start` until the horizon or stationarity. Step failures end
/// the run with the matching stop reason and the partial trajectory.
inline Trajectory run(const ProblemSpec& prob, const SimState& start, const RunConfig& cfg) {
    prob.validate();
    cfg.validate();

    std::vector<double> pending = cfg.snapshot_times;
    std::sort(pending.begin(), pending.end());
    std::size_t next_snap = 0;

    Trajectory traj{{}, {}, {}, {}, StopReason::horizon, {}, start, 0.0};
    SimState state = start;
    auto record_nodes = [&](const SimState& s) {
        const auto in = s.fn.partition().interior();
        traj.nodes.push_back({s.t, std::vector<double>(in.begin(), in.end())});
    };
    auto take_snapshots = [&](const SimState& s) {
        while (next_snap < pending.size() && pending[next_snap] <= s.t) {
            traj.snapshots.push_back({pending[next_snap], s});
            ++next_snap;
        }
    };

    {
        const double e = energy(state, prob);
        traj.energy_series.push_back({state.t, e + penalty_energy(state.fn.partition(), cfg.delta_tilde), e});
    }
    record_nodes(state);
    take_snapshots(state);

    double trial = cfg.dt;
    double ceiling = cfg.dt_max;
    bool nodes_current = true;
    // Residual level and time of the last halving since the energy test first passed.
    std::optional<std::pair<double, double>> stall_ref;
    while (true) {
        if (cfg.t_end && state.t >= *cfg.t_end) {
            traj.stop_reason = StopReason::horizon;
            break;
        }
        if (traj.step_stats.accepted >= cfg.max_steps) {
            traj.stop_reason = StopReason::step_limit;
            traj.message = "step limit reached";
            break;
        }
        // Land exactly on the horizon and on requested snapshot times.
        double dt = trial;
        std::optional<double> target;
        if (cfg.t_end && state.t + dt >= *cfg.t_end) {
            target = *cfg.t_end;
        }
        if (next_snap < pending.size() && state.t + dt >= pending[next_snap] &&
            (!target || pending[next_snap] < *target)) {
            target = pending[next_snap];
        }
        if (target) {
            dt = *target - state.t;
        }

        std::optional<StepResult> attempt;
        try {
            attempt.emplace(step(state, prob, cfg, dt));
        } catch (const Error& err) {
            traj.stop_reason =
                err.code() == ErrorCode::step_floor_reached ? StopReason::step_floor : StopReason::degenerate;
            traj.message = err.what();
            break;
        }
        StepResult& res = *attempt;
        if (target && res.halvings == 0) {
            res.state.t = *target;
        }

        // Stationary: a full-size step from a state that meets the gradient
        // certificate lowers the energy by less than the tolerance. The run
        // ends on that certified state.
        bool stalled = false;
        if (cfg.stationary_tol && res.halvings == 0 &&
            res.penalized_before - res.penalized_after < *cfg.stationary_tol) {
            const double cert = cfg.certificate_tol * std::max(1.0, std::abs(res.penalized_before));
            if (res.residual <= cert) {
                traj.stop_reason = StopReason::stationary;
                break;
            }
            if (!stall_ref || res.residual <= 0.5 * stall_ref->first) {
                stall_ref = {res.residual, state.t};
            } else if (state.t - stall_ref->second >= cfg.stall_window) {
                stalled = true;
            }
        }

        ++traj.step_stats.accepted;
        if (res.halvings > 0) {
            ++traj.step_stats.halved;
            traj.step_stats.halvings += static_cast<std::size_t>(res.halvings);
        }
        state = std::move(res.state);
        traj.energy_series.push_back({state.t, res.penalized_after, res.energy_after});
        nodes_current = traj.step_stats.accepted % cfg.node_stride == 0;
        if (nodes_current) {
            record_nodes(state);
        }
        take_snapshots(state);
        if (stalled) {
            traj.stop_reason = StopReason::stalled;
            traj.message = "energy decrease below tolerance but the residual stopped improving at " +
                           std::to_string(res.residual);
            break;
        }

        if (cfg.dt_growth > 1.0) {
            // Grow while a step realizes most of its linearized decrease. A step
            // that realizes less than half, or needed halving, has hit the
            // stability limit: the ceiling drops to half of the trial step and
            // then creeps back up, so stiff modes rarely oscillate.
            const double basis = (target && res.halvings == 0) ? std::max(trial, res.dt) : res.dt;
            const double resolvable = 1e-13 * std::max(1.0, std::abs(res.penalized_before));
            double realized = 1.0;
            if (res.predicted_decrease > resolvable) {
                realized = (res.penalized_before - res.penalized_after) / res.predicted_decrease;
            }
            if (res.halvings > 0 || realized < 0.5) {
                ceiling = 0.5 * dt;
                trial = std::min(res.dt, ceiling);
            } else {
                ceiling = std::min(cfg.dt_max, ceiling * detail::ceiling_creep);
                trial = std::min(ceiling, realized >= 0.75 ? basis * cfg.dt_growth : basis);
            }
        } else {
            trial = cfg.dt;
        }
    }

    if (!nodes_current) {
        record_nodes(state);
    }
    traj.final_state = state;
    try {
        traj.final_residual = gradient(state, prob, cfg.delta_tilde).max_abs();
    } catch (const Error&) {
        traj.final_residual = std::numeric_limits<double>::quiet_NaN();
    }
    return traj;
}

/// Integrates a preset from its interpolated initial condition.
inline Trajectory run(const Preset& preset, const RunConfig& cfg) {
    const Partition start = preset.initial_partition(cfg.N);
    return run(preset.problem, initial_state(preset.problem, preset.initial, start), cfg);
}

/// Standard FEM baseline: the partition is held fixed and only A u' = f is solved.
inline Trajectory run_frozen_mesh(const ProblemSpec& prob, const SimState& start, RunConfig cfg) {
    cfg.mode = Mode::frozen_mesh;
    return run(prob, start, cfg);
}

inline Trajectory run_frozen_mesh(const Preset& preset, RunConfig cfg) {
    cfg.mode = Mode::frozen_mesh;
    return run(preset, cfg);
}

}  // namespace movfem
