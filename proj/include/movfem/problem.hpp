#pragma once

/// Gradient-flow problem family
///
///     xi u_t = alpha u_xx - f(x, u) + g,     f = dF/du,
///
/// on (a, b) with Dirichlet data, i.e. the L2 gradient flow of
///
///     E(u) = int alpha/2 u_x^2 + F(x, u) dx - <g, u>.
///
/// The source g is either absent, a smooth function, or a weighted Dirac mass.

#include "movfem/error.hpp"
#include "movfem/mesh_space.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace movfem {

using PointFn = std::function<double(double x, double u)>;

/// Reaction energy density F with its u-derivatives f = F_u and fu = f_u.
struct ReactionTerm {
    PointFn F;
    PointFn f;
    PointFn fu;

    static ReactionTerm none() {
        auto zero = [](double, double) { return 0.0; };
        return {zero, zero, zero};
    }
};

struct NoSource {};

struct SmoothSource {
    std::function<double(double x)> g;
};

struct DiracSource {
    double location = 0.0;
    double weight = 1.0;
};

using SourceTerm = std::variant<NoSource, SmoothSource, DiracSource>;

/// Reference solution used for error measurement.
struct ExactSolution {
    std::function<double(double t, double x)> value;
    std::function<double(double t, double x)> x_derivative;
    std::vector<double> breakpoints;        ///< points where x_derivative jumps
    std::optional<double> stationary_energy;
    bool time_independent = false;
};

struct ProblemSpec {
    double alpha = 1.0;
    double xi = 1.0;
    ReactionTerm reaction = ReactionTerm::none();
    SourceTerm source = NoSource{};
    double a = 0.0;
    double b = 1.0;
    double u_left = 0.0;
    double u_right = 0.0;
    std::optional<double> lipschitz_L0;

    void validate() const {
        require(alpha > 0.0, ErrorCode::invalid_argument, "alpha must be positive");
        require(xi > 0.0, ErrorCode::invalid_argument, "xi must be positive");
        require(a < b, ErrorCode::invalid_bounds, "problem domain requires a < b");
        if (const auto* dirac = std::get_if<DiracSource>(&source)) {
            require(dirac->location > a && dirac->location < b, ErrorCode::invalid_argument,
                    "dirac location must lie strictly inside the domain");
        }
        if (lipschitz_L0) {
            require(*lipschitz_L0 >= 0.0, ErrorCode::invalid_argument, "lipschitz constant must be >= 0");
        }
    }
};

/// Allen-Cahn double well scaled by the interface width eps.
inline ReactionTerm reaction_allen_cahn(double eps) {
    require(eps > 0.0, ErrorCode::nonpositive_epsilon, "allen-cahn epsilon must be positive");
    return {
        [eps](double, double u) { return (1.0 - u * u) * (1.0 - u * u) / (4.0 * eps); },
        [eps](double, double u) { return (u * u * u - u) / eps; },
        [eps](double, double u) { return (3.0 * u * u - 1.0) / eps; },
    };
}

/// Suggested run parameters that come with a preset.
struct PresetDefaults {
    double dt = 1e-5;
    double delta = 1e-4;
    double delta_tilde = 0.01;
    std::optional<double> t_end;
    std::optional<double> stationary_tol;
    std::vector<double> snapshot_times;
    /// Trial step growth after an accepted step; 1 keeps dt fixed.
    double dt_growth = 1.0;
    double dt_max = 1e-5;
};

struct Preset {
    std::string name;
    ProblemSpec problem;
    std::function<double(double x)> initial;
    std::function<Partition(int n)> initial_partition;
    std::optional<ExactSolution> exact;
    PresetDefaults defaults;
};

namespace detail {

inline Preset example1() {
    constexpr double pi = std::numbers::pi;
    constexpr double kink = 0.5;
    Preset p;
    p.name = "example1";
    p.problem.alpha = 1.0;
    p.problem.xi = 1.0;
    // The hat part x (x < 1/2), 1 - x (x > 1/2) has a slope jump of -2, so the
    // Dirac weight must be 2 for the stated closed form to solve the equation.
    p.problem.source = DiracSource{kink, 2.0};
    p.problem.a = 0.0;
    p.problem.b = 1.0;
    const auto hat_part = [](double x) { return x < kink ? x : 1.0 - x; };
    const auto hat_slope = [](double x) { return x < kink ? 1.0 : -1.0; };
    p.initial = [hat_part](double x) { return std::sin(pi * x) + hat_part(x); };
    p.initial_partition = [](int n) { return make_uniform_partition(0.0, 1.0, n); };
    ExactSolution exact;
    exact.value = [hat_part](double t, double x) {
        return std::sin(pi * x) * std::exp(-pi * pi * t) + hat_part(x);
    };
    exact.x_derivative = [hat_slope](double t, double x) {
        return pi * std::cos(pi * x) * std::exp(-pi * pi * t) + hat_slope(x);
    };
    exact.breakpoints = {kink};
    p.exact = exact;
    p.defaults.dt = 1e-5;
    p.defaults.dt_max = 1e-5;
    p.defaults.delta = 1e-4;
    p.defaults.delta_tilde = 0.01;
    p.defaults.t_end = 0.04;
    p.defaults.snapshot_times = {0.0, 0.0012, 0.0024, 0.0036, 0.0048, 0.006, 0.009, 0.014, 0.04};
    return p;
}

inline Preset example2() {
    constexpr double pi = std::numbers::pi;
    Preset p;
    p.name = "example2";
    p.problem.a = -3.0;
    p.problem.b = 3.0;
    p.initial = [](double x) {
        return (std::exp(-x * x / 0.004) - std::exp(-9.0 / 0.004)) / std::sqrt(0.004 * pi);
    };
    // Boundary nodes at -3, 3 and N-1 nodes evenly spread over [-0.2, 0.2].
    p.initial_partition = [](int n) {
        require(n >= 3, ErrorCode::invalid_size, "example2 needs N >= 3");
        std::vector<double> nodes;
        nodes.reserve(static_cast<std::size_t>(n) + 1);
        nodes.push_back(-3.0);
        for (int i = 0; i <= n - 2; ++i) {
            nodes.push_back(-0.2 + i * 0.4 / (n - 2));
        }
        nodes.push_back(3.0);
        return Partition(std::move(nodes));
    };
    p.defaults.dt = 1e-5;
    p.defaults.dt_max = 1e-5;
    p.defaults.delta = 1e-4;
    p.defaults.delta_tilde = 0.01;
    p.defaults.t_end = 0.2;
    p.defaults.snapshot_times = {0.0, 0.001, 0.005, 0.02, 0.1, 0.2};
    return p;
}

inline Preset allen_cahn(double eps) {
    Preset p;
    p.name = "allen_cahn";
    p.problem.alpha = eps;
    p.problem.xi = 1.0;
    p.problem.reaction = reaction_allen_cahn(eps);
    p.problem.a = 0.0;
    p.problem.b = 1.0;
    p.problem.u_left = -1.0;
    p.problem.u_right = 1.0;
    p.problem.lipschitz_L0 = std::nullopt;
    p.initial = [](double x) { return 2.0 * (x - 0.5); };
    p.initial_partition = [](int n) { return make_uniform_partition(0.0, 1.0, n); };
    const double width = std::numbers::sqrt2 * eps;
    ExactSolution exact;
    exact.value = [width](double, double x) { return std::tanh((x - 0.5) / width); };
    exact.x_derivative = [width](double, double x) {
        const double c = std::cosh((x - 0.5) / width);
        return 1.0 / (width * c * c);
    };
    exact.stationary_energy = 2.0 * std::numbers::sqrt2 / 3.0;
    exact.time_independent = true;
    p.exact = exact;
    p.defaults.dt = 1e-5 * eps;
    p.defaults.dt_max = 1.0;
    p.defaults.dt_growth = 1.1;
    p.defaults.delta = 1e-4;
    p.defaults.delta_tilde = 1e-4;
    p.defaults.stationary_tol = 1e-10;
    return p;
}

inline Preset linear_diffusion() {
    constexpr double pi = std::numbers::pi;
    Preset p;
    p.name = "linear_diffusion";
    p.initial = [](double x) { return std::sin(pi * x); };
    p.initial_partition = [](int n) { return make_uniform_partition(0.0, 1.0, n); };
    ExactSolution exact;
    exact.value = [](double t, double x) { return std::sin(pi * x) * std::exp(-pi * pi * t); };
    exact.x_derivative = [](double t, double x) { return pi * std::cos(pi * x) * std::exp(-pi * pi * t); };
    p.exact = exact;
    p.defaults.t_end = 0.04;
    p.defaults.delta_tilde = 0.01;
    return p;
}

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"example1", "example2", "example3",
                                                   "example4", "allen_cahn", "linear_diffusion"};
    return names;
}

/// Looks up a preset. `allen_cahn` takes its interface width from `eps`;
/// `allen_cahn(0.02)` is also accepted.
inline Preset preset(std::string_view name, std::optional<double> eps = std::nullopt) {
    if (name == "example1") {
        return detail::example1();
    }
    if (name == "example2") {
        return detail::example2();
    }
    if (name == "example3") {
        auto p = detail::allen_cahn(0.05);
        p.name = "example3";
        return p;
    }
    if (name == "example4") {
        auto p = detail::allen_cahn(0.01);
        p.name = "example4";
        return p;
    }
    if (name == "linear_diffusion") {
        return detail::linear_diffusion();
    }
    if (name == "allen_cahn") {
        require(eps.has_value(), ErrorCode::invalid_argument, "allen_cahn preset needs epsilon");
        return detail::allen_cahn(*eps);
    }
    if (name.starts_with("allen_cahn(") && name.ends_with(")")) {
        const std::string inner(name.substr(11, name.size() - 12));
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(inner, &used);
            require(used == inner.size(), ErrorCode::unknown_preset, std::string(name));
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::unknown_preset, std::string(name));
        }
        return detail::allen_cahn(value);
    }
    throw Error(ErrorCode::unknown_preset, std::string(name));
}

}  // namespace movfem
