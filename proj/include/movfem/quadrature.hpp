#pragma once

#include <array>
#include <cmath>

namespace movfem::quad {

/// Gauss-Legendre rule mapped to the reference interval [0, 1].
template <std::size_t Points>
struct GaussRule {
    std::array<double, Points> nodes;
    std::array<double, Points> weights;
};

/// 3-point rule: exact for polynomials of degree <= 5.
inline const GaussRule<3>& gauss3() {
    static const GaussRule<3> rule = [] {
        const double r = std::sqrt(3.0 / 5.0);
        GaussRule<3> g{};
        g.nodes = {0.5 * (1.0 - r), 0.5, 0.5 * (1.0 + r)};
        g.weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
        return g;
    }();
    return rule;
}

/// 5-point rule: exact for polynomials of degree <= 9.
inline const GaussRule<5>& gauss5() {
    static const GaussRule<5> rule = [] {
        const double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
        const double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
        const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
        const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
        GaussRule<5> g{};
        g.nodes = {0.5 * (1.0 - b), 0.5 * (1.0 - a), 0.5, 0.5 * (1.0 + a), 0.5 * (1.0 + b)};
        g.weights = {0.5 * wb, 0.5 * wa, 0.5 * 128.0 / 225.0, 0.5 * wa, 0.5 * wb};
        return g;
    }();
    return rule;
}

/// Integrates `f` over [lo, hi] with `rule`, split into `panels` equal pieces.
template <std::size_t Points, typename F>
double integrate(const GaussRule<Points>& rule, double lo, double hi, F&& f, int panels = 1) {
    const double width = (hi - lo) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double left = lo + p * width;
        double panel = 0.0;
        for (std::size_t q = 0; q < Points; ++q) {
            panel += rule.weights[q] * f(left + rule.nodes[q] * width);
        }
        sum += panel * width;
    }
    return sum;
}

}  // namespace movfem::quad
