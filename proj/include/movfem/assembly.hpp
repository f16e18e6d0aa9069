#pragma once

/// Dissipation matrix of the moving-mesh system.
///
/// With rates (u', x') the dissipation is (xi/2) int (sum u'_k phi_k + x'_k beta_k)^2,
/// whose Gram blocks are
///
///     A = [int phi_i phi_j],  B = [int phi_i beta_j],  C = [int beta_i beta_j],
///
/// all tridiagonal. The stabilized matrix M_delta = [[A, B], [B, C + delta I]] is
/// stored with the unknowns interleaved as (u_1, x_1, u_2, x_2, ...), which
/// gives half-bandwidth 3, and factored by banded Cholesky.

#include "movfem/error.hpp"
#include "movfem/mesh_space.hpp"
#include "movfem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace movfem {

/// Symmetric tridiagonal matrix; off[i] is entry (i, i+1).
struct Tridiagonal {
    std::vector<double> diag;
    std::vector<double> off;

    explicit Tridiagonal(std::size_t n = 0) : diag(n, 0.0), off(n > 0 ? n - 1 : 0, 0.0) {}

    [[nodiscard]] std::size_t size() const noexcept { return diag.size(); }

    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const {
        if (i == j) return diag[i];
        if (i + 1 == j) return off[i];
        if (j + 1 == i) return off[j];
        return 0.0;
    }
};

struct BlockSystem {
    Tridiagonal A;
    Tridiagonal B;
    Tridiagonal C;
    double delta = 0.0;
};

/// Symmetric band matrix; only the lower band is stored.
class BandedMatrix {
public:
    BandedMatrix(std::size_t order, std::size_t bandwidth)
        : order_(order), bandwidth_(bandwidth), bands_(order * (bandwidth + 1), 0.0) {}

    [[nodiscard]] std::size_t order() const noexcept { return order_; }
    [[nodiscard]] std::size_t bandwidth() const noexcept { return bandwidth_; }

    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const {
        if (i < j) std::swap(i, j);
        if (i - j > bandwidth_) return 0.0;
        return bands_[i * (bandwidth_ + 1) + (i - j)];
    }

    /// Sets (i, j) and, implicitly, (j, i).
    void set(std::size_t i, std::size_t j, double value) {
        if (i < j) std::swap(i, j);
        require(i - j <= bandwidth_, ErrorCode::index_out_of_range,
                "entry (" + std::to_string(i) + ", " + std::to_string(j) + ") outside band");
        bands_[i * (bandwidth_ + 1) + (i - j)] = value;
    }

    [[nodiscard]] std::vector<double> multiply(std::span<const double> y) const {
        std::vector<double> out(order_, 0.0);
        for (std::size_t i = 0; i < order_; ++i) {
            const std::size_t lo = i > bandwidth_ ? i - bandwidth_ : 0;
            const std::size_t hi = std::min(order_ - 1, i + bandwidth_);
            for (std::size_t j = lo; j <= hi; ++j) {
                out[i] += (*this)(i, j) * y[j];
            }
        }
        return out;
    }

private:
    std::size_t order_;
    std::size_t bandwidth_;
    std::vector<double> bands_;
};

/// Mass matrix of the interior hats, closed form.
inline Tridiagonal mass_matrix(const Partition& p) {
    require_nondegenerate(p);
    const int n = p.elements();
    Tridiagonal a(static_cast<std::size_t>(n - 1));
    for (int k = 1; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k - 1);
        a.diag[i] = (p.h(k - 1) + p.h(k)) / 3.0;
        if (k < n - 1) {
            a.off[i] = p.h(k) / 6.0;
        }
    }
    return a;
}

namespace detail {

/// Adds element-wise Gauss integrals of hat products weighted by the
/// element factors wl (for the left node's function) and wr (right node's).
/// For phi-phi both are 1, for phi-beta one side is -s_e, for beta-beta s_e^2.
template <typename Weight>
Tridiagonal assemble_gram(const FreeKnotFn& fn, Weight&& weight) {
    const Partition& p = fn.partition();
    require_nondegenerate(p);
    const int n = p.elements();
    const auto& rule = quad::gauss3();
    Tridiagonal m(static_cast<std::size_t>(n - 1));
    for (int e = 0; e < n; ++e) {
        const double h = p.h(e);
        const double factor = weight(fn.slope(e));
        double ll = 0.0;
        double lr = 0.0;
        double rr = 0.0;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double t = rule.nodes[q];
            ll += rule.weights[q] * (1.0 - t) * (1.0 - t);
            lr += rule.weights[q] * (1.0 - t) * t;
            rr += rule.weights[q] * t * t;
        }
        ll *= factor * h;
        lr *= factor * h;
        rr *= factor * h;
        const int left = e;       // node at the element's left end
        const int right = e + 1;  // node at its right end
        if (left >= 1) {
            m.diag[static_cast<std::size_t>(left - 1)] += ll;
        }
        if (right <= n - 1) {
            m.diag[static_cast<std::size_t>(right - 1)] += rr;
        }
        if (left >= 1 && right <= n - 1) {
            m.off[static_cast<std::size_t>(left - 1)] += lr;
        }
    }
    return m;
}

}  // namespace detail

/// B = [int phi_i beta_j]. Symmetric because beta_j = -s_e phi_j elementwise.
inline Tridiagonal coupling_matrix(const FreeKnotFn& fn) {
    return detail::assemble_gram(fn, [](double s) { return -s; });
}

/// C = [int beta_i beta_j].
inline Tridiagonal position_matrix(const FreeKnotFn& fn) {
    return detail::assemble_gram(fn, [](double s) { return s * s; });
}

inline BlockSystem block_system(const FreeKnotFn& fn, double delta) {
    require(delta >= 0.0, ErrorCode::invalid_argument, "delta must be >= 0");
    return {mass_matrix(fn.partition()), coupling_matrix(fn), position_matrix(fn), delta};
}

inline constexpr std::size_t u_index(std::size_t i) noexcept { return 2 * i; }
inline constexpr std::size_t x_index(std::size_t i) noexcept { return 2 * i + 1; }

/// M_delta in interleaved banded storage.
inline BandedMatrix assemble(const BlockSystem& sys) {
    const std::size_t m = sys.A.size();
    BandedMatrix out(2 * m, 3);
    for (std::size_t i = 0; i < m; ++i) {
        out.set(u_index(i), u_index(i), sys.A.diag[i]);
        out.set(x_index(i), u_index(i), sys.B.diag[i]);
        out.set(x_index(i), x_index(i), sys.C.diag[i] + sys.delta);
        if (i + 1 < m) {
            out.set(u_index(i + 1), u_index(i), sys.A.off[i]);
            out.set(x_index(i + 1), u_index(i), sys.B.off[i]);
            out.set(u_index(i + 1), x_index(i), sys.B.off[i]);
            out.set(x_index(i + 1), x_index(i), sys.C.off[i]);
        }
    }
    return out;
}

inline BandedMatrix assemble(const FreeKnotFn& fn, double delta) { return assemble(block_system(fn, delta)); }

/// Banded Cholesky factor L (M = L L^T) plus the pivots d_j = L_jj^2.
struct CholeskyFactor {
    BandedMatrix lower;
    std::vector<double> pivots;
    bool ok = false;
    std::optional<std::size_t> failed_at;
};

/// Factorizes without pivoting. A pivot <= 1e-14 * max |diag| marks failure.
inline CholeskyFactor factorize(const BandedMatrix& m) {
    const std::size_t n = m.order();
    const std::size_t bw = m.bandwidth();
    CholeskyFactor f{BandedMatrix(n, bw), {}, false, std::nullopt};
    f.pivots.reserve(n);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        scale = std::max(scale, std::abs(m(i, i)));
    }
    const double floor = 1e-14 * scale;
    BandedMatrix& l = f.lower;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t lo = j > bw ? j - bw : 0;
        double d = m(j, j);
        for (std::size_t k = lo; k < j; ++k) {
            d -= l(j, k) * l(j, k);
        }
        f.pivots.push_back(d);
        if (!(d > floor)) {
            f.failed_at = j;
            return f;
        }
        const double root = std::sqrt(d);
        l.set(j, j, root);
        const std::size_t hi = std::min(n - 1, j + bw);
        for (std::size_t i = j + 1; i <= hi; ++i) {
            const std::size_t lo_i = i > bw ? i - bw : 0;
            double v = m(i, j);
            for (std::size_t k = std::max(lo, lo_i); k < j; ++k) {
                v -= l(i, k) * l(j, k);
            }
            l.set(i, j, v / root);
        }
    }
    f.ok = true;
    return f;
}

inline std::vector<double> solve(const CholeskyFactor& f, std::span<const double> rhs) {
    require(f.ok, ErrorCode::not_positive_definite, "cannot solve with a failed factorization");
    const BandedMatrix& l = f.lower;
    const std::size_t n = l.order();
    const std::size_t bw = l.bandwidth();
    require(rhs.size() == n, ErrorCode::invalid_size, "rhs size mismatch");
    std::vector<double> z(rhs.begin(), rhs.end());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > bw ? i - bw : 0;
        for (std::size_t k = lo; k < i; ++k) {
            z[i] -= l(i, k) * z[k];
        }
        z[i] /= l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        const std::size_t hi = std::min(n - 1, i + bw);
        for (std::size_t k = i + 1; k <= hi; ++k) {
            z[i] -= l(k, i) * z[k];
        }
        z[i] /= l(i, i);
    }
    return z;
}

/// Solves M z = rhs; throws not_positive_definite when factorization fails.
inline std::vector<double> solve(const BandedMatrix& m, std::span<const double> rhs) {
    const auto f = factorize(m);
    require(f.ok, ErrorCode::not_positive_definite,
            "nonpositive pivot at row " + std::to_string(f.failed_at.value_or(0)));
    return solve(f, rhs);
}

/// Tridiagonal SPD solve (used for the frozen-mesh u-block).
inline std::vector<double> solve(const Tridiagonal& a, std::span<const double> rhs) {
    BandedMatrix m(a.size(), 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        m.set(i, i, a.diag[i]);
        if (i + 1 < a.size()) m.set(i + 1, i, a.off[i]);
    }
    return solve(m, rhs);
}

}  // namespace movfem
