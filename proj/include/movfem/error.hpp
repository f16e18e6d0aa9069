#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace movfem {

/// Failure categories surfaced by the library. Each maps to one error path
/// of a public operation.
enum class ErrorCode {
    invalid_bounds,
    invalid_size,
    out_of_domain,
    index_out_of_range,
    degenerate_mesh,
    unknown_preset,
    nonpositive_epsilon,
    invalid_argument,
    perturbation_breaks_ordering,
    not_positive_definite,
    step_floor_reached,
    nonpositive_error,
    config_error,
    io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_bounds: return "invalid-bounds";
        case ErrorCode::invalid_size: return "invalid-size";
        case ErrorCode::out_of_domain: return "out-of-domain";
        case ErrorCode::index_out_of_range: return "index-out-of-range";
        case ErrorCode::degenerate_mesh: return "degenerate-mesh";
        case ErrorCode::unknown_preset: return "unknown-preset";
        case ErrorCode::nonpositive_epsilon: return "nonpositive-epsilon";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::perturbation_breaks_ordering: return "perturbation-breaks-ordering";
        case ErrorCode::not_positive_definite: return "not-positive-definite";
        case ErrorCode::step_floor_reached: return "step-floor-reached";
        case ErrorCode::nonpositive_error: return "nonpositive-error";
        case ErrorCode::config_error: return "config-error";
        case ErrorCode::io_error: return "io-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) {
        throw Error(code, what);
    }
}

}  // namespace movfem
