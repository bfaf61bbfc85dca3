#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace bishadow {

enum class errc {
    tube_escape,
    radius_exceeded,
    component_mismatch,
    out_of_domain,
    parameter_domain,
    magnitude_violation,
    degenerate_splitting,
    certification_failure,
    infeasible_constants,
    target_out_of_range,
    newton_divergence,
    non_convergence,
    bound_violation,
    schedule_exhaustion,
    envelope_violation,
    empty_tail,
    singular_system,
    precondition,
    config,
};

inline const char* to_string(errc code)
{
    switch (code) {
    case errc::tube_escape: return "tube-escape";
    case errc::radius_exceeded: return "radius-exceeded";
    case errc::component_mismatch: return "component-mismatch";
    case errc::out_of_domain: return "out-of-domain";
    case errc::parameter_domain: return "parameter-domain";
    case errc::magnitude_violation: return "magnitude-violation";
    case errc::degenerate_splitting: return "degenerate-splitting";
    case errc::certification_failure: return "certification-failure";
    case errc::infeasible_constants: return "infeasible-constants";
    case errc::target_out_of_range: return "target-out-of-range";
    case errc::newton_divergence: return "newton-divergence";
    case errc::non_convergence: return "non-convergence";
    case errc::bound_violation: return "bound-violation";
    case errc::schedule_exhaustion: return "schedule-exhaustion";
    case errc::envelope_violation: return "envelope-violation";
    case errc::empty_tail: return "empty-tail";
    case errc::singular_system: return "singular-system";
    case errc::precondition: return "precondition";
    case errc::config: return "config";
    }
    return "unknown";
}

/// Every failure raised by the library. `index()` names the sequence index
/// at which the problem was detected, when there is one.
class error : public std::runtime_error {
public:
    error(errc code, const std::string& what, std::optional<long> index = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
        , index_(index)
    {
    }

    errc code() const noexcept { return code_; }
    std::optional<long> index() const noexcept { return index_; }

private:
    errc code_;
    std::optional<long> index_;
};

/// An error that also carries the partially computed value, so callers can
/// still report what was found (a failed certificate, a solve whose bound
/// check failed).
template<typename Payload>
class error_with : public error {
public:
    error_with(errc code, const std::string& what, Payload payload, std::optional<long> index = std::nullopt)
        : error(code, what, index)
        , payload_(std::move(payload))
    {
    }

    const Payload& payload() const noexcept { return payload_; }

private:
    Payload payload_;
};

} // namespace bishadow
