#pragma once
// Beta-Bernoulli reliability tracking for committed patches, optimistic prior
// (alpha, beta) = (2, 1) so a fresh commit starts at rho = 2/3.

#include <cstddef>

namespace opmend {

struct TrustCounters {
    size_t s = 0;  // successes
    size_t f = 0;  // failures
    double alpha = 2.0;
    double beta = 1.0;

    double rho() const {
        return (static_cast<double>(s) + alpha) /
               (static_cast<double>(s + f) + alpha + beta);
    }

    size_t observations() const { return s + f; }

    bool operator==(const TrustCounters&) const = default;
};

// A committed patch that keeps failing gets flagged for automatic rollback:
// rho under 0.3 across at least ten post-commit outcomes.
inline bool rollback_flagged(const TrustCounters& t, size_t min_tasks = 10,
                             double threshold = 0.3) {
    return t.observations() >= min_tasks && t.rho() < threshold;
}

}  // namespace opmend
