#pragma once
// Metacognitive control: uncertainty and violation signals, pathway
// arbitration under budget, and reflection-based threshold tuning.

#include "opmend/planner.hpp"

#include <array>
#include <cmath>
#include <deque>

namespace opmend {

enum class Pathway { S1, S2, VERIFY };

inline const char* to_string(Pathway p) {
    switch (p) {
        case Pathway::S1: return "S1";
        case Pathway::S2: return "S2";
        case Pathway::VERIFY: return "VERIFY";
    }
    return "?";
}

// Ten risk-oriented scalars feeding the violation-probability logistic. All
// are encoded so that 0 means benign; the names follow the signal catalogue
// (precondition gap, invariant distance, tool health, novelty, recent
// violations, plan depth, budget slack, uncertainty, value impact, operator
// diversity), with health/slack/distance folded into "pressure" form.
struct SignalFeatures {
    static constexpr size_t kCount = 10;
    std::array<double, kCount> v{};  // all zero -> benign

    double& precondition_gap() { return v[0]; }
    double& invariant_proximity() { return v[1]; }
    double& tool_failure_rate() { return v[2]; }
    double& novelty() { return v[3]; }
    double& recent_violations() { return v[4]; }
    double& plan_depth() { return v[5]; }
    double& budget_pressure() { return v[6]; }
    double& uncertainty() { return v[7]; }
    double& value_impact() { return v[8]; }
    double& operator_churn() { return v[9]; }
};

struct SignalVector {
    double u = 0.0;
    double p_viol = 0.0;
    SignalFeatures features;
};

struct ControllerConfig {
    double tau_u = 0.25;
    double tau_p = 0.20;
    double c_s1 = 0.05;      // seconds, simulated
    double c_verify = 0.2;
    double c_s2 = 1.0;
    double budget = 5.0;
    double ema_alpha = 0.01;
    // 10 feature weights + bias; precondition gap dominates, recent
    // violations second. Hand-set defaults, overridable from config.
    std::array<double, SignalFeatures::kCount> weights{3.0, 0.5, 0.5, 0.5, 2.0,
                                                       0.5, 0.5, 0.5, 0.5, 0.5};
    double bias = -2.0;
    double t_cal = 1.0;
    double nudge = 0.05;     // multiplicative threshold nudge from pathway SR
    size_t reflect_window = 100;

    void validate() const {
        if (!(c_s1 < c_verify && c_verify < c_s2))
            throw ContractViolation("pathway costs must satisfy c_s1 < c_verify < c_s2");
        if (tau_u < 0 || tau_u > 1 || tau_p < 0 || tau_p > 1)
            throw ContractViolation("thresholds must lie in [0,1]");
        if (budget <= 0) throw ContractViolation("budget must be positive");
    }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Grounding-completeness proxy: fraction of plan slots left unbound.
inline double uncertainty(const Plan& grounded_plan) {
    return std::clamp(grounded_plan.unbound_fraction(), 0.0, 1.0);
}

// Calibrated logistic over the 10 features: sigma(w.d / T_cal).
inline double violation_prob(const SignalFeatures& f, const ControllerConfig& cfg) {
    double logit = cfg.bias;
    for (size_t i = 0; i < SignalFeatures::kCount; ++i) {
        if (!std::isfinite(f.v[i]))
            throw ContractViolation("non-finite signal feature at index " + std::to_string(i));
        logit += cfg.weights[i] * f.v[i];
    }
    return sigmoid(logit / cfg.t_cal);
}

// Case order is load-bearing: the verify check dominates deliberation, and
// each escalation requires budget for its own pathway cost.
inline Pathway arbitrate(double u, double p_viol, double budget_remaining,
                         const ControllerConfig& cfg) {
    if (p_viol > cfg.tau_p && budget_remaining >= cfg.c_verify) return Pathway::VERIFY;
    if (u > cfg.tau_u && budget_remaining >= cfg.c_s2) return Pathway::S2;
    return Pathway::S1;
}

struct TaskOutcome {
    double u = 0.0;
    double p_viol = 0.0;
    bool success = true;
    Pathway dominant_pathway = Pathway::S1;
};

namespace detail {

// Nearest-rank quantile (no interpolation).
inline double quantile_nearest_rank(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(xs.size())));
    if (rank == 0) rank = 1;
    return xs[std::min(rank, xs.size()) - 1];
}

inline double pathway_sr(const std::deque<TaskOutcome>& w, Pathway p, bool& defined) {
    size_t n = 0, ok = 0;
    for (const auto& o : w) {
        if (o.dominant_pathway != p) continue;
        ++n;
        if (o.success) ++ok;
    }
    defined = n > 0;
    return defined ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

}  // namespace detail

// Threshold tuning over the trailing task window: EMA toward the 0.8-quantile
// of the failing tasks' signal values, plus a small multiplicative nudge from
// per-pathway success rates. Net movement per call is capped at ema_alpha and
// thresholds stay inside [0.05, 0.95].
class Reflector {
public:
    explicit Reflector(size_t window = 100) : window_(window) {}

    void observe(TaskOutcome o) {
        if (outcomes_.size() == window_) outcomes_.pop_front();
        outcomes_.push_back(o);
    }

    const std::deque<TaskOutcome>& window() const { return outcomes_; }

    void reflect(ControllerConfig& cfg) const {
        std::vector<double> fail_u, fail_p;
        for (const auto& o : outcomes_) {
            if (o.success) continue;
            fail_u.push_back(o.u);
            fail_p.push_back(o.p_viol);
        }
        if (fail_u.empty()) return;  // nothing to learn from
        double target_u = (1.0 - cfg.ema_alpha) * cfg.tau_u +
                          cfg.ema_alpha * detail::quantile_nearest_rank(fail_u, 0.8);
        double target_p = (1.0 - cfg.ema_alpha) * cfg.tau_p +
                          cfg.ema_alpha * detail::quantile_nearest_rank(fail_p, 0.8);
        bool s1_defined = false, s2_defined = false;
        double sr_s1 = detail::pathway_sr(outcomes_, Pathway::S1, s1_defined);
        double sr_s2 = detail::pathway_sr(outcomes_, Pathway::S2, s2_defined);
        double factor = 1.0;
        if (s1_defined && sr_s1 < 0.7) factor = 1.0 + cfg.nudge;
        if (s2_defined && sr_s2 > 0.95) factor = 1.0 - cfg.nudge;
        target_u = std::clamp(target_u * factor, 0.05, 0.95);
        target_p = std::clamp(target_p * factor, 0.05, 0.95);
        cfg.tau_u += std::clamp(target_u - cfg.tau_u, -cfg.ema_alpha, cfg.ema_alpha);
        cfg.tau_p += std::clamp(target_p - cfg.tau_p, -cfg.ema_alpha, cfg.ema_alpha);
    }

private:
    size_t window_;
    std::deque<TaskOutcome> outcomes_;
};

}  // namespace opmend
