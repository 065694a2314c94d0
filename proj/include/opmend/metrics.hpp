#pragma once
// Benchmark metrics: repeat-failure rate over a trailing window, time-to-adapt
// per failure class, and the Monte Carlo check of the geometric TTA bound.

#include "opmend/agent.hpp"

#include <cmath>
#include <random>

namespace opmend {

// RFR over the trailing `window` tasks: failures whose error class appeared in
// any earlier failure, as a percentage of window failures. The terminal
// variant counts only failures of tasks that ended unrecovered.
inline double metric_rfr(const std::vector<TaskRecord>& records, size_t window = 100,
                         bool terminal_only = false) {
    size_t begin = records.size() > window ? records.size() - window : 0;
    std::set<std::string> seen_before;
    for (size_t i = 0; i < begin; ++i)
        for (const auto& f : records[i].failures)
            if (!terminal_only || !records[i].success) seen_before.insert(f.error_class);

    size_t failures = 0, repeats = 0;
    std::set<std::string> seen = seen_before;
    for (size_t i = begin; i < records.size(); ++i) {
        for (const auto& f : records[i].failures) {
            if (terminal_only && records[i].success) continue;
            ++failures;
            if (seen.count(f.error_class)) ++repeats;
            seen.insert(f.error_class);
        }
    }
    if (failures == 0) return 0.0;
    return 100.0 * static_cast<double>(repeats) / static_cast<double>(failures);
}

struct TtaResult {
    enum class Kind { VALUE, INFINITE, UNDEFINED } kind = Kind::UNDEFINED;
    long value = 0;

    bool operator==(const TtaResult&) const = default;

    std::string str() const {
        switch (kind) {
            case Kind::VALUE: return std::to_string(value);
            case Kind::INFINITE: return "inf";
            case Kind::UNDEFINED: return "n/a";
        }
        return "?";
    }
};

// Commit-based TTA: tasks from the first observation of the class to the
// first committed repair for it. Never repaired -> infinite; never observed
// -> undefined (distinct from infinite).
inline TtaResult metric_tta(const std::vector<TaskRecord>& records,
                            const std::string& error_class) {
    TtaResult r;
    long t_first = -1, t_adapt = -1;
    for (const auto& rec : records) {
        bool observed = std::any_of(rec.failures.begin(), rec.failures.end(),
                                    [&](const TaskFailure& f) {
                                        return f.error_class == error_class;
                                    });
        if (observed && t_first < 0) t_first = static_cast<long>(rec.index);
        bool committed = std::any_of(rec.commits.begin(), rec.commits.end(),
                                     [&](const CommitRecord& c) {
                                         return c.error_class == error_class;
                                     });
        if (committed && t_adapt < 0) t_adapt = static_cast<long>(rec.index);
    }
    if (t_first < 0) return r;  // undefined
    if (t_adapt < 0) {
        r.kind = TtaResult::Kind::INFINITE;
        return r;
    }
    r.kind = TtaResult::Kind::VALUE;
    r.value = t_adapt - t_first;
    return r;
}

struct TtaBoundCheck {
    long bound = 0;
    long empirical_quantile = 0;
    double p_success = 0.0;
    bool holds = false;
};

// Adaptation as a geometric process with per-task success probability
// p_detect * (1 - eps); the (1-delta) quantile of sampled first-success times
// must stay within ceil(ln(1/delta) / p).
inline TtaBoundCheck tta_bound_check(double p_detect, double eps, double delta,
                                     size_t trials, uint64_t seed = 1337) {
    if (p_detect <= 0 || p_detect > 1 || eps < 0 || eps >= 1 || delta <= 0 || delta >= 1)
        throw ContractViolation("tta bound parameters out of range");
    TtaBoundCheck out;
    out.p_success = p_detect * (1.0 - eps);
    out.bound = static_cast<long>(std::ceil(std::log(1.0 / delta) / out.p_success));
    std::mt19937_64 rng(seed);
    std::geometric_distribution<long> geom(out.p_success);  // failures before success
    std::vector<long> samples(trials);
    for (auto& s : samples) s = geom(rng) + 1;
    std::sort(samples.begin(), samples.end());
    size_t rank = static_cast<size_t>(
        std::ceil((1.0 - delta) * static_cast<double>(samples.size())));
    if (rank == 0) rank = 1;
    out.empirical_quantile = samples[std::min(rank, samples.size()) - 1];
    out.holds = out.empirical_quantile <= out.bound;
    return out;
}

}  // namespace opmend
