#pragma once
// Failure traces and the experience pool that indexes them.

#include "opmend/operators.hpp"

#include <deque>
#include <map>

namespace opmend {

struct ErrorRecord {
    std::string error_class;                      // e.g. "PAY-401", "ToolError:API-V2"
    std::string message;
    std::map<std::string, std::string> evidence;  // key-value diagnostics

    bool operator==(const ErrorRecord&) const = default;
};

// tau = <s_0..t, a_0..t, failed operator, state at failure, error record>
struct FailureTrace {
    std::vector<SymbolicState> states;
    std::vector<PlanStep> actions;       // executed instances, failing one last
    PlanStep failed_step;
    std::string failed_operator;
    SymbolicState state_at_failure;
    ErrorRecord error;
    size_t task_index = 0;
    std::string task_id;

    void validate() const {
        if (error.error_class.empty())
            throw ContractViolation("failure trace with empty error class");
        if (!actions.empty() && actions.back() != failed_step)
            throw ContractViolation("failed operator must equal the last action");
    }
};

// A successful rebinding remembered by the verifier's local repair; reused as
// a micro-patch suggestion on later repairs of the same operator.
struct RepairEvent {
    std::string op_name;
    Binding failed_binding;
    Binding repaired_binding;
};

// Indexed failure traces plus per-operator outcome windows. Retrieval by
// (error class, operator) returns traces in insertion order, so replay sets
// are reproducible run to run. The outcome window (trailing kWindow attempts)
// feeds the systematic-error pre-filter: an empty string marks a clean
// attempt, anything else is the failure class observed on it.
class ExperiencePool {
public:
    static constexpr size_t kWindow = 10;

    explicit ExperiencePool(size_t capacity = 10000) : capacity_(capacity) {}

    void record_attempt(const std::string& op_name) {
        auto& ring = windows_[op_name];
        if (ring.size() == kWindow) ring.pop_front();
        ring.push_back("");
    }

    void record_attempts(const std::string& op_name, size_t n) {
        for (size_t i = 0; i < n; ++i) record_attempt(op_name);
    }

    void record_failure(FailureTrace trace) {
        trace.validate();
        mark_failure(trace.failed_operator, trace.error.error_class);
        if (traces_.size() == capacity_) traces_.pop_front();
        traces_.push_back(std::move(trace));
    }

    void record_repair(RepairEvent ev) { repairs_.push_back(std::move(ev)); }

    size_t attempts(const std::string& op_name) const {
        auto it = windows_.find(op_name);
        return it == windows_.end() ? 0 : it->second.size();
    }

    size_t failures(const std::string& error_class, const std::string& op_name) const {
        auto it = windows_.find(op_name);
        if (it == windows_.end()) return 0;
        size_t n = 0;
        for (const auto& o : it->second)
            if (o == error_class) ++n;
        return n;
    }

    std::vector<const FailureTrace*> retrieve(const std::string& error_class,
                                              const std::string& op_name,
                                              size_t k) const {
        std::vector<const FailureTrace*> out;
        for (const auto& t : traces_) {
            if (out.size() == k) break;
            if (t.error.error_class == error_class && t.failed_operator == op_name)
                out.push_back(&t);
        }
        return out;
    }

    std::vector<const RepairEvent*> repairs_for(const std::string& op_name) const {
        std::vector<const RepairEvent*> out;
        for (const auto& r : repairs_)
            if (r.op_name == op_name) out.push_back(&r);
        return out;
    }

    size_t size() const { return traces_.size(); }
    const std::deque<FailureTrace>& traces() const { return traces_; }

private:
    // The failure corresponds to the most recent clean attempt; with none
    // left, it keeps its own window slot.
    void mark_failure(const std::string& op_name, const std::string& error_class) {
        auto& ring = windows_[op_name];
        for (auto it = ring.rbegin(); it != ring.rend(); ++it) {
            if (it->empty()) {
                *it = error_class;
                return;
            }
        }
        if (ring.size() == kWindow) ring.pop_front();
        ring.push_back(error_class);
    }

    size_t capacity_;
    std::deque<FailureTrace> traces_;
    std::vector<RepairEvent> repairs_;
    std::map<std::string, std::deque<std::string>> windows_;
};

}  // namespace opmend
