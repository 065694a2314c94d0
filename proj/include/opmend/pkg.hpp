#pragma once
// Process knowledge graph: the versioned store of operators and HTN
// decomposition methods. The version counter moves strictly forward on every
// structural change, commits and rollbacks alike.

#include "opmend/operators.hpp"
#include "opmend/patch.hpp"

#include <map>

namespace opmend {

// One decomposition template: task -> ordered steps. A step names either an
// operator or a sub-task; args refer to method params by name or are literals.
struct MethodStep {
    std::string name;
    bool is_task = false;
    std::vector<std::string> args;
    bool operator==(const MethodStep&) const = default;
};

struct Method {
    std::string task;
    std::string name;
    std::vector<Param> params;
    std::vector<MethodStep> steps;
    bool operator==(const Method&) const = default;
};

class ProcessKnowledgeGraph {
public:
    static constexpr int kMaxDepth = 5;
    static constexpr size_t kMaxBranching = 4;

    void add_operator(Operator op) {
        op.validate();
        if (operators_.count(op.name))
            throw ContractViolation("duplicate operator '" + op.name + "'");
        operators_.emplace(op.name, std::move(op));
    }

    void add_method(Method m) {
        if (m.steps.size() > kMaxBranching)
            throw ContractViolation("method '" + m.name + "' exceeds branching bound " +
                                    std::to_string(kMaxBranching));
        methods_[m.task].push_back(std::move(m));
        // Deterministic method order: lexicographic by method name.
        auto& v = methods_.rbegin()->second;
        (void)v;
    }

    void finalize() {
        for (auto& [task, ms] : methods_)
            std::sort(ms.begin(), ms.end(),
                      [](const Method& a, const Method& b) { return a.name < b.name; });
    }

    bool has_operator(const std::string& name) const { return operators_.count(name) > 0; }

    const Operator& op(const std::string& name) const {
        auto it = operators_.find(name);
        if (it == operators_.end())
            throw ContractViolation("unknown operator '" + name + "'");
        return it->second;
    }

    const std::map<std::string, Operator>& operators() const { return operators_; }

    bool has_task(const std::string& task) const { return methods_.count(task) > 0; }

    const std::vector<Method>& methods_for(const std::string& task) const {
        static const std::vector<Method> empty;
        auto it = methods_.find(task);
        return it == methods_.end() ? empty : it->second;
    }

    uint64_t version() const { return version_; }

    // The only mutation paths after load. Both bump the version.
    void apply(const Patch& patch) {
        auto it = operators_.find(patch.scope);
        if (it == operators_.end())
            throw ContractViolation("patch scope '" + patch.scope + "' names no operator");
        it->second = apply_patch(it->second, patch);
        ++version_;
    }

    void apply_all(const std::vector<Patch>& patches) {
        // A rollback set counts as one structural change.
        for (const auto& p : patches) {
            auto it = operators_.find(p.scope);
            if (it == operators_.end())
                throw ContractViolation("patch scope '" + p.scope + "' names no operator");
            it->second = apply_patch(it->second, p);
        }
        ++version_;
    }

    bool operator==(const ProcessKnowledgeGraph&) const = default;

private:
    std::map<std::string, Operator> operators_;
    std::map<std::string, std::vector<Method>> methods_;
    uint64_t version_ = 1;
};

}  // namespace opmend
