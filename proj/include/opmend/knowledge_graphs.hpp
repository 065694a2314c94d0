#pragma once
// Value knowledge graph (deontic rules) and causal graph (identifiability /
// impact structure). Both are read-only inputs to the guardrails.

#include "opmend/core.hpp"

#include <map>
#include <set>

namespace opmend {

enum class Modality { Obligatory, Prohibited, Permitted };

inline const char* to_string(Modality m) {
    switch (m) {
        case Modality::Obligatory: return "Obligatory";
        case Modality::Prohibited: return "Prohibited";
        case Modality::Permitted: return "Permitted";
    }
    return "?";
}

// <action, modality, condition>: condition is a predicate conjunction.
struct ValueRule {
    std::string action;
    Modality modality = Modality::Permitted;
    std::vector<Predicate> condition;
    bool operator==(const ValueRule&) const = default;
};

using ValueGraph = std::vector<ValueRule>;

// Directed cause -> effect links with a per-edge identifiability flag.
struct CausalEdge {
    std::string from;
    std::string to;
    bool identifiable = true;
    bool operator==(const CausalEdge&) const = default;
};

class CausalGraph {
public:
    void add_node(std::string id) { nodes_.insert(std::move(id)); }

    void add_edge(CausalEdge e) {
        if (e.from == e.to)
            throw ContractViolation("causal graph self-loop on '" + e.from + "'");
        nodes_.insert(e.from);
        nodes_.insert(e.to);
        edges_.push_back(std::move(e));
    }

    bool has_node(const std::string& id) const { return nodes_.count(id) > 0; }
    size_t node_count() const { return nodes_.size(); }
    const std::vector<CausalEdge>& edges() const { return edges_; }

    // Nodes strictly reachable from `start` (start itself excluded).
    std::set<std::string> reachable_from(const std::string& start) const {
        std::set<std::string> seen;
        std::vector<std::string> frontier{start};
        while (!frontier.empty()) {
            std::string n = frontier.back();
            frontier.pop_back();
            for (const auto& e : edges_) {
                if (e.from != n) continue;
                if (seen.insert(e.to).second) frontier.push_back(e.to);
            }
        }
        seen.erase(start);
        return seen;
    }

    // Nodes from which `end` is strictly reachable.
    std::set<std::string> reaching(const std::string& end) const {
        std::set<std::string> seen;
        std::vector<std::string> frontier{end};
        while (!frontier.empty()) {
            std::string n = frontier.back();
            frontier.pop_back();
            for (const auto& e : edges_) {
                if (e.to != n) continue;
                if (seen.insert(e.from).second) frontier.push_back(e.from);
            }
        }
        seen.erase(end);
        return seen;
    }

private:
    std::set<std::string> nodes_;
    std::vector<CausalEdge> edges_;
};

}  // namespace opmend
