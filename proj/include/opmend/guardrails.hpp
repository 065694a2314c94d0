#pragma once
// Hard symbolic vetoes, independent of scoring. The value gate blocks edits
// that enable prohibited actions or weaken obligatory conditions; the causal
// gate escalates edits with poor identifiability or oversized impact.

#include "opmend/knowledge_graphs.hpp"
#include "opmend/patch.hpp"

namespace opmend {

namespace detail {

// Enabling = weakening the guard set: removing or relaxing a precondition.
// Additions restrict; effect and schema edits leave applicability unchanged.
inline bool patch_enables_action(const Patch& p) {
    return p.edit_type == PatchType::ADD_PRECONDITION &&
           (p.action == PatchAction::Remove || p.action == PatchAction::Replace);
}

inline bool weakens_condition(const Patch& p, const ValueRule& rule) {
    if (p.edit_type != PatchType::ADD_PRECONDITION) return false;
    if (p.action == PatchAction::Add) return false;
    for (const auto& c : rule.condition) {
        if (c.name != p.predicate.name) continue;
        if (p.action == PatchAction::Remove) return true;
        if (p.action == PatchAction::Replace && p.predicate != c) return true;
    }
    return false;
}

}  // namespace detail

inline bool value_veto(const Patch& patch, const ValueGraph& kg_val) {
    for (const auto& rule : kg_val) {
        if (rule.action != patch.scope) continue;
        if (rule.modality == Modality::Prohibited && detail::patch_enables_action(patch))
            return true;
        if (rule.modality == Modality::Obligatory && detail::weakens_condition(patch, rule))
            return true;
    }
    return false;
}

struct CausalCheck {
    bool veto = false;
    double identifiability = 0.0;   // iota: identifiable fraction of touched edges
    double impact = 0.0;            // eta: strictly reachable nodes / total nodes
};

// iota counts edges on directed paths touching the patched operator; eta is a
// reachability ratio. An operator absent from the graph is unidentifiable.
inline CausalCheck causal_veto(const Patch& patch, const CausalGraph& kg_cau,
                               double tau_ident = 0.5, double tau_impact = 0.6) {
    CausalCheck out;
    const std::string& node = patch.scope;
    if (!kg_cau.has_node(node)) {
        out.identifiability = 0.0;
        out.veto = true;
        return out;
    }
    auto desc = kg_cau.reachable_from(node);
    auto anc = kg_cau.reaching(node);
    size_t touching = 0, identifiable = 0;
    for (const auto& e : kg_cau.edges()) {
        bool touches = e.from == node || e.to == node || desc.count(e.from) > 0 ||
                       anc.count(e.to) > 0;
        if (!touches) continue;
        ++touching;
        if (e.identifiable) ++identifiable;
    }
    out.identifiability = touching == 0 ? 1.0
                                        : static_cast<double>(identifiable) /
                                              static_cast<double>(touching);
    out.impact = kg_cau.node_count() == 0
                     ? 0.0
                     : static_cast<double>(desc.size()) /
                           static_cast<double>(kg_cau.node_count());
    out.veto = out.identifiability < tau_ident || out.impact > tau_impact;
    return out;
}

}  // namespace opmend
