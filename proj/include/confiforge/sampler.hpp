#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "confiforge/errors.hpp"
#include "confiforge/kg.hpp"
#include "confiforge/rng.hpp"

namespace confiforge {

enum class Task { QA, MR, MC };

inline std::string to_string(Task t) {
    switch (t) {
        case Task::QA: return "qa";
        case Task::MR: return "mr";
        case Task::MC: return "mc";
    }
    return "qa";
}

inline Task task_from_string(const std::string& s) {
    if (s == "qa") return Task::QA;
    if (s == "mr") return Task::MR;
    if (s == "mc") return Task::MC;
    throw ConfigError("unknown task: " + s);
}

/// A chained sequence of 1..4 factual triples with no repeated entity or
/// relation anywhere on the path.
struct FactualPath {
    std::vector<Triple> hops;

    std::size_t size() const { return hops.size(); }

    const std::string& head() const { return hops.front().subject; }
    const std::string& tail() const { return hops.back().object; }

    std::set<std::string> entity_ids() const {
        std::set<std::string> ids;
        for (const auto& h : hops) {
            ids.insert(h.subject);
            ids.insert(h.object);
        }
        return ids;
    }

    bool operator==(const FactualPath&) const = default;
};

/// One benchmark path instance: the factual path, the counterfactual path
/// chained through substituted tails, and the per-hop factual record from the
/// counterfactual subjects. Relations match position-wise across all three.
struct PathInstance {
    Task task = Task::QA;
    FactualPath factual;                    // P^f
    std::vector<Triple> counterfactual;     // P^c
    std::vector<Triple> original;           // P^o
    std::set<std::size_t> substituted_indices;
    std::vector<std::string> warnings;      // e.g. surface-form collisions

    std::size_t hops() const { return factual.size(); }
    const std::string& counterfactual_answer_id() const { return counterfactual.back().object; }
    const std::string& factual_answer_id() const { return factual.hops.back().object; }

    bool operator==(const PathInstance&) const = default;
};

namespace detail {

inline std::string fold_ascii(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline bool share_surface_form(const KnowledgeGraph& g, const std::string& a, const std::string& b) {
    std::set<std::string> forms;
    for (const auto& f : surface_forms(g, a)) forms.insert(fold_ascii(f));
    for (const auto& f : surface_forms(g, b)) {
        if (forms.count(fold_ascii(f))) return true;
    }
    return false;
}

inline void extend_paths(const KnowledgeGraph& g, std::vector<Triple>& prefix,
                         std::set<std::string>& entities, std::set<std::string>& relations,
                         std::size_t target, std::vector<FactualPath>& out) {
    if (prefix.size() == target) {
        out.push_back(FactualPath{prefix});
        return;
    }
    const bool first = prefix.empty();
    for (const auto& t : g.triples) {
        if (first) {
            if (t.subject == t.object) continue;
        } else {
            if (t.subject != prefix.back().object) continue;
            if (relations.count(t.relation) || entities.count(t.object)) continue;
        }
        prefix.push_back(t);
        if (first) entities.insert(t.subject);
        entities.insert(t.object);
        relations.insert(t.relation);
        extend_paths(g, prefix, entities, relations, target, out);
        relations.erase(t.relation);
        entities.erase(t.object);
        if (first) entities.erase(t.subject);
        prefix.pop_back();
    }
}

inline std::uint64_t pick_index(Rng& rng, std::size_t size) { return rng.next_below(size); }

// Deterministic seeded ordering of a sorted candidate set.
inline std::vector<std::string> shuffled(const std::set<std::string>& items, Rng& rng) {
    std::vector<std::string> v(items.begin(), items.end());
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.next_below(i)]);
    }
    return v;
}

}  // namespace detail

/// All valid chained no-repeat paths of exactly n hops, in a deterministic
/// order (triples are kept in load order).
inline std::vector<FactualPath> enumerate_factual_paths(const KnowledgeGraph& g, std::size_t n) {
    std::vector<FactualPath> out;
    std::vector<Triple> prefix;
    std::set<std::string> entities, relations;
    detail::extend_paths(g, prefix, entities, relations, n, out);
    return out;
}

/// Uniform seeded choice among all valid n-hop paths.
inline FactualPath sample_factual_path(const KnowledgeGraph& g, std::size_t n, std::uint64_t seed) {
    if (n < 1 || n > 4) throw Error("hop count must be in 1..4, got " + std::to_string(n));
    if (g.triples.empty()) throw NoPathAvailableError(static_cast<int>(n));
    auto paths = enumerate_factual_paths(g, n);
    if (paths.empty()) throw NoPathAvailableError(static_cast<int>(n));
    Rng rng(seed);
    return paths[detail::pick_index(rng, paths.size())];
}

/// Same-relation-range substitution pool: tails_of(relation) minus exclusions.
inline std::set<std::string> same_type_candidates(const KnowledgeGraph& g, const std::string& relation,
                                                  const std::set<std::string>& exclude) {
    std::set<std::string> out;
    for (const auto& id : tails_of(g, relation)) {
        if (!exclude.count(id)) out.insert(id);
    }
    return out;
}

namespace detail {

inline void note_collision(const KnowledgeGraph& g, const std::string& original,
                           const std::string& replacement, std::vector<std::string>& warnings) {
    if (share_surface_form(g, original, replacement)) {
        warnings.push_back("surface-form collision between " + original + " and " + replacement);
    }
}

}  // namespace detail

/// Single-hop counterfactual: replace the tail with a seeded same-type pick.
inline PathInstance counterfact_qa(const KnowledgeGraph& g, const Triple& triple, std::uint64_t seed) {
    auto candidates = same_type_candidates(g, triple.relation, {triple.object, triple.subject});
    if (candidates.empty()) throw NoCandidateError("(" + triple.subject + ", " + triple.relation + ")");
    Rng rng(seed);
    std::vector<std::string> pool(candidates.begin(), candidates.end());
    const std::string& substitute = pool[detail::pick_index(rng, pool.size())];

    PathInstance inst;
    inst.task = Task::QA;
    inst.factual.hops = {triple};
    inst.counterfactual = {{triple.subject, triple.relation, substitute}};
    inst.original = {triple};
    inst.substituted_indices = {0};
    detail::note_collision(g, triple.object, substitute, inst.warnings);
    return inst;
}

/// Multi-hop with a single substituted hop: one seeded tail swap, then the
/// factual continuation follows the original relations from the new tail.
inline PathInstance counterfact_mr(const KnowledgeGraph& g, const FactualPath& path, std::uint64_t seed) {
    if (path.size() < 2) throw Error("mr requires a path of length >= 2");
    Rng rng(seed);

    const auto path_entities = path.entity_ids();
    bool any_candidate = false;

    std::vector<std::size_t> indices(path.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    for (std::size_t i = indices.size(); i > 1; --i) std::swap(indices[i - 1], indices[rng.next_below(i)]);

    for (std::size_t index : indices) {
        const Triple& hop = path.hops[index];
        std::set<std::string> exclude = path_entities;
        exclude.insert(hop.object);
        auto candidates = same_type_candidates(g, hop.relation, exclude);
        if (candidates.empty()) continue;
        any_candidate = true;

        for (const auto& substitute : detail::shuffled(candidates, rng)) {
            std::vector<Triple> cf(path.hops.begin(), path.hops.begin() + static_cast<long>(index));
            cf.push_back({hop.subject, hop.relation, substitute});
            std::set<std::string> used;
            for (const auto& t : cf) {
                used.insert(t.subject);
                used.insert(t.object);
            }
            bool ok = true;
            for (std::size_t j = index + 1; j < path.size(); ++j) {
                const std::string& subject = cf.back().object;
                std::string object = g.object_of(subject, path.hops[j].relation);
                if (object.empty() || used.count(object)) {
                    ok = false;
                    break;
                }
                cf.push_back({subject, path.hops[j].relation, object});
                used.insert(object);
            }
            if (!ok) continue;

            PathInstance inst;
            inst.task = Task::MR;
            inst.factual = path;
            inst.counterfactual = std::move(cf);
            inst.original = path.hops;  // the fully factual path the model would defend
            inst.substituted_indices = {index};
            detail::note_collision(g, hop.object, substitute, inst.warnings);
            return inst;
        }
    }
    if (!any_candidate) throw NoCandidateError("no substitutable hop on path from " + path.head());
    throw NoContinuationError("no candidate tail admits a factual continuation from " + path.head());
}

/// Multi-hop with every hop substituted: the counterfactual path chains
/// through substituted tails; the original path records, per hop, the factual
/// object reachable from the counterfactual subject.
inline PathInstance counterfact_mc(const KnowledgeGraph& g, const FactualPath& path, std::uint64_t seed) {
    if (path.size() < 2) throw Error("mc requires a path of length >= 2");
    Rng rng(seed);

    PathInstance inst;
    inst.task = Task::MC;
    inst.factual = path;

    std::set<std::string> used = path.entity_ids();
    std::string subject = path.head();
    for (std::size_t i = 0; i < path.size(); ++i) {
        const std::string& relation = path.hops[i].relation;
        std::string factual_object = g.object_of(subject, relation);
        if (factual_object.empty()) throw MissingFactError(i, subject, relation);

        std::set<std::string> exclude = used;
        exclude.insert(factual_object);
        exclude.insert(subject);
        auto candidates = same_type_candidates(g, relation, exclude);
        if (candidates.empty())
            throw NoCandidateError("hop " + std::to_string(i) + " of path from " + path.head());
        std::vector<std::string> pool(candidates.begin(), candidates.end());
        const std::string substitute = pool[detail::pick_index(rng, pool.size())];

        inst.original.push_back({subject, relation, factual_object});
        inst.counterfactual.push_back({subject, relation, substitute});
        inst.substituted_indices.insert(i);
        detail::note_collision(g, factual_object, substitute, inst.warnings);

        used.insert(substitute);
        used.insert(factual_object);
        subject = substitute;
    }
    return inst;
}

}  // namespace confiforge
