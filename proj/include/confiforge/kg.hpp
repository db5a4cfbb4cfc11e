#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "confiforge/errors.hpp"

namespace confiforge {

/// An entity with its canonical label plus every alternative surface form.
/// Aliases are alternative names; variants are morphological forms (demonyms,
/// adjectives) that pair positionally across entities during context editing.
struct Entity {
    std::string id;
    std::string label;
    std::vector<std::string> aliases;
    std::vector<std::string> variants;

    bool operator==(const Entity&) const = default;
};

/// A relation with the cloze template used to verbalize triples. The template
/// must contain "[subject]" and "[target]" exactly once each.
struct Relation {
    std::string id;
    std::string label;
    std::string cloze_template;
    std::string question_phrase;

    bool operator==(const Relation&) const = default;
};

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;

    bool operator==(const Triple&) const = default;
    auto operator<=>(const Triple&) const = default;
};

/// Immutable after load; safe for concurrent reads. Relations are functional:
/// each (subject, relation) maps to at most one object.
struct KnowledgeGraph {
    std::map<std::string, Entity> entities;
    std::map<std::string, Relation> relations;
    std::vector<Triple> triples;
    std::map<std::pair<std::string, std::string>, std::string> out_index;
    std::map<std::string, std::set<std::string>> tails_index;

    bool operator==(const KnowledgeGraph&) const = default;

    const Entity& entity(const std::string& id) const {
        auto it = entities.find(id);
        if (it == entities.end()) throw UnknownIdError(id);
        return it->second;
    }

    const Relation& relation(const std::string& id) const {
        auto it = relations.find(id);
        if (it == relations.end()) throw UnknownIdError(id);
        return it->second;
    }

    // Object of (subject, relation), or empty string when no such fact exists.
    std::string object_of(const std::string& subject, const std::string& relation) const {
        auto it = out_index.find({subject, relation});
        return it == out_index.end() ? std::string{} : it->second;
    }
};

namespace detail {

inline std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(text);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!text.empty() && text.back() == sep) out.emplace_back();
    return out;
}

inline std::vector<std::string> split_multi(const std::string& text) {
    if (text.empty()) return {};
    return split(text, '|');
}

inline std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

// Reads a TSV file, skipping "#" comment lines, enforcing the header row.
// Calls row_fn(line_number, fields) for every data row.
template <typename RowFn>
void for_each_tsv_row(const std::string& path, std::size_t min_fields, RowFn&& row_fn) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::size_t line_number = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;  // header row is required but not interpreted
            continue;
        }
        auto fields = split(line, '\t');
        if (fields.size() < min_fields) {
            throw MalformedRowError(path, line_number,
                                    "expected at least " + std::to_string(min_fields) + " fields, got " +
                                        std::to_string(fields.size()));
        }
        row_fn(line_number, fields);
    }
    if (!header_seen) throw MalformedRowError(path, line_number + 1, "missing header row");
}

inline void check_no_duplicates(const std::string& path, std::size_t line,
                                const std::vector<std::string>& forms) {
    std::set<std::string> seen(forms.begin(), forms.end());
    if (seen.size() != forms.size()) throw MalformedRowError(path, line, "duplicate surface form");
}

}  // namespace detail

/// Loads and validates the graph from the three TSV files. Duplicate triples
/// collapse; a second object for the same (subject, relation) is an error.
inline KnowledgeGraph load_graph(const std::string& entities_path, const std::string& relations_path,
                                 const std::string& triples_path) {
    KnowledgeGraph g;

    detail::for_each_tsv_row(entities_path, 2, [&](std::size_t line, const std::vector<std::string>& f) {
        Entity e;
        e.id = f[0];
        e.label = f[1];
        if (e.id.empty() || e.label.empty())
            throw MalformedRowError(entities_path, line, "empty id or label");
        e.aliases = detail::split_multi(f.size() > 2 ? f[2] : "");
        e.variants = detail::split_multi(f.size() > 3 ? f[3] : "");
        detail::check_no_duplicates(entities_path, line, e.aliases);
        detail::check_no_duplicates(entities_path, line, e.variants);
        if (std::find(e.aliases.begin(), e.aliases.end(), e.label) != e.aliases.end())
            throw MalformedRowError(entities_path, line, "label repeated in aliases");
        g.entities[e.id] = std::move(e);
    });

    detail::for_each_tsv_row(relations_path, 3, [&](std::size_t line, const std::vector<std::string>& f) {
        Relation r;
        r.id = f[0];
        r.label = f[1];
        r.cloze_template = f[2];
        r.question_phrase = f.size() > 3 ? f[3] : "";
        if (r.id.empty()) throw MalformedRowError(relations_path, line, "empty id");
        if (detail::count_occurrences(r.cloze_template, "[subject]") != 1 ||
            detail::count_occurrences(r.cloze_template, "[target]") != 1) {
            throw MissingPlaceholderError(r.id);
        }
        g.relations[r.id] = std::move(r);
    });

    std::set<Triple> seen;
    detail::for_each_tsv_row(triples_path, 3, [&](std::size_t, const std::vector<std::string>& f) {
        Triple t{f[0], f[1], f[2]};
        if (!g.entities.count(t.subject)) throw UnknownIdError(t.subject);
        if (!g.relations.count(t.relation)) throw UnknownIdError(t.relation);
        if (!g.entities.count(t.object)) throw UnknownIdError(t.object);
        if (!seen.insert(t).second) return;  // exact duplicate rows collapse
        auto [it, inserted] = g.out_index.insert({{t.subject, t.relation}, t.object});
        if (!inserted && it->second != t.object) throw FunctionalViolationError(t.subject, t.relation);
        g.tails_index[t.relation].insert(t.object);
        g.triples.push_back(std::move(t));
    });

    return g;
}

/// Every object appearing with the relation in any triple.
inline std::set<std::string> tails_of(const KnowledgeGraph& g, const std::string& relation) {
    g.relation(relation);  // throws UnknownIdError for unknown relations
    auto it = g.tails_index.find(relation);
    return it == g.tails_index.end() ? std::set<std::string>{} : it->second;
}

/// All surface forms of an entity: label, then aliases, then variants,
/// longest-first within each group. Longest-first ordering keeps context
/// editing from partially overwriting a longer form with a shorter one.
inline std::vector<std::string> surface_forms(const KnowledgeGraph& g, const std::string& id) {
    const Entity& e = g.entity(id);
    std::vector<std::string> out{e.label};
    auto append_sorted = [&out](std::vector<std::string> group) {
        std::stable_sort(group.begin(), group.end(),
                         [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
        for (auto& s : group) {
            if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
        }
    };
    append_sorted(e.aliases);
    append_sorted(e.variants);
    return out;
}

}  // namespace confiforge
