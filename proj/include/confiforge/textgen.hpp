#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confiforge/errors.hpp"
#include "confiforge/kg.hpp"
#include "confiforge/model_client.hpp"
#include "confiforge/sampler.hpp"

namespace confiforge {

// Slot syntax: {facts}, {head}, {tail}, {hop_num}.
inline constexpr std::string_view kContextPromptTemplate =
    "Considering {facts}, generate a brief description of the entity: {head}, approximately 100 "
    "words long. Ensure that {tail} is accurately mentioned in the description.";

inline constexpr std::string_view kQuestionPromptTemplate =
    "You are a sophisticated {hop_num}-hop question generator. Given a chain of Wikidata triples, "
    "generate a question that asks about the final tail entity ({tail}) in the chain using only the "
    "starting head entity ({head}). Do not include any bridge entities in the question; instead, "
    "phrase the question as if directly asking about the relationship from the head entity to the "
    "tail entity.";

struct StatementText {
    std::string text;
    Triple source_triple;
};

struct ContextDoc {
    std::string factual;         // C^f: per-hop factual segments joined by blank lines
    std::string counterfactual;  // C^c: the same segments after counterfactual editing
    std::vector<std::string> per_hop_segments;  // pre-edit segments, path order
    std::string provenance;                     // "llm" | "fallback"
};

struct TextGenOptions {
    bool use_llm = false;
    bool fallback_enabled = true;
    int retries = 2;  // extra attempts after the first, before falling back
    int max_tokens = 256;
    std::string model;
};

namespace detail {

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

inline bool whole_word_at(const std::string& text, std::size_t pos, std::size_t len) {
    if (pos > 0 && is_word_byte(static_cast<unsigned char>(text[pos - 1]))) return false;
    if (pos + len < text.size() && is_word_byte(static_cast<unsigned char>(text[pos + len]))) return false;
    return true;
}

// Matches `form` at text[pos..] allowing the leading character to differ in
// ASCII case; the rest must match exactly.
inline bool form_matches_at(const std::string& text, std::size_t pos, const std::string& form) {
    if (form.empty() || pos + form.size() > text.size()) return false;
    const unsigned char a = static_cast<unsigned char>(text[pos]);
    const unsigned char b = static_cast<unsigned char>(form[0]);
    if (std::tolower(a) != std::tolower(b)) return false;
    return text.compare(pos + 1, form.size() - 1, form, 1, form.size() - 1) == 0;
}

inline std::string match_case_of_leading(const std::string& replacement, char matched_first) {
    if (replacement.empty()) return replacement;
    std::string out = replacement;
    const unsigned char m = static_cast<unsigned char>(matched_first);
    const unsigned char r = static_cast<unsigned char>(out[0]);
    if (std::islower(m) && std::isupper(r)) out[0] = static_cast<char>(std::tolower(r));
    if (std::isupper(m) && std::islower(r)) out[0] = static_cast<char>(std::toupper(r));
    return out;
}

inline bool contains_whole_word(const std::string& text, const std::string& phrase) {
    if (phrase.empty()) return false;
    for (std::size_t pos = 0; pos + phrase.size() <= text.size(); ++pos) {
        if (form_matches_at(text, pos, phrase) && whole_word_at(text, pos, phrase.size())) return true;
    }
    return false;
}

inline std::string replace_slot(std::string text, std::string_view slot, const std::string& value) {
    for (std::size_t pos = text.find(slot); pos != std::string::npos; pos = text.find(slot, pos)) {
        text.replace(pos, slot.size(), value);
        pos += value.size();
    }
    return text;
}

}  // namespace detail

/// Verbalizes a triple through its relation's cloze template.
inline StatementText render_statement(const KnowledgeGraph& g, const Triple& triple) {
    const Relation& rel = g.relation(triple.relation);
    const std::string& tmpl = rel.cloze_template;
    if (detail::count_occurrences(tmpl, "[subject]") != 1 ||
        detail::count_occurrences(tmpl, "[target]") != 1) {
        throw MissingPlaceholderError(rel.id);
    }
    std::string text = tmpl;
    const std::string& subject = g.entity(triple.subject).label;
    const std::string& object = g.entity(triple.object).label;
    text.replace(text.find("[subject]"), 9, subject);
    text.replace(text.find("[target]"), 8, object);
    return {std::move(text), triple};
}

inline std::string fill_context_prompt(const std::string& facts, const std::string& head,
                                       const std::string& tail) {
    std::string p(kContextPromptTemplate);
    p = detail::replace_slot(std::move(p), "{facts}", facts);
    p = detail::replace_slot(std::move(p), "{head}", head);
    p = detail::replace_slot(std::move(p), "{tail}", tail);
    return p;
}

inline std::string fill_question_prompt(std::size_t hop_num, const std::string& head,
                                        const std::string& tail) {
    std::string p(kQuestionPromptTemplate);
    p = detail::replace_slot(std::move(p), "{hop_num}", std::to_string(hop_num));
    p = detail::replace_slot(std::move(p), "{head}", head);
    p = detail::replace_slot(std::move(p), "{tail}", tail);
    return p;
}

/// Deterministic offline description: the cloze statement plus neutral filler.
inline std::string fallback_entity_context(const KnowledgeGraph& g, const std::string& head_id,
                                           const Triple& triple) {
    const std::string& head = g.entity(head_id).label;
    std::string text = render_statement(g, triple).text;
    text += ". " + head + " is regularly covered in general reference works. Summaries of " + head +
            " tend to mention this fact alongside other background details.";
    return text;
}

struct GeneratedText {
    std::string text;
    bool from_llm = false;
};

/// A short factual description of `head_id` that is guaranteed to mention the
/// triple's object label, retrying the model before falling back.
inline GeneratedText gen_entity_context_ex(ModelClient* client, const KnowledgeGraph& g,
                                           const std::string& head_id, const Triple& triple,
                                           const TextGenOptions& options = {}) {
    const std::string& head = g.entity(head_id).label;
    const std::string& tail = g.entity(triple.object).label;
    if (options.use_llm) {
        if (client == nullptr) throw ClientError("llm generation requested without a client");
        const std::string facts = render_statement(g, triple).text;
        const std::string prompt = fill_context_prompt(facts, head, tail);
        for (int attempt = 0; attempt <= options.retries; ++attempt) {
            CompletionRequest req;
            req.model = options.model;
            req.prompt = prompt;
            req.max_tokens = options.max_tokens;
            Completion completion = client->complete(req);
            if (detail::contains_whole_word(completion.text, tail)) return {completion.text, true};
        }
        if (!options.fallback_enabled) throw TailMissingError(tail);
    }
    return {fallback_entity_context(g, head_id, triple), false};
}

inline std::string gen_entity_context(ModelClient* client, const KnowledgeGraph& g,
                                      const std::string& head_id, const Triple& triple,
                                      const TextGenOptions& options = {}) {
    return gen_entity_context_ex(client, g, head_id, triple, options).text;
}

/// Replaces every surface form of `old_entity` with the corresponding form of
/// `new_entity`: labels map to labels, aliases and variants pair by position
/// (falling back to the new label), longest form first, whole words only,
/// preserving the case of the leading character. No-op when nothing matches.
inline std::string edit_context(const std::string& text, const Entity& old_entity,
                                const Entity& new_entity) {
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.emplace_back(old_entity.label, new_entity.label);
    for (std::size_t i = 0; i < old_entity.aliases.size(); ++i) {
        pairs.emplace_back(old_entity.aliases[i],
                           i < new_entity.aliases.size() ? new_entity.aliases[i] : new_entity.label);
    }
    for (std::size_t i = 0; i < old_entity.variants.size(); ++i) {
        pairs.emplace_back(old_entity.variants[i],
                           i < new_entity.variants.size() ? new_entity.variants[i] : new_entity.label);
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        bool replaced = false;
        for (const auto& [form, replacement] : pairs) {
            if (form.empty()) continue;
            if (detail::form_matches_at(text, pos, form) &&
                detail::whole_word_at(text, pos, form.size())) {
                out += detail::match_case_of_leading(replacement, text[pos]);
                pos += form.size();
                replaced = true;
                break;
            }
        }
        if (!replaced) out += text[pos++];
    }
    return out;
}

namespace detail {

// Per-hop grounding triple for context generation: subject from the
// counterfactual chain, object the factual fact for that subject. Substituted
// hops take the recorded original object; untouched hops are already factual.
inline Triple grounding_triple(const PathInstance& inst, std::size_t hop) {
    const Triple& cf = inst.counterfactual[hop];
    if (inst.substituted_indices.count(hop)) return inst.original[hop];
    return cf;
}

}  // namespace detail

/// Generates one factual segment per hop (in path order), joins them into C^f,
/// and applies every substituted (original tail -> counterfactual tail) edit
/// across the segments to produce C^c.
inline ContextDoc compose_context(const KnowledgeGraph& g, const PathInstance& inst,
                                  ModelClient* client, const TextGenOptions& options = {}) {
    ContextDoc doc;
    bool all_llm = true;
    for (std::size_t hop = 0; hop < inst.hops(); ++hop) {
        const Triple grounding = detail::grounding_triple(inst, hop);
        GeneratedText segment = gen_entity_context_ex(client, g, grounding.subject, grounding, options);
        all_llm = all_llm && segment.from_llm;
        doc.per_hop_segments.push_back(std::move(segment.text));
    }
    doc.provenance = all_llm ? "llm" : "fallback";

    std::vector<std::pair<const Entity*, const Entity*>> edits;
    for (std::size_t hop : inst.substituted_indices) {
        edits.emplace_back(&g.entity(inst.original[hop].object),
                           &g.entity(inst.counterfactual[hop].object));
    }

    std::vector<std::string> edited;
    edited.reserve(doc.per_hop_segments.size());
    for (const auto& segment : doc.per_hop_segments) {
        std::string s = segment;
        for (const auto& [old_e, new_e] : edits) s = edit_context(s, *old_e, *new_e);
        edited.push_back(std::move(s));
    }

    auto join = [](const std::vector<std::string>& parts) {
        std::string out;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (i > 0) out += "\n\n";
            out += parts[i];
        }
        return out;
    };
    doc.factual = join(doc.per_hop_segments);
    doc.counterfactual = join(edited);
    return doc;
}

/// Nested-clause question composed inside-out from the relations'
/// question phrases; mentions only the head entity.
inline std::string fallback_question(const KnowledgeGraph& g, const FactualPath& path) {
    std::string q = "What is ";
    for (std::size_t i = path.size(); i-- > 0;) {
        const Relation& rel = g.relation(path.hops[i].relation);
        q += rel.question_phrase.empty() ? ("the " + rel.label + " of") : rel.question_phrase;
        q += " ";
    }
    q += g.entity(path.head()).label + "?";
    return q;
}

/// A question that names the head entity, leaks no bridge entity, and ends
/// with "?". Model output violating those constraints is retried, then the
/// deterministic composer takes over (or BridgeLeak is raised).
inline std::string gen_question(ModelClient* client, const KnowledgeGraph& g, const FactualPath& path,
                                const TextGenOptions& options = {}) {
    if (!options.use_llm) return fallback_question(g, path);
    if (client == nullptr) throw ClientError("llm generation requested without a client");

    const std::string& head = g.entity(path.head()).label;
    const std::string& tail = g.entity(path.tail()).label;
    std::string prompt = fill_question_prompt(path.size(), head, tail);
    prompt += "\n\nTriples:";
    for (const auto& hop : path.hops) {
        prompt += " (" + g.entity(hop.subject).label + ", " + g.relation(hop.relation).label + ", " +
                  g.entity(hop.object).label + ")";
    }

    std::vector<std::string> bridges;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) bridges.push_back(g.entity(path.hops[i].object).label);

    std::string leaked;
    for (int attempt = 0; attempt <= options.retries; ++attempt) {
        CompletionRequest req;
        req.model = options.model;
        req.prompt = prompt;
        req.max_tokens = options.max_tokens;
        std::string question = client->complete(req).text;
        while (!question.empty() && std::isspace(static_cast<unsigned char>(question.back())))
            question.pop_back();

        leaked.clear();
        for (const auto& bridge : bridges) {
            if (detail::contains_whole_word(question, bridge)) {
                leaked = bridge;
                break;
            }
        }
        const bool ok = leaked.empty() && !question.empty() && question.back() == '?' &&
                        detail::contains_whole_word(question, head);
        if (ok) return question;
    }
    if (options.fallback_enabled) return fallback_question(g, path);
    if (!leaked.empty()) throw BridgeLeakError(leaked);
    throw ClientError("generated question failed validation");
}

/// Statements for each hop in order, closed by the answer summary sentence.
inline std::string build_reasoning_chain(const KnowledgeGraph& g, const std::vector<Triple>& triples,
                                         const std::string& final_answer_label) {
    std::string text;
    for (const auto& t : triples) text += render_statement(g, t).text + ". ";
    text += "So the final answer is " + final_answer_label + ".";
    return text;
}

}  // namespace confiforge
