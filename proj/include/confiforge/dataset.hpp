#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "confiforge/errors.hpp"
#include "confiforge/kg.hpp"
#include "confiforge/sampler.hpp"
#include "confiforge/textgen.hpp"

namespace confiforge {

inline constexpr int kSchemaVersion = 1;

struct AnswerSpec {
    std::string label;
    std::vector<std::string> aliases;

    bool operator==(const AnswerSpec&) const = default;
};

/// One benchmark record. `context` is the counterfactual context the model is
/// evaluated against; answers carry their aliases so evaluation never needs
/// the graph.
struct TaskInstance {
    std::string id;
    Task task = Task::QA;
    int hops = 1;
    PathInstance paths;
    std::string question;
    std::string context_factual;
    std::string context_counterfactual;
    AnswerSpec answer_cf;    // counterfactual (context-faithful) answer
    AnswerSpec answer_orig;  // factual answer the model tends to defend
    std::string response_faithful;
    std::string response_stubborn;

    bool operator==(const TaskInstance&) const = default;
};

struct PreferencePair {
    std::string instance_id;
    std::string prompt;    // x
    std::string chosen;    // y_w
    std::string rejected;  // y_l

    bool operator==(const PreferencePair&) const = default;
};

// Prompt scaffold shared by preference building and evaluation so the two
// stay aligned.
struct PromptScaffold {
    std::string question_prefix = "Q: ";
    std::string answer_prefix = "A:";

    std::string apply(const std::string& context, const std::string& question) const {
        return context + "\n\n" + question_prefix + question + "\n" + answer_prefix;
    }
};

namespace detail {

inline AnswerSpec answer_for(const KnowledgeGraph& g, const std::string& entity_id) {
    const Entity& e = g.entity(entity_id);
    return {e.label, e.aliases};
}

}  // namespace detail

/// Combines a path instance with its rendered context and question. The
/// faithful response reasons along the counterfactual path, the stubborn one
/// along the fully factual path.
inline TaskInstance assemble_instance(const KnowledgeGraph& g, const PathInstance& paths,
                                      const ContextDoc& context, const std::string& question,
                                      const std::string& id = "") {
    if (context.per_hop_segments.size() != paths.hops())
        throw InconsistentInputsError("context has " + std::to_string(context.per_hop_segments.size()) +
                                      " segments for a " + std::to_string(paths.hops()) + "-hop path");
    const std::string& head_label = g.entity(paths.factual.head()).label;
    if (question.empty() || !detail::contains_whole_word(question, head_label))
        throw InconsistentInputsError("question does not mention the path head \"" + head_label + "\"");

    TaskInstance inst;
    inst.id = id;
    inst.task = paths.task;
    inst.hops = static_cast<int>(paths.hops());
    inst.paths = paths;
    inst.question = question;
    inst.context_factual = context.factual;
    inst.context_counterfactual = context.counterfactual;
    inst.answer_cf = detail::answer_for(g, paths.counterfactual_answer_id());
    inst.answer_orig = detail::answer_for(g, paths.factual_answer_id());
    inst.response_faithful = build_reasoning_chain(g, paths.counterfactual, inst.answer_cf.label);
    inst.response_stubborn = build_reasoning_chain(g, paths.factual.hops, inst.answer_orig.label);
    return inst;
}

/// x = counterfactual context + question scaffold; y_w faithful, y_l stubborn.
inline PreferencePair build_preference_pair(const TaskInstance& instance,
                                            const PromptScaffold& scaffold = {}) {
    PreferencePair pair;
    pair.instance_id = instance.id;
    pair.prompt = scaffold.apply(instance.context_counterfactual, instance.question);
    pair.chosen = instance.response_faithful;
    pair.rejected = instance.response_stubborn;
    return pair;
}

// ---- serialization ----

namespace detail {

inline nlohmann::json triples_to_json(const std::vector<Triple>& triples) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : triples) arr.push_back({t.subject, t.relation, t.object});
    return arr;
}

inline std::vector<Triple> triples_from_json(const nlohmann::json& arr) {
    std::vector<Triple> out;
    for (const auto& item : arr) out.push_back({item.at(0), item.at(1), item.at(2)});
    return out;
}

inline nlohmann::json paths_to_json(const PathInstance& p) {
    nlohmann::json j;
    j["task"] = to_string(p.task);
    j["factual"] = triples_to_json(p.factual.hops);
    j["counterfactual"] = triples_to_json(p.counterfactual);
    j["original"] = triples_to_json(p.original);
    j["substituted_indices"] = p.substituted_indices;
    j["warnings"] = p.warnings;
    return j;
}

inline PathInstance paths_from_json(const nlohmann::json& j) {
    PathInstance p;
    p.task = task_from_string(j.at("task"));
    p.factual.hops = triples_from_json(j.at("factual"));
    p.counterfactual = triples_from_json(j.at("counterfactual"));
    p.original = triples_from_json(j.at("original"));
    for (const auto& idx : j.at("substituted_indices")) p.substituted_indices.insert(idx.get<std::size_t>());
    if (j.contains("warnings"))
        p.warnings = j.at("warnings").get<std::vector<std::string>>();
    return p;
}

inline nlohmann::json instance_to_json(const TaskInstance& inst) {
    nlohmann::json j;
    j["id"] = inst.id;
    j["task"] = to_string(inst.task);
    j["hops"] = inst.hops;
    j["question"] = inst.question;
    j["context"] = inst.context_counterfactual;
    j["factual_context"] = inst.context_factual;
    j["answer"] = inst.answer_cf.label;
    j["answer_aliases"] = inst.answer_cf.aliases;
    j["orig_answer"] = inst.answer_orig.label;
    j["orig_answer_aliases"] = inst.answer_orig.aliases;
    j["faithful_response"] = inst.response_faithful;
    j["stubborn_response"] = inst.response_stubborn;
    j["paths"] = paths_to_json(inst.paths);
    return j;
}

inline TaskInstance instance_from_json(const nlohmann::json& j, std::size_t line) {
    static const char* const kRequired[] = {
        "id", "task", "hops", "question", "context", "factual_context", "answer",
        "answer_aliases", "orig_answer", "orig_answer_aliases", "faithful_response",
        "stubborn_response", "paths"};
    for (const char* field : kRequired) {
        if (!j.contains(field)) throw MalformedRecordError(line, std::string("missing field ") + field);
    }
    TaskInstance inst;
    inst.id = j.at("id");
    inst.task = task_from_string(j.at("task"));
    inst.hops = j.at("hops");
    inst.question = j.at("question");
    inst.context_counterfactual = j.at("context");
    inst.context_factual = j.at("factual_context");
    inst.answer_cf = {j.at("answer"), j.at("answer_aliases").get<std::vector<std::string>>()};
    inst.answer_orig = {j.at("orig_answer"), j.at("orig_answer_aliases").get<std::vector<std::string>>()};
    inst.response_faithful = j.at("faithful_response");
    inst.response_stubborn = j.at("stubborn_response");
    inst.paths = paths_from_json(j.at("paths"));
    return inst;
}

inline void check_schema_header(const std::string& line, std::size_t line_number) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRecordError(line_number, e.what());
    }
    if (!j.contains("schema_version")) throw SchemaVersionError(0, kSchemaVersion);
    if (j["schema_version"].get<int>() != kSchemaVersion)
        throw SchemaVersionError(j["schema_version"].get<int>(), kSchemaVersion);
}

template <typename Record, typename ToJson>
void write_jsonl(const std::vector<Record>& records, const std::string& path, ToJson&& to_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << nlohmann::json{{"schema_version", kSchemaVersion}}.dump() << "\n";
    for (const auto& r : records) out << to_json(r).dump() << "\n";
    if (!out) throw IoError("short write to " + path);
}

template <typename Record, typename FromJson>
std::vector<Record> read_jsonl(const std::string& path, FromJson&& from_json) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<Record> out;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        if (line_number == 1) {
            check_schema_header(line, line_number);
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw MalformedRecordError(line_number, e.what());
        }
        out.push_back(from_json(j, line_number));
    }
    if (line_number == 0) throw MalformedRecordError(1, "missing schema header");
    return out;
}

}  // namespace detail

inline void write_dataset(const std::vector<TaskInstance>& instances, const std::string& path) {
    detail::write_jsonl(instances, path, [](const TaskInstance& i) { return detail::instance_to_json(i); });
}

inline std::vector<TaskInstance> read_dataset(const std::string& path) {
    return detail::read_jsonl<TaskInstance>(
        path, [](const nlohmann::json& j, std::size_t line) { return detail::instance_from_json(j, line); });
}

inline void write_preferences(const std::vector<PreferencePair>& pairs, const std::string& path) {
    detail::write_jsonl(pairs, path, [](const PreferencePair& p) {
        nlohmann::json j;
        j["instance_id"] = p.instance_id;
        j["prompt"] = p.prompt;
        j["chosen"] = p.chosen;
        j["rejected"] = p.rejected;
        return j;
    });
}

inline std::vector<PreferencePair> read_preferences(const std::string& path) {
    return detail::read_jsonl<PreferencePair>(path, [](const nlohmann::json& j, std::size_t line) {
        for (const char* field : {"instance_id", "prompt", "chosen", "rejected"}) {
            if (!j.contains(field)) throw MalformedRecordError(line, std::string("missing field ") + field);
        }
        return PreferencePair{j.at("instance_id"), j.at("prompt"), j.at("chosen"), j.at("rejected")};
    });
}

}  // namespace confiforge
