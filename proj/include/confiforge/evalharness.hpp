#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "confiforge/dataset.hpp"
#include "confiforge/errors.hpp"
#include "confiforge/model_client.hpp"

namespace confiforge {

struct PromptStyle {
    enum Kind { Base, Attr, OpinionInstruction, Ice } kind = Base;
    int shots = 1;  // ICE only; must be 1, 3, or 5

    static PromptStyle base() { return {Base, 0}; }
    static PromptStyle attr() { return {Attr, 0}; }
    static PromptStyle opinion() { return {OpinionInstruction, 0}; }
    static PromptStyle ice(int shots) {
        if (shots != 1 && shots != 3 && shots != 5) throw ConfigError("ICE shots must be 1, 3, or 5");
        return {Ice, shots};
    }

    std::string name() const {
        switch (kind) {
            case Base: return "base";
            case Attr: return "attr";
            case OpinionInstruction: return "oi";
            case Ice: return "ice" + std::to_string(shots);
        }
        return "base";
    }
};

struct EvalRecord {
    std::string instance_id;
    std::string raw_response;
    bool matched_cf = false;
    bool matched_orig = false;
    bool negated_cf = false;
    bool exact_match = false;
    bool errored = false;

    bool strict_faithful() const { return matched_cf && !matched_orig && !negated_cf; }
};

enum class ResponseClass { ContextFaithful, Stubborn, Other };

inline std::string to_string(ResponseClass c) {
    switch (c) {
        case ResponseClass::ContextFaithful: return "context-faithful";
        case ResponseClass::Stubborn: return "stubborn";
        case ResponseClass::Other: return "other";
    }
    return "other";
}

struct MetricsReport {
    double p_c = 0.0;   // strict context-faithful %
    double p_s = 0.0;   // loose substitute %
    double p_o = 0.0;   // original-answer %
    std::optional<double> m_r;  // memorization/reluctance ratio %
    double em = 0.0;    // exact match %
    int n_total = 0;
    int n_strict = 0;
    int n_loose = 0;
    int n_orig = 0;
    int n_exact = 0;
    int n_error = 0;
    bool strict_only = true;
};

/// Lowercases, maps punctuation to spaces, strips the articles a/an/the, and
/// collapses whitespace.
inline std::string normalize(const std::string& text) {
    std::string spaced;
    spaced.reserve(text.size());
    for (unsigned char c : text) {
        if (c < 0x80 && std::ispunct(c)) {
            spaced += ' ';
        } else if (std::isspace(c)) {
            spaced += ' ';
        } else {
            spaced += static_cast<char>(std::tolower(c));
        }
    }
    std::string out;
    std::string word;
    std::istringstream in(spaced);
    while (in >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

namespace detail {

inline std::vector<std::string> norm_tokens(const std::string& text) {
    return whitespace_tokens(normalize(text));
}

// Contiguous token-subsequence containment on normalized text; token-level so
// "ran" never matches inside "France".
inline bool token_subseq_match(const std::vector<std::string>& haystack,
                               const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<long>(i))) return true;
    }
    return false;
}

inline std::string fold_lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Positions in `text` where `phrase` occurs case-insensitively at word
// boundaries (used for the negation window over the raw response).
inline std::vector<std::size_t> raw_match_positions(const std::string& text, const std::string& phrase) {
    std::vector<std::size_t> out;
    if (phrase.empty()) return out;
    const std::string lt = fold_lower(text);
    const std::string lp = fold_lower(phrase);
    for (std::size_t pos = lt.find(lp); pos != std::string::npos; pos = lt.find(lp, pos + 1)) {
        if (whole_word_at(text, pos, phrase.size())) out.push_back(pos);
    }
    return out;
}

inline const std::vector<std::string>& negation_cues() {
    static const std::vector<std::string> cues = {
        "no",     "not",    "never",   "isn't",     "aren't",    "wasn't",      "weren't",
        "doesn't", "didn't", "cannot", "no longer", "incorrect", "false",       "rather than",
        "instead of"};
    return cues;
}

inline bool cue_in_window(const std::string& window) {
    const std::string lw = fold_lower(window);
    for (const auto& cue : negation_cues()) {
        for (std::size_t pos = lw.find(cue); pos != std::string::npos; pos = lw.find(cue, pos + 1)) {
            if (whole_word_at(lw, pos, cue.size())) return true;
        }
    }
    return false;
}

inline std::vector<std::string> all_forms(const AnswerSpec& answer) {
    std::vector<std::string> forms{answer.label};
    forms.insert(forms.end(), answer.aliases.begin(), answer.aliases.end());
    return forms;
}

}  // namespace detail

inline constexpr std::size_t kNegationWindow = 30;

/// Flags a response against the counterfactual and original answers.
inline EvalRecord label_response(const std::string& response, const AnswerSpec& answer_cf,
                                 const AnswerSpec& answer_orig) {
    EvalRecord rec;
    rec.raw_response = response;
    const auto response_tokens = detail::norm_tokens(response);
    const std::string norm_response = normalize(response);

    for (const auto& form : detail::all_forms(answer_cf)) {
        const std::string norm_form = normalize(form);
        if (norm_form.empty()) continue;
        if (detail::token_subseq_match(response_tokens, detail::whitespace_tokens(norm_form)))
            rec.matched_cf = true;
        if (norm_response == norm_form) rec.exact_match = true;
        for (std::size_t pos : detail::raw_match_positions(response, form)) {
            const std::size_t start = pos > kNegationWindow ? pos - kNegationWindow : 0;
            if (detail::cue_in_window(response.substr(start, pos - start))) rec.negated_cf = true;
        }
    }
    for (const auto& form : detail::all_forms(answer_orig)) {
        const std::string norm_form = normalize(form);
        if (norm_form.empty()) continue;
        if (detail::token_subseq_match(response_tokens, detail::whitespace_tokens(norm_form)))
            rec.matched_orig = true;
    }
    return rec;
}

inline ResponseClass classify(const EvalRecord& rec) {
    if (rec.strict_faithful()) return ResponseClass::ContextFaithful;
    if (rec.matched_orig) return ResponseClass::Stubborn;
    return ResponseClass::Other;
}

/// M_R as a percentage from substitute/original percentages; empty when the
/// denominator vanishes.
inline std::optional<double> reluctance_ratio(double p_sub, double p_orig) {
    if (p_sub + p_orig <= 0.0) return std::nullopt;
    return 100.0 * p_orig / (p_sub + p_orig);
}

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

/// Aggregates record flags into the metric suite. In strict-only mode the
/// substitute rate used for M_R is the strict P_c.
inline MetricsReport compute_metrics(const std::vector<EvalRecord>& records, bool strict_only = true) {
    if (records.empty()) throw EmptyInputError("no evaluation records");
    MetricsReport r;
    r.strict_only = strict_only;
    r.n_total = static_cast<int>(records.size());
    for (const auto& rec : records) {
        if (rec.errored) {
            ++r.n_error;
            continue;
        }
        if (rec.strict_faithful()) ++r.n_strict;
        if (rec.matched_cf) ++r.n_loose;
        if (rec.matched_orig) ++r.n_orig;
        if (rec.exact_match) ++r.n_exact;
    }
    const double total = static_cast<double>(r.n_total);
    r.p_c = 100.0 * r.n_strict / total;
    r.p_s = 100.0 * r.n_loose / total;
    r.p_o = 100.0 * r.n_orig / total;
    r.em = 100.0 * r.n_exact / total;
    r.m_r = reluctance_ratio(strict_only ? r.p_c : r.p_s, r.p_o);
    return r;
}

// ---- prompt styles ----

struct IceDemo {
    std::string question;
    std::string edit;
    std::string answer;
};

inline const std::vector<IceDemo>& ice_demonstrations() {
    static const std::vector<IceDemo> demos = {
        {"What is the capital city of the country of citizenship of Ivanka Trump's spouse?",
         "Jared Kushner is a citizen of Canada", "Ottawa"},
        {"On which continent was the director of \"My House Husband: Ikaw Na!\" educated?",
         "Irene Villamor was educated in New York University", "North America"},
        {"In which country is the company that created Nissan 200SX located?",
         "Nissan is located in the country of China", "China"},
        {"Who has ownership of the developer of the Chevrolet Corvette (C4)?",
         "Chevrolet is owned by Volkswagen Group", "Volkswagen Group"},
        {"What is the capital of the country where Gordon Moore holds citizenship?",
         "Gordon Moore is a citizen of France", "Paris"},
    };
    return demos;
}

namespace detail {

inline std::string strip_question_mark(std::string q) {
    while (!q.empty() && (std::isspace(static_cast<unsigned char>(q.back())) || q.back() == '?'))
        q.pop_back();
    return q;
}

// The edit statements are the reasoning sentences of the faithful response,
// i.e. everything before the final answer summary.
inline std::string edits_from_instance(const TaskInstance& inst) {
    const std::string marker = "So the final answer is";
    std::string text = inst.response_faithful;
    if (auto pos = text.find(marker); pos != std::string::npos) text = text.substr(0, pos);
    while (!text.empty() && (std::isspace(static_cast<unsigned char>(text.back())) || text.back() == '.'))
        text.pop_back();
    return text;
}

}  // namespace detail

/// Renders the instance's evaluation prompt in the requested style.
inline std::string build_prompt(const PromptStyle& style, const TaskInstance& instance,
                                const std::vector<std::string>& edits = {},
                                const PromptScaffold& scaffold = {}) {
    switch (style.kind) {
        case PromptStyle::Base:
            return scaffold.apply(instance.context_counterfactual, instance.question);
        case PromptStyle::Attr:
            return instance.context_counterfactual + " Q: " +
                   detail::strip_question_mark(instance.question) + " based on the given text? A:";
        case PromptStyle::OpinionInstruction:
            return "Bob said \"" + instance.context_counterfactual + "\" Q: " +
                   detail::strip_question_mark(instance.question) + " in Bob's opinion? A:";
        case PromptStyle::Ice: {
            if (edits.empty()) throw MissingEditsError();
            std::string prompt;
            const auto& demos = ice_demonstrations();
            for (int i = 0; i < style.shots; ++i) {
                const auto& d = demos[static_cast<std::size_t>(i) % demos.size()];
                prompt += "Q: " + d.question + "\nE: " + d.edit + "\nA: " + d.answer + "\n\n";
            }
            prompt += "Q: " + instance.question + "\nE: ";
            for (std::size_t i = 0; i < edits.size(); ++i) {
                if (i > 0) prompt += ". ";
                prompt += edits[i];
            }
            prompt += "\nA:";
            return prompt;
        }
    }
    throw ConfigError("unknown prompt style");
}

// ---- evaluation run ----

struct EvalConfig {
    PromptStyle style = PromptStyle::base();
    std::string model;
    bool strict_only = true;
    int max_in_flight = 4;
    int max_tokens = 128;
    double error_rate_abort = 0.02;
    PromptScaffold scaffold;
};

struct EvalRun {
    MetricsReport report;
    std::vector<EvalRecord> records;  // id-ordered (input order)
};

inline std::string eval_prompt_for(const TaskInstance& inst, const EvalConfig& config) {
    std::vector<std::string> edits;
    if (config.style.kind == PromptStyle::Ice) edits.push_back(detail::edits_from_instance(inst));
    return build_prompt(config.style, inst, edits, config.scaffold);
}

/// Queries every instance once with bounded concurrency, labels the answers,
/// and folds the metric suite. Records keep the input (id) order, so reports
/// are deterministic however threads interleave.
inline EvalRun run_eval(ModelClient& client, const std::vector<TaskInstance>& instances,
                        const EvalConfig& config = {}) {
    if (instances.empty()) throw EmptyInputError("no instances to evaluate");
    std::vector<EvalRecord> records(instances.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < instances.size(); i = next.fetch_add(1)) {
            const TaskInstance& inst = instances[i];
            EvalRecord rec;
            try {
                CompletionRequest req;
                req.model = config.model;
                req.prompt = eval_prompt_for(inst, config);
                req.max_tokens = config.max_tokens;
                Completion completion = client.complete(req);
                rec = label_response(completion.text, inst.answer_cf, inst.answer_orig);
            } catch (const ClientError& e) {
                rec.errored = true;
                rec.raw_response = e.what();
            }
            rec.instance_id = inst.id;
            records[i] = std::move(rec);
        }
    };

    const int threads = std::max(1, std::min<int>(config.max_in_flight,
                                                  static_cast<int>(instances.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    int errors = 0;
    for (const auto& rec : records) errors += rec.errored ? 1 : 0;
    const double error_rate = static_cast<double>(errors) / static_cast<double>(records.size());
    if (error_rate > config.error_rate_abort)
        throw RunAbortedError(std::to_string(errors) + "/" + std::to_string(records.size()) +
                              " requests failed after retries");

    EvalRun run;
    run.records = std::move(records);
    run.report = compute_metrics(run.records, config.strict_only);
    return run;
}

// ---- persistence ----

inline void write_eval_records(const std::vector<EvalRecord>& records, const std::string& style,
                               const std::string& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << nlohmann::json{{"schema_version", kSchemaVersion}}.dump() << "\n";
    for (const auto& rec : records) {
        nlohmann::json j;
        j["instance_id"] = rec.instance_id;
        j["prompt_style"] = style;
        j["model"] = model;
        j["response"] = rec.raw_response;
        j["matched_cf"] = rec.matched_cf;
        j["matched_orig"] = rec.matched_orig;
        j["negated_cf"] = rec.negated_cf;
        j["exact_match"] = rec.exact_match;
        j["strict_faithful"] = rec.strict_faithful();
        j["class"] = to_string(classify(rec));
        j["error"] = rec.errored;
        out << j.dump() << "\n";
    }
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["p_c"] = round1(r.p_c);
    j["p_s"] = round1(r.p_s);
    j["p_o"] = round1(r.p_o);
    if (r.m_r) {
        j["m_r"] = round1(*r.m_r);
    } else {
        j["m_r"] = nullptr;
    }
    j["em"] = round1(r.em);
    j["strict_only"] = r.strict_only;
    j["counts"] = {{"total", r.n_total},   {"strict", r.n_strict}, {"loose", r.n_loose},
                   {"orig", r.n_orig},     {"exact", r.n_exact},   {"error", r.n_error}};
    return j;
}

inline void write_report(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << report_to_json(report).dump(2) << "\n";
}

}  // namespace confiforge
