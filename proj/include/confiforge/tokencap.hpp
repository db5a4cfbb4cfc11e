#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "confiforge/errors.hpp"
#include "confiforge/evalharness.hpp"
#include "confiforge/model_client.hpp"

namespace confiforge {

/// The score distribution observed at one generated position, sorted by
/// descending score (ties broken by token string).
struct LogitsFrame {
    int position = 0;  // 1-based
    std::vector<std::pair<std::string, double>> candidates;
};

struct CaptureHit {
    int position = 0;
    std::string token;
    double score = 0.0;   // captured score as reported by the endpoint
    int rank = 0;         // 1-based rank within the frame
    double softmax_prob = 0.0;  // softmax over that frame's candidates
};

struct CaptureResult {
    std::optional<CaptureHit> captured;
    bool s_new_seen = false;  // any frame exposed a word of the new knowledge
};

namespace detail {

inline std::set<std::string> word_set(const std::string& text) {
    std::set<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.insert(word);
            word.clear();
        }
    };
    for (unsigned char c : text) {
        if (is_word_byte(c)) {
            word += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
        } else {
            flush();
        }
    }
    flush();
    return out;
}

// Trims whitespace and leading subword space markers, then case-folds.
inline std::string clean_token(const std::string& token) {
    std::string t = token;
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
    for (const std::string marker : {std::string("▁"), std::string("Ġ")}) {
        if (t.rfind(marker, 0) == 0) t = t.substr(marker.size());
    }
    for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return t;
}

inline void sort_frame(LogitsFrame& frame) {
    std::sort(frame.candidates.begin(), frame.candidates.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
}

inline double frame_softmax(const LogitsFrame& frame, std::size_t index) {
    double max = frame.candidates.front().second;
    for (const auto& [_, s] : frame.candidates) max = std::max(max, s);
    double sum = 0.0;
    for (const auto& [_, s] : frame.candidates) sum += std::exp(s - max);
    return std::exp(frame.candidates[index].second - max) / sum;
}

}  // namespace detail

/// Case-insensitive word-level intersection of the two knowledge strings:
/// the words that cannot distinguish new from parametric knowledge.
inline std::set<std::string> common_parts(const std::string& s_new, const std::string& s_old) {
    const auto a = detail::word_set(s_new);
    const auto b = detail::word_set(s_old);
    std::set<std::string> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.begin()));
    return out;
}

/// Scans frames in order; within a frame, candidates by descending score. A
/// common word abandons its frame (it cannot distinguish the knowledge
/// sources); the first new-knowledge word captures its score, rank, and
/// frame softmax probability, and the scan stops.
inline CaptureResult capture(const std::vector<LogitsFrame>& frames, const std::string& s_new,
                             const std::string& s_old) {
    const auto common = common_parts(s_new, s_old);
    const auto new_words = detail::word_set(s_new);

    CaptureResult result;
    for (const LogitsFrame& raw : frames) {
        if (raw.candidates.empty()) continue;
        LogitsFrame frame = raw;
        detail::sort_frame(frame);
        for (std::size_t j = 0; j < frame.candidates.size(); ++j) {
            const std::string text = detail::clean_token(frame.candidates[j].first);
            if (common.count(text)) break;  // indistinguishable token: abandon this frame
            if (new_words.count(text)) {
                result.s_new_seen = true;
                CaptureHit hit;
                hit.position = frame.position;
                hit.token = frame.candidates[j].first;
                hit.score = frame.candidates[j].second;
                hit.rank = static_cast<int>(j) + 1;
                hit.softmax_prob = detail::frame_softmax(frame, j);
                result.captured = hit;
                return result;
            }
        }
    }
    return result;
}

// ---- aggregation ----

struct RankBuckets {
    int rank1 = 0;
    int rank2 = 0;
    int rank3_5 = 0;
    int rank6_10 = 0;
    int rank_over_10 = 0;
    int not_captured = 0;
};

struct CaptureAggregate {
    int total = 0;
    int captured = 0;
    std::optional<double> avg_score;          // mean of captured scores as reported
    std::optional<double> avg_score_percent;  // mean of probability-form scores x 100
    RankBuckets buckets;
    double kde_bandwidth = 0.0;
    std::vector<double> kde_x;  // 0..1, 101 points
    std::vector<double> kde_y;
};

inline constexpr int kKdeGridPoints = 101;

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double probability_form(double score) { return score > 0.0 ? score : std::exp(score); }

}  // namespace detail

/// Average captured score, rank histogram, and a boundary-corrected Gaussian
/// KDE of the frame softmax probabilities (Scott's rule bandwidth) sampled on
/// a 101-point grid over [0, 1]. Each kernel is renormalized to unit mass on
/// [0, 1] so the density integrates to one.
inline CaptureAggregate aggregate_captures(const std::vector<CaptureResult>& results) {
    CaptureAggregate agg;
    agg.total = static_cast<int>(results.size());

    std::vector<double> scores, probs;
    for (const auto& r : results) {
        if (!r.captured) {
            ++agg.buckets.not_captured;
            continue;
        }
        ++agg.captured;
        scores.push_back(r.captured->score);
        probs.push_back(r.captured->softmax_prob);
        const int rank = r.captured->rank;
        if (rank == 1) ++agg.buckets.rank1;
        else if (rank == 2) ++agg.buckets.rank2;
        else if (rank <= 5) ++agg.buckets.rank3_5;
        else if (rank <= 10) ++agg.buckets.rank6_10;
        else ++agg.buckets.rank_over_10;
    }

    agg.kde_x.resize(kKdeGridPoints);
    for (int i = 0; i < kKdeGridPoints; ++i) agg.kde_x[static_cast<std::size_t>(i)] = i / 100.0;

    if (scores.empty()) return agg;

    double sum = 0.0, sum_prob_form = 0.0;
    for (double s : scores) {
        sum += s;
        sum_prob_form += detail::probability_form(s);
    }
    agg.avg_score = sum / static_cast<double>(scores.size());
    agg.avg_score_percent = 100.0 * sum_prob_form / static_cast<double>(scores.size());

    const double n = static_cast<double>(probs.size());
    double mean = 0.0;
    for (double p : probs) mean += p;
    mean /= n;
    double var = 0.0;
    for (double p : probs) var += (p - mean) * (p - mean);
    const double sigma = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    double h = sigma * std::pow(n, -0.2);
    if (!(h > 0.02)) h = 0.05;  // keep the grid able to resolve the kernels
    agg.kde_bandwidth = h;

    agg.kde_y.assign(kKdeGridPoints, 0.0);
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
    for (double p : probs) {
        // mass of this kernel inside [0, 1]; renormalizing by it corrects the
        // boundary truncation
        const double mass = detail::normal_cdf((1.0 - p) / h) - detail::normal_cdf((0.0 - p) / h);
        for (int i = 0; i < kKdeGridPoints; ++i) {
            const double x = agg.kde_x[static_cast<std::size_t>(i)];
            const double u = (x - p) / h;
            agg.kde_y[static_cast<std::size_t>(i)] +=
                (inv_sqrt2pi * std::exp(-0.5 * u * u) / h) / (mass * n);
        }
    }
    return agg;
}

// ---- per-instance capture ----

struct CaptureRunConfig {
    PromptStyle style = PromptStyle::base();
    std::string model;
    int top_k = 5;
    int max_tokens = 128;
    PromptScaffold scaffold;
};

inline std::vector<LogitsFrame> frames_from_completion(const Completion& completion) {
    std::vector<LogitsFrame> frames;
    int position = 0;
    for (const auto& token : completion.tokens) {
        LogitsFrame frame;
        frame.position = ++position;
        if (token.alternatives.empty()) {
            frame.candidates.emplace_back(token.token, token.logprob);
        } else {
            for (const auto& alt : token.alternatives) frame.candidates.emplace_back(alt.token, alt.logprob);
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

/// Runs the styled prompt, converts the per-token top-k alternatives into
/// frames, and captures with the counterfactual answer as the new knowledge
/// and the factual answer as the parametric knowledge.
inline CaptureResult capture_for_instance(ModelClient& client, const TaskInstance& instance,
                                          const CaptureRunConfig& config = {}) {
    EvalConfig eval_config;
    eval_config.style = config.style;
    eval_config.scaffold = config.scaffold;

    CompletionRequest req;
    req.model = config.model;
    req.prompt = eval_prompt_for(instance, eval_config);
    req.max_tokens = config.max_tokens;
    req.top_logprobs = config.top_k;
    const Completion completion = client.complete(req);
    return capture(frames_from_completion(completion), instance.answer_cf.label,
                   instance.answer_orig.label);
}

// ---- persistence ----

inline nlohmann::json capture_record_json(const std::string& instance_id, const CaptureResult& r) {
    nlohmann::json j;
    j["instance_id"] = instance_id;
    j["captured"] = r.captured.has_value();
    j["new_knowledge_in_top_k"] = r.s_new_seen;
    if (r.captured) {
        j["position"] = r.captured->position;
        j["token"] = r.captured->token;
        j["score"] = r.captured->score;
        j["rank"] = r.captured->rank;
        j["prob"] = r.captured->softmax_prob;
    }
    return j;
}

inline nlohmann::json aggregate_to_json(const CaptureAggregate& agg) {
    nlohmann::json j;
    j["total"] = agg.total;
    j["captured"] = agg.captured;
    j["avg_score"] = agg.avg_score ? nlohmann::json(*agg.avg_score) : nlohmann::json();
    j["avg_score_percent"] =
        agg.avg_score_percent ? nlohmann::json(*agg.avg_score_percent) : nlohmann::json();
    j["rank_buckets"] = {{"1", agg.buckets.rank1},       {"2", agg.buckets.rank2},
                         {"3-5", agg.buckets.rank3_5},   {"6-10", agg.buckets.rank6_10},
                         {">10", agg.buckets.rank_over_10}, {"not-captured", agg.buckets.not_captured}};
    j["kde"] = nlohmann::json{{"bandwidth", agg.kde_bandwidth}, {"x", agg.kde_x}, {"y", agg.kde_y}};
    return j;
}

inline void write_capture_report(const std::vector<std::string>& instance_ids,
                                 const std::vector<CaptureResult>& results, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
        records.push_back(capture_record_json(i < instance_ids.size() ? instance_ids[i] : "", results[i]));
    }
    j["records"] = std::move(records);
    j["aggregate"] = aggregate_to_json(aggregate_captures(results));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

}  // namespace confiforge
