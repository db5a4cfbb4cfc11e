#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "confiforge/dataset.hpp"
#include "confiforge/errors.hpp"
#include "confiforge/model_client.hpp"

namespace confiforge {

/// Sequence log-probabilities for one preference example under the policy and
/// the frozen reference.
struct DpoPoint {
    double logp_w_theta = 0.0;
    double logp_l_theta = 0.0;
    double logp_w_ref = 0.0;
    double logp_l_ref = 0.0;

    double margin(double beta) const {
        return beta * ((logp_w_theta - logp_w_ref) - (logp_l_theta - logp_l_ref));
    }
};

struct DpoGradient {
    double d_logp_w_theta = 0.0;
    double d_logp_l_theta = 0.0;
    double d_logp_w_ref = 0.0;  // reported for checking, never applied
    double d_logp_l_ref = 0.0;
};

struct DpoConfig {
    double beta = 0.1;
    double learning_rate = 0.5;
    int steps = 200;
    std::uint64_t seed = 0;
};

namespace detail {

// -log(sigmoid(z)) without overflow on either tail.
inline double neg_log_sigmoid(double z) {
    if (z >= 0.0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Pairwise summation keeps batch reductions order-independent and stable.
inline double pairwise_sum(const std::vector<double>& values, std::size_t lo, std::size_t hi) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += values[i];
        return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(values, lo, mid) + pairwise_sum(values, mid, hi);
}

inline double pairwise_mean(const std::vector<double>& values) {
    return pairwise_sum(values, 0, values.size()) / static_cast<double>(values.size());
}

}  // namespace detail

/// Mean over the batch of -log(sigmoid(beta * (chosen log-ratio - rejected
/// log-ratio))).
inline double dpo_loss(const std::vector<DpoPoint>& points, double beta) {
    if (points.empty()) throw EmptyBatchError();
    if (beta <= 0.0) throw ConfigError("beta must be positive");
    std::vector<double> losses;
    losses.reserve(points.size());
    for (const auto& p : points) losses.push_back(detail::neg_log_sigmoid(p.margin(beta)));
    return detail::pairwise_mean(losses);
}

/// Analytic gradient of a single point's loss w.r.t. the four log-probs.
inline DpoGradient dpo_grad(const DpoPoint& point, double beta) {
    if (beta <= 0.0) throw ConfigError("beta must be positive");
    const double s = detail::sigmoid(point.margin(beta));
    DpoGradient g;
    g.d_logp_w_theta = -beta * (1.0 - s);
    g.d_logp_l_theta = beta * (1.0 - s);
    g.d_logp_w_ref = beta * (1.0 - s);
    g.d_logp_l_ref = -beta * (1.0 - s);
    return g;
}

/// A tabular bigram policy over a word vocabulary: one logit row per previous
/// token. The reference copy is frozen at construction and never updated.
class ToyPolicy {
public:
    static constexpr const char* kStartToken = "<s>";

    explicit ToyPolicy(std::vector<std::string> vocabulary) {
        vocab_.push_back(kStartToken);
        for (auto& t : vocabulary) {
            if (index_of(t) < 0) vocab_.push_back(std::move(t));
        }
        for (std::size_t i = 0; i < vocab_.size(); ++i) index_[vocab_[i]] = static_cast<int>(i);
        logits_.assign(vocab_.size() * vocab_.size(), 0.0);
        reference_logits_ = logits_;
    }

    /// Vocabulary built from whitespace tokens of every prompt and response.
    static ToyPolicy from_pairs(const std::vector<PreferencePair>& pairs) {
        std::map<std::string, bool> seen;
        std::vector<std::string> vocab;
        auto add = [&](const std::string& text) {
            for (auto& t : detail::whitespace_tokens(text)) {
                if (!seen.count(t)) {
                    seen[t] = true;
                    vocab.push_back(t);
                }
            }
        };
        for (const auto& p : pairs) {
            add(p.prompt);
            add(p.chosen);
            add(p.rejected);
        }
        return ToyPolicy(std::move(vocab));
    }

    std::size_t vocab_size() const { return vocab_.size(); }
    const std::vector<std::string>& vocabulary() const { return vocab_; }
    const std::vector<double>& parameters() const { return logits_; }
    const std::vector<double>& reference_parameters() const { return reference_logits_; }
    std::vector<double>& mutable_parameters() { return logits_; }

    int token_index(const std::string& token) const {
        const int i = index_of(token);
        if (i < 0) throw UnknownTokenError(token);
        return i;
    }

    std::vector<int> encode(const std::string& text) const {
        std::vector<int> out;
        for (const auto& t : detail::whitespace_tokens(text)) out.push_back(token_index(t));
        return out;
    }

    /// log softmax(logits[prev])[next]; `use_reference` scores under the
    /// frozen copy.
    double log_prob(int prev, int next, bool use_reference = false) const {
        const std::vector<double>& table = use_reference ? reference_logits_ : logits_;
        const double* row = table.data() + static_cast<std::size_t>(prev) * vocab_.size();
        double max = row[0];
        for (std::size_t i = 1; i < vocab_.size(); ++i) max = std::max(max, row[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < vocab_.size(); ++i) sum += std::exp(row[i] - max);
        return row[static_cast<std::size_t>(next)] - max - std::log(sum);
    }

    bool operator==(const ToyPolicy&) const = default;

private:
    int index_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? -1 : it->second;
    }

    std::vector<std::string> vocab_;
    std::map<std::string, int> index_;
    std::vector<double> logits_;
    std::vector<double> reference_logits_;
};

/// Sum of per-position log-probs of the continuation given the context; the
/// previous token of position 0 is the context's last token (or the start
/// token for an empty context).
inline double sequence_logprob(const ToyPolicy& policy, const std::vector<int>& context,
                               const std::vector<int>& continuation, bool use_reference = false) {
    int prev = context.empty() ? policy.token_index(ToyPolicy::kStartToken) : context.back();
    double total = 0.0;
    for (int token : continuation) {
        total += policy.log_prob(prev, token, use_reference);
        prev = token;
    }
    return total;
}

inline double sequence_logprob(const ToyPolicy& policy, const std::string& context,
                               const std::string& continuation, bool use_reference = false) {
    return sequence_logprob(policy, policy.encode(context), policy.encode(continuation), use_reference);
}

struct TraceStep {
    int step = 0;
    double loss = 0.0;
    double mean_margin = 0.0;
};

struct TrainResult {
    ToyPolicy policy;
    std::vector<TraceStep> trace;
    double preference_accuracy = 0.0;         // chosen scored above rejected
    double reward_preference_accuracy = 0.0;  // positive implicit reward margin
};

namespace detail {

struct EncodedPair {
    std::vector<int> context;
    std::vector<int> chosen;
    std::vector<int> rejected;
    double logp_w_ref = 0.0;
    double logp_l_ref = 0.0;
};

// d log softmax(row)[realized] / d row = onehot(realized) - softmax(row);
// accumulates coeff * that into grad_row.
inline void accumulate_position(const ToyPolicy& policy, std::vector<double>& grad, int prev,
                                int realized, double coeff) {
    const std::size_t v = policy.vocab_size();
    const double* row = policy.parameters().data() + static_cast<std::size_t>(prev) * v;
    double max = row[0];
    for (std::size_t i = 1; i < v; ++i) max = std::max(max, row[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < v; ++i) sum += std::exp(row[i] - max);
    double* grad_row = grad.data() + static_cast<std::size_t>(prev) * v;
    for (std::size_t i = 0; i < v; ++i) grad_row[i] -= coeff * (std::exp(row[i] - max) / sum);
    grad_row[static_cast<std::size_t>(realized)] += coeff;
}

inline void accumulate_sequence(const ToyPolicy& policy, std::vector<double>& grad,
                                const std::vector<int>& context, const std::vector<int>& continuation,
                                double coeff) {
    int prev = context.empty() ? policy.token_index(ToyPolicy::kStartToken) : context.back();
    for (int token : continuation) {
        accumulate_position(policy, grad, prev, token, coeff);
        prev = token;
    }
}

}  // namespace detail

/// Full-batch gradient descent on the preference objective through the toy
/// policy. The trace records loss and mean implicit reward margin before each
/// update; the reference table never changes.
inline TrainResult train_toy(const std::vector<PreferencePair>& pairs, const DpoConfig& config) {
    if (pairs.empty()) throw EmptyBatchError();
    if (config.beta <= 0.0) throw ConfigError("beta must be positive");

    TrainResult result{ToyPolicy::from_pairs(pairs), {}, 0.0, 0.0};
    ToyPolicy& policy = result.policy;

    std::vector<detail::EncodedPair> encoded;
    encoded.reserve(pairs.size());
    for (const auto& p : pairs) {
        detail::EncodedPair e;
        e.context = policy.encode(p.prompt);
        e.chosen = policy.encode(p.chosen);
        e.rejected = policy.encode(p.rejected);
        e.logp_w_ref = sequence_logprob(policy, e.context, e.chosen, /*use_reference=*/true);
        e.logp_l_ref = sequence_logprob(policy, e.context, e.rejected, /*use_reference=*/true);
        encoded.push_back(std::move(e));
    }

    const double n = static_cast<double>(encoded.size());
    std::vector<double> grad(policy.parameters().size());
    for (int step = 0; step < config.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        std::vector<double> losses, margins;
        losses.reserve(encoded.size());
        margins.reserve(encoded.size());

        for (const auto& e : encoded) {
            DpoPoint point;
            point.logp_w_theta = sequence_logprob(policy, e.context, e.chosen);
            point.logp_l_theta = sequence_logprob(policy, e.context, e.rejected);
            point.logp_w_ref = e.logp_w_ref;
            point.logp_l_ref = e.logp_l_ref;
            const double z = point.margin(config.beta);
            losses.push_back(detail::neg_log_sigmoid(z));
            margins.push_back(z);

            const DpoGradient g = dpo_grad(point, config.beta);
            detail::accumulate_sequence(policy, grad, e.context, e.chosen, g.d_logp_w_theta / n);
            detail::accumulate_sequence(policy, grad, e.context, e.rejected, g.d_logp_l_theta / n);
        }

        TraceStep t;
        t.step = step;
        t.loss = detail::pairwise_mean(losses);
        t.mean_margin = detail::pairwise_mean(margins);
        if (!std::isfinite(t.loss)) throw DivergenceError(step);
        result.trace.push_back(t);

        auto& params = policy.mutable_parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
    }

    int raw_wins = 0, reward_wins = 0;
    for (const auto& e : encoded) {
        const double lw = sequence_logprob(policy, e.context, e.chosen);
        const double ll = sequence_logprob(policy, e.context, e.rejected);
        if (lw > ll) ++raw_wins;
        if ((lw - e.logp_w_ref) > (ll - e.logp_l_ref)) ++reward_wins;
    }
    result.preference_accuracy = static_cast<double>(raw_wins) / n;
    result.reward_preference_accuracy = static_cast<double>(reward_wins) / n;
    return result;
}

// ---- persistence ----

inline void write_trace(const std::vector<TraceStep>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "step\tloss\tmean_margin\n";
    char buf[96];
    for (const auto& t : trace) {
        std::snprintf(buf, sizeof(buf), "%d\t%.12g\t%.12g\n", t.step, t.loss, t.mean_margin);
        out << buf;
    }
}

/// Sparse dump of the trained table: one row per non-zero logit.
inline void write_policy(const ToyPolicy& policy, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "prev_token\tnext_token\tlogit\n";
    const auto& vocab = policy.vocabulary();
    const auto& params = policy.parameters();
    char buf[64];
    for (std::size_t p = 0; p < vocab.size(); ++p) {
        for (std::size_t x = 0; x < vocab.size(); ++x) {
            const double v = params[p * vocab.size() + x];
            if (v == 0.0) continue;
            std::snprintf(buf, sizeof(buf), "%.12g", v);
            out << vocab[p] << "\t" << vocab[x] << "\t" << buf << "\n";
        }
    }
}

}  // namespace confiforge
