#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "confiforge/errors.hpp"

namespace confiforge {

struct CompletionRequest {
    std::string model;
    std::string prompt;
    int max_tokens = 256;
    double temperature = 0.0;
    int top_logprobs = 0;  // k; 0 disables logprob retrieval
    std::optional<std::uint64_t> seed;
};

struct TokenAlternative {
    std::string token;
    double logprob = 0.0;
};

struct TokenInfo {
    std::string token;
    double logprob = 0.0;
    std::vector<TokenAlternative> alternatives;  // sorted by descending logprob
};

struct Completion {
    std::string text;
    std::vector<TokenInfo> tokens;
};

/// Uniform interface over a chat-completions endpoint and the offline mock.
/// Implementations must be safe to share across worker threads.
class ModelClient {
public:
    virtual ~ModelClient() = default;
    virtual Completion complete(const CompletionRequest& request) = 0;
    /// Total log-probability of `continuation` given `context`.
    virtual double score_sequence(const std::string& context, const std::string& continuation) = 0;
};

struct ClientConfig {
    std::string endpoint_url = "http://localhost:8080";
    std::string model = "default";
    int timeout_ms = 30000;
    int max_retries = 3;
    int max_in_flight = 4;
    int max_top_logprobs = 20;
    std::string api_key_env = "CONFIFORGE_API_KEY";
};

namespace detail {

// Counting semaphore bounding concurrent requests.
class Gate {
public:
    explicit Gate(int slots) : slots_(slots > 0 ? slots : 1) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return slots_ > 0; });
        --slots_;
    }

    void release() {
        {
            std::lock_guard lock(mu_);
            ++slots_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int slots_;
};

struct GateGuard {
    explicit GateGuard(Gate& gate) : gate(gate) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
    Gate& gate;
};

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string token;
    while (in >> token) out.push_back(token);
    return out;
}

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace detail

/// Deterministic offline stand-in: no network, byte-identical behavior across
/// runs. Responses are resolved scripted-exact-prompt first, then the default
/// handler, then a hash-derived placeholder.
class MockClient : public ModelClient {
public:
    explicit MockClient(std::size_t vocab_size = 1024) : vocab_size_(vocab_size) {}

    void script_response(const std::string& prompt, const std::string& text) {
        std::lock_guard lock(mu_);
        responses_[prompt] = text;
    }

    void script_completion(const std::string& prompt, Completion completion) {
        std::lock_guard lock(mu_);
        completions_[prompt] = std::move(completion);
    }

    void script_failure(const std::string& prompt, const std::string& message) {
        std::lock_guard lock(mu_);
        failures_[prompt] = message;
    }

    void script_default(std::function<std::string(const std::string&)> fn) {
        std::lock_guard lock(mu_);
        default_fn_ = std::move(fn);
    }

    Completion complete(const CompletionRequest& request) override {
        InFlight guard(*this);
        std::function<std::string(const std::string&)> default_fn;
        {
            std::lock_guard lock(mu_);
            ++calls_;
            if (auto it = failures_.find(request.prompt); it != failures_.end())
                throw ClientError(it->second);
            if (auto it = completions_.find(request.prompt); it != completions_.end()) {
                Completion c = it->second;
                truncate_alternatives(c, request.top_logprobs);
                return c;
            }
            if (auto it = responses_.find(request.prompt); it != responses_.end())
                return synthesize(it->second, request.top_logprobs);
            default_fn = default_fn_;
        }
        if (default_fn) return synthesize(default_fn(request.prompt), request.top_logprobs);
        std::ostringstream text;
        text << "mock-" << std::hex << detail::fnv1a64(request.prompt);
        return synthesize(text.str(), request.top_logprobs);
    }

    double score_sequence(const std::string&, const std::string& continuation) override {
        const auto tokens = detail::whitespace_tokens(continuation);
        return -static_cast<double>(tokens.size()) * std::log(static_cast<double>(vocab_size_));
    }

    int calls() const { return calls_; }
    int max_concurrent_observed() const { return max_concurrent_; }

private:
    struct InFlight {
        explicit InFlight(MockClient& c) : client(c) {
            int now = ++client.concurrent_;
            int seen = client.max_concurrent_.load();
            while (now > seen && !client.max_concurrent_.compare_exchange_weak(seen, now)) {
            }
        }
        ~InFlight() { --client.concurrent_; }
        MockClient& client;
    };

    Completion synthesize(const std::string& text, int k) const {
        Completion c;
        c.text = text;
        const double lp = -std::log(static_cast<double>(vocab_size_));
        for (const auto& word : detail::whitespace_tokens(text)) {
            TokenInfo info;
            info.token = word;
            info.logprob = lp;
            for (int j = 0; j < k; ++j) {
                TokenAlternative alt;
                alt.token = j == 0 ? word : word + "~" + std::to_string(j);
                alt.logprob = lp - 0.5 * j;
                info.alternatives.push_back(std::move(alt));
            }
            c.tokens.push_back(std::move(info));
        }
        return c;
    }

    static void truncate_alternatives(Completion& c, int k) {
        for (auto& t : c.tokens) {
            if (static_cast<int>(t.alternatives.size()) > k)
                t.alternatives.resize(static_cast<std::size_t>(k));
        }
    }

    mutable std::mutex mu_;
    std::map<std::string, std::string> responses_;
    std::map<std::string, Completion> completions_;
    std::map<std::string, std::string> failures_;
    std::function<std::string(const std::string&)> default_fn_;
    std::size_t vocab_size_;
    std::atomic<int> calls_{0};
    std::atomic<int> concurrent_{0};
    std::atomic<int> max_concurrent_{0};
};

}  // namespace confiforge

// The HTTP-backed client lives in a separate header so hermetic builds and
// tests that never touch the network do not pull in the transport.
