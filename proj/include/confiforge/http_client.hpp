#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "confiforge/errors.hpp"
#include "confiforge/model_client.hpp"

namespace confiforge {

/// Chat-completions-compatible HTTP client with bounded retries and bounded
/// in-flight concurrency. Credentials are read from the environment variable
/// named in the config, never from flags.
class HttpModelClient : public ModelClient {
public:
    explicit HttpModelClient(ClientConfig config)
        : config_(std::move(config)), gate_(config_.max_in_flight) {}

    Completion complete(const CompletionRequest& request) override {
        detail::GateGuard guard(gate_);
        const std::string body = build_body(request).dump();

        int attempt = 0;
        std::string last_error;
        while (true) {
            httplib::Client http(config_.endpoint_url);
            http.set_connection_timeout(0, config_.timeout_ms * 1000LL);
            http.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

            httplib::Headers headers;
            const std::string key = api_key();
            if (key.empty()) throw AuthError("no credential in $" + config_.api_key_env);
            headers.emplace("Authorization", "Bearer " + key);

            auto res = http.Post("/v1/chat/completions", headers, body, "application/json");
            if (res) {
                if (res->status >= 200 && res->status < 300) return parse_completion(res->body);
                if (res->status == 401 || res->status == 403)
                    throw AuthError("endpoint returned " + std::to_string(res->status));
                if (!retryable(res->status))
                    throw ProtocolError("endpoint returned " + std::to_string(res->status) + ": " + res->body);
                last_error = "status " + std::to_string(res->status);
            } else {
                last_error = httplib::to_string(res.error());
            }

            if (attempt >= config_.max_retries) break;
            std::this_thread::sleep_for(backoff(attempt));
            ++attempt;
        }
        if (last_error.find("429") != std::string::npos) throw RateLimitedError(last_error);
        if (last_error.find("timeout") != std::string::npos || last_error.find("Timeout") != std::string::npos)
            throw TimeoutError(last_error);
        throw ClientError("request failed after " + std::to_string(attempt + 1) + " attempts: " + last_error);
    }

    double score_sequence(const std::string&, const std::string&) override {
        throw UnsupportedByEndpointError("chat-completions endpoints do not expose echo scoring");
    }

private:
    static bool retryable(int status) {
        return status == 408 || status == 429 || status >= 500;
    }

    static std::chrono::milliseconds backoff(int attempt) {
        return std::chrono::milliseconds(50LL << attempt);
    }

    std::string api_key() const {
        const char* v = std::getenv(config_.api_key_env.c_str());
        return v ? v : "";
    }

    nlohmann::json build_body(const CompletionRequest& request) const {
        nlohmann::json body;
        body["model"] = request.model.empty() ? config_.model : request.model;
        body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
        body["max_tokens"] = request.max_tokens;
        body["temperature"] = request.temperature;
        if (request.top_logprobs > 0) {
            int k = std::min(request.top_logprobs, config_.max_top_logprobs);
            body["logprobs"] = true;
            body["top_logprobs"] = k;
        }
        if (request.seed) body["seed"] = *request.seed;
        return body;
    }

    static Completion parse_completion(const std::string& body) {
        nlohmann::json payload;
        try {
            payload = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("unparsable response: ") + e.what());
        }
        if (!payload.contains("choices") || payload["choices"].empty())
            throw ProtocolError("response has no choices");
        const auto& choice = payload["choices"][0];

        Completion out;
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
            out.text = choice["message"]["content"].get<std::string>();
        } else {
            throw ProtocolError("choice has no message content");
        }
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content")) {
            for (const auto& item : choice["logprobs"]["content"]) {
                TokenInfo info;
                info.token = item.value("token", "");
                info.logprob = item.value("logprob", 0.0);
                if (item.contains("top_logprobs")) {
                    for (const auto& alt : item["top_logprobs"]) {
                        info.alternatives.push_back(
                            {alt.value("token", ""), alt.value("logprob", 0.0)});
                    }
                }
                out.tokens.push_back(std::move(info));
            }
        }
        return out;
    }

    ClientConfig config_;
    detail::Gate gate_;
};

}  // namespace confiforge
