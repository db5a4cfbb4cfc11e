#include "doctest.h"

#include "confiforge/http_client.hpp"
#include "confiforge/model_client.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"

using namespace confiforge;

TEST_CASE("mock completions are deterministic") {
    MockClient a, b;
    CompletionRequest req;
    req.prompt = "some prompt";
    CHECK(a.complete(req).text == b.complete(req).text);
    CHECK(a.complete(req).text == a.complete(req).text);
}

TEST_CASE("mock top-k alternatives are sorted descending") {
    MockClient mock;
    mock.script_response("p", "three word answer");
    CompletionRequest req;
    req.prompt = "p";
    req.top_logprobs = 5;
    auto completion = mock.complete(req);
    REQUIRE(completion.tokens.size() == 3);
    for (const auto& token : completion.tokens) {
        REQUIRE(token.alternatives.size() == 5);
        for (std::size_t j = 1; j < token.alternatives.size(); ++j) {
            CHECK(token.alternatives[j - 1].logprob > token.alternatives[j].logprob);
        }
        CHECK(token.alternatives[0].token == token.token);
        CHECK(token.logprob <= 0.0);
    }
}

TEST_CASE("mock sequence scoring") {
    MockClient mock(/*vocab_size=*/16);
    SUBCASE("uniform scores are m * log(1/V)") {
        CHECK(mock.score_sequence("ctx", "one two three") ==
              doctest::Approx(3.0 * std::log(1.0 / 16.0)).epsilon(1e-12));
    }
    SUBCASE("empty continuation scores zero") { CHECK(mock.score_sequence("ctx", "") == 0.0); }
    SUBCASE("additive over concatenation") {
        const double joint = mock.score_sequence("c", "alpha beta");
        const double split = mock.score_sequence("c", "alpha") + mock.score_sequence("c alpha", "beta");
        CHECK(std::abs(joint - split) < 1e-9);
    }
}

TEST_CASE("http client: missing credential is an auth error") {
    ClientConfig config;
    config.api_key_env = "CONFIFORGE_TEST_NO_SUCH_KEY";
    ::unsetenv(config.api_key_env.c_str());
    HttpModelClient client(config);
    CompletionRequest req;
    req.prompt = "hello";
    CHECK_THROWS_AS(client.complete(req), AuthError);
}

namespace {

struct ScriptedServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit ScriptedServer(httplib::Server::Handler handler) {
        server.Post("/v1/chat/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~ScriptedServer() {
        server.stop();
        thread.join();
    }

    ClientConfig config() const {
        ClientConfig c;
        c.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
        c.api_key_env = "CONFIFORGE_TEST_KEY";
        c.timeout_ms = 2000;
        return c;
    }
};

const char* kOkBody = R"({
  "choices": [{
    "message": {"content": "Paris is the capital."},
    "logprobs": {"content": [
      {"token": "Paris", "logprob": -0.1,
       "top_logprobs": [{"token": "Paris", "logprob": -0.1}, {"token": "Lyon", "logprob": -2.5}]}
    ]}
  }]
})";

}  // namespace

TEST_CASE("http client against a scripted endpoint") {
    ::setenv("CONFIFORGE_TEST_KEY", "secret", 1);

    SUBCASE("parses text and per-token logprobs") {
        ScriptedServer server([](const httplib::Request& req, httplib::Response& res) {
            CHECK(req.get_header_value("Authorization") == "Bearer secret");
            auto body = nlohmann::json::parse(req.body);
            CHECK(body["model"] == "test-model");
            CHECK(body["top_logprobs"] == 2);
            res.set_content(kOkBody, "application/json");
        });
        HttpModelClient client(server.config());
        CompletionRequest req;
        req.model = "test-model";
        req.prompt = "capital of France?";
        req.top_logprobs = 2;
        auto completion = client.complete(req);
        CHECK(completion.text == "Paris is the capital.");
        REQUIRE(completion.tokens.size() == 1);
        CHECK(completion.tokens[0].token == "Paris");
        REQUIRE(completion.tokens[0].alternatives.size() == 2);
        CHECK(completion.tokens[0].alternatives[1].token == "Lyon");
    }

    SUBCASE("retries through transient failures") {
        std::atomic<int> calls{0};
        ScriptedServer server([&calls](const httplib::Request&, httplib::Response& res) {
            const int n = ++calls;
            if (n <= 2) {
                res.status = n == 1 ? 429 : 503;
                res.set_content("busy", "text/plain");
            } else {
                res.set_content(kOkBody, "application/json");
            }
        });
        HttpModelClient client(server.config());
        CompletionRequest req;
        req.prompt = "p";
        CHECK(client.complete(req).text == "Paris is the capital.");
        CHECK(calls == 3);
    }

    SUBCASE("gives up after bounded retries") {
        std::atomic<int> calls{0};
        ScriptedServer server([&calls](const httplib::Request&, httplib::Response& res) {
            ++calls;
            res.status = 429;
        });
        auto config = server.config();
        config.max_retries = 2;
        HttpModelClient client(config);
        CompletionRequest req;
        req.prompt = "p";
        CHECK_THROWS_AS(client.complete(req), ClientError);
        CHECK(calls == 3);  // first attempt + two retries
    }

    SUBCASE("401 is an auth error and is not retried") {
        std::atomic<int> calls{0};
        ScriptedServer server([&calls](const httplib::Request&, httplib::Response& res) {
            ++calls;
            res.status = 401;
        });
        HttpModelClient client(server.config());
        CompletionRequest req;
        req.prompt = "p";
        CHECK_THROWS_AS(client.complete(req), AuthError);
        CHECK(calls == 1);
    }

    SUBCASE("unparsable body is a protocol error") {
        ScriptedServer server([](const httplib::Request&, httplib::Response& res) {
            res.set_content("not json at all", "application/json");
        });
        HttpModelClient client(server.config());
        CompletionRequest req;
        req.prompt = "p";
        CHECK_THROWS_AS(client.complete(req), ProtocolError);
    }

    SUBCASE("echo scoring is unsupported") {
        ScriptedServer server([](const httplib::Request&, httplib::Response&) {});
        HttpModelClient client(server.config());
        CHECK_THROWS_AS(client.score_sequence("a", "b"), UnsupportedByEndpointError);
    }
}

TEST_CASE("mock tracks its concurrency high-water mark") {
    MockClient mock;
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&mock, i] {
            CompletionRequest req;
            req.prompt = "p" + std::to_string(i);
            mock.complete(req);
        });
    }
    for (auto& t : threads) t.join();
    CHECK(mock.max_concurrent_observed() >= 1);
    CHECK(mock.calls() == 8);
}
