#include <doctest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <memory>
#include <set>
#include <thread>

#include "support.hpp"
#include "timaudit/errors.hpp"
#include "timaudit/gateway.hpp"

using namespace timaudit;
using namespace timaudit::gateway;
using test::ScriptedTransport;
using test::TempDir;

namespace {

JudgeRequest sample_chat() {
    JudgeRequest req;
    req.template_id = TemplateId::FinalAnswer;
    req.rendered_prompt = "Check 1 + 1 = 2.";
    req.model_id = "judge-1";
    return req;
}

PrmRequest sample_prm() {
    PrmRequest req;
    req.model_id = "prm-1";
    req.problem = "Check 1 + 1 = 2.";
    req.steps = {"First step.", "Second step."};
    return req;
}

// a throwaway HTTP server bound to a free loopback port
struct TestServer {
    httplib::Server svr;
    int port = 0;
    std::thread thread;

    void start() {
        port = svr.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port); }
    ~TestServer() {
        svr.stop();
        if (thread.joinable()) thread.join();
    }
};

json chat_completion(const std::vector<std::string>& contents) {
    json choices = json::array();
    for (const auto& c : contents) {
        choices.push_back(json{{"message", json{{"role", "assistant"}, {"content", c}}}});
    }
    return json{{"choices", choices},
                {"model", "judge-backend"},
                {"usage", json{{"total_tokens", 17}}}};
}

struct FlakyTransport : Transport {
    std::atomic<int> calls{0};
    JudgeResponse call_chat(const JudgeRequest&) override {
        if (calls.fetch_add(1) == 0) {
            raise(errc::judge_unavailable, "transient failure");
        }
        JudgeResponse r;
        r.raw_text.push_back("recovered");
        return r;
    }
    std::vector<double> call_prm(const PrmRequest& req) override {
        return std::vector<double>(req.steps.size(), 0.9);
    }
};

}  // namespace

TEST_CASE("cache keys match frozen digests") {
    // Canonical form is compact JSON with sorted keys, hashed with SHA-256.
    // Both values were derived independently of this codebase from that
    // definition, so a change here means the on-disk cache format moved.
    CHECK(cache_key(sample_chat()) ==
          "b04310349e3e7d612ec19f302f367b0de7d640d597e19493f5860fb7de899143");
    CHECK(cache_key(sample_prm()) ==
          "5e4311042d34acf3757e49f6692be0b369632567473ca7cf145e2681e96f87ae");
}

TEST_CASE("every request field participates in the cache key") {
    std::set<std::string> keys;
    auto insert_fresh = [&](const std::string& k) {
        CAPTURE(k);
        CHECK(keys.insert(k).second);
    };

    JudgeRequest req = sample_chat();
    insert_fresh(cache_key(req));
    req.template_id = TemplateId::WinRate;
    insert_fresh(cache_key(req));
    req.rendered_prompt += " ";
    insert_fresh(cache_key(req));
    req.model_id = "judge-2";
    insert_fresh(cache_key(req));
    req.params.temperature = 0.25;
    insert_fresh(cache_key(req));
    req.params.max_output = 1024;
    insert_fresh(cache_key(req));
    req.params.n_samples = 2;
    insert_fresh(cache_key(req));

    PrmRequest prm = sample_prm();
    insert_fresh(cache_key(prm));
    prm.model_id = "prm-2";
    insert_fresh(cache_key(prm));
    prm.problem += "?";
    insert_fresh(cache_key(prm));
    prm.steps.push_back("Third step.");
    insert_fresh(cache_key(prm));

    // a chat and prm request never collide even with identical text
    PrmRequest mirrored;
    mirrored.model_id = "judge-1";
    mirrored.problem = "Check 1 + 1 = 2.";
    mirrored.steps = {};
    CHECK(cache_key(mirrored) != cache_key(sample_chat()));
}

TEST_CASE("record mode persists responses and serves repeats from disk") {
    TempDir dir;
    fs::path cache = dir.path / "cache";
    auto transport = std::make_shared<ScriptedTransport>();
    Gateway gw(Mode::Record, cache, transport);

    JudgeRequest req = sample_chat();
    req.rendered_prompt =
        "Submitted final answer:\n42\n\nReference answer:\n42\n\nRespond strictly";
    JudgeResponse first = gw.submit(req);
    REQUIRE(first.raw_text.size() == 1);
    CHECK(transport->chat_calls == 1);

    fs::path entry_path = cache / (cache_key(req) + ".json");
    REQUIRE(fs::exists(entry_path));
    json entry = json::parse(read_file(entry_path));
    CHECK(entry.at("request").at("prompt") == req.rendered_prompt);
    CHECK(entry.at("response").at("raw_text")[0] == first.raw_text[0]);
    CHECK(entry.contains("timestamp"));

    JudgeResponse second = gw.submit(req);
    CHECK(second.raw_text == first.raw_text);
    CHECK(transport->chat_calls == 1);  // served from cache

    GatewayStats stats = gw.stats();
    CHECK(stats.provider_calls == 1);
    CHECK(stats.cache_hits == 1);
    CHECK(stats.deduped == 0);

    // atomic writes leave no temp files behind
    for (const auto& f : fs::directory_iterator(cache)) {
        CHECK(f.path().extension() == ".json");
    }
}

TEST_CASE("replay serves the recorded corpus and never calls out") {
    TempDir dir;
    fs::path cache = dir.path / "cache";
    JudgeRequest req = sample_chat();
    req.rendered_prompt =
        "Submitted final answer:\n7\n\nReference answer:\n7\n\nRespond strictly";
    {
        Gateway rec(Mode::Record, cache, std::make_shared<ScriptedTransport>());
        rec.submit(req);
    }

    Gateway replay(Mode::Replay, cache, nullptr);
    JudgeResponse resp = replay.submit(req);
    REQUIRE(resp.raw_text.size() == 1);
    CHECK(resp.raw_text[0].find("true") != std::string::npos);

    JudgeRequest other = req;
    other.rendered_prompt += " changed";
    try {
        replay.submit(other);
        FAIL("expected ReplayMiss");
    } catch (const Error& e) {
        CHECK(e.code() == errc::replay_miss);
    }
}

TEST_CASE("replay does not create a cache directory") {
    TempDir dir;
    fs::path cache = dir.path / "never-created";
    Gateway replay(Mode::Replay, cache, nullptr);
    CHECK(!fs::exists(cache));
    CHECK_THROWS_AS(replay.submit(sample_chat()), Error);
    CHECK(!fs::exists(cache));
}

TEST_CASE("live and record modes require a transport") {
    TempDir dir;
    CHECK_THROWS_AS(Gateway(Mode::Live, dir.path / "c", nullptr), Error);
    CHECK_THROWS_AS(Gateway(Mode::Record, dir.path / "c", nullptr), Error);
}

TEST_CASE("identical in flight requests coalesce onto one provider call") {
    TempDir dir;
    auto transport = std::make_shared<ScriptedTransport>();
    transport->chat_delay_ms = 50;
    Gateway gw(Mode::Live, dir.path / "cache", transport);

    JudgeRequest req = sample_chat();
    req.rendered_prompt =
        "Submitted final answer:\n3\n\nReference answer:\n3\n\nRespond strictly";

    std::vector<std::string> results(2);
    std::thread t1([&] { results[0] = gw.submit(req).raw_text[0]; });
    std::thread t2([&] { results[1] = gw.submit(req).raw_text[0]; });
    t1.join();
    t2.join();

    CHECK(results[0] == results[1]);
    CHECK(transport->chat_calls == 1);
    GatewayStats stats = gw.stats();
    CHECK(stats.provider_calls == 1);
    CHECK(stats.deduped == 1);
}

TEST_CASE("a failed provider call does not wedge later retries") {
    TempDir dir;
    auto transport = std::make_shared<FlakyTransport>();
    Gateway gw(Mode::Live, dir.path / "cache", transport);
    JudgeRequest req = sample_chat();

    CHECK_THROWS_AS(gw.submit(req), Error);
    JudgeResponse resp = gw.submit(req);
    CHECK(resp.raw_text[0] == "recovered");
    CHECK(transport->calls == 2);
}

TEST_CASE("corrupt cache entries are reported, not silently refetched") {
    TempDir dir;
    fs::path cache = dir.path / "cache";
    auto transport = std::make_shared<ScriptedTransport>();
    Gateway gw(Mode::Live, cache, transport);
    JudgeRequest req = sample_chat();
    write_file_atomic(cache / (cache_key(req) + ".json"), "{\"not\": \"an entry\"}");
    try {
        gw.submit(req);
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.code() == errc::io_failure);
    }
    CHECK(transport->chat_calls == 0);
}

TEST_CASE("scoring an empty step list is a precondition failure") {
    TempDir dir;
    Gateway gw(Mode::Live, dir.path / "cache", std::make_shared<ScriptedTransport>());
    PrmRequest req = sample_prm();
    req.steps.clear();
    CHECK_THROWS_AS(gw.score_steps(req), Error);
}

TEST_CASE("http transport speaks the chat completions protocol") {
    TestServer server;
    std::atomic<int> hits{0};
    json seen_body;
    std::string seen_auth;
    server.svr.Post("/v1/chat/completions",
                    [&](const httplib::Request& r, httplib::Response& res) {
                        hits.fetch_add(1);
                        seen_body = json::parse(r.body);
                        if (r.has_header("Authorization")) {
                            seen_auth = r.get_header_value("Authorization");
                        }
                        int n = seen_body.value("n", 1);
                        std::vector<std::string> contents;
                        for (int i = 0; i < n; ++i) {
                            contents.push_back("sample " + std::to_string(i));
                        }
                        res.set_content(chat_completion(contents).dump(),
                                        "application/json");
                    });
    server.start();

    HttpTransportConfig cfg;
    cfg.judge_base_url = server.base_url();
    cfg.judge_api_key = "sk-test-1";
    HttpTransport transport(cfg);

    JudgeRequest req = sample_chat();
    req.params.n_samples = 2;
    req.params.temperature = 0.5;
    JudgeResponse resp = transport.call_chat(req);

    CHECK(hits == 1);
    REQUIRE(resp.raw_text.size() == 2);
    CHECK(resp.raw_text[0] == "sample 0");
    CHECK(resp.raw_text[1] == "sample 1");
    CHECK(resp.provider_metadata.at("model") == "judge-backend");
    CHECK(resp.provider_metadata.at("usage").at("total_tokens") == 17);

    CHECK(seen_auth == "Bearer sk-test-1");
    CHECK(seen_body.at("model") == "judge-1");
    CHECK(seen_body.at("temperature") == 0.5);
    CHECK(seen_body.at("max_tokens") == 4096);
    CHECK(seen_body.at("n") == 2);
    REQUIRE(seen_body.at("messages").size() == 1);
    CHECK(seen_body["messages"][0].at("role") == "user");
    CHECK(seen_body["messages"][0].at("content") == req.rendered_prompt);
}

TEST_CASE("http transport honors a path prefix in the base url") {
    TestServer server;
    std::atomic<int> hits{0};
    server.svr.Post("/proxy/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                        hits.fetch_add(1);
                        res.set_content(chat_completion({"ok"}).dump(),
                                        "application/json");
                    });
    server.start();

    HttpTransportConfig cfg;
    cfg.judge_base_url = server.base_url() + "/proxy/";
    HttpTransport transport(cfg);
    JudgeResponse resp = transport.call_chat(sample_chat());
    CHECK(hits == 1);
    CHECK(resp.raw_text[0] == "ok");
}

TEST_CASE("rate limiting backs off and recovers") {
    TestServer server;
    std::atomic<int> hits{0};
    server.svr.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                        int n = hits.fetch_add(1);
                        if (n == 0) {
                            res.status = 429;
                        } else if (n == 1) {
                            res.status = 503;
                        } else {
                            res.set_content(chat_completion({"through"}).dump(),
                                            "application/json");
                        }
                    });
    server.start();

    HttpTransportConfig cfg;
    cfg.judge_base_url = server.base_url();
    HttpTransport transport(cfg);
    transport.set_backoff_base_ms(1);
    JudgeResponse resp = transport.call_chat(sample_chat());
    CHECK(hits == 3);
    CHECK(resp.raw_text[0] == "through");
}

TEST_CASE("persistent rate limiting stops after five attempts") {
    TestServer server;
    std::atomic<int> hits{0};
    server.svr.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                        hits.fetch_add(1);
                        res.status = 429;
                    });
    server.start();

    HttpTransportConfig cfg;
    cfg.judge_base_url = server.base_url();
    HttpTransport transport(cfg);
    transport.set_backoff_base_ms(1);
    try {
        transport.call_chat(sample_chat());
        FAIL("expected RateLimited");
    } catch (const Error& e) {
        CHECK(e.code() == errc::rate_limited);
    }
    CHECK(hits == 5);
}

TEST_CASE("non retryable judge failures surface immediately") {
    TestServer server;
    std::atomic<int> hits{0};
    server.svr.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                        hits.fetch_add(1);
                        res.status = 500;
                    });
    server.start();

    HttpTransportConfig cfg;
    cfg.judge_base_url = server.base_url();
    HttpTransport transport(cfg);
    try {
        transport.call_chat(sample_chat());
        FAIL("expected JudgeUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == errc::judge_unavailable);
    }
    CHECK(hits == 1);
}

TEST_CASE("unreachable endpoints raise the matching unavailable error") {
    HttpTransportConfig cfg;
    cfg.judge_base_url = "http://127.0.0.1:9";  // discard port, nothing listens
    cfg.prm_base_url = "http://127.0.0.1:9";
    cfg.connect_timeout_s = 1;
    HttpTransport transport(cfg);
    try {
        transport.call_chat(sample_chat());
        FAIL("expected JudgeUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == errc::judge_unavailable);
    }
    try {
        transport.call_prm(sample_prm());
        FAIL("expected PrmUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == errc::prm_unavailable);
    }

    HttpTransport unconfigured{HttpTransportConfig{}};
    CHECK_THROWS_AS(unconfigured.call_chat(sample_chat()), Error);
    CHECK_THROWS_AS(unconfigured.call_prm(sample_prm()), Error);
}

TEST_CASE("prm endpoint responses are validated") {
    TestServer server;
    json reply;
    json seen_body;
    server.svr.Post("/v1/score", [&](const httplib::Request& r, httplib::Response& res) {
        seen_body = json::parse(r.body);
        res.set_content(reply.dump(), "application/json");
    });
    server.start();

    HttpTransportConfig cfg;
    cfg.prm_base_url = server.base_url();
    HttpTransport transport(cfg);
    PrmRequest req = sample_prm();

    SUBCASE("well formed scores pass through") {
        reply = json{{"scores", {0.9, 0.4}}};
        std::vector<double> scores = transport.call_prm(req);
        CHECK(scores == std::vector<double>{0.9, 0.4});
        CHECK(seen_body.at("model") == "prm-1");
        CHECK(seen_body.at("problem") == req.problem);
        CHECK(seen_body.at("steps").size() == 2);
    }
    SUBCASE("a score count mismatch is rejected") {
        reply = json{{"scores", {0.9}}};
        try {
            transport.call_prm(req);
            FAIL("expected LengthMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == errc::length_mismatch);
        }
    }
    SUBCASE("scores outside the unit interval are rejected") {
        reply = json{{"scores", {0.9, 1.5}}};
        try {
            transport.call_prm(req);
            FAIL("expected PrmUnavailable");
        } catch (const Error& e) {
            CHECK(e.code() == errc::prm_unavailable);
        }
    }
    SUBCASE("a malformed body is rejected") {
        reply = json{{"values", {0.9, 0.4}}};
        CHECK_THROWS_AS(transport.call_prm(req), Error);
    }
}

TEST_CASE("prm requests cache and replay like chat requests") {
    TempDir dir;
    fs::path cache = dir.path / "cache";
    auto transport = std::make_shared<ScriptedTransport>();
    {
        Gateway gw(Mode::Record, cache, transport);
        std::vector<double> scores = gw.score_steps(sample_prm());
        REQUIRE(scores.size() == 2);
        CHECK(scores[0] == 0.9);
        CHECK(gw.score_steps(sample_prm()) == scores);
        CHECK(transport->prm_calls == 1);
    }
    Gateway replay(Mode::Replay, cache, nullptr);
    CHECK(replay.score_steps(sample_prm()) == std::vector<double>{0.9, 0.9});
}
