#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "timaudit/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <random>
#include <thread>

#include "timaudit/errors.hpp"

namespace timaudit::gateway {

std::string to_string(TemplateId t) {
    switch (t) {
        case TemplateId::Curation: return "curation";
        case TemplateId::WinRate: return "win_rate";
        case TemplateId::MissRate: return "miss_rate";
        case TemplateId::ErrorProfile: return "error_profile";
        case TemplateId::FinalAnswer: return "final_answer";
        case TemplateId::Degradation: return "degradation";
    }
    return "final_answer";
}

Mode mode_from_string(const std::string& s) {
    if (s == "live") return Mode::Live;
    if (s == "replay") return Mode::Replay;
    if (s == "record") return Mode::Record;
    raise(errc::config_error, "unknown gateway mode: " + s);
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Live: return "live";
        case Mode::Replay: return "replay";
        case Mode::Record: return "record";
    }
    return "live";
}

// nlohmann::json objects iterate in key order, so dumping a freshly built
// object is already canonical.
std::string cache_key(const JudgeRequest& req) {
    json canon{{"kind", "chat"},
               {"template", to_string(req.template_id)},
               {"model", req.model_id},
               {"params",
                {{"temperature", req.params.temperature},
                 {"max_output", req.params.max_output},
                 {"n_samples", req.params.n_samples}}},
               {"prompt", req.rendered_prompt}};
    return sha256_hex(canon.dump());
}

std::string cache_key(const PrmRequest& req) {
    json canon{{"kind", "prm"},
               {"model", req.model_id},
               {"problem", req.problem},
               {"steps", req.steps}};
    return sha256_hex(canon.dump());
}

// ---- HTTP transport ----------------------------------------------------------

namespace {

// splits "http(s)://host[:port][/prefix]" into client target and path prefix
std::pair<std::string, std::string> split_base_url(const std::string& base) {
    std::size_t scheme = base.find("://");
    if (scheme == std::string::npos) {
        raise(errc::config_error, "base URL missing scheme: " + base);
    }
    std::size_t path = base.find('/', scheme + 3);
    if (path == std::string::npos) return {base, ""};
    std::string prefix = base.substr(path);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base.substr(0, path), prefix};
}

bool retryable_status(int status) { return status == 429 || status == 503; }

int jittered_delay_ms(int base_ms, int attempt) {
    // full jitter over the exponential window
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    int window = base_ms << attempt;  // base * 2^attempt
    std::uniform_int_distribution<int> dist(window / 2, window);
    return dist(rng);
}

}  // namespace

HttpTransport::HttpTransport(HttpTransportConfig cfg) : cfg_(std::move(cfg)) {}

HttpTransportConfig HttpTransport::config_from_env() {
    HttpTransportConfig cfg;
    if (const char* v = std::getenv("JUDGE_BASE_URL")) cfg.judge_base_url = v;
    if (const char* v = std::getenv("JUDGE_API_KEY")) cfg.judge_api_key = v;
    if (const char* v = std::getenv("PRM_BASE_URL")) cfg.prm_base_url = v;
    return cfg;
}

JudgeResponse HttpTransport::call_chat(const JudgeRequest& req) {
    if (cfg_.judge_base_url.empty()) {
        raise(errc::judge_unavailable, "JUDGE_BASE_URL is not configured");
    }
    auto [target, prefix] = split_base_url(cfg_.judge_base_url);
    json body{{"model", req.model_id},
              {"messages", json::array({json{{"role", "user"},
                                             {"content", req.rendered_prompt}}})},
              {"temperature", req.params.temperature},
              {"max_tokens", req.params.max_output},
              {"n", req.params.n_samples}};
    httplib::Headers headers;
    if (!cfg_.judge_api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + cfg_.judge_api_key);
    }

    const int attempts = 5;
    for (int attempt = 0;; ++attempt) {
        httplib::Client client(target);
        client.set_connection_timeout(cfg_.connect_timeout_s, 0);
        client.set_read_timeout(cfg_.read_timeout_s, 0);
        auto t0 = std::chrono::steady_clock::now();
        httplib::Result res = client.Post(prefix + "/v1/chat/completions", headers,
                                          body.dump(), "application/json");
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
        if (!res) {
            raise(errc::judge_unavailable,
                  "judge endpoint unreachable: " + httplib::to_string(res.error()));
        }
        if (retryable_status(res->status)) {
            if (attempt + 1 >= attempts) {
                raise(errc::rate_limited,
                      "judge rate limited after " + std::to_string(attempts) + " attempts");
            }
            std::this_thread::sleep_for(
                std::chrono::milliseconds(jittered_delay_ms(backoff_base_ms_, attempt)));
            continue;
        }
        if (res->status != 200) {
            raise(errc::judge_unavailable,
                  "judge returned HTTP " + std::to_string(res->status));
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("choices") ||
            !parsed["choices"].is_array()) {
            raise(errc::judge_unavailable, "judge returned malformed completion body");
        }
        JudgeResponse out;
        out.latency_ms = elapsed;
        for (const json& choice : parsed["choices"]) {
            out.raw_text.push_back(
                choice.at("message").at("content").get<std::string>());
        }
        if (parsed.contains("model")) out.provider_metadata["model"] = parsed["model"];
        if (parsed.contains("usage")) out.provider_metadata["usage"] = parsed["usage"];
        return out;
    }
}

std::vector<double> HttpTransport::call_prm(const PrmRequest& req) {
    if (cfg_.prm_base_url.empty()) {
        raise(errc::prm_unavailable, "PRM_BASE_URL is not configured");
    }
    auto [target, prefix] = split_base_url(cfg_.prm_base_url);
    json body{{"model", req.model_id}, {"problem", req.problem}, {"steps", req.steps}};

    const int attempts = 5;
    for (int attempt = 0;; ++attempt) {
        httplib::Client client(target);
        client.set_connection_timeout(cfg_.connect_timeout_s, 0);
        client.set_read_timeout(cfg_.read_timeout_s, 0);
        httplib::Result res = client.Post(prefix + "/v1/score", body.dump(),
                                          "application/json");
        if (!res) {
            raise(errc::prm_unavailable,
                  "PRM endpoint unreachable: " + httplib::to_string(res.error()));
        }
        if (retryable_status(res->status)) {
            if (attempt + 1 >= attempts) {
                raise(errc::rate_limited,
                      "PRM rate limited after " + std::to_string(attempts) + " attempts");
            }
            std::this_thread::sleep_for(
                std::chrono::milliseconds(jittered_delay_ms(backoff_base_ms_, attempt)));
            continue;
        }
        if (res->status != 200) {
            raise(errc::prm_unavailable, "PRM returned HTTP " + std::to_string(res->status));
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("scores") ||
            !parsed["scores"].is_array()) {
            raise(errc::prm_unavailable, "PRM returned malformed body");
        }
        std::vector<double> scores = parsed["scores"].get<std::vector<double>>();
        if (scores.size() != req.steps.size()) {
            raise(errc::length_mismatch,
                  "PRM returned " + std::to_string(scores.size()) + " scores for " +
                      std::to_string(req.steps.size()) + " steps");
        }
        for (double s : scores) {
            if (s < 0.0 || s > 1.0) {
                raise(errc::prm_unavailable, "PRM score outside [0,1]");
            }
        }
        return scores;
    }
}

// ---- gateway ----------------------------------------------------------------

Gateway::Gateway(Mode mode, fs::path cache_dir, std::shared_ptr<Transport> transport)
    : mode_(mode), cache_dir_(std::move(cache_dir)), transport_(std::move(transport)) {
    if (mode_ != Mode::Replay && !transport_) {
        raise(errc::config_error, "live/record gateway requires a transport");
    }
    // replay never writes, so it must not create directories either
    if (mode_ != Mode::Replay) fs::create_directories(cache_dir_);
}

std::optional<json> Gateway::cache_read(const std::string& digest) const {
    fs::path path = cache_dir_ / (digest + ".json");
    if (!fs::exists(path)) return std::nullopt;
    json entry = json::parse(read_file(path), nullptr, false);
    if (entry.is_discarded() || !entry.contains("response")) {
        raise(errc::io_failure, "corrupt cache entry: " + path.string());
    }
    return entry["response"];
}

void Gateway::cache_write(const std::string& digest, const json& request_record,
                          const json& response_record) {
    json entry{{"request", request_record},
               {"response", response_record},
               {"timestamp", static_cast<std::int64_t>(std::time(nullptr))}};
    write_file_atomic(cache_dir_ / (digest + ".json"), entry.dump(2) + "\n");
}

json Gateway::fetch(const std::string& digest, const json& request_record,
                    const std::function<json()>& produce) {
    // fast path plus in-flight coalescing
    std::shared_future<json> fut;
    {
        std::unique_lock<std::mutex> lock(mu_);
        if (auto it = in_flight_.find(digest); it != in_flight_.end()) {
            ++stats_.deduped;
            fut = it->second;
        } else {
            if (auto cached = cache_read(digest)) {
                ++stats_.cache_hits;
                return *cached;
            }
            if (mode_ == Mode::Replay) {
                raise(errc::replay_miss, "no cached response for digest " + digest);
            }
            std::promise<json> prom;
            fut = prom.get_future().share();
            in_flight_.emplace(digest, fut);
            lock.unlock();
            json response;
            try {
                {
                    std::lock_guard<std::mutex> g(mu_);
                    ++stats_.provider_calls;
                }
                response = produce();
                cache_write(digest, request_record, response);
            } catch (...) {
                prom.set_exception(std::current_exception());
                std::lock_guard<std::mutex> g(mu_);
                in_flight_.erase(digest);
                throw;
            }
            prom.set_value(response);
            {
                std::lock_guard<std::mutex> g(mu_);
                in_flight_.erase(digest);
            }
            return response;
        }
    }
    return fut.get();
}

JudgeResponse Gateway::submit(const JudgeRequest& req) {
    std::string digest = cache_key(req);
    json request_record{{"kind", "chat"},
                        {"template", to_string(req.template_id)},
                        {"model", req.model_id},
                        {"params",
                         {{"temperature", req.params.temperature},
                          {"max_output", req.params.max_output},
                          {"n_samples", req.params.n_samples}}},
                        {"prompt", req.rendered_prompt}};
    json resp = fetch(digest, request_record, [&]() {
        JudgeResponse r = transport_->call_chat(req);
        return json{{"raw_text", r.raw_text},
                    {"latency_ms", r.latency_ms},
                    {"provider_metadata", r.provider_metadata}};
    });
    JudgeResponse out;
    out.raw_text = resp.at("raw_text").get<std::vector<std::string>>();
    out.latency_ms = resp.value("latency_ms", 0);
    out.provider_metadata = resp.value("provider_metadata", json::object());
    return out;
}

std::vector<double> Gateway::score_steps(const PrmRequest& req) {
    if (req.steps.empty()) raise(errc::precondition, "score_steps with no steps");
    std::string digest = cache_key(req);
    json request_record{{"kind", "prm"},
                        {"model", req.model_id},
                        {"problem", req.problem},
                        {"steps", req.steps}};
    json resp = fetch(digest, request_record, [&]() {
        return json{{"scores", transport_->call_prm(req)}};
    });
    return resp.at("scores").get<std::vector<double>>();
}

GatewayStats Gateway::stats() const {
    std::lock_guard<std::mutex> g(mu_);
    return stats_;
}

}  // namespace timaudit::gateway
