#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "timaudit/util.hpp"

namespace timaudit::gateway {

enum class TemplateId {
    Curation,
    WinRate,
    MissRate,
    ErrorProfile,
    FinalAnswer,
    Degradation,
};

std::string to_string(TemplateId t);

struct JudgeParams {
    double temperature = 0.0;
    int max_output = 4096;
    int n_samples = 1;
};

struct JudgeRequest {
    TemplateId template_id = TemplateId::FinalAnswer;
    std::string rendered_prompt;
    std::string model_id;
    JudgeParams params;
};

struct JudgeResponse {
    std::vector<std::string> raw_text;  // one entry per sample
    std::int64_t latency_ms = 0;
    json provider_metadata = json::object();
};

struct PrmRequest {
    std::string model_id;
    std::string problem;
    std::vector<std::string> steps;
};

// Content address of a request: SHA-256 over the canonical serialization of
// everything that could change the response.  Stable across platforms and
// processes.
std::string cache_key(const JudgeRequest& req);
std::string cache_key(const PrmRequest& req);

enum class Mode { Live, Replay, Record };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

// Provider I/O.  Implementations talk to real endpoints (HTTP) or to test
// scripts; the Gateway layers caching, replay and retry on top.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual JudgeResponse call_chat(const JudgeRequest& req) = 0;
    virtual std::vector<double> call_prm(const PrmRequest& req) = 0;
};

struct HttpTransportConfig {
    std::string judge_base_url;  // JUDGE_BASE_URL
    std::string judge_api_key;   // JUDGE_API_KEY
    std::string prm_base_url;    // PRM_BASE_URL
    int connect_timeout_s = 10;
    int read_timeout_s = 120;
};

// Chat-completions style provider client plus a step-scoring endpoint.
// Retries rate limiting (HTTP 429/503) with exponential backoff: 5 attempts,
// base delay 1s, factor 2, jittered.  Network and auth failures surface as
// JudgeUnavailable / PrmUnavailable without retry.
class HttpTransport : public Transport {
  public:
    explicit HttpTransport(HttpTransportConfig cfg);
    static HttpTransportConfig config_from_env();

    JudgeResponse call_chat(const JudgeRequest& req) override;
    std::vector<double> call_prm(const PrmRequest& req) override;

    // test hook: shrink backoff delays
    void set_backoff_base_ms(int ms) { backoff_base_ms_ = ms; }

  private:
    HttpTransportConfig cfg_;
    int backoff_base_ms_ = 1000;
};

struct GatewayStats {
    std::int64_t provider_calls = 0;
    std::int64_t cache_hits = 0;
    std::int64_t deduped = 0;
};

// Content-addressed response store with three modes:
//   live/record: consult the cache, call the provider on a miss, persist the
//                response atomically (temp file + rename);
//   replay:      cache only; a miss raises ReplayMiss and never calls out.
// Identical in-flight requests coalesce onto one provider call.
class Gateway {
  public:
    Gateway(Mode mode, fs::path cache_dir, std::shared_ptr<Transport> transport);

    JudgeResponse submit(const JudgeRequest& req);
    std::vector<double> score_steps(const PrmRequest& req);

    Mode mode() const { return mode_; }
    GatewayStats stats() const;

  private:
    json fetch(const std::string& digest, const json& request_record,
               const std::function<json()>& produce);
    std::optional<json> cache_read(const std::string& digest) const;
    void cache_write(const std::string& digest, const json& request_record,
                     const json& response_record);

    Mode mode_;
    fs::path cache_dir_;
    std::shared_ptr<Transport> transport_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_future<json>> in_flight_;
    GatewayStats stats_;
};

}  // namespace timaudit::gateway
