#pragma once

#include <cstdint>
#include <string>

#include "pmpo/backend.hpp"

namespace pmpo {

// Connection settings for OpenAI-compatible completions endpoints. The
// endpoint is the base URL including any path prefix ("http://host:port/v1");
// the adapter appends "/completions". PMPO_ENDPOINT / PMPO_API_KEY override
// endpoint and api_key.
struct HttpBackendConfig {
    std::string endpoint;
    std::string model;
    std::string api_key;
    int timeout_ms = 30000;
    int retries = 3;          // retries after the first attempt
    int backoff_ms = 250;     // doubled per retry
    std::size_t max_context_chars = 1u << 20;

    static HttpBackendConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void apply_env_overrides();
};

// Scores a target span by submitting context+target as one echoed sequence
// and attributing returned tokens to the target by byte offsets: a token
// belongs to the target iff its byte range intersects the target span, so the
// first straddling token counts toward the target.
class HttpScorer : public ScorerBackend {
  public:
    explicit HttpScorer(HttpBackendConfig config);
    ~HttpScorer() override;

    const std::string& name() const override { return name_; }
    BackendCapability capability() const override;
    TokenLogProbs score_target(const std::string& context,
                               const std::string& target) const override;
    nlohmann::json descriptor() const override;

  private:
    HttpBackendConfig config_;
    std::string name_ = "http";
};

class HttpGenerator : public GeneratorBackend {
  public:
    explicit HttpGenerator(HttpBackendConfig config);
    ~HttpGenerator() override;

    const std::string& name() const override { return name_; }
    std::string generate(const std::string& prompt_text, const SamplingParams& params,
                         uint64_t seed) override;
    nlohmann::json descriptor() const override;

  private:
    HttpBackendConfig config_;
    std::string name_ = "http";
};

// Exposed for tests: maps a completions response to target-span logprobs.
TokenLogProbs extract_target_logprobs(const nlohmann::json& response, std::size_t context_bytes,
                                      std::size_t target_bytes);

}  // namespace pmpo
