#include "pmpo/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"

namespace pmpo {

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host:port
    std::string path_prefix;
};

ParsedUrl parse_endpoint(const std::string& endpoint) {
    const std::size_t scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(Errc::InvalidConfig, "endpoint must include a scheme: " + endpoint);
    }
    const std::size_t path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, path_start), prefix};
}

// POST with retry + exponential backoff on transport failures, 429 and 5xx.
nlohmann::json post_json(const HttpBackendConfig& config, const std::string& path,
                         const nlohmann::json& body) {
    if (config.endpoint.empty()) {
        throw Error(Errc::InvalidConfig, "no HTTP endpoint configured");
    }
    const ParsedUrl url = parse_endpoint(config.endpoint);

    std::string last_error;
    for (int attempt = 0; attempt <= config.retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = std::chrono::milliseconds(
                static_cast<long long>(config.backoff_ms) * (1LL << (attempt - 1)));
            std::this_thread::sleep_for(delay);
        }

        httplib::Client client(url.origin);
        client.set_connection_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
        client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!config.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config.api_key);
        }

        auto res = client.Post(url.path_prefix + path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw Error(Errc::ProtocolError,
                        "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ProtocolError, std::string("response is not JSON: ") + e.what());
        }
    }
    throw Error(Errc::BackendUnavailable,
                "endpoint unreachable after " + std::to_string(config.retries + 1) +
                    " attempts (" + last_error + ")");
}

double checked_logprob(const nlohmann::json& v) {
    if (!v.is_number()) throw Error(Errc::ProtocolError, "token logprob is not a number");
    double lp = v.get<double>();
    if (std::isnan(lp) || std::isinf(lp)) {
        throw Error(Errc::ProtocolError, "token logprob is not finite");
    }
    return std::min(lp, 0.0);
}

// Classic echoed-completions shape: choices[0].logprobs with parallel
// tokens / token_logprobs / text_offset arrays.
TokenLogProbs from_echo_logprobs(const nlohmann::json& lp, std::size_t context_bytes,
                                 std::size_t target_bytes) {
    if (!lp.contains("tokens") || !lp.contains("token_logprobs")) {
        throw Error(Errc::ProtocolError, "logprobs object lacks tokens/token_logprobs");
    }
    const auto& tokens = lp["tokens"];
    const auto& values = lp["token_logprobs"];
    if (!tokens.is_array() || !values.is_array() || tokens.size() != values.size()) {
        throw Error(Errc::ProtocolError, "tokens/token_logprobs are not parallel arrays");
    }

    std::vector<std::size_t> offsets;
    offsets.reserve(tokens.size());
    if (lp.contains("text_offset") && lp["text_offset"].is_array() &&
        lp["text_offset"].size() == tokens.size()) {
        for (const auto& o : lp["text_offset"]) {
            if (!o.is_number_integer()) {
                throw Error(Errc::AlignmentError, "non-integer text_offset entry");
            }
            offsets.push_back(o.get<std::size_t>());
        }
    } else {
        std::size_t cum = 0;
        for (const auto& t : tokens) {
            offsets.push_back(cum);
            cum += t.get<std::string>().size();
        }
    }

    const std::size_t total = context_bytes + target_bytes;
    std::size_t reconstructed_end = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t start = offsets[i];
        if (start != reconstructed_end) {
            throw Error(Errc::AlignmentError, "echoed tokens are not contiguous");
        }
        reconstructed_end = start + tokens[i].get<std::string>().size();
    }
    if (reconstructed_end != total) {
        throw Error(Errc::AlignmentError,
                    "echoed tokens cover " + std::to_string(reconstructed_end) + " bytes, prompt has " +
                        std::to_string(total));
    }

    TokenLogProbs result;
    result.token_texts.emplace();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t start = offsets[i];
        const std::size_t end = start + tokens[i].get<std::string>().size();
        const bool intersects_target = start < total && end > context_bytes;
        if (!intersects_target) continue;
        result.values.push_back(checked_logprob(values[i]));
        result.token_texts->push_back(tokens[i].get<std::string>());
    }
    if (result.values.empty()) {
        throw Error(Errc::AlignmentError, "no tokens intersect the target span");
    }
    return result;
}

// vLLM-style prompt_logprobs list: entries are null or single-key objects
// carrying {"logprob", "decoded_token"}. Offsets are reconstructed backwards
// from the sequence end so leading null entries (which carry no text) are
// tolerated as long as they stay inside the context.
TokenLogProbs from_prompt_logprobs(const nlohmann::json& entries, std::size_t context_bytes,
                                   std::size_t target_bytes) {
    if (!entries.is_array()) {
        throw Error(Errc::ProtocolError, "prompt_logprobs is not an array");
    }
    const std::size_t total = context_bytes + target_bytes;

    struct Tok {
        std::size_t start, end;
        double logprob;
        std::string text;
    };
    std::vector<Tok> target_tokens;
    std::size_t end = total;
    for (std::size_t r = entries.size(); r-- > 0;) {
        if (end <= context_bytes) break;  // everything further left is pure context
        const auto& entry = entries[r];
        if (entry.is_null()) {
            throw Error(Errc::AlignmentError,
                        "null prompt_logprobs entry intersects the target span");
        }
        if (!entry.is_object() || entry.size() != 1) {
            throw Error(Errc::ProtocolError, "prompt_logprobs entry is not a single-key object");
        }
        const auto& info = entry.begin().value();
        if (!info.contains("logprob") || !info.contains("decoded_token")) {
            throw Error(Errc::ProtocolError, "prompt_logprobs entry lacks logprob/decoded_token");
        }
        const std::string text = info["decoded_token"].get<std::string>();
        if (text.size() > end) {
            throw Error(Errc::AlignmentError, "decoded tokens overrun the sequence start");
        }
        const std::size_t start = end - text.size();
        if (!text.empty()) {
            target_tokens.push_back({start, end, checked_logprob(info["logprob"]), text});
        }
        end = start;
    }
    if (end > context_bytes) {
        throw Error(Errc::AlignmentError, "prompt_logprobs do not cover the target span");
    }

    TokenLogProbs result;
    result.token_texts.emplace();
    for (auto it = target_tokens.rbegin(); it != target_tokens.rend(); ++it) {
        result.values.push_back(it->logprob);
        result.token_texts->push_back(it->text);
    }
    if (result.values.empty()) {
        throw Error(Errc::AlignmentError, "no tokens intersect the target span");
    }
    return result;
}

}  // namespace

TokenLogProbs extract_target_logprobs(const nlohmann::json& response, std::size_t context_bytes,
                                      std::size_t target_bytes) {
    if (!response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty()) {
        throw Error(Errc::ProtocolError, "response has no choices");
    }
    const auto& choice = response["choices"][0];
    if (choice.contains("logprobs") && !choice["logprobs"].is_null()) {
        return from_echo_logprobs(choice["logprobs"], context_bytes, target_bytes);
    }
    if (choice.contains("prompt_logprobs") && !choice["prompt_logprobs"].is_null()) {
        return from_prompt_logprobs(choice["prompt_logprobs"], context_bytes, target_bytes);
    }
    throw Error(Errc::ProtocolError, "response lacks per-token logprob fields");
}

HttpBackendConfig HttpBackendConfig::from_json(const nlohmann::json& j) {
    HttpBackendConfig c;
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.api_key = j.value("api_key", c.api_key);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retries = j.value("retries", c.retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.max_context_chars = j.value("max_context_chars", c.max_context_chars);
    return c;
}

nlohmann::json HttpBackendConfig::to_json() const {
    // api_key deliberately omitted
    return {{"endpoint", endpoint},
            {"model", model},
            {"timeout_ms", timeout_ms},
            {"retries", retries},
            {"backoff_ms", backoff_ms},
            {"max_context_chars", max_context_chars}};
}

void HttpBackendConfig::apply_env_overrides() {
    if (const char* ep = std::getenv("PMPO_ENDPOINT")) endpoint = ep;
    if (const char* key = std::getenv("PMPO_API_KEY")) api_key = key;
}

HttpScorer::HttpScorer(HttpBackendConfig config) : config_(std::move(config)) {}
HttpScorer::~HttpScorer() = default;

BackendCapability HttpScorer::capability() const {
    return BackendCapability{.max_context_bytes = config_.max_context_chars,
                             .granularity = TokenGranularity::model_tokens};
}

TokenLogProbs HttpScorer::score_target(const std::string& context,
                                       const std::string& target) const {
    if (target.empty()) throw Error(Errc::EmptyTarget, "score_target requires a non-empty target");
    if (context.size() + target.size() > config_.max_context_chars) {
        throw Error(Errc::ContextOverflow,
                    "context+target exceeds " + std::to_string(config_.max_context_chars) +
                        " chars");
    }

    nlohmann::json body{{"model", config_.model},
                        {"prompt", context + target},
                        {"max_tokens", 0},
                        {"echo", true},
                        {"logprobs", 0},
                        {"temperature", 0.0}};
    const nlohmann::json response = post_json(config_, "/completions", body);
    return extract_target_logprobs(response, context.size(), target.size());
}

nlohmann::json HttpScorer::descriptor() const {
    nlohmann::json j = config_.to_json();
    j["name"] = name_;
    return j;
}

HttpGenerator::HttpGenerator(HttpBackendConfig config) : config_(std::move(config)) {}
HttpGenerator::~HttpGenerator() = default;

std::string HttpGenerator::generate(const std::string& prompt_text, const SamplingParams& params,
                                    uint64_t seed) {
    if (prompt_text.empty()) {
        throw Error(Errc::EmptyPrompt, "generate requires a non-empty prompt");
    }
    nlohmann::json body{{"model", config_.model},
                        {"prompt", prompt_text},
                        {"max_tokens", params.max_tokens},
                        {"temperature", params.temperature},
                        {"top_p", params.top_p},
                        {"seed", seed}};
    const nlohmann::json response = post_json(config_, "/completions", body);
    if (!response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty() || !response["choices"][0].contains("text")) {
        throw Error(Errc::ProtocolError, "completion response has no choices[0].text");
    }
    return response["choices"][0]["text"].get<std::string>();
}

nlohmann::json HttpGenerator::descriptor() const {
    nlohmann::json j = config_.to_json();
    j["name"] = name_;
    return j;
}

}  // namespace pmpo
