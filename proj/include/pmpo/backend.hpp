#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "json.hpp"
#include "pmpo/types.hpp"

namespace pmpo {

enum class TokenGranularity { character, model_tokens };

struct BackendCapability {
    std::size_t max_context_bytes = 1u << 30;
    TokenGranularity granularity = TokenGranularity::character;
};

// Per-token log-probability scoring of a target span conditioned on a context.
// One network/model evaluation per call; batching happens above via concurrent
// calls. Implementations must be safe for concurrent score_target calls.
class ScorerBackend {
  public:
    virtual ~ScorerBackend() = default;

    virtual const std::string& name() const = 0;
    virtual BackendCapability capability() const = 0;

    // Throws EmptyTarget, ContextOverflow, BackendUnavailable,
    // ProtocolError, AlignmentError depending on the implementation.
    virtual TokenLogProbs score_target(const std::string& context,
                                       const std::string& target) const = 0;

    virtual nlohmann::json descriptor() const;
};

// Sampled text generation for segmentation and rewrite calls.
class GeneratorBackend {
  public:
    virtual ~GeneratorBackend() = default;

    virtual const std::string& name() const = 0;

    // Throws BackendUnavailable or ScriptExhausted.
    virtual std::string generate(const std::string& prompt_text, const SamplingParams& params,
                                 uint64_t seed) = 0;

    virtual nlohmann::json descriptor() const;
};

struct Backends {
    std::shared_ptr<ScorerBackend> scorer;
    std::shared_ptr<GeneratorBackend> generator;
};

}  // namespace pmpo
