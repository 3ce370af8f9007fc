#pragma once

#include <unordered_map>
#include <vector>

#include "pmpo/backend.hpp"

namespace pmpo {

// Character-level n-gram model with add-one smoothing. Contexts shorter than
// order-1 are left-padded with a BOS sentinel that is not part of the
// alphabet, so every position has a defined distribution and every
// probability is strictly positive.
//
// Symbols are bytes (0..255); BOS is 256. Context keys are u16 strings.
class NGramModel {
  public:
    static constexpr char16_t kBos = 256;

    // Slides a window of length `order` over the BOS-padded corpus.
    // Throws EmptyCorpus / InvalidConfig.
    static NGramModel train(const std::string& corpus, int order);

    int order() const { return order_; }
    std::size_t alphabet_size() const { return alphabet_size_; }
    const std::string& corpus_fingerprint() const { return corpus_fingerprint_; }

    // P(c | h) = (count(h,c) + 1) / (count(h,.) + |V|)
    double prob(const std::u16string& context, char16_t c) const;
    double log_prob(const std::u16string& context, char16_t c) const;

    // Count lookup for diagnostics and tests.
    uint64_t count(const std::u16string& context, char16_t c) const;
    uint64_t context_total(const std::u16string& context) const;

    bool in_alphabet(char16_t c) const;

    // All contexts with at least one observation (tests iterate these).
    std::vector<std::u16string> observed_contexts() const;
    std::vector<char16_t> alphabet() const;

  private:
    struct ContextCounts {
        std::unordered_map<char16_t, uint64_t> per_char;
        uint64_t total = 0;
    };

    int order_ = 3;
    std::size_t alphabet_size_ = 0;
    std::unordered_map<std::u16string, ContextCounts> counts_;
    std::vector<bool> alphabet_mask_ = std::vector<bool>(257, false);
    std::string corpus_fingerprint_;
};

// ScorerBackend over an NGramModel: one log-probability per byte of target,
// conditioned on the full (context + preceding target bytes) window.
class NGramScorer : public ScorerBackend {
  public:
    explicit NGramScorer(NGramModel model);

    const std::string& name() const override { return name_; }
    BackendCapability capability() const override;
    TokenLogProbs score_target(const std::string& context,
                               const std::string& target) const override;
    nlohmann::json descriptor() const override;

    const NGramModel& model() const { return model_; }

  private:
    NGramModel model_;
    std::string name_ = "ngram";
};

}  // namespace pmpo
