#include "pmpo/ngram.hpp"

#include <cmath>

#include "pmpo/util.hpp"

namespace pmpo {

namespace {

std::u16string to_symbols(const std::string& bytes) {
    std::u16string out;
    out.reserve(bytes.size());
    for (unsigned char c : bytes) out.push_back(static_cast<char16_t>(c));
    return out;
}

}  // namespace

NGramModel NGramModel::train(const std::string& corpus, int order) {
    if (corpus.empty()) throw Error(Errc::EmptyCorpus, "training corpus is empty");
    if (order < 1) throw Error(Errc::InvalidConfig, "n-gram order must be >= 1");

    NGramModel model;
    model.order_ = order;
    model.corpus_fingerprint_ = fnv1a_hex(corpus);

    std::u16string padded(static_cast<std::size_t>(order - 1), kBos);
    padded += to_symbols(corpus);

    for (unsigned char c : corpus) model.alphabet_mask_[c] = true;
    for (bool present : model.alphabet_mask_) {
        if (present) ++model.alphabet_size_;
    }

    const std::size_t ctx_len = static_cast<std::size_t>(order - 1);
    for (std::size_t i = 0; i + ctx_len < padded.size(); ++i) {
        std::u16string ctx = padded.substr(i, ctx_len);
        char16_t next = padded[i + ctx_len];
        ContextCounts& cc = model.counts_[ctx];
        ++cc.per_char[next];
        ++cc.total;
    }
    return model;
}

uint64_t NGramModel::count(const std::u16string& context, char16_t c) const {
    auto it = counts_.find(context);
    if (it == counts_.end()) return 0;
    auto jt = it->second.per_char.find(c);
    return jt == it->second.per_char.end() ? 0 : jt->second;
}

uint64_t NGramModel::context_total(const std::u16string& context) const {
    auto it = counts_.find(context);
    return it == counts_.end() ? 0 : it->second.total;
}

double NGramModel::prob(const std::u16string& context, char16_t c) const {
    const double num = static_cast<double>(count(context, c)) + 1.0;
    const double den =
        static_cast<double>(context_total(context)) + static_cast<double>(alphabet_size_);
    return num / den;
}

double NGramModel::log_prob(const std::u16string& context, char16_t c) const {
    return std::log(prob(context, c));
}

bool NGramModel::in_alphabet(char16_t c) const {
    return c < alphabet_mask_.size() && alphabet_mask_[c];
}

std::vector<std::u16string> NGramModel::observed_contexts() const {
    std::vector<std::u16string> out;
    out.reserve(counts_.size());
    for (const auto& [ctx, _] : counts_) out.push_back(ctx);
    return out;
}

std::vector<char16_t> NGramModel::alphabet() const {
    std::vector<char16_t> out;
    for (char16_t c = 0; c < 256; ++c) {
        if (alphabet_mask_[c]) out.push_back(c);
    }
    return out;
}

NGramScorer::NGramScorer(NGramModel model) : model_(std::move(model)) {}

BackendCapability NGramScorer::capability() const {
    return BackendCapability{.max_context_bytes = 1u << 30,
                             .granularity = TokenGranularity::character};
}

TokenLogProbs NGramScorer::score_target(const std::string& context,
                                        const std::string& target) const {
    if (target.empty()) throw Error(Errc::EmptyTarget, "score_target requires a non-empty target");

    const std::size_t ctx_len = static_cast<std::size_t>(model_.order() - 1);
    std::u16string sequence(ctx_len, NGramModel::kBos);
    sequence += to_symbols(context);
    sequence += to_symbols(target);

    // Each value depends only on its own window, so scores split exactly
    // under target concatenation (chain rule).
    TokenLogProbs result;
    result.values.reserve(target.size());
    const std::size_t target_begin = ctx_len + context.size();
    for (std::size_t i = target_begin; i < sequence.size(); ++i) {
        std::u16string window = sequence.substr(i - ctx_len, ctx_len);
        result.values.push_back(model_.log_prob(window, sequence[i]));
    }
    return result;
}

nlohmann::json NGramScorer::descriptor() const {
    return {{"name", name_},
            {"order", model_.order()},
            {"alphabet_size", model_.alphabet_size()},
            {"corpus_fingerprint", model_.corpus_fingerprint()}};
}

}  // namespace pmpo
