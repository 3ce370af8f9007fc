#include "pmpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pmpo/parallel.hpp"

namespace pmpo {

nlohmann::json LossReport::to_json() const {
    nlohmann::json records = nlohmann::json::array();
    for (const Entry& e : per_record) {
        records.push_back({{"id", e.record_id}, {"loss", e.loss}});
    }
    return {{"per_record", records},
            {"batch", batch},
            {"normalization", loss_normalization_name(normalization)}};
}

double ce_loss(const TokenLogProbs& logprobs, LossNormalization normalization) {
    if (logprobs.values.empty()) {
        throw Error(Errc::EmptyLogProbs, "cross-entropy over an empty log-probability vector");
    }
    double total = 0.0;
    for (double v : logprobs.values) total -= v;
    if (normalization == LossNormalization::per_token_mean) {
        total /= static_cast<double>(logprobs.values.size());
    }
    return total;
}

double sequence_score(const ScorerBackend& backend, const Prompt& prompt,
                      const std::string& input, const std::string& output,
                      const RenderTemplate& tmpl) {
    const std::string context = render_scoring_text(prompt, input, tmpl);
    return backend.score_target(context, output).sum();
}

double pref_loss_from_scores(double preferred_score, double dispreferred_score, double beta) {
    const double x = -beta * (preferred_score - dispreferred_score);
    // softplus(x) = log(1 + e^x), stable for |x| > 700
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double pref_loss(const ScorerBackend& backend, const Prompt& prompt, const PreferencePair& pair,
                 double beta, const RenderTemplate& tmpl) {
    const double s_plus = sequence_score(backend, prompt, pair.input, pair.preferred, tmpl);
    const double s_minus = sequence_score(backend, prompt, pair.input, pair.dispreferred, tmpl);
    return pref_loss_from_scores(s_plus, s_minus, beta);
}

namespace {

LossReport finalize(std::vector<LossReport::Entry> entries, LossNormalization normalization) {
    LossReport report;
    report.per_record = std::move(entries);
    report.normalization = normalization;
    double sum = 0.0;
    for (const auto& e : report.per_record) sum += e.loss;
    report.batch = sum / static_cast<double>(report.per_record.size());
    return report;
}

}  // namespace

LossReport batch_loss(const ScorerBackend& backend, const Prompt& prompt, const Dataset& dataset,
                      const RunConfig& config, const RenderTemplate& tmpl) {
    if (dataset.kind != DatasetKind::supervised) {
        throw Error(Errc::KindMismatch, "batch_loss requires a supervised dataset");
    }
    if (dataset.empty()) throw Error(Errc::EmptyDataset, "batch_loss over an empty dataset");

    std::vector<LossReport::Entry> entries(dataset.examples.size());
    parallel_for_indexed(dataset.examples.size(), config.max_concurrency, [&](std::size_t i) {
        const Example& ex = dataset.examples[i];
        const std::string context = render_scoring_text(prompt, ex.input, tmpl);
        const double ce = ce_loss(backend.score_target(context, ex.output),
                                  config.loss_normalization);
        entries[i] = {ex.id, ce * ex.weight};
    });
    return finalize(std::move(entries), config.loss_normalization);
}

LossReport pref_batch_loss(const ScorerBackend& backend, const Prompt& prompt,
                           const Dataset& dataset, const RunConfig& config,
                           const RenderTemplate& tmpl) {
    if (dataset.kind != DatasetKind::preference) {
        throw Error(Errc::KindMismatch, "pref_batch_loss requires a preference dataset");
    }
    if (dataset.empty()) throw Error(Errc::EmptyDataset, "pref_batch_loss over an empty dataset");

    std::vector<LossReport::Entry> entries(dataset.pairs.size());
    parallel_for_indexed(dataset.pairs.size(), config.max_concurrency, [&](std::size_t i) {
        const PreferencePair& pair = dataset.pairs[i];
        entries[i] = {pair.id, pref_loss(backend, prompt, pair, config.beta, tmpl)};
    });
    return finalize(std::move(entries), config.loss_normalization);
}

LossReport objective(const ScorerBackend& backend, const Prompt& prompt, const Dataset& dataset,
                     const RunConfig& config, const RenderTemplate& tmpl) {
    if (dataset.empty()) throw Error(Errc::EmptyDataset, "objective over an empty dataset");
    if (dataset.kind == DatasetKind::supervised) {
        return batch_loss(backend, prompt, dataset, config, tmpl);
    }
    if (!config.enable_prefloss) {
        // PrefLoss ablated: score only the preferred output with plain CE.
        std::vector<LossReport::Entry> entries(dataset.pairs.size());
        parallel_for_indexed(dataset.pairs.size(), config.max_concurrency, [&](std::size_t i) {
            const PreferencePair& pair = dataset.pairs[i];
            const std::string context = render_scoring_text(prompt, pair.input, tmpl);
            entries[i] = {pair.id, ce_loss(backend.score_target(context, pair.preferred),
                                           config.loss_normalization)};
        });
        return finalize(std::move(entries), config.loss_normalization);
    }
    return pref_batch_loss(backend, prompt, dataset, config, tmpl);
}

std::vector<std::size_t> rank_hard_indices(const LossReport& report, int k) {
    if (k < 1) throw Error(Errc::InvalidConfig, "rank_hard_examples requires k >= 1");
    std::vector<std::size_t> idx(report.per_record.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return report.per_record[a].loss > report.per_record[b].loss;
    });
    if (idx.size() > static_cast<std::size_t>(k)) idx.resize(static_cast<std::size_t>(k));
    return idx;
}

std::vector<std::string> rank_hard_examples(const LossReport& report, int k) {
    std::vector<std::string> ids;
    for (std::size_t i : rank_hard_indices(report, k)) {
        ids.push_back(report.per_record[i].record_id);
    }
    return ids;
}

}  // namespace pmpo
