#pragma once

#include <string>
#include <vector>

#include "pmpo/backend.hpp"
#include "pmpo/types.hpp"

namespace pmpo {

// Per-record losses plus their mean, all in nats. Lower is better in both
// the supervised and preference regimes.
struct LossReport {
    struct Entry {
        std::string record_id;
        double loss = 0.0;
    };
    std::vector<Entry> per_record;  // in dataset order
    double batch = 0.0;             // arithmetic mean of per_record losses
    LossNormalization normalization = LossNormalization::sum;

    nlohmann::json to_json() const;
};

// Token-level cross-entropy: sum of negated log-probabilities; per_token_mean
// divides by the token count. Throws EmptyLogProbs.
double ce_loss(const TokenLogProbs& logprobs,
               LossNormalization normalization = LossNormalization::sum);

// s_M(x, y, P): total log-probability of the output span. Always a raw sum;
// it feeds the preference loss. Throws EmptyTarget via the backend.
double sequence_score(const ScorerBackend& backend, const Prompt& prompt,
                      const std::string& input, const std::string& output,
                      const RenderTemplate& tmpl = {});

// -log sigmoid(beta * (s+ - s-)), computed as softplus(-beta * d) with the
// large-|x| branch so it never overflows.
double pref_loss_from_scores(double preferred_score, double dispreferred_score, double beta);
double pref_loss(const ScorerBackend& backend, const Prompt& prompt, const PreferencePair& pair,
                 double beta, const RenderTemplate& tmpl = {});

// Supervised batch loss: per-record CE (scaled by the record weight), batch =
// mean. Records are scored concurrently up to config.max_concurrency.
LossReport batch_loss(const ScorerBackend& backend, const Prompt& prompt, const Dataset& dataset,
                      const RunConfig& config, const RenderTemplate& tmpl = {});

// Preference batch loss: per-pair preference loss, batch = mean.
LossReport pref_batch_loss(const ScorerBackend& backend, const Prompt& prompt,
                           const Dataset& dataset, const RunConfig& config,
                           const RenderTemplate& tmpl = {});

// Dispatch on dataset kind. With config.enable_prefloss == false, preference
// data falls back to supervised CE on the preferred output only.
LossReport objective(const ScorerBackend& backend, const Prompt& prompt, const Dataset& dataset,
                     const RunConfig& config, const RenderTemplate& tmpl = {});

// Ids of the k highest-loss records, descending by loss, ties broken by
// ascending dataset index. k > |records| returns all.
std::vector<std::string> rank_hard_examples(const LossReport& report, int k);

// Same ranking but returning dataset indices.
std::vector<std::size_t> rank_hard_indices(const LossReport& report, int k);

}  // namespace pmpo
