#include "pmpo/optimizer.hpp"

#include <chrono>
#include <unordered_set>

#include "pmpo/dataset_io.hpp"
#include "pmpo/masking.hpp"
#include "pmpo/rewrite.hpp"
#include "pmpo/util.hpp"

namespace pmpo {

namespace {

// Seed-stream roles keep segmentation, BCA sampling, and per-slot rewrite
// seeds disjoint.
enum SeedRole : uint64_t { kSeg = 1, kBca = 2, kRewrite = 3 };

uint64_t role_seed(const RunConfig& config, uint64_t role, int iteration, uint64_t index = 0) {
    return mix_seed(config.seed, (role << 32) | static_cast<uint64_t>(iteration), index);
}

bool is_contained_backend_error(Errc code) {
    switch (code) {
        case Errc::BackendUnavailable:
        case Errc::ScriptExhausted:
        case Errc::ContextOverflow:
        case Errc::ProtocolError:
        case Errc::AlignmentError:
            return true;
        default:
            return false;
    }
}

}  // namespace

nlohmann::json prompt_to_json(const Prompt& prompt) {
    nlohmann::json prov{{"tag", provenance_tag(prompt.provenance)}};
    if (const auto* r = std::get_if<ProvenanceRewrite>(&prompt.provenance)) {
        prov["iteration"] = r->iteration;
        prov["source_example_id"] = r->source_example_id;
        prov["variant_index"] = r->variant_index;
        prov["template_kind"] = r->template_kind;
    } else if (const auto* m = std::get_if<ProvenanceMaskedVariant>(&prompt.provenance)) {
        prov["unit_index"] = m->unit_index;
    }
    return {{"id", prompt.id}, {"text", prompt.text}, {"provenance", prov}};
}

nlohmann::json CandidateRecord::to_json() const {
    return {{"prompt", prompt_to_json(prompt)},
            {"loss", loss},
            {"evaluated_at_iteration", evaluated_at_iteration},
            {"variant_order", variant_order}};
}

nlohmann::json IterationRecord::to_json() const {
    nlohmann::json j;
    j["iteration"] = iteration;
    j["incumbent_loss_before"] =
        incumbent_loss_before ? nlohmann::json(*incumbent_loss_before) : nlohmann::json();
    j["hard_example_ids"] = hard_example_ids;
    j["num_variants_generated"] = num_variants_generated;
    j["num_variants_evaluated"] = num_variants_evaluated;
    j["best_candidate_loss"] =
        best_candidate_loss ? nlohmann::json(*best_candidate_loss) : nlohmann::json();
    j["accepted"] = accepted;
    j["incumbent_after"] = incumbent_after;
    j["mask_report_ref"] = mask_report_ref ? nlohmann::json(*mask_report_ref) : nlohmann::json();
    j["error"] = error ? nlohmann::json(*error) : nlohmann::json();
    return j;
}

nlohmann::json RunResult::to_json() const {
    nlohmann::json hist = nlohmann::json::array();
    for (const IterationRecord& r : history) hist.push_back(r.to_json());
    return {{"best_prompt", prompt_to_json(best_prompt)},
            {"best_loss", best_loss ? nlohmann::json(*best_loss) : nlohmann::json()},
            {"history", hist},
            {"config", config_snapshot},
            {"dataset_fingerprint", dataset_fingerprint},
            {"backends", backend_descriptors}};
}

nlohmann::json config_snapshot_json(const RunConfig& config, const RenderTemplate& tmpl) {
    return {{"max_iterations", config.max_iterations},
            {"top_k", config.top_k},
            {"variants_per_sample", config.variants_per_sample},
            {"beta", config.beta},
            {"neutral_epsilon_fraction", config.neutral_epsilon_fraction},
            {"sampling",
             {{"temperature", config.sampling.temperature},
              {"top_p", config.sampling.top_p},
              {"max_tokens", config.sampling.max_tokens}}},
            {"rewrite_template", rewrite_template_name(config.rewrite_template)},
            {"loss_normalization", loss_normalization_name(config.loss_normalization)},
            {"max_parse_retries", config.max_parse_retries},
            {"seed", config.seed},
            {"max_concurrency", config.max_concurrency},
            {"enable_tim", config.enable_tim},
            {"enable_bca", config.enable_bca},
            {"enable_prefloss", config.enable_prefloss},
            {"render_context_format", tmpl.context_format}};
}

std::pair<CandidateRecord, bool> select_best(const std::vector<CandidateRecord>& pool,
                                             const CandidateRecord& incumbent) {
    if (pool.empty()) throw Error(Errc::EmptyPool, "candidate pool is empty");

    auto better = [&](const CandidateRecord& a, const CandidateRecord& b) {
        if (a.loss != b.loss) return a.loss < b.loss;
        if (a.evaluated_at_iteration != b.evaluated_at_iteration) {
            return a.evaluated_at_iteration < b.evaluated_at_iteration;
        }
        if (a.variant_order != b.variant_order) return a.variant_order < b.variant_order;
        return a.prompt.id == incumbent.prompt.id && b.prompt.id != incumbent.prompt.id;
    };

    const CandidateRecord* winner = &pool.front();
    for (const CandidateRecord& c : pool) {
        if (better(c, *winner)) winner = &c;
    }
    const bool accepted = winner->loss < incumbent.loss;
    if (!accepted) return {incumbent, false};
    return {*winner, true};
}

std::vector<std::size_t> pick_hard_indices(const LossReport& report, const RunConfig& config,
                                           int iteration) {
    if (config.enable_bca) return rank_hard_indices(report, config.top_k);
    DetRng rng(role_seed(config, kBca, iteration));
    return sample_indices(report.per_record.size(), static_cast<std::size_t>(config.top_k), rng);
}

IterationRecord iteration_step(OptimizerState& state, const Dataset& dataset,
                               const Backends& backends, const RunConfig& config,
                               const RenderTemplate& tmpl, int iteration, RunSink* sink) {
    const auto started = std::chrono::steady_clock::now();
    IterationRecord record;
    record.iteration = iteration;
    record.incumbent_after = state.incumbent.prompt.id;

    try {
        // (1) objective on the incumbent, reusing the cached report when the
        // incumbent is unchanged
        if (!state.incumbent_report) {
            state.incumbent_report =
                objective(*backends.scorer, state.incumbent.prompt, dataset, config, tmpl);
            state.incumbent.loss = state.incumbent_report->batch;
        }
        record.incumbent_loss_before = state.incumbent.loss;

        // (2) mask analysis on the incumbent (TIM)
        std::string mask_analysis = kNoMaskAnalysis;
        if (config.enable_tim) {
            try {
                SegmentationOutcome seg =
                    segment_with_retries(state.incumbent.prompt, *backends.generator, config,
                                         role_seed(config, kSeg, iteration));
                if (sink) {
                    const std::string request = build_segmentation_request(state.incumbent.prompt);
                    for (std::size_t a = 0; a < seg.transcripts.size(); ++a) {
                        const bool parsed = seg.source == SegmentationSource::model &&
                                            a + 1 == seg.transcripts.size();
                        sink->on_rewrite_transcript(iteration,
                                                    "segmentation_attempt" + std::to_string(a),
                                                    request, seg.transcripts[a], parsed);
                    }
                }
                MaskReport mask =
                    mask_deltas(seg.segmented, dataset, *backends.scorer, config, tmpl);
                mask.source = seg.source;
                mask_analysis = format_mask_analysis(mask);
                if (sink) {
                    sink->on_mask_report(iteration, mask.to_json());
                    record.mask_report_ref = "masks/iter_" + std::to_string(iteration) + ".json";
                }
            } catch (const Error& e) {
                if (!is_contained_backend_error(e.code())) throw;
                // generator or scorer unavailable for the analysis phase: the
                // mask signal is soft, so the iteration proceeds without it
            }
        }

        // (3) hard-example selection (BCA)
        const std::vector<std::size_t> hard =
            pick_hard_indices(*state.incumbent_report, config, iteration);
        for (std::size_t idx : hard) record.hard_example_ids.push_back(dataset.record_id(idx));

        // (4) rewrite proposals per hard example
        std::vector<Prompt> variants;
        for (std::size_t slot = 0; slot < hard.size(); ++slot) {
            const std::size_t idx = hard[slot];
            RewriteContext ctx;
            ctx.task_description = dataset.task_description;
            ctx.current_prompt = state.incumbent.prompt;
            ctx.mask_analysis = mask_analysis;
            ctx.template_kind = config.rewrite_template;
            if (dataset.kind == DatasetKind::supervised) {
                ctx.hard_input = dataset.examples[idx].input;
                ctx.hard_answer = dataset.examples[idx].output;
            } else {
                ctx.hard_input = dataset.pairs[idx].input;
                ctx.hard_answer = dataset.pairs[idx].preferred;
                if (config.enable_prefloss) {
                    ctx.hard_dispreferred = dataset.pairs[idx].dispreferred;
                }
            }
            ProposalOutcome proposals = propose_variants(
                ctx, config.variants_per_sample, *backends.generator, config,
                role_seed(config, kRewrite, iteration, slot), iteration, dataset.record_id(idx));
            if (sink) {
                const std::string request = build_rewrite_request(ctx);
                for (std::size_t c = 0; c < proposals.transcripts.size(); ++c) {
                    sink->on_rewrite_transcript(
                        iteration,
                        dataset.record_id(idx) + "_call" + std::to_string(c), request,
                        proposals.transcripts[c].response, proposals.transcripts[c].parsed);
                }
            }
            record.num_variants_generated += static_cast<int>(proposals.variants.size());
            for (Prompt& v : proposals.variants) variants.push_back(std::move(v));
        }

        // (5) evaluate the pool; duplicates of the incumbent or of an earlier
        // variant are dropped unevaluated (the pool is a set)
        std::vector<CandidateRecord> pool{state.incumbent};
        std::vector<LossReport> pool_reports(1);  // slot 0 unused (incumbent cached)
        std::unordered_set<std::string> seen_texts{state.incumbent.prompt.text};
        int order = 0;
        for (Prompt& v : variants) {
            if (!seen_texts.insert(v.text).second) continue;
            LossReport rep = objective(*backends.scorer, v, dataset, config, tmpl);
            CandidateRecord cand;
            cand.prompt = std::move(v);
            cand.loss = rep.batch;
            cand.evaluated_at_iteration = iteration;
            cand.variant_order = order++;
            pool.push_back(std::move(cand));
            pool_reports.push_back(std::move(rep));
        }
        record.num_variants_evaluated = order;
        for (std::size_t i = 1; i < pool.size(); ++i) {
            if (!record.best_candidate_loss || pool[i].loss < *record.best_candidate_loss) {
                record.best_candidate_loss = pool[i].loss;
            }
        }
        if (sink) sink->on_candidates(iteration, pool);

        // (6) strict-improvement selection
        auto [winner, accepted] = select_best(pool, state.incumbent);
        record.accepted = accepted;
        if (accepted) {
            for (std::size_t i = 1; i < pool.size(); ++i) {
                if (pool[i].prompt.id == winner.prompt.id) {
                    state.incumbent_report = std::move(pool_reports[i]);
                    break;
                }
            }
            state.incumbent = winner;
            record.incumbent_after = winner.prompt.id;
        }
    } catch (const Error& e) {
        if (!is_contained_backend_error(e.code())) throw;
        record.error = e.what();
        record.accepted = false;
        record.incumbent_after = state.incumbent.prompt.id;
    }

    record.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (sink) sink->on_iteration(record);
    return record;
}

RunResult optimize(const Dataset& dataset, const Prompt& initial_prompt, const Backends& backends,
                   const RunConfig& config, const RenderTemplate& tmpl, RunSink* sink) {
    config.validate();
    if (dataset.empty()) throw Error(Errc::EmptyDataset, "cannot optimize over an empty dataset");
    const ValidationReport validation = validate_dataset(dataset);
    if (!validation.valid()) {
        throw Error(Errc::MalformedRecord,
                    "dataset failed validation: " + validation.findings.front().message);
    }

    RunResult result;
    result.config_snapshot = config_snapshot_json(config, tmpl);
    result.dataset_fingerprint = dataset_fingerprint(dataset);
    result.backend_descriptors = {{"scorer", backends.scorer->descriptor()},
                                  {"generator", backends.generator->descriptor()}};
    if (sink) sink->on_config(result.config_snapshot);

    OptimizerState state;
    state.incumbent.prompt = initial_prompt;
    state.incumbent.evaluated_at_iteration = 0;
    state.incumbent.variant_order = 0;

    for (int t = 1; t <= config.max_iterations; ++t) {
        result.history.push_back(
            iteration_step(state, dataset, backends, config, tmpl, t, sink));
    }

    result.best_prompt = state.incumbent.prompt;
    if (state.incumbent_report) result.best_loss = state.incumbent.loss;
    if (sink) sink->on_result(result);
    return result;
}

}  // namespace pmpo
