#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pmpo/backend.hpp"
#include "pmpo/metrics.hpp"
#include "pmpo/types.hpp"

namespace pmpo {

// A prompt variant with its evaluated batch loss. variant_order is the
// in-iteration generation index used for tie-breaking.
struct CandidateRecord {
    Prompt prompt;
    double loss = 0.0;
    int evaluated_at_iteration = 0;
    int variant_order = 0;

    nlohmann::json to_json() const;
};

struct IterationRecord {
    int iteration = 0;
    std::optional<double> incumbent_loss_before;  // absent when scoring never ran
    std::vector<std::string> hard_example_ids;
    int num_variants_generated = 0;
    int num_variants_evaluated = 0;
    std::optional<double> best_candidate_loss;    // min over newly evaluated candidates
    bool accepted = false;
    std::string incumbent_after;                  // prompt id
    std::optional<std::string> mask_report_ref;
    std::optional<std::string> error;             // set for contained backend failures
    double wall_time_seconds = 0.0;               // not part of the canonical serialization

    nlohmann::json to_json() const;
};

struct RunResult {
    Prompt best_prompt;
    std::optional<double> best_loss;  // absent only when scoring never succeeded
    std::vector<IterationRecord> history;
    nlohmann::json config_snapshot;
    std::string dataset_fingerprint;
    nlohmann::json backend_descriptors;

    nlohmann::json to_json() const;
};

// Receives run artifacts as they are produced; the run-directory writer
// implements this. All callbacks are invoked from the driving thread.
class RunSink {
  public:
    virtual ~RunSink() = default;
    virtual void on_config(const nlohmann::json&) {}
    virtual void on_mask_report(int /*iteration*/, const nlohmann::json&) {}
    virtual void on_rewrite_transcript(int /*iteration*/, const std::string& /*name*/,
                                       const std::string& /*request*/,
                                       const std::string& /*response*/, bool /*parsed*/) {}
    virtual void on_candidates(int /*iteration*/, const std::vector<CandidateRecord>&) {}
    virtual void on_iteration(const IterationRecord&) {}
    virtual void on_result(const RunResult&) {}
};

// Minimum-loss pool member; ties resolve to the earlier iteration, then the
// lower variant index, then the incumbent. Acceptance requires a strictly
// lower loss than the incumbent; on a tie the incumbent is retained.
// Throws EmptyPool.
std::pair<CandidateRecord, bool> select_best(const std::vector<CandidateRecord>& pool,
                                             const CandidateRecord& incumbent);

struct OptimizerState {
    CandidateRecord incumbent;
    std::optional<LossReport> incumbent_report;  // cache; exact rescores are free
};

// One pass of the iterate-analyze-generate-evaluate-select loop. Backend
// failures never propagate: they produce a failed-iteration record with the
// incumbent retained.
IterationRecord iteration_step(OptimizerState& state, const Dataset& dataset,
                               const Backends& backends, const RunConfig& config,
                               const RenderTemplate& tmpl, int iteration,
                               RunSink* sink = nullptr);

// Runs max_iterations steps with no early stopping. Fully deterministic for
// a scripted generator + n-gram scorer + fixed seed.
// Throws EmptyDataset, InvalidConfig.
RunResult optimize(const Dataset& dataset, const Prompt& initial_prompt, const Backends& backends,
                   const RunConfig& config, const RenderTemplate& tmpl = {},
                   RunSink* sink = nullptr);

// Hard-example selection honoring the BCA toggle: ranked by loss when on,
// seeded uniform sampling (loss-independent) when off.
std::vector<std::size_t> pick_hard_indices(const LossReport& report, const RunConfig& config,
                                           int iteration);

nlohmann::json config_snapshot_json(const RunConfig& config, const RenderTemplate& tmpl);
nlohmann::json prompt_to_json(const Prompt& prompt);

}  // namespace pmpo
