#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pmpo/error.hpp"

namespace pmpo {

// ---------------------------------------------------------------------------
// Prompt and provenance
// ---------------------------------------------------------------------------

struct ProvenanceInitial {};

struct ProvenanceRewrite {
    int iteration = 0;
    std::string source_example_id;
    int variant_index = 0;
    std::string template_kind;  // "large" or "small"
};

struct ProvenanceMaskedVariant {
    std::size_t unit_index = 0;
};

using Provenance = std::variant<ProvenanceInitial, ProvenanceRewrite, ProvenanceMaskedVariant>;

std::string provenance_tag(const Provenance& p);

// The instruction text under optimization. Distinct from per-example inputs.
struct Prompt {
    std::string text;
    std::string id;
    Provenance provenance = ProvenanceInitial{};

    // Throws EmptyPrompt when text is empty after whitespace trimming.
    static Prompt make(std::string text, std::string id, Provenance prov = ProvenanceInitial{});
};

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

struct UnitSpan {
    std::size_t byte_start = 0;  // into original.text
    std::size_t byte_end = 0;    // exclusive
    std::string text;
};

// A prompt split into removable semantic units. Zero units is a valid state
// meaning "no independent units found"; downstream skips mask analysis then.
struct SegmentedPrompt {
    Prompt original;
    std::vector<UnitSpan> units;  // non-overlapping, ascending byte order, at most 5

    static constexpr std::size_t kMaxUnits = 5;

    // Re-renders the tagged form: original text with each unit wrapped in
    // <mask></mask> and the whole wrapped in <prompt></prompt>.
    std::string to_tagged_string() const;
};

// ---------------------------------------------------------------------------
// Dataset records
// ---------------------------------------------------------------------------

struct Example {
    std::string id;
    std::string input;
    std::string output;   // must be non-empty
    double weight = 1.0;  // finite; supervised runs use 1.0
};

struct PreferencePair {
    std::string id;
    std::string input;
    std::string preferred;
    std::string dispreferred;
};

enum class DatasetKind { supervised, preference };

const char* dataset_kind_name(DatasetKind k);
DatasetKind dataset_kind_from(const std::string& s);

struct Dataset {
    DatasetKind kind = DatasetKind::supervised;
    std::string task_description;
    std::vector<Example> examples;       // populated iff kind == supervised
    std::vector<PreferencePair> pairs;   // populated iff kind == preference

    std::size_t size() const {
        return kind == DatasetKind::supervised ? examples.size() : pairs.size();
    }
    bool empty() const { return size() == 0; }
    const std::string& record_id(std::size_t i) const {
        return kind == DatasetKind::supervised ? examples[i].id : pairs[i].id;
    }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class FindingKind { DuplicateId, EmptyOutput, DegeneratePair, EmptyDataset, NonFiniteWeight };

const char* finding_kind_name(FindingKind k);

struct Finding {
    FindingKind kind;
    std::string record_id;  // empty for dataset-level findings
    std::size_t record_index = 0;
    std::string message;
};

struct ValidationReport {
    std::vector<Finding> findings;
    bool valid() const { return findings.empty(); }
};

ValidationReport validate_dataset(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct SamplingParams {
    double temperature = 0.8;
    double top_p = 0.95;
    int max_tokens = 1024;
};

enum class LossNormalization { sum, per_token_mean };
enum class RewriteTemplateKind { large, small };

const char* loss_normalization_name(LossNormalization n);
const char* rewrite_template_name(RewriteTemplateKind k);

struct RunConfig {
    int max_iterations = 20;
    int top_k = 3;
    int variants_per_sample = 4;
    double beta = 1.0;
    double neutral_epsilon_fraction = 0.005;  // epsilon = fraction * base batch loss
    SamplingParams sampling;
    RewriteTemplateKind rewrite_template = RewriteTemplateKind::large;
    LossNormalization loss_normalization = LossNormalization::sum;
    int max_parse_retries = 2;
    uint64_t seed = 0;
    int max_concurrency = 4;

    // Ablation toggles: token-importance masking, bad-case analysis,
    // preference-loss selection.
    bool enable_tim = true;
    bool enable_bca = true;
    bool enable_prefloss = true;

    // Throws InvalidConfig on any violated bound.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Scoring primitives
// ---------------------------------------------------------------------------

// Per-token log-probabilities (natural log) for one scored target span.
struct TokenLogProbs {
    std::vector<double> values;  // each <= 0 and finite
    std::optional<std::vector<std::string>> token_texts;

    double sum() const;
};

// Rendering convention turning (prompt, input) into the scorer context; the
// target is always scored as the span immediately following the context.
struct RenderTemplate {
    std::string context_format = "{prompt}\n\n{input}\n";
};

// Trailing whitespace of prompt.text is trimmed before substitution so a
// prompt ending in newlines still yields exactly one blank line of separation.
std::string render_scoring_text(const Prompt& prompt, const std::string& input,
                                const RenderTemplate& tmpl = {});

}  // namespace pmpo
