#pragma once

#include <string>
#include <vector>

#include "pmpo/backend.hpp"
#include "pmpo/metrics.hpp"
#include "pmpo/types.hpp"

namespace pmpo {

enum class UnitLabel { positive, negative, neutral };

const char* unit_label_name(UnitLabel label);

enum class SegmentationSource { model, fallback };

// Loss deltas and labels for every unit of a segmented prompt. A positive
// delta means masking the unit increased the batch loss, i.e. the unit helps.
struct MaskReport {
    SegmentedPrompt segmented;
    std::vector<double> deltas;      // one per unit, in nats
    std::vector<UnitLabel> labels;   // parallel to deltas
    double base_loss = 0.0;
    double epsilon = 0.0;            // resolved neutral band half-width
    SegmentationSource source = SegmentationSource::model;

    nlohmann::json to_json() const;
};

// Instantiates the mask-generation meta-prompt with the prompt text (both
// slots). Throws EmptyPrompt.
std::string build_segmentation_request(const Prompt& prompt);

// Extracts the first <prompt>...</prompt> block, locates <mask> spans,
// validates the tag discipline, and checks that the tag-stripped text equals
// original.text byte-exactly. Zero masks is a valid segmentation.
// Throws MissingPromptTags, TooManyMasks, NestedOrOverlappingMasks,
// ReconstructionMismatch.
SegmentedPrompt parse_segmentation(const std::string& response, const Prompt& original);

// Original text with unit j replaced by the literal "<MASK>".
Prompt masked_variant(const SegmentedPrompt& segmented, std::size_t unit_index);

// Delta losses per unit under the run objective; the base loss is computed
// once and reused. Variant evaluations run concurrently.
MaskReport mask_deltas(const SegmentedPrompt& segmented, const Dataset& dataset,
                       const ScorerBackend& backend, const RunConfig& config,
                       const RenderTemplate& tmpl = {});

// epsilon = neutral_epsilon_fraction * base_loss; positive if delta > eps,
// negative if delta < -eps, else neutral.
std::vector<UnitLabel> classify_units(const std::vector<double>& deltas, double base_loss,
                                      const RunConfig& config, double* epsilon_out = nullptr);

// Human-readable block that fills the {mask} slot of the rewrite templates.
std::string format_mask_analysis(const MaskReport& report);

// Sentinel used when no mask analysis is available.
inline constexpr const char* kNoMaskAnalysis = "(no independent units identified)";

// Rule-based fallback when the model cannot produce a parseable segmentation:
// split on blank lines into paragraph units, keeping the largest 5 by length
// when there are more.
SegmentedPrompt fallback_segmentation(const Prompt& prompt);

// Full segmentation pipeline: ask the generator (retries increment the seed),
// fall back to the rule-based split once parsing has failed
// max_parse_retries + 1 times. Transport failures propagate to the caller,
// which skips mask analysis for the iteration.
struct SegmentationOutcome {
    SegmentedPrompt segmented;
    SegmentationSource source = SegmentationSource::model;
    std::vector<std::string> transcripts;  // raw generator responses, in call order
};

SegmentationOutcome segment_with_retries(const Prompt& prompt, GeneratorBackend& generator,
                                         const RunConfig& config, uint64_t seed_base);

}  // namespace pmpo
