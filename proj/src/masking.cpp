#include "pmpo/masking.hpp"

#include <algorithm>
#include <cstring>

#include "pmpo/parallel.hpp"
#include "pmpo/templates.hpp"
#include "pmpo/util.hpp"

namespace pmpo {

namespace {

constexpr const char* kPromptOpen = "<prompt>";
constexpr const char* kPromptClose = "</prompt>";
constexpr const char* kMaskOpen = "<mask>";
constexpr const char* kMaskClose = "</mask>";

}  // namespace

const char* unit_label_name(UnitLabel label) {
    switch (label) {
        case UnitLabel::positive: return "positive";
        case UnitLabel::negative: return "negative";
        case UnitLabel::neutral: return "neutral";
    }
    return "unknown";
}

std::string build_segmentation_request(const Prompt& prompt) {
    if (trim(prompt.text).empty()) {
        throw Error(Errc::EmptyPrompt, "cannot build a segmentation request for an empty prompt");
    }
    return substitute_placeholders(
        templates::kMaskGeneration, [&](std::string_view name) -> const std::string* {
            return name == "prompt" ? &prompt.text : nullptr;
        });
}

SegmentedPrompt parse_segmentation(const std::string& response, const Prompt& original) {
    const std::size_t open = response.find(kPromptOpen);
    if (open == std::string::npos) {
        throw Error(Errc::MissingPromptTags, "response contains no <prompt> tag");
    }
    const std::size_t body_begin = open + std::strlen(kPromptOpen);
    const std::size_t close = response.find(kPromptClose, body_begin);
    if (close == std::string::npos) {
        throw Error(Errc::MissingPromptTags, "response contains no closing </prompt> tag");
    }
    const std::string body = response.substr(body_begin, close - body_begin);

    // Single left-to-right scan over the body. Nested or overlapping masks
    // show up as a tag out of order.
    std::string stripped;
    stripped.reserve(body.size());
    std::vector<UnitSpan> units;
    bool in_mask = false;
    std::size_t unit_start = 0;
    std::size_t pos = 0;
    while (pos < body.size()) {
        const std::size_t next_open = body.find(kMaskOpen, pos);
        const std::size_t next_close = body.find(kMaskClose, pos);
        const std::size_t next_tag = std::min(next_open, next_close);
        if (next_tag == std::string::npos) {
            stripped += body.substr(pos);
            break;
        }
        stripped += body.substr(pos, next_tag - pos);
        if (next_close < next_open) {
            if (!in_mask) {
                throw Error(Errc::NestedOrOverlappingMasks,
                            "</mask> without a matching <mask>");
            }
            units.push_back({unit_start, stripped.size(),
                             stripped.substr(unit_start, stripped.size() - unit_start)});
            in_mask = false;
            pos = next_close + std::strlen(kMaskClose);
        } else {
            if (in_mask) {
                throw Error(Errc::NestedOrOverlappingMasks, "<mask> opened inside another mask");
            }
            in_mask = true;
            unit_start = stripped.size();
            pos = next_open + std::strlen(kMaskOpen);
        }
    }
    if (in_mask) {
        throw Error(Errc::NestedOrOverlappingMasks, "unterminated <mask> tag");
    }
    if (units.size() > SegmentedPrompt::kMaxUnits) {
        throw Error(Errc::TooManyMasks, "segmentation produced " + std::to_string(units.size()) +
                                            " masks (limit 5)");
    }
    if (stripped != original.text) {
        throw Error(Errc::ReconstructionMismatch,
                    "tag-stripped response does not reproduce the original prompt text");
    }

    SegmentedPrompt segmented;
    segmented.original = original;
    segmented.units = std::move(units);
    return segmented;
}

Prompt masked_variant(const SegmentedPrompt& segmented, std::size_t unit_index) {
    if (unit_index >= segmented.units.size()) {
        throw Error(Errc::IndexOutOfRange,
                    "unit index " + std::to_string(unit_index) + " out of range (" +
                        std::to_string(segmented.units.size()) + " units)");
    }
    const UnitSpan& unit = segmented.units[unit_index];
    std::string text = segmented.original.text;
    text.replace(unit.byte_start, unit.byte_end - unit.byte_start, "<MASK>");

    Prompt variant;
    variant.text = std::move(text);
    variant.id = segmented.original.id + "/masked_" + std::to_string(unit_index);
    variant.provenance = ProvenanceMaskedVariant{unit_index};
    return variant;
}

std::vector<UnitLabel> classify_units(const std::vector<double>& deltas, double base_loss,
                                      const RunConfig& config, double* epsilon_out) {
    const double epsilon = config.neutral_epsilon_fraction * base_loss;
    if (epsilon_out) *epsilon_out = epsilon;
    std::vector<UnitLabel> labels;
    labels.reserve(deltas.size());
    for (double d : deltas) {
        if (d > epsilon) labels.push_back(UnitLabel::positive);
        else if (d < -epsilon) labels.push_back(UnitLabel::negative);
        else labels.push_back(UnitLabel::neutral);
    }
    return labels;
}

MaskReport mask_deltas(const SegmentedPrompt& segmented, const Dataset& dataset,
                       const ScorerBackend& backend, const RunConfig& config,
                       const RenderTemplate& tmpl) {
    if (dataset.empty()) throw Error(Errc::EmptyDataset, "mask_deltas over an empty dataset");

    MaskReport report;
    report.segmented = segmented;
    report.base_loss = objective(backend, segmented.original, dataset, config, tmpl).batch;

    report.deltas.resize(segmented.units.size());
    parallel_for_indexed(segmented.units.size(), config.max_concurrency, [&](std::size_t j) {
        const Prompt variant = masked_variant(segmented, j);
        const double masked = objective(backend, variant, dataset, config, tmpl).batch;
        report.deltas[j] = masked - report.base_loss;
    });
    report.labels = classify_units(report.deltas, report.base_loss, config, &report.epsilon);
    return report;
}

std::string format_mask_analysis(const MaskReport& report) {
    if (report.segmented.units.empty()) return kNoMaskAnalysis;
    std::string out;
    for (std::size_t j = 0; j < report.segmented.units.size(); ++j) {
        out += "- unit " + std::to_string(j) + " [" + unit_label_name(report.labels[j]) +
               ", delta " + format_signed_fixed(report.deltas[j], 4) + " nats]: \"" +
               truncate_utf8(report.segmented.units[j].text, 200) + "\"";
        if (j + 1 < report.segmented.units.size()) out += "\n";
    }
    return out;
}

nlohmann::json MaskReport::to_json() const {
    nlohmann::json units = nlohmann::json::array();
    for (std::size_t j = 0; j < segmented.units.size(); ++j) {
        units.push_back({{"index", j},
                         {"byte_start", segmented.units[j].byte_start},
                         {"byte_end", segmented.units[j].byte_end},
                         {"text", segmented.units[j].text},
                         {"delta", deltas[j]},
                         {"label", unit_label_name(labels[j])}});
    }
    return {{"prompt_id", segmented.original.id},
            {"base_loss", base_loss},
            {"epsilon", epsilon},
            {"source", source == SegmentationSource::model ? "model" : "fallback"},
            {"units", units}};
}

SegmentedPrompt fallback_segmentation(const Prompt& prompt) {
    // Paragraphs delimited by blank lines, offsets tracked in the original.
    struct Para {
        std::size_t begin, end;
    };
    std::vector<Para> paras;
    const std::string& text = prompt.text;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t sep = text.find("\n\n", pos);
        std::size_t end = (sep == std::string::npos) ? text.size() : sep;
        // trim whitespace-only paragraphs
        std::size_t b = pos, e = end;
        while (b < e && (text[b] == '\n' || text[b] == ' ' || text[b] == '\t' || text[b] == '\r'))
            ++b;
        while (e > b && (text[e - 1] == '\n' || text[e - 1] == ' ' || text[e - 1] == '\t' ||
                         text[e - 1] == '\r'))
            --e;
        if (e > b) paras.push_back({b, e});
        if (sep == std::string::npos) break;
        pos = sep + 2;
    }

    if (paras.size() > SegmentedPrompt::kMaxUnits) {
        std::stable_sort(paras.begin(), paras.end(), [](const Para& a, const Para& b) {
            return (a.end - a.begin) > (b.end - b.begin);
        });
        paras.resize(SegmentedPrompt::kMaxUnits);
        std::sort(paras.begin(), paras.end(),
                  [](const Para& a, const Para& b) { return a.begin < b.begin; });
    }

    SegmentedPrompt segmented;
    segmented.original = prompt;
    for (const Para& p : paras) {
        segmented.units.push_back({p.begin, p.end, text.substr(p.begin, p.end - p.begin)});
    }
    return segmented;
}

SegmentationOutcome segment_with_retries(const Prompt& prompt, GeneratorBackend& generator,
                                         const RunConfig& config, uint64_t seed_base) {
    SegmentationOutcome outcome;
    const std::string request = build_segmentation_request(prompt);
    const int attempts = 1 + config.max_parse_retries;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string response =
            generator.generate(request, config.sampling, seed_base + static_cast<uint64_t>(attempt));
        outcome.transcripts.push_back(response);
        try {
            outcome.segmented = parse_segmentation(response, prompt);
            outcome.source = SegmentationSource::model;
            return outcome;
        } catch (const Error&) {
            // parse failure; retry with the next seed
        }
    }
    outcome.segmented = fallback_segmentation(prompt);
    outcome.source = SegmentationSource::fallback;
    return outcome;
}

}  // namespace pmpo
