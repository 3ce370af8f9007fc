#include "pmpo/types.hpp"

#include <cmath>
#include <unordered_set>

#include "pmpo/util.hpp"

namespace pmpo {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::EmptyPrompt: return "EmptyPrompt";
        case Errc::EmptyTarget: return "EmptyTarget";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::EmptyLogProbs: return "EmptyLogProbs";
        case Errc::EmptyPool: return "EmptyPool";
        case Errc::EmptyExtraction: return "EmptyExtraction";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::BackendUnavailable: return "BackendUnavailable";
        case Errc::ScriptExhausted: return "ScriptExhausted";
        case Errc::ContextOverflow: return "ContextOverflow";
        case Errc::ProtocolError: return "ProtocolError";
        case Errc::AlignmentError: return "AlignmentError";
        case Errc::MissingPromptTags: return "MissingPromptTags";
        case Errc::TooManyMasks: return "TooManyMasks";
        case Errc::NestedOrOverlappingMasks: return "NestedOrOverlappingMasks";
        case Errc::ReconstructionMismatch: return "ReconstructionMismatch";
        case Errc::FileNotFound: return "FileNotFound";
        case Errc::MalformedRecord: return "MalformedRecord";
        case Errc::KindMismatch: return "KindMismatch";
        case Errc::IoFailure: return "IoFailure";
    }
    return "UnknownError";
}

std::string provenance_tag(const Provenance& p) {
    if (std::holds_alternative<ProvenanceInitial>(p)) return "initial";
    if (std::holds_alternative<ProvenanceRewrite>(p)) return "rewrite";
    return "masked-variant";
}

Prompt Prompt::make(std::string text, std::string id, Provenance prov) {
    if (trim(text).empty()) {
        throw Error(Errc::EmptyPrompt, "prompt text is empty after trimming");
    }
    Prompt p;
    p.text = std::move(text);
    p.id = std::move(id);
    p.provenance = std::move(prov);
    return p;
}

std::string SegmentedPrompt::to_tagged_string() const {
    std::string out = "<prompt>";
    std::size_t pos = 0;
    for (const UnitSpan& u : units) {
        out += original.text.substr(pos, u.byte_start - pos);
        out += "<mask>";
        out += original.text.substr(u.byte_start, u.byte_end - u.byte_start);
        out += "</mask>";
        pos = u.byte_end;
    }
    out += original.text.substr(pos);
    out += "</prompt>";
    return out;
}

const char* dataset_kind_name(DatasetKind k) {
    return k == DatasetKind::supervised ? "supervised" : "preference";
}

DatasetKind dataset_kind_from(const std::string& s) {
    if (s == "supervised") return DatasetKind::supervised;
    if (s == "preference") return DatasetKind::preference;
    throw Error(Errc::MalformedRecord, "unknown dataset kind '" + s + "'");
}

const char* finding_kind_name(FindingKind k) {
    switch (k) {
        case FindingKind::DuplicateId: return "DuplicateId";
        case FindingKind::EmptyOutput: return "EmptyOutput";
        case FindingKind::DegeneratePair: return "DegeneratePair";
        case FindingKind::EmptyDataset: return "EmptyDataset";
        case FindingKind::NonFiniteWeight: return "NonFiniteWeight";
    }
    return "Unknown";
}

ValidationReport validate_dataset(const Dataset& dataset) {
    ValidationReport report;
    if (dataset.empty()) {
        report.findings.push_back(
            {FindingKind::EmptyDataset, "", 0, "dataset has no records"});
        return report;
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::string& id = dataset.record_id(i);
        if (!seen.insert(id).second) {
            report.findings.push_back(
                {FindingKind::DuplicateId, id, i, "duplicate record id '" + id + "'"});
        }
        if (dataset.kind == DatasetKind::supervised) {
            const Example& ex = dataset.examples[i];
            if (ex.output.empty()) {
                report.findings.push_back(
                    {FindingKind::EmptyOutput, id, i, "example output is empty"});
            }
            if (!std::isfinite(ex.weight)) {
                report.findings.push_back(
                    {FindingKind::NonFiniteWeight, id, i, "weight is not finite"});
            }
        } else {
            const PreferencePair& pair = dataset.pairs[i];
            if (pair.preferred.empty() || pair.dispreferred.empty()) {
                report.findings.push_back(
                    {FindingKind::EmptyOutput, id, i, "preference output is empty"});
            } else if (pair.preferred == pair.dispreferred) {
                report.findings.push_back(
                    {FindingKind::DegeneratePair, id, i,
                     "preferred and dispreferred outputs are identical"});
            }
        }
    }
    return report;
}

const char* loss_normalization_name(LossNormalization n) {
    return n == LossNormalization::sum ? "sum" : "per_token_mean";
}

const char* rewrite_template_name(RewriteTemplateKind k) {
    return k == RewriteTemplateKind::large ? "large" : "small";
}

void RunConfig::validate() const {
    auto fail = [](const std::string& what) {
        throw Error(Errc::InvalidConfig, what);
    };
    if (max_iterations < 1) fail("max_iterations must be >= 1");
    if (top_k < 1) fail("top_k must be >= 1");
    if (variants_per_sample < 1) fail("variants_per_sample must be >= 1");
    if (!(beta > 0) || !std::isfinite(beta)) fail("beta must be a positive finite real");
    if (neutral_epsilon_fraction < 0 || !std::isfinite(neutral_epsilon_fraction)) {
        fail("neutral_epsilon_fraction must be non-negative and finite");
    }
    if (sampling.temperature < 0 || !std::isfinite(sampling.temperature)) {
        fail("sampling.temperature must be non-negative and finite");
    }
    if (!(sampling.top_p > 0) || sampling.top_p > 1) fail("sampling.top_p must be in (0,1]");
    if (sampling.max_tokens < 1) fail("sampling.max_tokens must be >= 1");
    if (max_parse_retries < 0) fail("max_parse_retries must be >= 0");
    if (max_concurrency < 1) fail("max_concurrency must be >= 1");
}

double TokenLogProbs::sum() const {
    double total = 0.0;
    for (double v : values) total += v;
    return total;
}

std::string render_scoring_text(const Prompt& prompt, const std::string& input,
                                const RenderTemplate& tmpl) {
    std::string prompt_text = trim_trailing(prompt.text);
    if (trim(prompt_text).empty()) {
        throw Error(Errc::EmptyPrompt, "cannot render an empty prompt");
    }
    return substitute_placeholders(
        tmpl.context_format, [&](std::string_view name) -> const std::string* {
            if (name == "prompt") return &prompt_text;
            if (name == "input") return &input;
            return nullptr;
        });
}

}  // namespace pmpo
