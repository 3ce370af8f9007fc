#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pmpo/backend.hpp"
#include "pmpo/types.hpp"

namespace pmpo {

// Everything a rewrite meta-prompt instantiation needs. For preference pairs
// the {true_answer} slot receives the preferred output and the dispreferred
// one is added on a "Dispreferred output:" line after it.
struct RewriteContext {
    std::string task_description;
    Prompt current_prompt;
    std::string hard_input;
    std::string hard_answer;                        // y, or y+ for pairs
    std::optional<std::string> hard_dispreferred;   // y- for pairs
    std::string mask_analysis;                      // may be the sentinel string
    RewriteTemplateKind template_kind = RewriteTemplateKind::large;
};

std::string build_rewrite_request(const RewriteContext& ctx);

// Contents of the first <prompt>...</prompt> block, whitespace-trimmed, with
// inner <mask> tags stripped. Throws MissingPromptTags, EmptyExtraction.
std::string extract_prompt_text(const std::string& response);

struct RewriteTranscript {
    std::string response;
    bool parsed = false;
};

struct ProposalOutcome {
    std::vector<Prompt> variants;               // 0..n of them
    std::vector<RewriteTranscript> transcripts; // every raw response, in call order
    std::size_t calls_made = 0;
};

// Requests up to n variants, spending at most n * (1 + max_parse_retries)
// generation calls with seeds seed_base + call_index. Parse failures are
// dropped, never fatal; BackendUnavailable is thrown only when every call
// transport-failed.
ProposalOutcome propose_variants(const RewriteContext& ctx, int n, GeneratorBackend& generator,
                                 const RunConfig& config, uint64_t seed_base, int iteration,
                                 const std::string& source_example_id);

}  // namespace pmpo
