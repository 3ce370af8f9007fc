#include "pmpo/rewrite.hpp"

#include "pmpo/templates.hpp"
#include "pmpo/util.hpp"

namespace pmpo {

std::string build_rewrite_request(const RewriteContext& ctx) {
    std::string tmpl = ctx.template_kind == RewriteTemplateKind::large ? templates::kOptimizeLarge
                                                                       : templates::kOptimizeSmall;
    if (ctx.hard_dispreferred) {
        // The rewrite templates only carry supervised slots; the dispreferred
        // output goes on its own line directly below the answer slot, with
        // matching indentation. Done on the template so prompt content can
        // never collide with the anchor.
        const std::size_t slot = tmpl.find("{true_answer}");
        if (slot != std::string::npos) {
            const std::size_t line_start = tmpl.rfind('\n', slot) + 1;
            std::string indent;
            for (std::size_t i = line_start; i < slot && (tmpl[i] == ' ' || tmpl[i] == '\t'); ++i) {
                indent += tmpl[i];
            }
            std::size_t line_end = tmpl.find('\n', slot);
            if (line_end == std::string::npos) line_end = tmpl.size();
            tmpl.insert(line_end, "\n" + indent + "Dispreferred output: {dispreferred}");
        }
    }

    return substitute_placeholders(
        tmpl, [&](std::string_view name) -> const std::string* {
            if (name == "task_description") return &ctx.task_description;
            if (name == "user_input") return &ctx.hard_input;
            if (name == "true_answer") return &ctx.hard_answer;
            if (name == "mask") return &ctx.mask_analysis;
            if (name == "current_prompt") return &ctx.current_prompt.text;
            if (name == "dispreferred" && ctx.hard_dispreferred) {
                return &*ctx.hard_dispreferred;
            }
            return nullptr;
        });
}

std::string extract_prompt_text(const std::string& response) {
    constexpr const char* kOpen = "<prompt>";
    constexpr const char* kClose = "</prompt>";
    const std::size_t open = response.find(kOpen);
    if (open == std::string::npos) {
        throw Error(Errc::MissingPromptTags, "response contains no <prompt> tag");
    }
    const std::size_t body_begin = open + std::char_traits<char>::length(kOpen);
    const std::size_t close = response.find(kClose, body_begin);
    if (close == std::string::npos) {
        throw Error(Errc::MissingPromptTags, "response contains no closing </prompt> tag");
    }
    std::string body = response.substr(body_begin, close - body_begin);

    // strip any inner mask tags the model carried over
    for (const char* tag : {"<mask>", "</mask>"}) {
        std::size_t pos = 0;
        const std::size_t tag_len = std::char_traits<char>::length(tag);
        while ((pos = body.find(tag, pos)) != std::string::npos) {
            body.erase(pos, tag_len);
        }
    }

    std::string text = trim(body);
    if (text.empty()) {
        throw Error(Errc::EmptyExtraction, "<prompt> block is empty");
    }
    return text;
}

ProposalOutcome propose_variants(const RewriteContext& ctx, int n, GeneratorBackend& generator,
                                 const RunConfig& config, uint64_t seed_base, int iteration,
                                 const std::string& source_example_id) {
    if (n < 1) throw Error(Errc::InvalidConfig, "propose_variants requires n >= 1");

    const std::string request = build_rewrite_request(ctx);
    const std::size_t budget =
        static_cast<std::size_t>(n) * static_cast<std::size_t>(1 + config.max_parse_retries);

    ProposalOutcome outcome;
    std::size_t transport_failures = 0;
    for (std::size_t call = 0; call < budget; ++call) {
        if (outcome.variants.size() == static_cast<std::size_t>(n)) break;
        std::string response;
        try {
            response = generator.generate(request, config.sampling,
                                          seed_base + static_cast<uint64_t>(call));
        } catch (const Error& e) {
            if (e.code() == Errc::ScriptExhausted) {
                // the queue will not refill; stop asking
                ++transport_failures;
                ++outcome.calls_made;
                break;
            }
            if (e.code() == Errc::BackendUnavailable) {
                ++transport_failures;
                ++outcome.calls_made;
                continue;
            }
            throw;
        }
        ++outcome.calls_made;
        try {
            std::string text = extract_prompt_text(response);
            Prompt variant;
            variant.text = std::move(text);
            variant.id = "iter" + std::to_string(iteration) + "/" + source_example_id + "/v" +
                         std::to_string(outcome.variants.size());
            variant.provenance =
                ProvenanceRewrite{iteration, source_example_id,
                                  static_cast<int>(outcome.variants.size()),
                                  rewrite_template_name(ctx.template_kind)};
            outcome.variants.push_back(std::move(variant));
            outcome.transcripts.push_back({std::move(response), true});
        } catch (const Error&) {
            outcome.transcripts.push_back({std::move(response), false});
        }
    }

    if (outcome.variants.empty() && transport_failures > 0 &&
        transport_failures == outcome.calls_made) {
        throw Error(Errc::BackendUnavailable, "every rewrite generation call failed");
    }
    return outcome;
}

}  // namespace pmpo
