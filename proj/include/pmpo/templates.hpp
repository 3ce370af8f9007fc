#pragma once

namespace pmpo::templates {

// Meta-prompt sent to the generator to segment an instruction into at most
// five removable units wrapped in <mask></mask> tags. Both {prompt} slots are
// substituted with the same text.
inline constexpr const char* kMaskGeneration =
    R"(Given the following prompt, analyze it to identify up to 5 relatively independent units (segments) that are not tightly connected to their surrounding content. Such units can include individual methods, rules, or examples. For each unit, consider whether masking (removing) it would leave the surrounding prompt logically coherent and understandable.

Your task:
1. Carefully read the current prompt: {prompt}
2. If possible, segment the prompt into up to 5 independent units. Only select units whose removal would not disrupt the overall flow or meaning of the prompt.
3. For each selected unit, wrap it in <mask></mask> tags.
4. Wrap the entire prompt in <prompt></prompt> tags.
5. If you find the prompt does not contain any truly independent units suitable for masking, simply output the prompt wrapped in <prompt></prompt> without any <mask></mask> tags.

Formatting requirements:
- Do not exceed 5 masked segments in total.
- Do not create overlapping or nested masks.
- Each masked unit should represent a coherent, removable segment (such as a method, rule, or example), not a random phrase.
- Maintain all other prompt content unchanged.

Example input:
current prompt: {prompt}

Example output with masking:
<prompt> ... Some instructions ... <mask>This is an example rule to be masked.</mask> ... More instructions ... </prompt>

Example output with no masking:
<prompt> ... Full original prompt (no <mask> tags) ... </prompt>)";

// Rewrite meta-prompt for capable instruction-following models.
inline constexpr const char* kOptimizeLarge =
    R"(You are an expert prompt engineer tasked with dynamically improving prompts to generate more effective, diverse solutions. When analyzing a prompt, first diagnose its core weaknesses, then apply multiple strategic modifications as needed.

Given the current prompt and task description, your objective is to produce a significantly improved version that will better solve the intended task.

Your optimization must center on the task description: {task_description}

CRITICAL WARNING - MAINTAIN TASK SCOPE:
    1. The task_description defines the FULL SCOPE of what your prompt must address
    2. Examples are provided ONLY to understand the FORMAT, not to narrow the task
    3. Your prompt MUST maintain the original breadth of the task_description
    4. NEVER specialize the prompt to only handle specific examples you've seen

    Example Input: {user_input}
    Expected Answer: {true_answer}

These examples are provided ONLY for pattern analysis. Do NOT directly incorporate these exact examples into your prompt or design your prompt specifically for these examples. Instead:
- Extract the underlying patterns and reasoning these examples demonstrate
- Understand the general skills or knowledge being tested
- Focus your prompt improvements on the task_description and solving the general problem

First, analyze the prompt for:
- Gaps in instruction clarity or specificity
- Unnecessary constraints limiting creative problem-solving
- Missing guidance that would help solve the general task type
- Overly rigid structure that hinders diverse approaches
- Places where more natural, professional language would improve understanding
- Redundancies or contradictions causing confusion

Then, apply a strategic combination of these techniques (using multiple approaches rather than just one):
(1) ENHANCE STRUCTURE, (2) ADD RULES OR PRINCIPLES, (3) REMOVE UNNECESSARY ELEMENTS,
(4) REPHRASE FOR CLARITY, (5) SIMPLIFY COMPLEXITY, (6) EXPAND WITH DETAILS,
(7) CONSOLIDATE SIMILAR RULES, (8) PROFESSIONAL REFRAMING, (9) DIVERSIFY APPROACH

IMPORTANT: Your response must focus on creating a prompt that will produce substantively better results on the general task, not just on the specific examples provided.

Additionally, here is an analysis of the current prompt, segmented by mask (for reference in your optimization):
{mask}

Current prompt:
{current_prompt}

For the final prompt, please wrap it with <prompt></prompt>.)";

// Simplified rewrite meta-prompt for smaller models.
inline constexpr const char* kOptimizeSmall =
    R"(Task_description: {task_description}
Example Input: {user_input}
Expected Answer: {true_answer}
Mask Analysis: {mask}

Current Prompt: {current_prompt}

Based on the following examples where the current cross-entropy is relatively high, please analyze the reasons and modify the prompt to improve performance. Rather than directly quoting the examples, focus on deeply analyzing the underlying patterns and issues that contribute to high cross-entropy. Prioritize identifying the root causes of performance problems and make labeled prompt modifications that address these specific issues. Concentrate on what changes will most effectively improve task outcomes rather than structural coherence or theoretical correctness.

Your response must focus on creating a prompt that will produce substantively better results on the general task, not just on the specific examples provided.

Please only wrap the optimized final prompt with <prompt></prompt> tags.)";

}  // namespace pmpo::templates
