// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/task.hpp>

#include <array>
#include <string>
#include <string_view>
#include <variant>

namespace agentml
{

/// Initial prompt with {tools_prompt}, {research_problem} and {format_prompt}
/// slots, plus the two slot bodies.
struct PromptTemplateSet
{
    std::string initial_template;
    std::string tools_prompt;
    std::string format_prompt;

    /// The shipped templates (mirrors data/prompts/).
    static PromptTemplateSet defaults();

    /// Loads initial_prompt.txt, tools_prompt.txt and format_prompt.txt.
    static PromptTemplateSet from_directory(const fs::path& dir);
};

inline constexpr std::array<std::string_view, 6> kSectionLabels {
    "Reflection:", "Research Plan and Status:", "Fact Check:", "Thought:", "Action:", "Action Input:",
};

struct ResponseBlock
{
    std::string reflection;
    std::string plan_and_status;
    std::string fact_check;
    std::string thought;
    std::string action_name;
    Json action_input = Json::object();

    bool operator==(const ResponseBlock&) const = default;
};

/// Byte-exact single-pass slot substitution. Throws SlotMissing when the
/// template lacks one of the three slots.
std::string build_initial_prompt(std::string_view research_problem, const PromptTemplateSet& templates);
std::string build_initial_prompt(const TaskSpec& task, const PromptTemplateSet& templates);

/// Initial prompt followed by each step's response and fenced observation.
/// Appending a step only appends text.
std::string render_state(const AgentState& state, const PromptTemplateSet& templates);

/// Text of a single history step as appended by render_state.
std::string render_step(const HistoryEntry& entry);

std::string state_digest(std::string_view rendered);

std::variant<ResponseBlock, ParseError> parse_response(std::string_view text);

/// Canonical layout: one labelled section per line, Action Input as JSON
/// indented by four spaces.
std::string format_response(const ResponseBlock& block);

std::variant<Action, InvalidAction> validate_action(const ResponseBlock& block);

/// parse_response followed by validate_action.
ParsedAction interpret_response(std::string_view text);

/// Response text cut at the first line that starts with "Observation:".
std::string_view strip_observation(std::string_view text);

} // namespace agentml
