// SPDX-License-Identifier: Apache-2.0
#include <agentml/protocol.hpp>

#include <fmt/format.h>

#include <optional>

namespace agentml
{

namespace
{
    constexpr std::array<std::string_view, 3> kSlots { "{tools_prompt}", "{research_problem}", "{format_prompt}" };
    constexpr std::string_view kObservationLabel = "Observation:";

    bool starts_with(std::string_view text, std::string_view prefix)
    {
        return text.substr(0, prefix.size()) == prefix;
    }

    std::optional<std::size_t> label_at(std::string_view line)
    {
        // "Action Input:" must win over "Action:"; they never share a prefix
        // of the same length, so the first exact match is unambiguous.
        for (std::size_t i = 0; i < kSectionLabels.size(); ++i)
            if (starts_with(line, kSectionLabels[i]))
                return i;
        return std::nullopt;
    }
} // namespace

PromptTemplateSet PromptTemplateSet::from_directory(const fs::path& dir)
{
    PromptTemplateSet set;
    set.initial_template = read_file((dir / "initial_prompt.txt").string());
    set.tools_prompt = read_file((dir / "tools_prompt.txt").string());
    set.format_prompt = read_file((dir / "format_prompt.txt").string());
    return set;
}

std::string build_initial_prompt(std::string_view research_problem, const PromptTemplateSet& templates)
{
    std::string_view const tmpl = templates.initial_template;
    for (auto slot: kSlots)
        if (tmpl.find(slot) == std::string_view::npos)
            throw Error(ErrorCode::SlotMissing, fmt::format("initial template lacks {}", slot));

    std::array<std::string_view, 3> const values { templates.tools_prompt, research_problem, templates.format_prompt };
    std::string out;
    out.reserve(tmpl.size() + templates.tools_prompt.size() + research_problem.size() + templates.format_prompt.size());
    std::size_t i = 0;
    while (i < tmpl.size())
    {
        bool substituted = false;
        if (tmpl[i] == '{')
        {
            for (std::size_t s = 0; s < kSlots.size(); ++s)
            {
                if (starts_with(tmpl.substr(i), kSlots[s]))
                {
                    out += values[s];
                    i += kSlots[s].size();
                    substituted = true;
                    break;
                }
            }
        }
        if (!substituted)
            out += tmpl[i++];
    }
    return out;
}

std::string build_initial_prompt(const TaskSpec& task, const PromptTemplateSet& templates)
{
    return build_initial_prompt(task.research_problem, templates);
}

std::string_view strip_observation(std::string_view text)
{
    std::size_t pos = 0;
    while (pos <= text.size())
    {
        if (starts_with(text.substr(pos), kObservationLabel))
            return text.substr(0, pos);
        auto const nl = text.find('\n', pos);
        if (nl == std::string_view::npos)
            break;
        pos = nl + 1;
    }
    return text;
}

std::string render_step(const HistoryEntry& entry)
{
    auto const response = trim(strip_observation(entry.response_text));
    return fmt::format("\n\n{}\nObservation:\n'''\n{}\n'''", response, entry.feedback.raw);
}

std::string render_state(const AgentState& state, const PromptTemplateSet& templates)
{
    auto out = build_initial_prompt(*state.task, templates);
    for (auto const& entry: state.history)
        out += render_step(entry);
    return out;
}

std::string state_digest(std::string_view rendered)
{
    return sha256_hex(rendered);
}

std::variant<ResponseBlock, ParseError> parse_response(std::string_view text)
{
    std::array<std::optional<std::string>, kSectionLabels.size()> sections;
    std::optional<std::size_t> current;
    std::size_t lastSeen = 0;

    for (auto const& line: split_lines(strip_observation(trim(text))))
    {
        if (auto const label = label_at(line))
        {
            if (sections[*label] || (current && *label < lastSeen))
                return ParseError { ParseError::Reason::SectionOrder, std::string(kSectionLabels[*label]) };
            sections[*label] = line.substr(kSectionLabels[*label].size());
            current = *label;
            lastSeen = *label;
            continue;
        }
        if (current)
        {
            *sections[*current] += '\n';
            *sections[*current] += line;
        }
    }

    for (std::size_t i = 0; i < sections.size(); ++i)
        if (!sections[i])
        {
            auto label = kSectionLabels[i];
            label.remove_suffix(1);
            return ParseError { ParseError::Reason::MissingSection, std::string(label) };
        }

    ResponseBlock block;
    block.reflection = trim(*sections[0]);
    block.plan_and_status = trim(*sections[1]);
    block.fact_check = trim(*sections[2]);
    block.thought = trim(*sections[3]);
    block.action_name = trim(*sections[4]);
    try
    {
        block.action_input = Json::parse(trim(*sections[5]));
    }
    catch (const Json::exception& e)
    {
        return ParseError { ParseError::Reason::BadActionInput, e.what() };
    }
    if (!block.action_input.is_object())
        return ParseError { ParseError::Reason::BadActionInput, "action input is not an object" };
    return block;
}

std::string format_response(const ResponseBlock& block)
{
    return fmt::format("Reflection: {}\nResearch Plan and Status: {}\nFact Check: {}\nThought: {}\nAction: {}\n"
                       "Action Input: {}\n",
                       block.reflection,
                       block.plan_and_status,
                       block.fact_check,
                       block.thought,
                       block.action_name,
                       block.action_input.dump(4));
}

std::variant<Action, InvalidAction> validate_action(const ResponseBlock& block)
{
    return action_from_input(block.action_name, block.action_input);
}

ParsedAction interpret_response(std::string_view text)
{
    auto parsed = parse_response(text);
    if (auto const* error = std::get_if<ParseError>(&parsed))
        return *error;
    auto validated = validate_action(std::get<ResponseBlock>(parsed));
    if (auto const* invalid = std::get_if<InvalidAction>(&validated))
        return *invalid;
    return std::get<Action>(std::move(validated));
}

} // namespace agentml
