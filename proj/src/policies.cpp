// SPDX-License-Identifier: Apache-2.0
#include <agentml/policies.hpp>
#include <agentml/synthetic.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <span>

namespace agentml
{

namespace
{
    std::string join(std::span<const std::string> items)
    {
        std::string out;
        for (auto const& s: items)
            out += fmt::format("{}{}", out.empty() ? "" : ", ", s);
        return out;
    }

    const Action* last_action(const AgentState& state)
    {
        if (state.history.empty())
            return nullptr;
        return std::get_if<Action>(&state.history.back().action);
    }

    std::string final_response(std::string_view why)
    {
        return compose_response("The work planned for this task is done.",
                                "1. Improve the metric. Done.\n2. Submit the final script. In progress.",
                                "The reported metric was observed directly in the last run.",
                                why,
                                actions::FinalAnswer { "train.py holds the final version of the solution." });
    }

    // Techniques whose effect moves the metric toward m_best (sign = +1) or
    // away from it (sign = -1), in table order.
    std::vector<std::string> directional(const SyntheticConfig& cfg, int sign)
    {
        std::vector<std::string> out;
        for (auto const& row: cfg.techniques)
            if (sign * cfg.metric.beta * row.delta > 0.0)
                out.push_back(row.keyword);
        return out;
    }

    std::string edit_response(const TaskSpec& task, const std::vector<std::string>& keywords, std::string_view thought)
    {
        return compose_response(
            "The last observation shows the current state of train.py and its metric.",
            fmt::format("1. Enable promising techniques in train.py. In progress: {}.\n2. Check the new {} and submit.",
                        join(keywords),
                        task.metric.name),
            "Nothing new to confirm before this edit.",
            thought,
            actions::EditScript { task.train_script, technique_instruction(keywords), task.train_script });
    }
} // namespace

std::string compose_response(std::string_view reflection,
                             std::string_view plan,
                             std::string_view fact_check,
                             std::string_view thought,
                             const Action& action)
{
    ResponseBlock block;
    block.reflection = std::string(reflection);
    block.plan_and_status = std::string(plan);
    block.fact_check = std::string(fact_check);
    block.thought = std::string(thought);
    block.action_name = std::string(canonical_name(kind_of(action)));
    block.action_input = action_input(action);
    return format_response(block);
}

std::string ExpertBackend::respond(const PolicyRequest& request)
{
    auto const& state = request.state;
    auto const& task = *state.task;
    auto const t = static_cast<int>(state.history.size());

    if (!task.synthetic)
    {
        if (t == 0)
            return compose_response("Nothing has been observed yet.",
                                    "1. Inspect the workspace.\n2. Run the initial script.\n3. Submit.",
                                    "None.",
                                    "Start by looking at the files that are available.",
                                    actions::ListFiles { "." });
        if (t == 1)
            return compose_response("The workspace holds the initial script.",
                                    "1. Inspect the workspace. Done.\n2. Run the initial script. In progress.\n3. Submit.",
                                    "The file listing was observed directly.",
                                    "Measure the baseline.",
                                    actions::ExecuteScript { task.train_script });
        return final_response("The baseline has been measured.");
    }

    auto const& cfg = *task.synthetic;
    if (t >= task.limits.max_steps - 1)
        return final_response("Only one step is left, so submit now.");

    auto const applied = applied_techniques(state);
    if (t == 0 && !request.prefix.empty())
    {
        std::vector<std::string> keywords;
        for (auto const& idea: request.prefix)
        {
            auto kw = std::string(kTechniqueKeywords[technique_for_idea(idea)]);
            if (std::find(keywords.begin(), keywords.end(), kw) == keywords.end() && keywords.size() < 3)
                keywords.push_back(std::move(kw));
        }
        return edit_response(task,
                             keywords,
                             fmt::format("The research problem asks to implement these ideas first: {}. They map to "
                                         "the techniques {}.",
                                         join(request.prefix),
                                         join(keywords)));
    }
    if (t == 0)
        return compose_response("Nothing has been observed yet.",
                                "1. Understand the workspace.\n2. Enable techniques one at a time.\n3. Submit.",
                                "None.",
                                "List the files to see what the task provides.",
                                actions::ListFiles { "." });
    if (t == 1 && request.prefix.empty())
        return compose_response("The workspace contains train.py and its support files.",
                                "1. Understand the workspace. In progress.\n2. Enable techniques one at a time.\n3. Submit.",
                                "The file listing was observed directly.",
                                "Read train.py to see how techniques are switched on.",
                                actions::InspectScriptLines { task.train_script, 1, 100 });

    auto const span = std::abs(cfg.metric.m_best - cfg.metric.m_init);
    std::optional<std::string> best;
    double bestScore = 0.0;
    for (auto const& row: cfg.techniques)
    {
        if (std::find(applied.begin(), applied.end(), row.keyword) != applied.end())
            continue;
        auto const gain = cfg.metric.beta * row.delta / span;
        auto const score = (1.0 - row.p_error - row.p_corner) * gain - row.p_error;
        if (score > bestScore)
        {
            bestScore = score;
            best = row.keyword;
        }
    }
    if (best)
        return edit_response(task, { *best }, fmt::format("{} has the best expected effect among the techniques not yet enabled.", *best));

    auto const* last = last_action(state);
    if (!last || kind_of(*last) != ActionKind::ExecuteScript)
        return compose_response("Every technique worth enabling is in place.",
                                "1. Enable techniques. Done.\n2. Confirm the final metric. In progress.\n3. Submit.",
                                "The last edit's output was observed directly.",
                                "Run the script once more to confirm the final score.",
                                actions::ExecuteScript { task.train_script });
    return final_response("The final score is confirmed.");
}

std::string ImproverBackend::respond(const PolicyRequest& request)
{
    auto const& task = *request.state.task;
    if (!request.state.history.empty() || !task.synthetic)
        return final_response("The improving edit has been applied.");
    auto const keywords = directional(*task.synthetic, +1);
    if (keywords.empty())
        return final_response("No technique improves this task.");
    return edit_response(task, keywords, "Enable every technique known to improve the metric.");
}

std::string WorsenerBackend::respond(const PolicyRequest& request)
{
    auto const& task = *request.state.task;
    if (!request.state.history.empty() || !task.synthetic)
        return final_response("The edit has been applied.");
    auto const keywords = directional(*task.synthetic, -1);
    if (keywords.empty())
        return final_response("No technique hurts this task.");
    return edit_response(task, keywords, "Enable every technique known to hurt the metric.");
}

std::string FinalAnswerBackend::respond(const PolicyRequest&)
{
    return final_response("Submit the initial script unchanged.");
}

std::vector<ChatMessage> chat_messages(const AgentState& state, const PromptTemplateSet& templates)
{
    std::vector<ChatMessage> messages { { "system", build_initial_prompt(*state.task, templates) } };
    for (auto const& entry: state.history)
    {
        messages.push_back({ "assistant", trim(strip_observation(entry.response_text)) });
        messages.push_back({ "user", fmt::format("Observation:\n'''\n{}\n'''", entry.feedback.raw) });
    }
    return messages;
}

RemoteBackend::RemoteBackend(EndpointConfig config, PromptTemplateSet templates):
    _client(std::move(config), ErrorCode::PolicyUnavailable), _templates(std::move(templates))
{
}

std::string RemoteBackend::respond(const PolicyRequest& request)
{
    return _client.complete(chat_messages(request.state, _templates));
}

std::string RemoteBackend::id() const
{
    return fmt::format("remote:{}", _client.config().model);
}

} // namespace agentml
