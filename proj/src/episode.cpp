// SPDX-License-Identifier: Apache-2.0
#include <agentml/episode.hpp>

#include <fmt/format.h>

#include <chrono>

namespace agentml
{

std::string_view to_string(Termination t)
{
    switch (t)
    {
        case Termination::FinalAnswer: return "final_answer";
        case Termination::MaxSteps: return "max_steps";
        case Termination::TimeBudget: return "time_budget";
    }
    return "";
}

Termination termination_from_string(std::string_view text)
{
    for (auto t: { Termination::FinalAnswer, Termination::MaxSteps, Termination::TimeBudget })
        if (to_string(t) == text)
            return t;
    throw Error(ErrorCode::SchemaViolation, fmt::format("unknown termination '{}'", text));
}

double Trajectory::total_reward() const
{
    double sum = 0.0;
    for (auto const& s: steps)
        sum += s.reward;
    return sum;
}

double final_metric_of(const std::vector<StepRecord>& steps, const MetricSpec& metric)
{
    for (auto it = steps.rbegin(); it != steps.rend(); ++it)
        if (it->feedback.cls == FeedbackClass::Success && it->feedback.metric_sample)
            return it->feedback.metric_sample->value;
    return metric.m_init;
}

AgentState state_from_steps(const TaskPtr& task, std::span<const StepRecord> steps)
{
    AgentState state { task, {} };
    for (auto const& s: steps)
        state.history.push_back({ s.response_text, s.action, s.feedback });
    return state;
}

Trajectory run_episode(const TaskPtr& task,
                       PolicyBackend& policy,
                       TextTransformer& transformer,
                       std::uint64_t seed,
                       const EpisodeOptions& options)
{
    using Clock = std::chrono::steady_clock;
    auto const started = Clock::now();

    Trajectory traj;
    traj.task_id = task->task_id;
    traj.seed = seed;
    traj.prefix = options.prefix;
    traj.policy_id = policy.id();
    traj.metric = task->metric;
    traj.clamp = options.clamp;
    traj.max_steps = task->limits.max_steps;
    traj.config_digest = options.config_digest;

    Workspace ws(task, options.scratch_root, seed);
    AgentState state { task, {} };
    Rng rng(seed);
    double m_t = task->metric.m_init;
    auto rendered = build_initial_prompt(*task, options.templates);

    for (int t = 0; t < task->limits.max_steps; ++t)
    {
        auto const digest = state_digest(rendered);
        PolicyRequest const request { state, rendered, options.prefix, rng };
        auto response = policy.respond(request);

        auto outcome = take_step(ws, response, m_t, t, transformer, options.env, options.clamp);
        ws.elapsed = Clock::now() - started;
        bool const expired = ws.elapsed >= task->limits.time_budget;
        if (expired)
        {
            // The budget ran out during this step: its result does not count.
            outcome.feedback.cls = FeedbackClass::Corner;
            outcome.feedback.metric_sample.reset();
            outcome.reward = step_reward(outcome.action_class, outcome.feedback.cls, m_t, std::nullopt, task->metric, options.clamp);
        }

        StepRecord record;
        record.step_index = t;
        record.state_digest = digest;
        record.response_text = std::move(response);
        record.action = outcome.action;
        record.action_class = outcome.action_class;
        record.feedback = outcome.feedback;
        record.metric_before = m_t;
        record.reward = outcome.reward;
        if (record.feedback.cls == FeedbackClass::Success && record.feedback.metric_sample)
            m_t = record.feedback.metric_sample->value;

        HistoryEntry entry { record.response_text, record.action, record.feedback };
        rendered += render_step(entry);
        state.history.push_back(std::move(entry));
        traj.steps.push_back(std::move(record));

        if (expired)
        {
            traj.termination = Termination::TimeBudget;
            break;
        }
        if (ws.terminal)
        {
            traj.termination = Termination::FinalAnswer;
            break;
        }
    }

    traj.final_metric = final_metric_of(traj.steps, task->metric);
    if (options.record_timing)
        traj.wall_time = std::chrono::duration<double>(Clock::now() - started).count();
    return traj;
}

ReplayedState replay_prefix(const TaskPtr& task,
                            const Trajectory& trajectory,
                            std::size_t prefix_len,
                            TextTransformer& transformer,
                            const EpisodeOptions& options)
{
    if (prefix_len > trajectory.steps.size())
        throw Error(ErrorCode::EnvReplayFailure,
                    fmt::format("prefix {} longer than trajectory ({} steps)", prefix_len, trajectory.steps.size()));
    if (task->task_id != trajectory.task_id)
        throw Error(ErrorCode::EnvReplayFailure, "trajectory belongs to another task");

    ReplayedState out { Workspace(task, options.scratch_root, trajectory.seed), AgentState { task, {} }, task->metric.m_init };
    for (std::size_t i = 0; i < prefix_len; ++i)
    {
        auto const& rec = trajectory.steps[i];
        auto const outcome =
            take_step(out.workspace, rec.response_text, out.m_t, static_cast<int>(i), transformer, options.env, trajectory.clamp);
        // A time-budget truncation rewrites the class to Corner; that only
        // ever happens on a trajectory's last step.
        bool const truncated = trajectory.termination == Termination::TimeBudget && i + 1 == trajectory.steps.size();
        if (!truncated && (outcome.feedback.cls != rec.feedback.cls || outcome.feedback.raw != rec.feedback.raw))
            throw Error(ErrorCode::EnvReplayFailure,
                        fmt::format("{} step {}: replay gave {} where the record has {}",
                                    trajectory.task_id,
                                    i,
                                    to_string(outcome.feedback.cls),
                                    to_string(rec.feedback.cls)));
        if (rec.feedback.cls == FeedbackClass::Success && rec.feedback.metric_sample)
            out.m_t = rec.feedback.metric_sample->value;
        out.state.history.push_back({ rec.response_text, rec.action, rec.feedback });
    }
    return out;
}

} // namespace agentml
