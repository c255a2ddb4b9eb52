// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/env.hpp>
#include <agentml/protocol.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace agentml
{

struct PolicyRequest
{
    const AgentState& state;
    std::string_view rendered; // render_state(state)
    std::span<const std::string> prefix; // exploration ideas given to this episode
    Rng& rng;
};

/// Anything that answers a rendered state with response text. Transport
/// failures are thrown as Error(PolicyUnavailable).
class PolicyBackend
{
  public:
    virtual ~PolicyBackend() = default;
    virtual std::string respond(const PolicyRequest& request) = 0;
    [[nodiscard]] virtual std::string id() const = 0;
};

struct StepRecord
{
    int step_index = 0;
    std::string state_digest; // sha256 of the rendered state the response answered
    std::string response_text;
    ParsedAction action;
    ActionClass action_class = ActionClass::Invalid;
    Feedback feedback;
    double metric_before = 0.0; // m_t the reward was measured against
    double reward = 0.0;
};

enum class Termination
{
    FinalAnswer,
    MaxSteps,
    TimeBudget,
};

std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view text);

struct Trajectory
{
    std::string task_id;
    std::uint64_t seed = 0;
    std::vector<std::string> prefix;
    std::string policy_id;
    MetricSpec metric;
    RewardClamp clamp;
    int max_steps = 15;
    std::vector<StepRecord> steps;
    double final_metric = 0.0;
    Termination termination = Termination::MaxSteps;
    double wall_time = 0.0; // seconds; 0 unless timing is recorded
    std::string config_digest;

    [[nodiscard]] double total_reward() const;
};

struct EpisodeOptions
{
    fs::path scratch_root = fs::temp_directory_path() / "agentml";
    PromptTemplateSet templates = PromptTemplateSet::defaults();
    EnvOptions env;
    RewardClamp clamp;
    std::vector<std::string> prefix; // recorded on the trajectory only
    bool record_timing = false;
    std::string config_digest;
};

/// One agent-environment rollout from s_0. Stops at Final Answer, the step
/// limit, or time-budget expiry (the expiring step is re-marked Corner).
/// Throws PolicyUnavailable if the backend cannot be reached.
Trajectory run_episode(const TaskPtr& task,
                       PolicyBackend& policy,
                       TextTransformer& transformer,
                       std::uint64_t seed,
                       const EpisodeOptions& options = {});

/// Final metric rule: value of the last Success sample, else m_init.
double final_metric_of(const std::vector<StepRecord>& steps, const MetricSpec& metric);

/// Environment positioned at the state reached after replaying the first
/// `prefix_len` recorded responses of a trajectory.
struct ReplayedState
{
    Workspace workspace;
    AgentState state;
    double m_t = 0.0;
};

/// Replays recorded responses on a fresh workspace. Throws EnvReplayFailure
/// if any step's feedback differs from the record.
ReplayedState replay_prefix(const TaskPtr& task,
                            const Trajectory& trajectory,
                            std::size_t prefix_len,
                            TextTransformer& transformer,
                            const EpisodeOptions& options = {});

/// Builds an AgentState from recorded steps without touching an environment.
AgentState state_from_steps(const TaskPtr& task, std::span<const StepRecord> steps);

} // namespace agentml
