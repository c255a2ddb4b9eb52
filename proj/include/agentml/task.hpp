// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/reward.hpp>

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace agentml
{

namespace fs = std::filesystem;
using Seconds = std::chrono::duration<double>;

struct ExecutionLimits
{
    int max_steps = 15;
    Seconds time_budget { 30.0 * 60.0 };
    Seconds per_exec_timeout { 10.0 * 60.0 };

    void validate() const;
    bool operator==(const ExecutionLimits&) const = default;
};

/// One row of a synthetic task's edit-response table.
struct SyntheticTechnique
{
    std::string keyword;
    double delta = 0.0;
    double p_error = 0.0;
    double p_corner = 0.0;
    bool operator==(const SyntheticTechnique&) const = default;
};

struct SyntheticConfig
{
    std::string task_id;
    MetricSpec metric;
    ExecutionLimits limits;
    std::string problem_text;
    std::vector<SyntheticTechnique> techniques;
    bool operator==(const SyntheticConfig&) const = default;
};

/// An ML task bundle as declared by its task.meta record.
struct TaskSpec
{
    std::string task_id;
    std::string research_problem;
    MetricSpec metric;
    fs::path bundle_root;
    ExecutionLimits limits;
    std::string train_script = "train.py";
    std::string eval_script = "eval.py";
    std::optional<std::string> prepare_script;
    std::string interpreter = "python3";

    /// Present for generated tasks; carries the edit-response table.
    std::optional<SyntheticConfig> synthetic;
    std::uint64_t synthetic_seed = 0;
};

using TaskPtr = std::shared_ptr<const TaskSpec>;

inline constexpr std::string_view kTaskMetaFile = "task.meta";
inline constexpr std::string_view kProblemFile = "research_problem.txt";

Json to_json(const MetricSpec& metric);
MetricSpec metric_from_json(const Json& record);

Json task_meta_record(const TaskSpec& task);

/// Loads and validates a bundle directory. Throws BundleInvalid.
TaskSpec load_task(const fs::path& bundle_root);

/// Writes task.meta for an existing bundle directory.
void write_task_meta(const TaskSpec& task);

/// Copy of the task whose research problem is replaced (exploration prefix).
TaskPtr with_problem(const TaskPtr& task, std::string research_problem);

/// Bundles found under a directory (one per subdirectory holding task.meta),
/// sorted by task id.
std::vector<TaskPtr> load_task_dir(const fs::path& root);

class TaskCatalog
{
  public:
    TaskCatalog() = default;
    explicit TaskCatalog(const std::vector<TaskPtr>& tasks);

    void add(TaskPtr task);
    [[nodiscard]] TaskPtr find(std::string_view task_id) const;
    [[nodiscard]] TaskPtr at(std::string_view task_id) const;
    [[nodiscard]] const std::vector<TaskPtr>& tasks() const { return _tasks; }

  private:
    std::vector<TaskPtr> _tasks;
};

struct Feedback
{
    std::string raw;
    FeedbackClass cls = FeedbackClass::Neutral;
    std::optional<MetricSample> metric_sample;
    bool operator==(const Feedback&) const = default;
};

Json to_json(const Feedback& feedback);
Feedback feedback_from_json(const Json& record);

struct HistoryEntry
{
    std::string response_text;
    ParsedAction action;
    Feedback feedback;
};

/// History-based MDP state: the task plus every (response, action, feedback)
/// triple so far.
struct AgentState
{
    TaskPtr task;
    std::vector<HistoryEntry> history;
};

} // namespace agentml
