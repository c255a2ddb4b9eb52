// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/process.hpp>
#include <agentml/transform.hpp>

#include <map>
#include <optional>
#include <string>

namespace agentml
{

struct EnvOptions
{
    /// Run the saved script after Edit Script so the edit's effect on the
    /// metric shows up in the same step's feedback.
    bool evaluate_edits = true;
    /// Evaluate unmodified synthetic scripts in-process instead of python3.
    bool in_process_scripts = true;
    std::size_t max_output = 1 << 20;
};

struct WorkspaceSnapshot
{
    std::map<std::string, std::string> files; // relative path -> content
    int steps_taken = 0;
    bool terminal = false;
};

/// A private, mutable copy of a task bundle. Removed on destruction.
class Workspace
{
  public:
    /// Copies the bundle (minus task.meta) into a fresh directory under
    /// scratch_root, writes the task's research problem and runs the prepare
    /// script once. Throws BundleInvalid or PrepareFailed.
    Workspace(TaskPtr task, const fs::path& scratch_root, std::uint64_t seed);
    ~Workspace();

    Workspace(Workspace&& other) noexcept;
    Workspace& operator=(Workspace&& other) noexcept;
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;

    [[nodiscard]] const fs::path& root() const { return _root; }
    [[nodiscard]] const TaskSpec& task() const { return *_task; }
    [[nodiscard]] const TaskPtr& task_ptr() const { return _task; }
    [[nodiscard]] std::uint64_t seed() const { return _seed; }

    int steps_taken = 0;
    bool terminal = false;
    Seconds elapsed { 0.0 };

    [[nodiscard]] WorkspaceSnapshot snapshot() const;
    void restore(const WorkspaceSnapshot& snapshot);

    /// sha256 over the sorted (path, content) listing.
    [[nodiscard]] std::string content_digest() const;

    /// Resolves a relative path inside the root; nullopt if it escapes.
    [[nodiscard]] std::optional<fs::path> resolve(std::string_view relative) const;

  private:
    void release() noexcept;

    TaskPtr _task;
    fs::path _root;
    std::uint64_t _seed = 0;
};

Workspace init_workspace(TaskPtr task, const fs::path& scratch_root, std::uint64_t seed);

/// Last occurrence of the metric marker followed by a number. Throws
/// MalformedNumber when the last marker is not followed by a finite number.
std::optional<MetricSample> extract_metric(std::string_view raw, const MetricSpec& metric);

/// Resource exhaustion (timeout, out-of-memory text from a script run) is a
/// corner case; a failed exit or a Python traceback is an error; a script
/// run that printed the metric is a success; everything else is neutral.
FeedbackClass
classify_feedback(const ExitStatus& status, std::string_view raw, ActionKind kind, const MetricSpec& metric);

/// Executes one action and classifies the outcome. In-band failures come
/// back as Error/Corner feedback; only a transformer backend outage
/// (PolicyUnavailable) propagates.
Feedback apply_action(Workspace& ws, const Action& action, TextTransformer& transformer, const EnvOptions& options = {});

/// Outcome of one agent response applied to a workspace.
struct StepOutcome
{
    ParsedAction action;
    ActionClass action_class = ActionClass::Invalid;
    Feedback feedback;
    double reward = 0.0;
};

/// Parse, validate, apply and score one response. m_t is the metric the
/// reward is measured against; step_index tags the metric sample.
StepOutcome take_step(Workspace& ws,
                      std::string_view response_text,
                      double m_t,
                      int step_index,
                      TextTransformer& transformer,
                      const EnvOptions& options,
                      const RewardClamp& clamp);

} // namespace agentml
