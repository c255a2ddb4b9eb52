// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/episode.hpp>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace agentml
{

Json to_json(const Trajectory& trajectory);
/// Throws SchemaViolation on missing or mistyped fields.
Trajectory trajectory_from_json(const Json& record);

/// Checks the stored invariants of a trajectory: step count and indices,
/// action classes, the m_t chain, every reward against step_reward and the
/// final metric rule. Throws SchemaViolation naming the first mismatch.
void audit_trajectory(const Trajectory& trajectory);

struct StoredTrajectory
{
    std::string id; // first 16 hex digits of sha256 of the record line
    std::shared_ptr<const Trajectory> trajectory;
};

/// Append-only line-record file. Each append is one write() under an
/// exclusive flock on an O_APPEND descriptor, so concurrent writers (threads
/// or processes) never interleave.
class TrajectoryStore
{
  public:
    explicit TrajectoryStore(fs::path path): _path(std::move(path)) {}

    /// Audits, serialises and appends. Returns the record id.
    std::string append(const Trajectory& trajectory);

    /// Every complete record, audited. A trailing line without its newline
    /// (a write still in flight) is ignored. A missing file reads as empty.
    [[nodiscard]] std::vector<StoredTrajectory> read_all() const;

    [[nodiscard]] const fs::path& path() const { return _path; }

  private:
    fs::path _path;
};

/// Appends one line to a file with the same locking as TrajectoryStore.
void append_line_locked(const fs::path& path, std::string_view line);

/// Task a trajectory was collected on: the base task with its exploration
/// ideas folded into the research problem.
TaskPtr episode_task(const TaskCatalog& catalog, const Trajectory& trajectory);

struct SftExample
{
    std::string task_id;
    std::string trajectory_id;
    int step_index = 0;
    std::string rendered_state;
    std::string target; // the stored response text, verbatim
    AgentState state;
};

using StepFilter = std::function<bool(const Trajectory&, const StepRecord&)>;

/// One example per kept step of each trajectory. The rendered state is
/// rebuilt from the record and checked against its stored digest.
std::vector<SftExample> build_sft_dataset(const std::vector<StoredTrajectory>& trajectories,
                                          const TaskCatalog& catalog,
                                          const StepFilter& filter = {},
                                          const PromptTemplateSet& templates = PromptTemplateSet::defaults());

enum class PoolWeighting
{
    Uniform,      // every recorded state equally likely
    ByTask,       // task first, then a state within it
    ByTrajectory, // trajectory first, then a state within it
};

std::string_view to_string(PoolWeighting w);
PoolWeighting pool_weighting_from_string(std::string_view text);

struct StatePoolOptions
{
    bool include_terminal = false;
    PoolWeighting weighting = PoolWeighting::Uniform;
};

struct StatePoolEntry
{
    std::string task_id;
    std::string trajectory_id;
    int step_index = 0; // the state is s_{step_index}: the first step_index steps have been taken
    std::string state_digest; // empty for a terminal state
    double m_t = 0.0;
    AgentState state;
    std::shared_ptr<const Trajectory> trajectory;
};

/// Draws n_states states with replacement. Throws EmptyStore when no state
/// is eligible and n_states > 0; SchemaViolation when a rebuilt state does
/// not match its recorded digest.
std::vector<StatePoolEntry> build_state_pool(const std::vector<StoredTrajectory>& trajectories,
                                             const TaskCatalog& catalog,
                                             std::size_t n_states,
                                             Rng& rng,
                                             const StatePoolOptions& options = {},
                                             const PromptTemplateSet& templates = PromptTemplateSet::defaults());

/// Line records {schema_version, kind, task_id, trajectory_id, step_index,
/// state_digest, m_t, config_digest}.
void write_state_pool(const fs::path& path, const std::vector<StatePoolEntry>& pool, std::string_view config_digest);

/// Reads an exported pool back against the trajectories it was drawn from.
std::vector<StatePoolEntry> read_state_pool(const fs::path& path,
                                            const std::vector<StoredTrajectory>& trajectories,
                                            const TaskCatalog& catalog,
                                            const PromptTemplateSet& templates = PromptTemplateSet::defaults());

} // namespace agentml
