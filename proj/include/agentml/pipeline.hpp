// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/pool.hpp>
#include <agentml/store.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace agentml
{

struct CollectConfig
{
    std::size_t n_trajectories = 0;
    std::uint64_t seed = 1;
    EpisodeOptions episode;
    std::size_t workers = 1; // needs the factory overload when > 1
};

// One backend and one transformer per worker thread.
using BackendFactory = std::function<std::unique_ptr<PolicyBackend>()>;
using TransformerFactory = std::function<std::unique_ptr<TextTransformer>()>;

struct CollectSummary
{
    std::size_t written = 0;
    std::size_t failed = 0;
    std::size_t steps = 0;
    std::vector<std::string> errors;
};

/// Expert collection. Trajectory i runs on tasks[i % |tasks|] with seed
/// derive_seed(seed, i); when a pool is given, its first step is steered by
/// an exploration prefix of 1-3 ideas drawn from the pool and folded into
/// the research problem. A failing trajectory is reported and skipped.
/// PolicyUnavailable is not caught.
CollectSummary collect_trajectories(const std::vector<TaskPtr>& tasks,
                                    PolicyBackend& policy,
                                    TextTransformer& transformer,
                                    const ActionPool* pool,
                                    const CollectConfig& config,
                                    TrajectoryStore& store);

/// The same over config.workers threads. Records are appended in trajectory
/// order once all are done, so the store does not depend on the worker
/// count.
CollectSummary collect_trajectories(const std::vector<TaskPtr>& tasks,
                                    const BackendFactory& make_policy,
                                    const TransformerFactory& make_transformer,
                                    const ActionPool* pool,
                                    const CollectConfig& config,
                                    TrajectoryStore& store);

inline constexpr std::array<std::size_t, 6> kBestAtK { 4, 8, 16, 32, 64, 128 };

struct TaskEval
{
    std::string task_id;
    int beta = 1;
    double m_init = 0.0;
    std::vector<double> finals;
    double m_avg = 0.0;
    double delta_r = 0.0;
    std::map<std::size_t, double> best_at; // K -> best@K, for K <= |finals|
    // Sample standard deviation (n-1) of the per-trajectory gains
    // beta*(final_i - m_init)/m_init; absent when fewer than two.
    std::optional<double> delta_r_sample_std;

    [[nodiscard]] Json to_json(std::string_view config_digest) const;
};

/// Fills in m_avg, delta_r, best@K and the spread from the finals. Sums
/// run left to right.
TaskEval summarise_finals(std::string task_id, const MetricSpec& metric, std::vector<double> finals);

struct EvalReport
{
    std::vector<TaskEval> tasks;
    double average_delta_r = 0.0;
    std::string config_digest;

    /// One eval_task record per task, then one eval_summary record.
    [[nodiscard]] std::string to_jsonl() const;
    [[nodiscard]] std::string format_table() const;
};

EvalReport make_report(std::vector<TaskEval> tasks, std::string config_digest);

/// k independent trajectories with seeds derive_seed(seed, i).
/// `on_trajectory` sees each finished trajectory.
TaskEval evaluate_task(const TaskPtr& task,
                       PolicyBackend& policy,
                       TextTransformer& transformer,
                       std::size_t k,
                       std::uint64_t seed,
                       const EpisodeOptions& options,
                       const std::function<void(const Trajectory&)>& on_trajectory = {});

/// The same over `workers` threads; `on_trajectory` still sees trajectories
/// in index order.
TaskEval evaluate_task(const TaskPtr& task,
                       const BackendFactory& make_policy,
                       const TransformerFactory& make_transformer,
                       std::size_t k,
                       std::uint64_t seed,
                       const EpisodeOptions& options,
                       std::size_t workers,
                       const std::function<void(const Trajectory&)>& on_trajectory = {});

} // namespace agentml
