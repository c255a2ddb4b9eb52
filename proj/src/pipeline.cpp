// SPDX-License-Identifier: Apache-2.0
#include <agentml/pipeline.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace agentml
{

namespace
{
    // fn(i, worker) for i in [0, n) over up to `workers` threads. The first
    // exception (by thread) is rethrown after every thread has stopped.
    template <typename Fn>
    void run_indexed(std::size_t n, std::size_t workers, Fn&& fn)
    {
        workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
        if (workers == 1)
        {
            for (std::size_t i = 0; i < n; ++i)
                fn(i, 0);
            return;
        }
        std::atomic<std::size_t> next { 0 };
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w)
            threads.emplace_back([&, w] {
                try
                {
                    for (std::size_t i; (i = next++) < n;)
                        fn(i, w);
                }
                catch (...)
                {
                    errors[w] = std::current_exception();
                    next = n;
                }
            });
        for (auto& t: threads)
            t.join();
        for (auto const& e: errors)
            if (e)
                std::rethrow_exception(e);
    }

    struct Slot
    {
        std::optional<Trajectory> trajectory;
        std::string error;
    };

    CollectSummary collect_with(const std::vector<TaskPtr>& tasks,
                                std::size_t workers,
                                const std::function<std::pair<PolicyBackend*, TextTransformer*>(std::size_t)>& worker,
                                const ActionPool* pool,
                                const CollectConfig& config,
                                TrajectoryStore& store)
    {
        CollectSummary summary;
        if (config.n_trajectories == 0)
            return summary;
        if (tasks.empty())
            throw Error(ErrorCode::EmptyInput, "no tasks to collect on");

        // Prefixes are drawn up front, in trajectory order.
        Rng prefixRng(derive_seed(config.seed, 0x70726566));
        std::vector<std::vector<std::string>> prefixes(config.n_trajectories);
        if (pool)
            for (auto& p: prefixes)
                p = idea_texts(sample_exploration_prefix(*pool, prefixRng));

        auto record = [&](std::size_t i, Slot& slot) {
            if (slot.trajectory)
            {
                store.append(*slot.trajectory);
                ++summary.written;
                summary.steps += slot.trajectory->steps.size();
            }
            else
            {
                ++summary.failed;
                summary.errors.push_back(fmt::format("trajectory {} on {}: {}", i, tasks[i % tasks.size()]->task_id, slot.error));
            }
        };
        auto run = [&](std::size_t i, std::size_t w) {
            Slot slot;
            auto const& base = tasks[i % tasks.size()];
            auto options = config.episode;
            options.prefix = prefixes[i];
            auto const task =
                options.prefix.empty() ? base : with_problem(base, format_enriched_problem(base->research_problem, options.prefix));
            auto [policy, transformer] = worker(w);
            try
            {
                slot.trajectory = run_episode(task, *policy, *transformer, derive_seed(config.seed, i), options);
            }
            catch (const Error& e)
            {
                if (e.code() == ErrorCode::PolicyUnavailable)
                    throw;
                slot.error = e.what();
            }
            return slot;
        };

        if (workers <= 1)
        {
            // Append as we go: an interrupted run leaves a valid partial store.
            for (std::size_t i = 0; i < config.n_trajectories; ++i)
            {
                auto slot = run(i, 0);
                record(i, slot);
            }
            return summary;
        }
        std::vector<Slot> slots(config.n_trajectories);
        std::vector<char> done(config.n_trajectories, 0);
        std::exception_ptr failure;
        try
        {
            run_indexed(config.n_trajectories, workers, [&](std::size_t i, std::size_t w) {
                slots[i] = run(i, w);
                done[i] = 1;
            });
        }
        catch (...)
        {
            failure = std::current_exception();
        }
        // Keep the finished prefix of the run even when a backend died.
        for (std::size_t i = 0; i < config.n_trajectories && done[i]; ++i)
            record(i, slots[i]);
        if (failure)
            std::rethrow_exception(failure);
        return summary;
    }
} // namespace

CollectSummary collect_trajectories(const std::vector<TaskPtr>& tasks,
                                    PolicyBackend& policy,
                                    TextTransformer& transformer,
                                    const ActionPool* pool,
                                    const CollectConfig& config,
                                    TrajectoryStore& store)
{
    if (config.workers > 1)
        throw Error(ErrorCode::ConfigInvalid, "parallel collection needs per-worker backends");
    return collect_with(
        tasks, 1, [&](std::size_t) { return std::pair<PolicyBackend*, TextTransformer*> { &policy, &transformer }; }, pool, config, store);
}

CollectSummary collect_trajectories(const std::vector<TaskPtr>& tasks,
                                    const BackendFactory& make_policy,
                                    const TransformerFactory& make_transformer,
                                    const ActionPool* pool,
                                    const CollectConfig& config,
                                    TrajectoryStore& store)
{
    auto const workers = std::max<std::size_t>(1, std::min(config.workers, config.n_trajectories));
    std::vector<std::unique_ptr<PolicyBackend>> policies;
    std::vector<std::unique_ptr<TextTransformer>> transformers;
    for (std::size_t w = 0; w < workers; ++w)
    {
        policies.push_back(make_policy());
        transformers.push_back(make_transformer());
    }
    return collect_with(
        tasks,
        workers,
        [&](std::size_t w) { return std::pair<PolicyBackend*, TextTransformer*> { policies[w].get(), transformers[w].get() }; },
        pool,
        config,
        store);
}

TaskEval summarise_finals(std::string task_id, const MetricSpec& metric, std::vector<double> finals)
{
    if (finals.empty())
        throw Error(ErrorCode::EmptyInput, "no final metrics to summarise");
    TaskEval e;
    e.task_id = std::move(task_id);
    e.beta = metric.beta;
    e.m_init = metric.m_init;
    e.finals = std::move(finals);
    double sum = 0.0;
    for (double f: e.finals)
        sum += f;
    e.m_avg = sum / static_cast<double>(e.finals.size());
    e.delta_r = performance_gain(e.m_avg, e.m_init, e.beta);
    for (auto k: kBestAtK)
        if (k <= e.finals.size())
            e.best_at[k] = best_at_k(e.finals, k, e.beta);
    if (e.finals.size() >= 2)
    {
        std::vector<double> gains;
        double mean = 0.0;
        for (double f: e.finals)
        {
            gains.push_back(performance_gain(f, e.m_init, e.beta));
            mean += gains.back();
        }
        mean /= static_cast<double>(gains.size());
        double ss = 0.0;
        for (double g: gains)
            ss += (g - mean) * (g - mean);
        e.delta_r_sample_std = std::sqrt(ss / static_cast<double>(gains.size() - 1));
    }
    return e;
}

Json TaskEval::to_json(std::string_view config_digest) const
{
    Json best = Json::object();
    for (auto const& [k, v]: best_at)
        best[std::to_string(k)] = v;
    return Json { { "schema_version", kSchemaVersion },
                  { "kind", "eval_task" },
                  { "task_id", task_id },
                  { "k", finals.size() },
                  { "beta", beta },
                  { "m_init", m_init },
                  { "finals", finals },
                  { "m_avg", m_avg },
                  { "delta_r", delta_r },
                  { "best_at_k", best },
                  { "delta_r_sample_std", delta_r_sample_std ? Json(*delta_r_sample_std) : Json() },
                  { "config_digest", config_digest } };
}

EvalReport make_report(std::vector<TaskEval> tasks, std::string config_digest)
{
    EvalReport r;
    r.tasks = std::move(tasks);
    r.config_digest = std::move(config_digest);
    double sum = 0.0;
    for (auto const& t: r.tasks)
        sum += t.delta_r;
    r.average_delta_r = r.tasks.empty() ? 0.0 : sum / static_cast<double>(r.tasks.size());
    return r;
}

std::string EvalReport::to_jsonl() const
{
    std::string out;
    for (auto const& t: tasks)
        out += t.to_json(config_digest).dump() + "\n";
    out += Json { { "schema_version", kSchemaVersion },
                  { "kind", "eval_summary" },
                  { "n_tasks", tasks.size() },
                  { "average_delta_r", average_delta_r },
                  { "config_digest", config_digest } }
               .dump()
        + "\n";
    return out;
}

std::string EvalReport::format_table() const
{
    std::string out = fmt::format("{:<24} {:>4} {:>12} {:>12} {:>9} {:>9} {:>12}\n",
                                  "task",
                                  "k",
                                  "m_init",
                                  "m_avg",
                                  "delta_r",
                                  "sd(d_i)",
                                  "best@k");
    for (auto const& t: tasks)
    {
        auto const best = t.best_at.empty() ? std::string("-") : fmt::format("{:.6g}", t.best_at.rbegin()->second);
        auto const sd = t.delta_r_sample_std ? fmt::format("{:+.4f}", *t.delta_r_sample_std) : std::string("-");
        out += fmt::format("{:<24} {:>4} {:>12.6g} {:>12.6g} {:>+9.4f} {:>9} {:>12}\n",
                           t.task_id,
                           t.finals.size(),
                           t.m_init,
                           t.m_avg,
                           t.delta_r,
                           sd,
                           best);
    }
    out += fmt::format("average delta_r over {} task(s): {:+.4f}\n", tasks.size(), average_delta_r);
    out += "sd(d_i) is the sample standard deviation of per-trajectory gains.\n";
    return out;
}

TaskEval evaluate_task(const TaskPtr& task,
                       PolicyBackend& policy,
                       TextTransformer& transformer,
                       std::size_t k,
                       std::uint64_t seed,
                       const EpisodeOptions& options,
                       const std::function<void(const Trajectory&)>& on_trajectory)
{
    if (k == 0)
        throw Error(ErrorCode::KOutOfRange, "k must be at least 1");
    std::vector<double> finals;
    for (std::size_t i = 0; i < k; ++i)
    {
        auto const traj = run_episode(task, policy, transformer, derive_seed(seed, i), options);
        finals.push_back(traj.final_metric);
        if (on_trajectory)
            on_trajectory(traj);
    }
    return summarise_finals(task->task_id, task->metric, std::move(finals));
}

TaskEval evaluate_task(const TaskPtr& task,
                       const BackendFactory& make_policy,
                       const TransformerFactory& make_transformer,
                       std::size_t k,
                       std::uint64_t seed,
                       const EpisodeOptions& options,
                       std::size_t workers,
                       const std::function<void(const Trajectory&)>& on_trajectory)
{
    if (k == 0)
        throw Error(ErrorCode::KOutOfRange, "k must be at least 1");
    workers = std::max<std::size_t>(1, std::min(workers, k));
    std::vector<std::unique_ptr<PolicyBackend>> policies;
    std::vector<std::unique_ptr<TextTransformer>> transformers;
    for (std::size_t w = 0; w < workers; ++w)
    {
        policies.push_back(make_policy());
        transformers.push_back(make_transformer());
    }
    std::vector<std::optional<Trajectory>> runs(k);
    run_indexed(k, workers, [&](std::size_t i, std::size_t w) {
        runs[i] = run_episode(task, *policies[w], *transformers[w], derive_seed(seed, i), options);
    });
    std::vector<double> finals;
    for (auto const& t: runs)
    {
        finals.push_back(t->final_metric);
        if (on_trajectory)
            on_trajectory(*t);
    }
    return summarise_finals(task->task_id, task->metric, std::move(finals));
}

} // namespace agentml
