// SPDX-License-Identifier: Apache-2.0
#include <agentml/pool.hpp>
#include <agentml/store.hpp>

#include <fmt/format.h>

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <map>
#include <sys/file.h>
#include <unistd.h>

namespace agentml
{

namespace
{
    [[noreturn]] void violation(const std::string& why)
    {
        throw Error(ErrorCode::SchemaViolation, why);
    }

    Json step_to_json(const StepRecord& s)
    {
        return Json { { "step_index", s.step_index },
                      { "state_digest", s.state_digest },
                      { "response_text", s.response_text },
                      { "action", to_json(s.action) },
                      { "action_class", to_string(s.action_class) },
                      { "feedback", to_json(s.feedback) },
                      { "metric_before", s.metric_before },
                      { "reward", s.reward } };
    }

    StepRecord step_from_json(const Json& r)
    {
        StepRecord s;
        s.step_index = r.at("step_index").get<int>();
        s.state_digest = r.at("state_digest").get<std::string>();
        s.response_text = r.at("response_text").get<std::string>();
        s.action = parsed_action_from_json(r.at("action"));
        s.action_class = action_class_from_string(r.at("action_class").get<std::string>());
        s.feedback = feedback_from_json(r.at("feedback"));
        s.metric_before = r.at("metric_before").get<double>();
        s.reward = r.at("reward").get<double>();
        return s;
    }

    double metric_after(const StepRecord& s)
    {
        if (s.feedback.cls == FeedbackClass::Success && s.feedback.metric_sample)
            return s.feedback.metric_sample->value;
        return s.metric_before;
    }

    // A located, eligible state: trajectory index and number of steps taken.
    struct StateRef
    {
        std::size_t trajectory;
        std::size_t step;
    };
} // namespace

Json to_json(const Trajectory& t)
{
    Json steps = Json::array();
    for (auto const& s: t.steps)
        steps.push_back(step_to_json(s));
    return Json { { "schema_version", kSchemaVersion },
                  { "kind", "trajectory" },
                  { "task_id", t.task_id },
                  { "seed", t.seed },
                  { "prefix", t.prefix },
                  { "policy_id", t.policy_id },
                  { "metric", to_json(t.metric) },
                  { "clamp", { { "lo", t.clamp.lo }, { "hi", t.clamp.hi }, { "enabled", t.clamp.enabled } } },
                  { "max_steps", t.max_steps },
                  { "steps", std::move(steps) },
                  { "final_metric", t.final_metric },
                  { "termination", to_string(t.termination) },
                  { "wall_time", t.wall_time },
                  { "config_digest", t.config_digest } };
}

Trajectory trajectory_from_json(const Json& r)
{
    try
    {
        if (r.at("schema_version").get<int>() != kSchemaVersion)
            violation(fmt::format("unsupported schema_version {}", r.at("schema_version").dump()));
        if (r.at("kind") != "trajectory")
            violation(fmt::format("record kind {} is not a trajectory", r.at("kind").dump()));
        Trajectory t;
        t.task_id = r.at("task_id").get<std::string>();
        t.seed = r.at("seed").get<std::uint64_t>();
        t.prefix = r.at("prefix").get<std::vector<std::string>>();
        t.policy_id = r.at("policy_id").get<std::string>();
        t.metric = metric_from_json(r.at("metric"));
        auto const& c = r.at("clamp");
        t.clamp = { c.at("lo").get<double>(), c.at("hi").get<double>(), c.at("enabled").get<bool>() };
        t.max_steps = r.at("max_steps").get<int>();
        for (auto const& s: r.at("steps"))
            t.steps.push_back(step_from_json(s));
        t.final_metric = r.at("final_metric").get<double>();
        t.termination = termination_from_string(r.at("termination").get<std::string>());
        t.wall_time = r.at("wall_time").get<double>();
        t.config_digest = r.at("config_digest").get<std::string>();
        return t;
    }
    catch (const Json::exception& e)
    {
        violation(fmt::format("malformed trajectory record: {}", e.what()));
    }
}

void audit_trajectory(const Trajectory& t)
{
    if (t.steps.size() > static_cast<std::size_t>(std::max(t.max_steps, 0)))
        violation(fmt::format("{} steps exceed max_steps {}", t.steps.size(), t.max_steps));
    double m_t = t.metric.m_init;
    for (std::size_t i = 0; i < t.steps.size(); ++i)
    {
        auto const& s = t.steps[i];
        if (s.step_index != static_cast<int>(i))
            violation(fmt::format("step {} is recorded with index {}", i, s.step_index));
        if (classify_action(s.action) != s.action_class)
            violation(fmt::format("step {}: action class {} does not match the recorded action", i, to_string(s.action_class)));
        if (s.metric_before != m_t)
            violation(fmt::format("step {}: metric_before {} but the running metric is {}", i, s.metric_before, m_t));
        if (s.feedback.cls == FeedbackClass::Success && !s.feedback.metric_sample)
            violation(fmt::format("step {}: Success feedback without a metric sample", i));
        std::optional<double> m_next;
        if (s.feedback.cls == FeedbackClass::Success)
            m_next = s.feedback.metric_sample->value;
        auto const expected = step_reward(s.action_class, s.feedback.cls, m_t, m_next, t.metric, t.clamp);
        if (expected != s.reward)
            violation(fmt::format("step {}: stored reward {} but recomputation gives {}", i, s.reward, expected));
        m_t = metric_after(s);
    }
    auto const final_metric = final_metric_of(t.steps, t.metric);
    if (final_metric != t.final_metric)
        violation(fmt::format("final_metric {} but the recorded steps give {}", t.final_metric, final_metric));
}

void append_line_locked(const fs::path& path, std::string_view line)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    int const fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0)
        throw Error(ErrorCode::IoFailure, fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
    auto fail = [&](const char* what) {
        auto const err = errno;
        ::close(fd);
        throw Error(ErrorCode::IoFailure, fmt::format("{} {}: {}", what, path.string(), std::strerror(err)));
    };
    if (::flock(fd, LOCK_EX) != 0)
        fail("cannot lock");
    std::size_t written = 0;
    while (written < line.size())
    {
        auto const n = ::write(fd, line.data() + written, line.size() - written);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            fail("cannot write");
        }
        written += static_cast<std::size_t>(n);
    }
    ::flock(fd, LOCK_UN);
    ::close(fd);
}

std::string TrajectoryStore::append(const Trajectory& trajectory)
{
    audit_trajectory(trajectory);
    auto const line = to_json(trajectory).dump();
    append_line_locked(_path, line + "\n");
    return sha256_hex(line).substr(0, 16);
}

std::vector<StoredTrajectory> TrajectoryStore::read_all() const
{
    std::vector<StoredTrajectory> out;
    if (!fs::exists(_path))
        return out;
    auto const content = read_file(_path.string());
    std::size_t pos = 0;
    int lineNo = 0;
    while (true)
    {
        auto const end = content.find('\n', pos);
        if (end == std::string::npos)
            break;
        ++lineNo;
        auto const line = std::string_view(content).substr(pos, end - pos);
        pos = end + 1;
        if (line.empty())
            continue;
        Json record;
        try
        {
            record = Json::parse(line);
        }
        catch (const Json::exception& e)
        {
            violation(fmt::format("{}:{}: not a record: {}", _path.string(), lineNo, e.what()));
        }
        try
        {
            auto traj = trajectory_from_json(record);
            audit_trajectory(traj);
            out.push_back({ sha256_hex(line).substr(0, 16), std::make_shared<const Trajectory>(std::move(traj)) });
        }
        catch (const Error& e)
        {
            violation(fmt::format("{}:{}: {}", _path.string(), lineNo, e.what()));
        }
    }
    return out;
}

TaskPtr episode_task(const TaskCatalog& catalog, const Trajectory& trajectory)
{
    auto const base = catalog.at(trajectory.task_id);
    if (trajectory.prefix.empty())
        return base;
    return with_problem(base, format_enriched_problem(base->research_problem, trajectory.prefix));
}

std::vector<SftExample> build_sft_dataset(const std::vector<StoredTrajectory>& trajectories,
                                          const TaskCatalog& catalog,
                                          const StepFilter& filter,
                                          const PromptTemplateSet& templates)
{
    std::vector<SftExample> out;
    for (auto const& stored: trajectories)
    {
        auto const& traj = *stored.trajectory;
        auto const task = episode_task(catalog, traj);
        AgentState state { task, {} };
        auto rendered = build_initial_prompt(*task, templates);
        for (auto const& step: traj.steps)
        {
            if (state_digest(rendered) != step.state_digest)
                violation(fmt::format("trajectory {} step {}: rebuilt state does not match its digest", stored.id, step.step_index));
            if (!filter || filter(traj, step))
                out.push_back({ traj.task_id, stored.id, step.step_index, rendered, step.response_text, state });
            HistoryEntry entry { step.response_text, step.action, step.feedback };
            rendered += render_step(entry);
            state.history.push_back(std::move(entry));
        }
    }
    return out;
}

std::string_view to_string(PoolWeighting w)
{
    switch (w)
    {
        case PoolWeighting::Uniform: return "uniform";
        case PoolWeighting::ByTask: return "by_task";
        case PoolWeighting::ByTrajectory: return "by_trajectory";
    }
    return "";
}

PoolWeighting pool_weighting_from_string(std::string_view text)
{
    for (auto w: { PoolWeighting::Uniform, PoolWeighting::ByTask, PoolWeighting::ByTrajectory })
        if (to_string(w) == text)
            return w;
    throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown pool weighting '{}' (uniform, by_task, by_trajectory)", text));
}

namespace
{
    StatePoolEntry make_entry(const StoredTrajectory& stored,
                              std::size_t step,
                              const TaskCatalog& catalog,
                              const PromptTemplateSet& templates)
    {
        auto const& traj = *stored.trajectory;
        auto const task = episode_task(catalog, traj);
        StatePoolEntry entry;
        entry.task_id = traj.task_id;
        entry.trajectory_id = stored.id;
        entry.step_index = static_cast<int>(step);
        entry.state = state_from_steps(task, std::span(traj.steps).first(step));
        entry.trajectory = stored.trajectory;
        if (step < traj.steps.size())
        {
            entry.state_digest = traj.steps[step].state_digest;
            entry.m_t = traj.steps[step].metric_before;
            if (state_digest(render_state(entry.state, templates)) != entry.state_digest)
                violation(fmt::format("trajectory {} state {}: rebuilt state does not match its digest", stored.id, step));
        }
        else
            entry.m_t = traj.steps.empty() ? traj.metric.m_init : metric_after(traj.steps.back());
        return entry;
    }
} // namespace

std::vector<StatePoolEntry> build_state_pool(const std::vector<StoredTrajectory>& trajectories,
                                             const TaskCatalog& catalog,
                                             std::size_t n_states,
                                             Rng& rng,
                                             const StatePoolOptions& options,
                                             const PromptTemplateSet& templates)
{
    std::vector<StatePoolEntry> pool;
    if (n_states == 0)
        return pool;

    std::vector<StateRef> states;
    std::vector<std::vector<std::size_t>> byTrajectory;
    std::map<std::string, std::vector<std::size_t>> byTask;
    for (std::size_t i = 0; i < trajectories.size(); ++i)
    {
        auto const& traj = *trajectories[i].trajectory;
        auto const count = traj.steps.size() + (options.include_terminal ? 1 : 0);
        std::vector<std::size_t> mine;
        for (std::size_t s = 0; s < count; ++s)
        {
            mine.push_back(states.size());
            byTask[traj.task_id].push_back(states.size());
            states.push_back({ i, s });
        }
        if (!mine.empty())
            byTrajectory.push_back(std::move(mine));
    }
    if (states.empty())
        throw Error(ErrorCode::EmptyStore, "no recorded states to draw from");

    std::vector<const std::vector<std::size_t>*> groups;
    if (options.weighting == PoolWeighting::ByTask)
        for (auto const& [id, list]: byTask)
            groups.push_back(&list);
    else if (options.weighting == PoolWeighting::ByTrajectory)
        for (auto const& list: byTrajectory)
            groups.push_back(&list);

    std::map<std::size_t, StatePoolEntry> built;
    for (std::size_t n = 0; n < n_states; ++n)
    {
        std::size_t pick;
        if (groups.empty())
            pick = rng.below(states.size());
        else
        {
            auto const& group = *groups[rng.below(groups.size())];
            pick = group[rng.below(group.size())];
        }
        auto it = built.find(pick);
        if (it == built.end())
        {
            auto const ref = states[pick];
            it = built.emplace(pick, make_entry(trajectories[ref.trajectory], ref.step, catalog, templates)).first;
        }
        pool.push_back(it->second);
    }
    return pool;
}

void write_state_pool(const fs::path& path, const std::vector<StatePoolEntry>& pool, std::string_view config_digest)
{
    std::string out;
    for (auto const& e: pool)
        out += Json { { "schema_version", kSchemaVersion },
                      { "kind", "state_pool_entry" },
                      { "task_id", e.task_id },
                      { "trajectory_id", e.trajectory_id },
                      { "step_index", e.step_index },
                      { "state_digest", e.state_digest },
                      { "m_t", e.m_t },
                      { "config_digest", config_digest } }
                   .dump()
            + "\n";
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    write_file(path.string(), out);
}

std::vector<StatePoolEntry> read_state_pool(const fs::path& path,
                                            const std::vector<StoredTrajectory>& trajectories,
                                            const TaskCatalog& catalog,
                                            const PromptTemplateSet& templates)
{
    std::map<std::string, const StoredTrajectory*> byId;
    for (auto const& t: trajectories)
        byId[t.id] = &t;
    std::vector<StatePoolEntry> pool;
    int lineNo = 0;
    for (auto const& line: split_lines(read_file(path.string())))
    {
        ++lineNo;
        if (trim(line).empty())
            continue;
        try
        {
            auto const r = Json::parse(line);
            if (r.at("schema_version").get<int>() != kSchemaVersion || r.at("kind") != "state_pool_entry")
                violation("not a state_pool_entry record of this schema version");
            auto const it = byId.find(r.at("trajectory_id").get<std::string>());
            if (it == byId.end())
                violation(fmt::format("unknown trajectory {}", r.at("trajectory_id").dump()));
            auto const step = r.at("step_index").get<std::size_t>();
            if (step > it->second->trajectory->steps.size())
                violation(fmt::format("step_index {} is past the end of its trajectory", step));
            auto entry = make_entry(*it->second, step, catalog, templates);
            if (entry.state_digest != r.at("state_digest").get<std::string>() || entry.m_t != r.at("m_t").get<double>())
                violation("entry does not match its trajectory");
            pool.push_back(std::move(entry));
        }
        catch (const Json::exception& e)
        {
            violation(fmt::format("{}:{}: {}", path.string(), lineNo, e.what()));
        }
        catch (const Error& e)
        {
            if (e.code() != ErrorCode::SchemaViolation)
                throw;
            violation(fmt::format("{}:{}: {}", path.string(), lineNo, e.what()));
        }
    }
    return pool;
}

} // namespace agentml
