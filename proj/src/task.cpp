// SPDX-License-Identifier: Apache-2.0
#include <agentml/task.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace agentml
{

void ExecutionLimits::validate() const
{
    if (max_steps < 1)
        throw Error(ErrorCode::ConfigInvalid, "max_steps must be at least 1");
    if (time_budget.count() <= 0.0 || per_exec_timeout.count() <= 0.0)
        throw Error(ErrorCode::ConfigInvalid, "time limits must be positive");
    if (per_exec_timeout > time_budget)
        throw Error(ErrorCode::ConfigInvalid, "per_exec_timeout exceeds time_budget");
}

Json to_json(const MetricSpec& m)
{
    return Json { { "name", m.name }, { "beta", m.beta },     { "m_init", m.m_init },
                  { "m_best", m.m_best }, { "marker", m.marker } };
}

MetricSpec metric_from_json(const Json& r)
{
    MetricSpec m;
    m.name = r.at("name").get<std::string>();
    m.beta = r.at("beta").get<int>();
    m.m_init = r.at("m_init").get<double>();
    m.m_best = r.at("m_best").get<double>();
    m.marker = r.value("marker", MetricSpec::default_marker(m.name));
    return m;
}

namespace
{
    Json limits_record(const ExecutionLimits& l)
    {
        return Json { { "max_steps", l.max_steps },
                      { "time_budget_s", l.time_budget.count() },
                      { "per_exec_timeout_s", l.per_exec_timeout.count() } };
    }

    ExecutionLimits limits_from(const Json& r)
    {
        ExecutionLimits l;
        l.max_steps = r.value("max_steps", l.max_steps);
        l.time_budget = Seconds(r.value("time_budget_s", l.time_budget.count()));
        l.per_exec_timeout = Seconds(r.value("per_exec_timeout_s", l.per_exec_timeout.count()));
        return l;
    }

    Json synthetic_record(const SyntheticConfig& c, std::uint64_t seed)
    {
        Json table = Json::array();
        for (auto const& t: c.techniques)
            table.push_back(
                { { "keyword", t.keyword }, { "delta", t.delta }, { "p_error", t.p_error }, { "p_corner", t.p_corner } });
        return Json { { "seed", seed }, { "techniques", table } };
    }
} // namespace

Json task_meta_record(const TaskSpec& task)
{
    Json record { { "schema_version", kSchemaVersion },
                  { "kind", "task_meta" },
                  { "task_id", task.task_id },
                  { "metric", to_json(task.metric) },
                  { "limits", limits_record(task.limits) },
                  { "interpreter", task.interpreter },
                  { "train_script", task.train_script },
                  { "eval_script", task.eval_script } };
    if (task.prepare_script)
        record["prepare_script"] = *task.prepare_script;
    if (task.synthetic)
        record["synthetic"] = synthetic_record(*task.synthetic, task.synthetic_seed);
    return record;
}

TaskSpec load_task(const fs::path& bundle_root)
{
    auto const fail = [&](const std::string& why) {
        throw Error(ErrorCode::BundleInvalid, fmt::format("{}: {}", bundle_root.string(), why));
    };
    if (!fs::is_directory(bundle_root))
        fail("not a directory");
    auto const metaPath = bundle_root / kTaskMetaFile;
    if (!fs::is_regular_file(metaPath))
        fail("missing task.meta");
    auto const problemPath = bundle_root / kProblemFile;
    if (!fs::is_regular_file(problemPath))
        fail("missing research_problem.txt");

    Json meta;
    try
    {
        meta = Json::parse(read_file(metaPath.string()));
    }
    catch (const Json::exception& e)
    {
        fail(fmt::format("task.meta is not a valid record: {}", e.what()));
    }
    if (meta.value("schema_version", 0) != kSchemaVersion || meta.value("kind", "") != "task_meta")
        fail("task.meta has wrong schema_version or kind");

    TaskSpec task;
    try
    {
        task.task_id = meta.at("task_id").get<std::string>();
        task.metric = metric_from_json(meta.at("metric"));
        task.limits = limits_from(meta.value("limits", Json::object()));
        task.interpreter = meta.value("interpreter", task.interpreter);
        task.train_script = meta.value("train_script", task.train_script);
        task.eval_script = meta.value("eval_script", task.eval_script);
        if (meta.contains("prepare_script"))
            task.prepare_script = meta.at("prepare_script").get<std::string>();
        if (meta.contains("synthetic"))
        {
            auto const& s = meta.at("synthetic");
            SyntheticConfig config;
            config.task_id = task.task_id;
            config.metric = task.metric;
            config.limits = task.limits;
            for (auto const& row: s.at("techniques"))
                config.techniques.push_back({ row.at("keyword").get<std::string>(),
                                              row.at("delta").get<double>(),
                                              row.at("p_error").get<double>(),
                                              row.at("p_corner").get<double>() });
            task.synthetic_seed = s.at("seed").get<std::uint64_t>();
            task.synthetic = std::move(config);
        }
    }
    catch (const Json::exception& e)
    {
        fail(fmt::format("task.meta field error: {}", e.what()));
    }

    task.bundle_root = bundle_root;
    task.research_problem = read_file(problemPath.string());
    if (task.synthetic)
        task.synthetic->problem_text = task.research_problem;

    if (!fs::is_regular_file(bundle_root / task.train_script))
        fail(fmt::format("missing initial script {}", task.train_script));
    if (!task.eval_script.empty() && !fs::is_regular_file(bundle_root / task.eval_script))
        fail(fmt::format("missing eval script {}", task.eval_script));
    if (task.prepare_script && !fs::is_regular_file(bundle_root / *task.prepare_script))
        fail(fmt::format("missing prepare script {}", *task.prepare_script));

    try
    {
        task.metric.validate();
        task.limits.validate();
    }
    catch (const Error& e)
    {
        fail(e.what());
    }
    return task;
}

void write_task_meta(const TaskSpec& task)
{
    write_file((task.bundle_root / kTaskMetaFile).string(), task_meta_record(task).dump() + "\n");
}

TaskPtr with_problem(const TaskPtr& task, std::string research_problem)
{
    auto copy = std::make_shared<TaskSpec>(*task);
    copy->research_problem = std::move(research_problem);
    return copy;
}

std::vector<TaskPtr> load_task_dir(const fs::path& root)
{
    if (fs::is_regular_file(root / kTaskMetaFile))
        return { std::make_shared<const TaskSpec>(load_task(root)) };

    std::vector<TaskPtr> tasks;
    if (!fs::is_directory(root))
        throw Error(ErrorCode::BundleInvalid, fmt::format("{} is not a directory", root.string()));
    for (auto const& entry: fs::directory_iterator(root))
        if (entry.is_directory() && fs::is_regular_file(entry.path() / kTaskMetaFile))
            tasks.push_back(std::make_shared<const TaskSpec>(load_task(entry.path())));
    std::sort(tasks.begin(), tasks.end(), [](auto const& a, auto const& b) { return a->task_id < b->task_id; });
    return tasks;
}

TaskCatalog::TaskCatalog(const std::vector<TaskPtr>& tasks)
{
    for (auto const& t: tasks)
        add(t);
}

void TaskCatalog::add(TaskPtr task)
{
    if (find(task->task_id))
        throw Error(ErrorCode::ConfigInvalid, fmt::format("duplicate task id {}", task->task_id));
    _tasks.push_back(std::move(task));
}

TaskPtr TaskCatalog::find(std::string_view task_id) const
{
    for (auto const& t: _tasks)
        if (t->task_id == task_id)
            return t;
    return nullptr;
}

TaskPtr TaskCatalog::at(std::string_view task_id) const
{
    auto task = find(task_id);
    if (!task)
        throw Error(ErrorCode::EnvReplayFailure, fmt::format("unknown task {}", task_id));
    return task;
}

Json to_json(const Feedback& feedback)
{
    Json record { { "raw", feedback.raw }, { "class", to_string(feedback.cls) } };
    if (feedback.metric_sample)
        record["metric"] = { { "value", feedback.metric_sample->value },
                             { "step_index", feedback.metric_sample->step_index } };
    else
        record["metric"] = nullptr;
    return record;
}

Feedback feedback_from_json(const Json& record)
{
    Feedback f;
    f.raw = record.at("raw").get<std::string>();
    f.cls = feedback_class_from_string(record.at("class").get<std::string>());
    if (auto const& m = record.at("metric"); !m.is_null())
        f.metric_sample = MetricSample { m.at("value").get<double>(), m.at("step_index").get<int>() };
    return f;
}

} // namespace agentml
