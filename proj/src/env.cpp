// SPDX-License-Identifier: Apache-2.0
#include <agentml/env.hpp>
#include <agentml/protocol.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>

namespace agentml
{

namespace
{
    using Clock = std::chrono::steady_clock;

    constexpr std::int64_t kMaxInspectLines = 100;

    std::string safe_name(std::string_view id)
    {
        std::string out;
        for (char c: id)
            out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
        return out.empty() ? "task" : out;
    }

    Feedback error(std::string raw)
    {
        return Feedback { std::move(raw), FeedbackClass::Error, std::nullopt };
    }

    Feedback neutral(std::string raw)
    {
        return Feedback { std::move(raw), FeedbackClass::Neutral, std::nullopt };
    }

    bool executing(ActionKind kind)
    {
        return kind == ActionKind::ExecuteScript || kind == ActionKind::EditScript;
    }

    // Feedback for a script run whose output is `output`; raw is the full
    // observation text shown to the agent.
    Feedback script_feedback(const ProcessResult& run, std::string raw, ActionKind kind, const MetricSpec& metric)
    {
        Feedback fb;
        fb.raw = std::move(raw);
        fb.cls = classify_feedback(run.status, run.output, kind, metric);
        if (fb.cls == FeedbackClass::Success)
            fb.metric_sample = extract_metric(run.output, metric);
        return fb;
    }

    std::string run_text(const ProcessResult& run, Seconds timeout)
    {
        auto text = run.output;
        if (run.status.timed_out)
            text += fmt::format("\n[execution exceeded the {:g}s time limit and was stopped]\n", timeout.count());
        return text;
    }
} // namespace

Workspace::Workspace(TaskPtr task, const fs::path& scratch_root, std::uint64_t seed):
    _task(std::move(task)), _seed(seed)
{
    if (!_task)
        throw Error(ErrorCode::InvalidArgument, "null task");
    auto const& bundle = _task->bundle_root;
    if (!fs::is_directory(bundle) || !fs::is_regular_file(bundle / kProblemFile) ||
        !fs::is_regular_file(bundle / _task->train_script))
        throw Error(ErrorCode::BundleInvalid, fmt::format("{}: missing problem file or initial script", bundle.string()));

    std::error_code ec;
    fs::create_directories(scratch_root, ec);
    auto pattern = (scratch_root / fmt::format("{}-s{}-XXXXXX", safe_name(_task->task_id), seed)).string();
    if (!::mkdtemp(pattern.data()))
        throw Error(ErrorCode::IoFailure, fmt::format("cannot create workspace under {}", scratch_root.string()));
    _root = pattern;

    try
    {
        fs::copy(bundle, _root, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
        fs::remove(_root / kTaskMetaFile);
        write_file((_root / kProblemFile).string(), _task->research_problem);
    }
    catch (const std::exception& e)
    {
        release();
        throw Error(ErrorCode::IoFailure, fmt::format("cannot populate workspace: {}", e.what()));
    }

    if (_task->prepare_script)
    {
        auto const run = ProcessRunner().run(
            { _task->interpreter, *_task->prepare_script }, _root, _task->limits.per_exec_timeout);
        if (run.status.timed_out || run.status.code != 0)
        {
            release();
            throw Error(ErrorCode::PrepareFailed,
                        fmt::format("{} exited with {}{}: {}",
                                    *_task->prepare_script,
                                    run.status.code,
                                    run.status.timed_out ? " (timeout)" : "",
                                    run.output.substr(0, 400)));
        }
    }
}

Workspace::~Workspace()
{
    release();
}

Workspace::Workspace(Workspace&& other) noexcept:
    steps_taken(other.steps_taken),
    terminal(other.terminal),
    elapsed(other.elapsed),
    _task(std::move(other._task)),
    _root(std::move(other._root)),
    _seed(other._seed)
{
    other._root.clear();
}

Workspace& Workspace::operator=(Workspace&& other) noexcept
{
    if (this != &other)
    {
        release();
        steps_taken = other.steps_taken;
        terminal = other.terminal;
        elapsed = other.elapsed;
        _task = std::move(other._task);
        _root = std::move(other._root);
        _seed = other._seed;
        other._root.clear();
    }
    return *this;
}

void Workspace::release() noexcept
{
    if (_root.empty())
        return;
    std::error_code ec;
    fs::remove_all(_root, ec);
    _root.clear();
}

WorkspaceSnapshot Workspace::snapshot() const
{
    WorkspaceSnapshot snap;
    snap.steps_taken = steps_taken;
    snap.terminal = terminal;
    for (auto const& entry: fs::recursive_directory_iterator(_root))
        if (entry.is_regular_file())
            snap.files.emplace(fs::relative(entry.path(), _root).generic_string(), read_file(entry.path().string()));
    return snap;
}

void Workspace::restore(const WorkspaceSnapshot& snap)
{
    std::vector<fs::path> stale;
    for (auto const& entry: fs::recursive_directory_iterator(_root))
        if (entry.is_regular_file() && !snap.files.contains(fs::relative(entry.path(), _root).generic_string()))
            stale.push_back(entry.path());
    for (auto const& p: stale)
        fs::remove(p);
    for (auto const& [name, content]: snap.files)
    {
        auto const path = _root / name;
        fs::create_directories(path.parent_path());
        std::error_code ec;
        if (fs::file_size(path, ec) == content.size() && !ec && read_file(path.string()) == content)
            continue;
        write_file(path.string(), content);
    }
    steps_taken = snap.steps_taken;
    terminal = snap.terminal;
}

std::string Workspace::content_digest() const
{
    std::string listing;
    for (auto const& [name, content]: snapshot().files)
        listing += fmt::format("{}\n{}\n{}\n", name, content.size(), sha256_hex(content));
    return sha256_hex(listing);
}

std::optional<fs::path> Workspace::resolve(std::string_view relative) const
{
    fs::path const p(relative);
    if (relative.empty() || p.is_absolute())
        return std::nullopt;
    auto const normal = p.lexically_normal();
    if (!normal.empty() && *normal.begin() == "..")
        return std::nullopt;
    return (_root / normal).lexically_normal();
}

Workspace init_workspace(TaskPtr task, const fs::path& scratch_root, std::uint64_t seed)
{
    return Workspace(std::move(task), scratch_root, seed);
}

std::optional<MetricSample> extract_metric(std::string_view raw, const MetricSpec& metric)
{
    if (metric.marker.empty())
        return std::nullopt;
    auto const pos = raw.rfind(metric.marker);
    if (pos == std::string_view::npos)
        return std::nullopt;
    auto i = pos + metric.marker.size();
    while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t'))
        ++i;
    auto j = i;
    while (j < raw.size() && (std::isdigit(static_cast<unsigned char>(raw[j])) || raw[j] == '.' || raw[j] == '-' ||
                              raw[j] == '+' || raw[j] == 'e' || raw[j] == 'E'))
        ++j;
    auto token = raw.substr(i, j - i);
    // A sentence may end right after the number.
    if (token.size() > 1 && token.back() == '.')
        token.remove_suffix(1);
    if (!token.empty() && token.front() == '+')
        token.remove_prefix(1);
    double value = 0.0;
    auto const [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value))
        throw Error(ErrorCode::MalformedNumber,
                    fmt::format("'{}' is followed by '{}'", metric.marker, raw.substr(i, std::min<std::size_t>(24, raw.size() - i))));
    return MetricSample { value, 0 };
}

FeedbackClass
classify_feedback(const ExitStatus& status, std::string_view raw, ActionKind kind, const MetricSpec& metric)
{
    if (status.timed_out)
        return FeedbackClass::Corner;
    if (executing(kind))
    {
        auto const lower = to_lower(raw);
        if (lower.find("out of memory") != std::string::npos || lower.find("memoryerror") != std::string::npos)
            return FeedbackClass::Corner;
    }
    if (status.code != 0 || raw.find("Traceback (most recent call last)") != std::string_view::npos)
        return FeedbackClass::Error;
    if (executing(kind))
    {
        try
        {
            if (extract_metric(raw, metric))
                return FeedbackClass::Success;
        }
        catch (const Error&)
        {
            return FeedbackClass::Error;
        }
    }
    return FeedbackClass::Neutral;
}

Feedback apply_action(Workspace& ws, const Action& action, TextTransformer& transformer, const EnvOptions& options)
{
    auto const& task = ws.task();
    if (ws.terminal)
        return error("EnvError: the episode has already ended");
    if (ws.steps_taken >= task.limits.max_steps)
        return error("EnvError: step limit reached");
    ++ws.steps_taken;

    auto const started = Clock::now();
    ScriptRunner const runner(task.interpreter, options.in_process_scripts);
    auto const timeout = task.limits.per_exec_timeout;

    auto feedback = std::visit(
        [&](auto const& a) -> Feedback {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, actions::ListFiles>)
            {
                auto const dir = ws.resolve(a.dir_path);
                if (!dir || !fs::is_directory(*dir))
                    return error(fmt::format("EnvError: Cannot list file in the {} directory", a.dir_path));
                std::vector<std::string> names;
                for (auto const& entry: fs::directory_iterator(*dir))
                    names.push_back(entry.path().filename().string() + (entry.is_directory() ? "/" : ""));
                std::sort(names.begin(), names.end());
                std::string out;
                for (auto const& n: names)
                    out += n + "\n";
                return neutral(out);
            }
            else if constexpr (std::is_same_v<T, actions::CopyFile>)
            {
                auto const src = ws.resolve(a.source);
                auto const dst = ws.resolve(a.destination);
                std::error_code ec;
                if (src && dst && fs::is_regular_file(*src))
                    fs::copy_file(*src, *dst, fs::copy_options::overwrite_existing, ec);
                if (!src || !dst || !fs::is_regular_file(*src) || ec)
                    return error(fmt::format("EnvError: File {} copy to {} failed. Check whether the source and "
                                             "destinations are valid.",
                                             a.source,
                                             a.destination));
                return neutral(fmt::format("File {} copied to {}", a.source, a.destination));
            }
            else if constexpr (std::is_same_v<T, actions::InspectScriptLines>)
            {
                auto const path = ws.resolve(a.script_name);
                if (!path || !fs::is_regular_file(*path))
                    return error(fmt::format("EnvError: cannot find script {}", a.script_name));
                if (a.start_line_number < 1 || a.end_line_number < a.start_line_number)
                    return error(fmt::format("EnvError: invalid line range {}-{}", a.start_line_number, a.end_line_number));
                if (a.end_line_number - a.start_line_number + 1 > kMaxInspectLines)
                    return error("EnvError: the number of lines to display is limited to 100 lines");
                auto const lines = split_lines(read_file(path->string()));
                std::string out = fmt::format("Here are the lines (the file ends at line {}):\n\n", lines.size());
                auto const last = std::min<std::int64_t>(a.end_line_number, static_cast<std::int64_t>(lines.size()));
                for (auto i = a.start_line_number; i <= last; ++i)
                    out += lines[static_cast<std::size_t>(i - 1)] + "\n";
                return neutral(out);
            }
            else if constexpr (std::is_same_v<T, actions::ExecuteScript>)
            {
                auto const path = ws.resolve(a.script_name);
                if (!path || !fs::is_regular_file(*path))
                    return error(fmt::format("EnvError: The file {} does not exist.", a.script_name));
                auto const run = runner.run(fs::relative(*path, ws.root()), ws.root(), timeout);
                return script_feedback(run,
                                       fmt::format("The script has been executed. Here is the output:\n{}", run_text(run, timeout)),
                                       ActionKind::ExecuteScript,
                                       task.metric);
            }
            else if constexpr (std::is_same_v<T, actions::FinalAnswer>)
            {
                ws.terminal = true;
                return neutral("Final answer submitted.");
            }
            else if constexpr (std::is_same_v<T, actions::UnderstandFile>)
            {
                auto const path = ws.resolve(a.file_name);
                if (!path || !fs::is_regular_file(*path))
                    return error(fmt::format("EnvError: cannot read file {}", a.file_name));
                try
                {
                    return neutral(transformer.understand(read_file(path->string()), a.things_to_look_for));
                }
                catch (const Error& e)
                {
                    if (e.code() == ErrorCode::PolicyUnavailable)
                        throw;
                    return error(fmt::format("EnvError: cannot understand {}: {}", a.file_name, e.what()));
                }
            }
            else
            {
                static_assert(std::is_same_v<T, actions::EditScript>);
                auto const src = ws.resolve(a.script_name);
                auto const dst = ws.resolve(a.save_name);
                if (!src || !dst)
                    return error(fmt::format("EnvError: cannot write file {}", a.save_name));
                std::string before;
                if (fs::is_regular_file(*src))
                    before = read_file(src->string());
                std::string after;
                try
                {
                    after = transformer.edit(before, a.edit_instruction);
                }
                catch (const Error& e)
                {
                    if (e.code() == ErrorCode::PolicyUnavailable)
                        throw;
                    return error(fmt::format("EnvError: edit of {} failed: {}", a.script_name, e.what()));
                }
                try
                {
                    fs::create_directories(dst->parent_path());
                    write_file(dst->string(), after);
                }
                catch (const std::exception&)
                {
                    return error(fmt::format("EnvError: cannot write file {}", a.save_name));
                }
                auto raw = fmt::format("The edited file is saved to {}. Here is the diff, please check if the edit is "
                                       "correct and desirable:\n\n{}",
                                       a.save_name,
                                       unified_diff(before, after));
                if (!options.evaluate_edits)
                    return neutral(std::move(raw));
                auto const run = runner.run(fs::relative(*dst, ws.root()), ws.root(), timeout);
                raw += fmt::format("\nThe edited script has been executed. Here is the output:\n{}", run_text(run, timeout));
                return script_feedback(run, std::move(raw), ActionKind::EditScript, task.metric);
            }
        },
        action);

    ws.elapsed += Clock::now() - started;
    return feedback;
}

StepOutcome take_step(Workspace& ws,
                      std::string_view response_text,
                      double m_t,
                      int step_index,
                      TextTransformer& transformer,
                      const EnvOptions& options,
                      const RewardClamp& clamp)
{
    StepOutcome out;
    out.action = interpret_response(response_text);
    out.action_class = classify_action(out.action);
    if (auto const* action = std::get_if<Action>(&out.action))
        out.feedback = apply_action(ws, *action, transformer, options);
    else
    {
        // A malformed response still consumes a step.
        ++ws.steps_taken;
        out.feedback = Feedback { describe_rejection(out.action), FeedbackClass::Error, std::nullopt };
    }
    if (out.feedback.metric_sample)
        out.feedback.metric_sample->step_index = step_index;
    std::optional<double> next;
    if (out.feedback.metric_sample)
        next = out.feedback.metric_sample->value;
    out.reward = step_reward(out.action_class, out.feedback.cls, m_t, next, ws.task().metric, clamp);
    return out;
}

} // namespace agentml
