// SPDX-License-Identifier: Apache-2.0
#include <agentml/synthetic.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace agentml
{

namespace
{
    constexpr std::string_view kHeader = "# synthetic-task v1\n";
    constexpr std::string_view kInstructionHead = "REPLACE TECHNIQUES = \" WITH TECHNIQUES = \"";

    // Body after the TECHNIQUES line. Must stay in lock-step with
    // simulate_synthetic_script below.
    constexpr std::string_view kScriptBody = R"PY(
MASK = 0xFFFFFFFFFFFFFFFF


def unit(key):
    h = 0xCBF29CE484222325
    for b in key.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK
    z = (h + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    z ^= z >> 31
    return (z >> 11) * 2.0 ** -53


def main():
    active = sorted(set(TECHNIQUES.split()))
    print("Training with techniques: " + (", ".join(active) if active else "none"))
    for kw in active:
        if kw not in TABLE:
            print(f"ValueError: unknown technique '{kw}'")
            sys.exit(1)
    joined = ",".join(active)
    for kw in active:
        delta, p_error, p_corner = TABLE[kw]
        u = unit(f"{SEED}|{joined}|{kw}")
        if u < p_error:
            print(f"RuntimeError: loss became nan after enabling {kw}")
            sys.exit(1)
        if u < p_error + p_corner:
            print(f"RuntimeError: CUDA out of memory while enabling {kw}")
            sys.exit(1)
    value = BASE
    for kw in active:
        value += TABLE[kw][0]
    print(f"Final Validation {METRIC}: {value:.6f}")


if __name__ == "__main__":
    main()
)PY";

    constexpr std::string_view kEvalScript = R"PY(# Scores the current train.py by running it.
import runpy

runpy.run_path("train.py", run_name="__main__")
)PY";

    // Python float literal that reads back to the same double.
    std::string py_float(double v)
    {
        auto s = fmt::format("{}", v);
        if (s.find_first_of(".eni") == std::string::npos)
            s += ".0";
        return s;
    }

    bool is_keyword(std::string_view kw)
    {
        return !kw.empty() && std::all_of(kw.begin(), kw.end(), [](char c) {
            return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        });
    }

    bool is_metric_name(std::string_view name)
    {
        return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
            return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ' ';
        });
    }

    std::optional<double> parse_double(std::string_view s)
    {
        double v = 0.0;
        auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            return std::nullopt;
        return v;
    }

    // Text of the line starting with prefix, without the prefix.
    std::optional<std::string_view> line_value(std::string_view source, std::string_view prefix)
    {
        auto const needle = fmt::format("\n{}", prefix);
        auto const pos = source.find(needle);
        if (pos == std::string_view::npos)
            return std::nullopt;
        auto const begin = pos + needle.size();
        auto const end = source.find('\n', begin);
        if (end == std::string_view::npos)
            return std::nullopt;
        return source.substr(begin, end - begin);
    }

    std::vector<std::string> split_ws(std::string_view text)
    {
        std::vector<std::string> out;
        std::size_t i = 0;
        while (i < text.size())
        {
            while (i < text.size() && text[i] == ' ')
                ++i;
            auto const start = i;
            while (i < text.size() && text[i] != ' ')
                ++i;
            if (i > start)
                out.emplace_back(text.substr(start, i - start));
        }
        return out;
    }

    std::string join(const std::vector<std::string>& items, std::string_view sep)
    {
        std::string out;
        for (std::size_t i = 0; i < items.size(); ++i)
        {
            if (i)
                out += sep;
            out += items[i];
        }
        return out;
    }

    std::vector<std::string> sorted_unique(std::vector<std::string> items)
    {
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
        return items;
    }

    void validate_config(const SyntheticConfig& config)
    {
        try
        {
            config.metric.validate();
        }
        catch (const Error& e)
        {
            throw Error(ErrorCode::ConfigInvalid, e.what());
        }
        if (!is_metric_name(config.metric.name))
            throw Error(ErrorCode::ConfigInvalid, fmt::format("metric name '{}' is not script-safe", config.metric.name));
        if (config.metric.marker != MetricSpec::default_marker(config.metric.name))
            throw Error(ErrorCode::ConfigInvalid, "synthetic tasks print the default metric marker");
        std::set<std::string> seen;
        for (auto const& t: config.techniques)
        {
            if (!is_keyword(t.keyword))
                throw Error(ErrorCode::ConfigInvalid, fmt::format("bad technique keyword '{}'", t.keyword));
            if (!seen.insert(t.keyword).second)
                throw Error(ErrorCode::ConfigInvalid, fmt::format("duplicate technique '{}'", t.keyword));
            if (!std::isfinite(t.delta) || t.p_error < 0.0 || t.p_corner < 0.0 || t.p_error + t.p_corner > 1.0)
                throw Error(ErrorCode::ConfigInvalid, fmt::format("bad row for technique '{}'", t.keyword));
        }
    }

    const SyntheticTechnique* find_row(const std::vector<SyntheticTechnique>& rows, std::string_view kw)
    {
        for (auto const& r: rows)
            if (r.keyword == kw)
                return &r;
        return nullptr;
    }
} // namespace

std::string_view to_string(IdeaAxis axis)
{
    switch (axis)
    {
        case IdeaAxis::Data: return "Data";
        case IdeaAxis::Model: return "Model";
        case IdeaAxis::Learning: return "Learning";
    }
    return "";
}

IdeaAxis axis_from_string(std::string_view text)
{
    for (auto a: kAllAxes)
        if (to_lower(to_string(a)) == to_lower(text))
            return a;
    throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown axis '{}'", text));
}

IdeaAxis technique_axis(std::size_t slot)
{
    static constexpr std::array<IdeaAxis, kTechniqueKeywords.size()> axes {
        IdeaAxis::Data,  IdeaAxis::Data,     IdeaAxis::Model,    IdeaAxis::Model,
        IdeaAxis::Model, IdeaAxis::Learning, IdeaAxis::Learning, IdeaAxis::Learning,
    };
    return axes.at(slot);
}

std::string synthetic_train_script(const SyntheticConfig& config, std::uint64_t seed, std::string_view techniques)
{
    std::string out(kHeader);
    out += "import sys\n\n";
    out += fmt::format("SEED = {}\n", seed);
    out += fmt::format("METRIC = \"{}\"\n", config.metric.name);
    out += fmt::format("BASE = {}\n", py_float(config.metric.m_init));
    out += "TABLE = {\n";
    for (auto const& t: config.techniques)
        out += fmt::format(
            "    \"{}\": ({}, {}, {}),\n", t.keyword, py_float(t.delta), py_float(t.p_error), py_float(t.p_corner));
    out += "}\n";
    out += fmt::format("TECHNIQUES = \"{}\"\n", techniques);
    out += kScriptBody;
    return out;
}

std::optional<SyntheticRun> simulate_synthetic_script(std::string_view source)
{
    if (source.substr(0, kHeader.size()) != kHeader)
        return std::nullopt;

    auto const seedText = line_value(source, "SEED = ");
    auto const metricText = line_value(source, "METRIC = \"");
    auto const baseText = line_value(source, "BASE = ");
    auto const techText = line_value(source, "TECHNIQUES = \"");
    if (!seedText || !metricText || !baseText || !techText)
        return std::nullopt;

    std::uint64_t seed = 0;
    if (auto const [p, ec] = std::from_chars(seedText->data(), seedText->data() + seedText->size(), seed);
        ec != std::errc() || p != seedText->data() + seedText->size())
        return std::nullopt;
    if (metricText->empty() || metricText->back() != '"')
        return std::nullopt;
    auto const base = parse_double(*baseText);
    if (!base || techText->empty() || techText->back() != '"')
        return std::nullopt;
    auto const techniques = techText->substr(0, techText->size() - 1);
    // Python's str.split() knows more whitespace than we do; stay on the
    // safe side and hand anything unusual to the interpreter.
    if (!std::all_of(techniques.begin(), techniques.end(), [](char c) { return c >= 0x20 && c <= 0x7e; }) ||
        techniques.find_first_of("\"\\") != std::string_view::npos)
        return std::nullopt;

    SyntheticConfig config;
    config.metric.name = std::string(metricText->substr(0, metricText->size() - 1));
    config.metric.m_init = *base;

    auto const tableBegin = source.find("\nTABLE = {\n");
    auto const tableEnd = source.find("\n}\n", tableBegin == std::string_view::npos ? 0 : tableBegin);
    if (tableBegin == std::string_view::npos || tableEnd == std::string_view::npos)
        return std::nullopt;
    auto const table = source.substr(tableBegin + 11, tableEnd + 1 - (tableBegin + 11));
    for (auto const& line: split_lines(table))
    {
        // "    \"kw\": (delta, p_error, p_corner),"
        constexpr std::string_view open = "    \"";
        if (line.substr(0, open.size()) != open)
            return std::nullopt;
        auto const q = line.find("\": (", open.size());
        if (q == std::string::npos || line.size() < 2 || line.substr(line.size() - 2) != "),")
            return std::nullopt;
        SyntheticTechnique row;
        row.keyword = line.substr(open.size(), q - open.size());
        auto const fields = std::string_view(line).substr(q + 4, line.size() - 2 - (q + 4));
        std::array<double, 3> values {};
        std::size_t start = 0;
        for (std::size_t i = 0; i < 3; ++i)
        {
            auto const comma = i < 2 ? fields.find(", ", start) : fields.size();
            if (comma == std::string_view::npos)
                return std::nullopt;
            auto const v = parse_double(fields.substr(start, comma - start));
            if (!v)
                return std::nullopt;
            values[i] = *v;
            start = comma + 2;
        }
        row.delta = values[0];
        row.p_error = values[1];
        row.p_corner = values[2];
        config.techniques.push_back(std::move(row));
    }

    if (synthetic_train_script(config, seed, techniques) != source)
        return std::nullopt;

    SyntheticRun run;
    auto const active = sorted_unique(split_ws(techniques));
    run.output = fmt::format("Training with techniques: {}\n", active.empty() ? "none" : join(active, ", "));
    for (auto const& kw: active)
        if (!find_row(config.techniques, kw))
        {
            run.output += fmt::format("ValueError: unknown technique '{}'\n", kw);
            run.exit_code = 1;
            return run;
        }
    auto const joined = join(active, ",");
    for (auto const& kw: active)
    {
        auto const* row = find_row(config.techniques, kw);
        auto const u = hash_unit(fmt::format("{}|{}|{}", seed, joined, kw));
        if (u < row->p_error)
        {
            run.output += fmt::format("RuntimeError: loss became nan after enabling {}\n", kw);
            run.exit_code = 1;
            return run;
        }
        if (u < row->p_error + row->p_corner)
        {
            run.output += fmt::format("RuntimeError: CUDA out of memory while enabling {}\n", kw);
            run.exit_code = 1;
            return run;
        }
    }
    auto value = *base;
    for (auto const& kw: active)
        value += find_row(config.techniques, kw)->delta;
    run.output += fmt::format("Final Validation {}: {:.6f}\n", config.metric.name, value);
    return run;
}

std::string technique_instruction(const std::vector<std::string>& keywords)
{
    return fmt::format("{}{} ", kInstructionHead, join(keywords, " "));
}

std::optional<std::vector<std::string>> parse_technique_instruction(std::string_view instruction)
{
    if (instruction.substr(0, kInstructionHead.size()) != kInstructionHead)
        return std::nullopt;
    auto keywords = split_ws(instruction.substr(kInstructionHead.size()));
    if (keywords.empty() || !std::all_of(keywords.begin(), keywords.end(), [](auto const& k) { return is_keyword(k); }))
        return std::nullopt;
    if (technique_instruction(keywords) != instruction)
        return std::nullopt;
    return keywords;
}

std::vector<std::string> applied_techniques(const AgentState& state)
{
    std::vector<std::string> out;
    for (auto const& entry: state.history)
    {
        auto const* action = std::get_if<Action>(&entry.action);
        auto const* edit = action ? std::get_if<actions::EditScript>(action) : nullptr;
        if (!edit || edit->save_name != state.task->train_script || entry.feedback.raw.starts_with("EnvError"))
            continue;
        if (auto const keywords = parse_technique_instruction(edit->edit_instruction))
            for (auto const& kw: *keywords)
                if (std::find(out.begin(), out.end(), kw) == out.end())
                    out.push_back(kw);
    }
    return out;
}

std::size_t technique_for_idea(std::string_view idea)
{
    // First matching cue wins; the order settles overlaps such as
    // "learning rate" vs "regularization".
    static const std::vector<std::pair<std::string_view, std::size_t>> cues {
        { "dropout", 2 },       { "label smooth", 6 },  { "weight decay", 7 }, { "ensembl", 4 },
        { "augment", 0 },       { "flip", 0 },          { "crop", 0 },         { "mixup", 0 },
        { "cutout", 0 },        { "rotat", 0 },         { "normaliz", 1 },     { "standardiz", 1 },
        { "scal", 1 },          { "learning rate", 5 }, { "schedul", 5 },      { "warmup", 5 },
        { "cosine", 5 },        { "optimizer", 5 },     { "momentum", 5 },     { "bagging", 4 },
        { "averag", 4 },        { "stacking", 4 },      { "focal", 6 },        { "loss", 6 },
        { "regulari", 7 },      { "l2", 7 },            { "early stop", 7 },   { "wider", 3 },
        { "width", 3 },         { "layer", 3 },         { "deeper", 3 },       { "capacity", 3 },
        { "complex", 3 },       { "residual", 3 },      { "attention", 3 },
    };
    auto const lower = to_lower(idea);
    for (auto const& [cue, slot]: cues)
        if (lower.find(cue) != std::string::npos)
            return slot;
    return fnv1a64(lower) % kTechniqueKeywords.size();
}

double synthetic_metric(const SyntheticConfig& config, std::vector<std::string> active)
{
    auto value = config.metric.m_init;
    for (auto const& kw: sorted_unique(std::move(active)))
    {
        auto const* row = find_row(config.techniques, kw);
        if (!row)
            throw Error(ErrorCode::InvalidArgument, fmt::format("unknown technique '{}'", kw));
        value += row->delta;
    }
    return value;
}

TaskSpec make_synthetic_task(std::uint64_t seed, const SyntheticConfig& config, const fs::path& dir)
{
    validate_config(config);
    config.limits.validate();

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorCode::IoFailure, fmt::format("cannot create {}: {}", dir.string(), ec.message()));

    TaskSpec task;
    task.task_id = config.task_id;
    task.research_problem = config.problem_text;
    task.metric = config.metric;
    task.bundle_root = dir;
    task.limits = config.limits;
    task.synthetic = config;
    task.synthetic_seed = seed;

    write_file((dir / kProblemFile).string(), config.problem_text);
    write_file((dir / task.train_script).string(), synthetic_train_script(config, seed));
    write_file((dir / task.eval_script).string(), kEvalScript);
    write_file((dir / "data_description.txt").string(),
               fmt::format("The dataset is a fixed synthetic benchmark. Each row has 32 numeric features and a target.\n"
                           "train.py trains a small model and prints the validation {} on the last line.\n",
                           config.metric.name));
    write_task_meta(task);
    return task;
}

std::vector<TaskPtr> make_synthetic_suite(const SyntheticSuiteConfig& config, const fs::path& root)
{
    if (config.n_tasks < 0)
        throw Error(ErrorCode::ConfigInvalid, "n_tasks must be non-negative");

    // Shared prior: mean reward (as a fraction of the m_init..m_best span)
    // and failure risk of each technique slot. The means sum to about zero,
    // so switching techniques on blindly is a wash on average.
    static constexpr std::array<double, 8> kMean { 0.30, 0.20, 0.12, -0.06, 0.22, -0.02, -0.30, -0.45 };
    static constexpr std::array<double, 8> kError { 0.02, 0.04, 0.10, 0.05, 0.12, 0.06, 0.08, 0.05 };
    auto const round_to = [](double v, double scale) { return std::round(v * scale) / scale; };

    std::vector<TaskPtr> tasks;
    for (int t = 0; t < config.n_tasks; ++t)
    {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
        SyntheticConfig c;
        c.task_id = fmt::format("{}-{:02d}", config.id_prefix, t);
        c.limits = config.limits;
        if (rng.uniform() < 0.5)
        {
            c.metric.name = "Accuracy";
            c.metric.beta = 1;
            c.metric.m_init = round_to(0.45 + 0.25 * rng.uniform(), 1e4);
            c.metric.m_best = round_to(std::min(0.99, c.metric.m_init + 0.25 + 0.1 * rng.uniform()), 1e4);
        }
        else
        {
            c.metric.name = "RMSE";
            c.metric.beta = -1;
            c.metric.m_init = round_to(0.3 + 0.3 * rng.uniform(), 1e4);
            c.metric.m_best = round_to(c.metric.m_init * (0.4 + 0.2 * rng.uniform()), 1e4);
        }
        c.metric.marker = MetricSpec::default_marker(c.metric.name);
        auto const span = c.metric.m_best - c.metric.m_init;
        for (std::size_t s = 0; s < kTechniqueKeywords.size(); ++s)
        {
            SyntheticTechnique row;
            row.keyword = std::string(kTechniqueKeywords[s]);
            row.delta = round_to(span * (kMean[s] + config.noise * rng.normal()), 1e6);
            row.p_error = std::clamp(round_to(kError[s] + 0.02 * rng.normal(), 1e4), 0.0, 0.5);
            row.p_corner = std::clamp(round_to(0.03 + 0.01 * rng.normal(), 1e4), 0.0, 0.2);
            c.techniques.push_back(std::move(row));
        }
        std::string names;
        for (auto const kw: kTechniqueKeywords)
            names += fmt::format("{}{}", names.empty() ? "" : ", ", kw);
        c.problem_text = fmt::format(
            "Improve the validation {0} of the model trained by train.py ({1} is better). The script reads the "
            "TECHNIQUES string near its top; every technique name listed there is enabled on the next run. "
            "Available techniques: {2}. Keep the script runnable. The score is the value printed as "
            "\"Final Validation {0}: <value>\".",
            c.metric.name,
            c.metric.beta > 0 ? "higher" : "lower",
            names);
        auto const taskSeed = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(t));
        tasks.push_back(std::make_shared<const TaskSpec>(make_synthetic_task(taskSeed, c, root / c.task_id)));
    }
    return tasks;
}

} // namespace agentml
