// SPDX-License-Identifier: Apache-2.0
#include <agentml/pool.hpp>

#include <fmt/format.h>

#include <array>
#include <cmath>
#include <optional>
#include <set>

namespace agentml
{

namespace
{
    constexpr std::string_view kAdviceTemplate =
        R"(You are given a machine learning task and an initial script on the task.

The machine learning task description is:
{task_description}

The initial script is:
{initial_script}
You should give {number_to_generate} advice that may potentially improve the metric performance(e.g. accuracy) of the script on this machine learning task. Your advice can only be related to {axis_focus}.
The advice in your answer should strictly follow the following format(one advice should be in a line), note that [advice] flag should be mentioned only once in your answer:
[advice]
YOUR ADVICE HERE
...)";

    std::string_view axis_focus(IdeaAxis axis)
    {
        switch (axis)
        {
            case IdeaAxis::Data: return "data preprocessing";
            case IdeaAxis::Model: return "the model architecture";
            case IdeaAxis::Learning: return "the learning procedure (optimizer, schedule, loss and regularization)";
        }
        return "";
    }

    std::vector<std::string> words(std::string_view text)
    {
        std::vector<std::string> out;
        std::string w;
        for (char c: to_lower(text) + " ")
        {
            if (std::isalnum(static_cast<unsigned char>(c)))
                w += c;
            else if (!w.empty())
            {
                out.push_back(w);
                w.clear();
            }
        }
        return out;
    }

    void normalize(std::vector<double>& v)
    {
        double norm = 0.0;
        for (double x: v)
            norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& x: v)
                x /= norm;
    }

    std::vector<double> mean_distances(const std::vector<IdeaCandidate>& c)
    {
        auto const n = c.size();
        std::vector<double> mean(n, 0.0);
        if (n < 2)
            return mean;
        for (std::size_t i = 0; i < n; ++i)
        {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i)
                    sum += euclidean(c[i].embedding, c[j].embedding);
            mean[i] = sum / static_cast<double>(n - 1);
        }
        return mean;
    }

    void check_selection(const std::vector<IdeaCandidate>& candidates, std::size_t k)
    {
        if (candidates.empty())
            throw Error(ErrorCode::EmptyInput, "no candidates");
        if (k > candidates.size())
            throw Error(ErrorCode::KTooLarge, fmt::format("k={} exceeds {} candidates", k, candidates.size()));
        auto const dim = candidates.front().embedding.size();
        for (auto const& c: candidates)
            if (c.embedding.size() != dim || dim == 0)
                throw Error(ErrorCode::ShapeMismatch, "candidate embeddings differ in length or are missing");
    }
} // namespace

std::vector<std::vector<double>> HashEmbedder::embed(const std::vector<std::string>& texts)
{
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (auto const& text: texts)
    {
        std::vector<double> v(_dim, 0.0);
        auto const w = words(text);
        auto add = [&](std::string const& feature) {
            auto const h = fnv1a64(feature);
            v[h % _dim] += (splitmix64(h) & 1) ? 1.0 : -1.0;
        };
        for (std::size_t i = 0; i < w.size(); ++i)
        {
            add(w[i]);
            if (i + 1 < w.size())
                add(w[i] + " " + w[i + 1]);
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::string HashEmbedder::id() const
{
    return fmt::format("hash{}", _dim);
}

std::vector<std::string> FixtureGenerator::generate(IdeaAxis axis, std::size_t m)
{
    auto const path = _dir / fmt::format("{}.txt", to_lower(to_string(axis)));
    std::string content;
    try
    {
        content = read_file(path.string());
    }
    catch (const Error& e)
    {
        throw Error(ErrorCode::GeneratorUnavailable, e.what());
    }
    std::vector<std::string> ideas;
    for (auto const& line: split_lines(content))
    {
        auto idea = trim(line);
        if (!idea.empty() && ideas.size() < m)
            ideas.push_back(std::move(idea));
    }
    return ideas;
}

std::string advice_prompt(IdeaAxis axis, std::string_view task_description, std::string_view initial_script, std::size_t m)
{
    // One pass over the template so slot-like text inside the values is
    // left alone.
    std::string out;
    std::string_view const tmpl = kAdviceTemplate;
    auto const count = std::to_string(m);
    std::array<std::pair<std::string_view, std::string_view>, 4> const slots { {
        { "{task_description}", task_description },
        { "{initial_script}", initial_script },
        { "{number_to_generate}", count },
        { "{axis_focus}", axis_focus(axis) },
    } };
    std::size_t i = 0;
    while (i < tmpl.size())
    {
        bool hit = false;
        for (auto const& [slot, value]: slots)
            if (tmpl.substr(i, slot.size()) == slot)
            {
                out += value;
                i += slot.size();
                hit = true;
                break;
            }
        if (!hit)
            out += tmpl[i++];
    }
    return out;
}

std::vector<std::string> parse_advice(std::string_view reply)
{
    // No flag, no ideas: the prompt makes the flag mandatory.
    auto const flag = reply.find("[advice]");
    std::vector<std::string> ideas;
    if (flag == std::string_view::npos)
        return ideas;
    auto const body = reply.substr(flag + 8);
    for (auto const& raw: split_lines(body))
    {
        auto line = trim(raw);
        // Strip list markers such as "-", "*", "3." or "3)".
        std::size_t p = 0;
        while (p < line.size() && std::isdigit(static_cast<unsigned char>(line[p])))
            ++p;
        if (p > 0 && p < line.size() && (line[p] == '.' || line[p] == ')'))
            line = trim(line.substr(p + 1));
        else if (!line.empty() && (line[0] == '-' || line[0] == '*'))
            line = trim(line.substr(1));
        if (line.empty() || line == "..." || line == "YOUR ADVICE HERE" || line == "[advice]")
            continue;
        ideas.push_back(std::move(line));
    }
    return ideas;
}

RemoteGenerator::RemoteGenerator(EndpointConfig config, std::string task_description, std::string initial_script):
    _client(std::move(config), ErrorCode::GeneratorUnavailable),
    _taskDescription(std::move(task_description)),
    _initialScript(std::move(initial_script))
{
}

std::vector<std::string> RemoteGenerator::generate(IdeaAxis axis, std::size_t m)
{
    auto const reply = _client.complete({ { "user", advice_prompt(axis, _taskDescription, _initialScript, m) } });
    auto ideas = parse_advice(reply);
    if (ideas.empty())
        throw Error(ErrorCode::GeneratorUnavailable, "generator reply contained no advice lines");
    if (ideas.size() > m)
        ideas.resize(m);
    return ideas;
}

std::string RemoteGenerator::id() const
{
    return fmt::format("remote:{}", _client.config().model);
}

std::vector<IdeaCandidate>
generate_candidates(IdeaAxis axis, IdeaGenerator& generator, std::size_t m, Embedder& embedder, std::size_t* duplicates)
{
    auto const raw = generator.generate(axis, m);
    std::vector<std::string> texts;
    std::set<std::string> seen;
    for (auto const& t: raw)
        if (seen.insert(t).second)
            texts.push_back(t);
    auto const dropped = raw.size() - texts.size();
    if (dropped > 0)
        fmt::print(stderr, "warning: {} duplicate {} idea(s) dropped\n", dropped, to_string(axis));
    if (duplicates)
        *duplicates = dropped;

    auto embeddings = embedder.embed(texts);
    if (embeddings.size() != texts.size())
        throw Error(ErrorCode::GeneratorUnavailable, "embedder returned the wrong number of vectors");
    std::vector<IdeaCandidate> out;
    for (std::size_t i = 0; i < texts.size(); ++i)
    {
        normalize(embeddings[i]);
        out.push_back({ axis, texts[i], std::move(embeddings[i]) });
    }
    return out;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size())
        throw Error(ErrorCode::ShapeMismatch, "embedding length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        auto const d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

std::vector<std::size_t> farthest_point_sample(const std::vector<IdeaCandidate>& candidates, std::size_t k)
{
    check_selection(candidates, k);
    std::vector<std::size_t> picked;
    if (k == 0)
        return picked;
    auto const n = candidates.size();
    auto const mean = mean_distances(candidates);
    std::size_t seed = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (mean[i] > mean[seed])
            seed = i;
    picked.push_back(seed);

    std::vector<double> nearest(n);
    std::vector<bool> taken(n, false);
    taken[seed] = true;
    for (std::size_t i = 0; i < n; ++i)
        nearest[i] = euclidean(candidates[i].embedding, candidates[seed].embedding);
    while (picked.size() < k)
    {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i] && (!best || nearest[i] > nearest[*best]))
                best = i;
        picked.push_back(*best);
        taken[*best] = true;
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], euclidean(candidates[i].embedding, candidates[*best].embedding));
    }
    return picked;
}

std::vector<std::size_t> avg_distance_top_k(const std::vector<IdeaCandidate>& candidates, std::size_t k)
{
    check_selection(candidates, k);
    auto const mean = mean_distances(candidates);
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
    order.resize(k);
    return order;
}

std::string_view to_string(Selection s)
{
    return s == Selection::FarthestPoint ? "fps" : "avgdist";
}

Selection selection_from_string(std::string_view text)
{
    if (text == "fps")
        return Selection::FarthestPoint;
    if (text == "avgdist")
        return Selection::AverageDistance;
    throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown selection '{}' (fps or avgdist)", text));
}

Json ActionPool::to_json() const
{
    Json record { { "schema_version", kSchemaVersion },
                  { "kind", "action_pool" },
                  { "k", k },
                  { "provenance", provenance },
                  { "axes", Json::object() } };
    for (auto const& [axis, ideas]: axes)
    {
        Json list = Json::array();
        for (auto const& idea: ideas)
            list.push_back({ { "text", idea.text }, { "embedding", idea.embedding } });
        record["axes"][std::string(to_string(axis))] = std::move(list);
    }
    return record;
}

ActionPool ActionPool::from_json(const Json& record)
{
    try
    {
        if (record.at("schema_version").get<int>() != kSchemaVersion || record.at("kind") != "action_pool")
            throw Error(ErrorCode::SchemaViolation, "not an action_pool record of this schema version");
        ActionPool pool;
        pool.k = record.at("k").get<std::size_t>();
        pool.provenance = record.at("provenance");
        for (auto const& [name, list]: record.at("axes").items())
        {
            auto const axis = axis_from_string(name);
            auto& ideas = pool.axes[axis];
            for (auto const& item: list)
                ideas.push_back({ axis, item.at("text").get<std::string>(), item.at("embedding").get<std::vector<double>>() });
            if (ideas.size() != pool.k)
                throw Error(ErrorCode::SchemaViolation, fmt::format("axis {} holds {} ideas, expected {}", name, ideas.size(), pool.k));
        }
        return pool;
    }
    catch (const Json::exception& e)
    {
        throw Error(ErrorCode::SchemaViolation, fmt::format("malformed action pool: {}", e.what()));
    }
}

std::string ActionPool::digest() const
{
    return sha256_hex(to_json().dump());
}

ActionPool build_action_pool(IdeaGenerator& generator, Embedder& embedder, const PoolBuildConfig& config)
{
    ActionPool pool;
    pool.k = config.k;
    Json perAxis = Json::object();
    for (auto const axis: kAllAxes)
    {
        std::size_t duplicates = 0;
        auto const candidates = generate_candidates(axis, generator, config.m, embedder, &duplicates);
        if (candidates.size() < config.k)
            throw Error(ErrorCode::TooFewCandidates,
                        fmt::format("{} axis has {} distinct ideas, {} needed", to_string(axis), candidates.size(), config.k));
        auto const picked = config.selection == Selection::FarthestPoint ? farthest_point_sample(candidates, config.k)
                                                                          : avg_distance_top_k(candidates, config.k);
        auto& ideas = pool.axes[axis];
        for (auto i: picked)
            ideas.push_back(candidates[i]);
        perAxis[std::string(to_string(axis))] = { { "candidates", candidates.size() }, { "duplicates", duplicates } };
    }
    pool.provenance = { { "generator", generator.id() },
                        { "embedder", embedder.id() },
                        { "selection", to_string(config.selection) },
                        { "m", config.m },
                        { "per_axis", perAxis } };
    return pool;
}

std::vector<PrefixIdea> sample_exploration_prefix(const ActionPool& pool, Rng& rng)
{
    auto const count = 1 + rng.below(3);
    std::vector<IdeaAxis> axes(kAllAxes.begin(), kAllAxes.end());
    rng.shuffle(axes);
    std::vector<PrefixIdea> out;
    for (std::size_t i = 0; i < count; ++i)
    {
        auto const& ideas = pool.axes.at(axes[i]);
        if (ideas.empty())
            throw Error(ErrorCode::EmptyInput, fmt::format("pool axis {} is empty", to_string(axes[i])));
        out.push_back({ axes[i], ideas[rng.below(ideas.size())].text });
    }
    return out;
}

std::string format_enriched_problem(std::string_view base_problem, const std::vector<std::string>& ideas)
{
    if (ideas.empty())
        return std::string(base_problem);
    auto out = fmt::format("{}\n\nIn the first step, prioritize implementing the following idea{}, in this order:\n",
                           base_problem,
                           ideas.size() > 1 ? "s" : "");
    for (std::size_t i = 0; i < ideas.size(); ++i)
        out += fmt::format("{}. {}\n", i + 1, ideas[i]);
    return out;
}

std::vector<std::string> idea_texts(const std::vector<PrefixIdea>& ideas)
{
    std::vector<std::string> out;
    for (auto const& i: ideas)
        out.push_back(i.text);
    return out;
}

} // namespace agentml
