// SPDX-License-Identifier: Apache-2.0
#include <agentml/transform.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace agentml
{

namespace
{
    constexpr std::size_t kContext = 3;

    struct Run
    {
        bool equal;
        std::size_t i1, i2, j1, j2;
    };

    // Runs of equal / changed lines from a longest-common-subsequence walk.
    std::vector<Run> diff_runs(const std::vector<std::string>& a, const std::vector<std::string>& b)
    {
        auto const n = a.size();
        auto const m = b.size();
        std::vector<Run> runs;
        if (n * m > 25'000'000)
        {
            // Too big to align; report the whole file as replaced.
            runs.push_back({ false, 0, n, 0, m });
            return runs;
        }
        std::vector<std::uint32_t> lcs((n + 1) * (m + 1), 0);
        auto const at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return lcs[i * (m + 1) + j]; };
        for (std::size_t i = n; i-- > 0;)
            for (std::size_t j = m; j-- > 0;)
                at(i, j) = a[i] == b[j] ? at(i + 1, j + 1) + 1 : std::max(at(i + 1, j), at(i, j + 1));

        std::size_t i = 0;
        std::size_t j = 0;
        auto push = [&](bool equal, std::size_t di, std::size_t dj) {
            if (!runs.empty() && runs.back().equal == equal)
            {
                runs.back().i2 += di;
                runs.back().j2 += dj;
            }
            else
                runs.push_back({ equal, i, i + di, j, j + dj });
            i += di;
            j += dj;
        };
        while (i < n || j < m)
        {
            if (i < n && j < m && a[i] == b[j])
                push(true, 1, 1);
            else if (j >= m || (i < n && at(i + 1, j) >= at(i, j + 1)))
                push(false, 1, 0);
            else
                push(false, 0, 1);
        }
        return runs;
    }

    std::string range(std::size_t start, std::size_t length)
    {
        if (length == 1)
            return fmt::format("{}", start + 1);
        if (length == 0)
            return fmt::format("{},0", start);
        return fmt::format("{},{}", start + 1, length);
    }

    std::string unescape(std::string_view text)
    {
        std::string out;
        for (std::size_t i = 0; i < text.size(); ++i)
        {
            if (text[i] == '\\' && i + 1 < text.size())
            {
                auto const c = text[i + 1];
                if (c == 'n' || c == 't' || c == '\\')
                {
                    out += c == 'n' ? '\n' : c == 't' ? '\t' : '\\';
                    ++i;
                    continue;
                }
            }
            out += text[i];
        }
        return out;
    }

    std::string fenced_code(const std::string& reply)
    {
        auto const open = reply.find("```");
        if (open == std::string::npos)
            return reply;
        auto const body = reply.find('\n', open);
        if (body == std::string::npos)
            return reply;
        auto const close = reply.find("```", body + 1);
        return reply.substr(body + 1, close == std::string::npos ? std::string::npos : close - body - 1);
    }
} // namespace

std::string unified_diff(std::string_view before, std::string_view after)
{
    auto const a = split_lines(before);
    auto const b = split_lines(after);
    auto runs = diff_runs(a, b);
    if (std::none_of(runs.begin(), runs.end(), [](auto const& r) { return !r.equal; }))
        return "";

    // Trim equal runs to the context window and split where two changes are
    // more than twice the context apart.
    std::vector<std::vector<Run>> hunks(1);
    for (std::size_t k = 0; k < runs.size(); ++k)
    {
        auto r = runs[k];
        if (r.equal)
        {
            bool const first = k == 0;
            bool const last = k + 1 == runs.size();
            auto const len = r.i2 - r.i1;
            if (first)
            {
                auto const keep = std::min(len, kContext);
                r.i1 = r.i2 - keep;
                r.j1 = r.j2 - keep;
            }
            else if (last)
            {
                auto const keep = std::min(len, kContext);
                r.i2 = r.i1 + keep;
                r.j2 = r.j1 + keep;
            }
            else if (len > 2 * kContext)
            {
                hunks.back().push_back({ true, r.i1, r.i1 + kContext, r.j1, r.j1 + kContext });
                hunks.emplace_back();
                r.i1 = r.i2 - kContext;
                r.j1 = r.j2 - kContext;
            }
            if (r.i2 > r.i1)
                hunks.back().push_back(r);
        }
        else
            hunks.back().push_back(r);
    }

    std::string out = "--- \n+++ \n";
    for (auto const& hunk: hunks)
    {
        auto const& front = hunk.front();
        auto const& back = hunk.back();
        out += fmt::format("@@ -{} +{} @@\n", range(front.i1, back.i2 - front.i1), range(front.j1, back.j2 - front.j1));
        for (auto const& r: hunk)
        {
            if (r.equal)
            {
                for (auto i = r.i1; i < r.i2; ++i)
                    out += fmt::format(" {}\n", a[i]);
                continue;
            }
            for (auto i = r.i1; i < r.i2; ++i)
                out += fmt::format("-{}\n", a[i]);
            for (auto j = r.j1; j < r.j2; ++j)
                out += fmt::format("+{}\n", b[j]);
        }
    }
    return out;
}

std::string StubTransformer::edit(std::string_view source, std::string_view instruction)
{
    constexpr std::string_view kReplace = "REPLACE ";
    constexpr std::string_view kWith = " WITH ";
    std::string text(source);
    for (auto const& line: split_lines(instruction))
    {
        if (line.substr(0, kReplace.size()) != kReplace)
            continue;
        auto const with = line.find(kWith, kReplace.size());
        if (with == std::string::npos)
            continue;
        auto const from = unescape(std::string_view(line).substr(kReplace.size(), with - kReplace.size()));
        auto const to = unescape(std::string_view(line).substr(with + kWith.size()));
        if (from.empty())
            throw Error(ErrorCode::InvalidArgument, "REPLACE with empty target");
        auto const pos = text.find(from);
        if (pos == std::string::npos)
            throw Error(ErrorCode::InvalidArgument, fmt::format("text to replace not found: {}", from));
        text.replace(pos, from.size(), to);
    }
    return text;
}

std::string StubTransformer::understand(std::string_view content, std::string_view things_to_look_for)
{
    std::set<std::string> terms;
    std::string word;
    for (char c: to_lower(things_to_look_for) + " ")
    {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_')
            word += c;
        else
        {
            if (word.size() >= 3)
                terms.insert(word);
            word.clear();
        }
    }
    std::string out;
    int hits = 0;
    auto const lines = split_lines(content);
    for (std::size_t i = 0; i < lines.size() && hits < 40; ++i)
    {
        auto const lower = to_lower(lines[i]);
        if (std::any_of(terms.begin(), terms.end(), [&](auto const& t) { return lower.find(t) != std::string::npos; }))
        {
            out += fmt::format("line {}: {}\n", i + 1, lines[i]);
            ++hits;
        }
    }
    if (hits == 0)
        return fmt::format("In this segment, I cannot find {}.", trim(things_to_look_for));
    return fmt::format("Lines relevant to \"{}\":\n{}", trim(things_to_look_for), out);
}

RemoteTransformer::RemoteTransformer(EndpointConfig config): _client(std::move(config), ErrorCode::PolicyUnavailable)
{
}

std::string RemoteTransformer::edit(std::string_view source, std::string_view instruction)
{
    auto const prompt = fmt::format("Given this python script:\n```python\n{}\n```\nEdit the script by following the "
                                    "instruction:\n{}\nProvide the full code after the edit, making no other changes. "
                                    "Start the python code with \"```python\".\n",
                                    source,
                                    instruction);
    auto code = fenced_code(_client.complete({ { "user", prompt } }));
    if (!code.empty() && code.back() != '\n')
        code += '\n';
    return code;
}

std::string RemoteTransformer::understand(std::string_view content, std::string_view things_to_look_for)
{
    auto const prompt = fmt::format(
        "Given this file:\n```\n{}\n```\nHere is a detailed description on what to look for and what should be "
        "returned: {}\nThe description should be short and reference critical lines of the file. Only describe what "
        "is objectively confirmed by the file content. If you cannot find the answer to certain parts of the request, "
        "say \"In this segment, I cannot find ...\".\n",
        content,
        things_to_look_for);
    return _client.complete({ { "user", prompt } });
}

} // namespace agentml
