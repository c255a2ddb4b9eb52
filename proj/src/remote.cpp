// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <agentml/remote.hpp>

#include <fmt/format.h>

#include <cstdlib>

namespace agentml
{

namespace
{
    struct SplitUrl
    {
        std::string origin; // scheme://host[:port]
        std::string base;   // path prefix without trailing slash
    };

    SplitUrl split_url(const std::string& url, ErrorCode failure)
    {
        auto const scheme = url.find("://");
        if (scheme == std::string::npos)
            throw Error(failure, fmt::format("endpoint url '{}' has no scheme", url));
        auto const slash = url.find('/', scheme + 3);
        SplitUrl out;
        out.origin = url.substr(0, slash);
        out.base = slash == std::string::npos ? "" : url.substr(slash);
        while (!out.base.empty() && out.base.back() == '/')
            out.base.pop_back();
        return out;
    }

    Json post_json(const EndpointConfig& config, std::string_view route, const Json& body, ErrorCode failure)
    {
        auto const url = split_url(config.url, failure);
        httplib::Client client(url.origin);
        auto const seconds = static_cast<time_t>(config.timeout.count());
        client.set_connection_timeout(std::min<time_t>(seconds, 30), 0);
        client.set_read_timeout(seconds, 0);
        client.set_write_timeout(seconds, 0);
        httplib::Headers headers;
        if (auto const* key = std::getenv(config.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", fmt::format("Bearer {}", key));

        auto const path = fmt::format("{}{}", url.base, route);
        auto const response = client.Post(path, headers, body.dump(), "application/json");
        if (!response)
            throw Error(failure, fmt::format("POST {}{}: {}", url.origin, path, httplib::to_string(response.error())));
        if (response->status != 200)
            throw Error(failure,
                        fmt::format("POST {}{}: HTTP {}: {}", url.origin, path, response->status, response->body.substr(0, 500)));
        try
        {
            return Json::parse(response->body);
        }
        catch (const Json::exception& e)
        {
            throw Error(failure, fmt::format("POST {}{}: malformed JSON reply: {}", url.origin, path, e.what()));
        }
    }
} // namespace

Json EndpointConfig::to_json() const
{
    return Json { { "url", url },
                  { "model", model },
                  { "api_key_env", api_key_env },
                  { "timeout_s", timeout.count() },
                  { "temperature", temperature },
                  { "max_tokens", max_tokens } };
}

ChatClient::ChatClient(EndpointConfig config, ErrorCode failure): _config(std::move(config)), _failure(failure)
{
}

std::string ChatClient::complete(const std::vector<ChatMessage>& messages) const
{
    Json body { { "model", _config.model },
                { "temperature", _config.temperature },
                { "max_tokens", _config.max_tokens },
                { "messages", Json::array() } };
    for (auto const& m: messages)
        body["messages"].push_back({ { "role", m.role }, { "content", m.content } });

    auto const reply = post_json(_config, "/chat/completions", body, _failure);
    try
    {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    catch (const Json::exception& e)
    {
        throw Error(_failure, fmt::format("chat reply lacks choices[0].message.content: {}", e.what()));
    }
}

EmbeddingClient::EmbeddingClient(EndpointConfig config): _config(std::move(config))
{
}

std::vector<std::vector<double>> EmbeddingClient::embed(const std::vector<std::string>& texts) const
{
    if (texts.empty())
        return {};
    Json body { { "model", _config.model }, { "input", texts } };
    auto const reply = post_json(_config, "/embeddings", body, ErrorCode::GeneratorUnavailable);
    std::vector<std::vector<double>> out(texts.size());
    try
    {
        auto const& data = reply.at("data");
        if (data.size() != texts.size())
            throw Error(ErrorCode::GeneratorUnavailable,
                        fmt::format("embedding reply has {} rows for {} inputs", data.size(), texts.size()));
        for (std::size_t i = 0; i < data.size(); ++i)
        {
            auto const index = data[i].value("index", i);
            if (index >= out.size())
                throw Error(ErrorCode::GeneratorUnavailable, "embedding reply index out of range");
            out[index] = data[i].at("embedding").get<std::vector<double>>();
        }
    }
    catch (const Json::exception& e)
    {
        throw Error(ErrorCode::GeneratorUnavailable, fmt::format("malformed embedding reply: {}", e.what()));
    }
    return out;
}

} // namespace agentml
