// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/task.hpp>

#include <string>
#include <vector>

namespace agentml
{

/// An OpenAI-style HTTP endpoint. url is the API base, e.g.
/// "http://127.0.0.1:8000/v1"; requests go to <base>/chat/completions and
/// <base>/embeddings. The bearer token, if any, is read from api_key_env.
struct EndpointConfig
{
    std::string url;
    std::string model;
    std::string api_key_env = "AGENTML_API_KEY";
    Seconds timeout { 120.0 };
    double temperature = 0.0;
    int max_tokens = 2048;

    [[nodiscard]] Json to_json() const; // never includes the key
};

struct ChatMessage
{
    std::string role;
    std::string content;
};

/// Throws Error with `failure` as code on transport or protocol errors, so
/// callers decide whether that is PolicyUnavailable or GeneratorUnavailable.
class ChatClient
{
  public:
    explicit ChatClient(EndpointConfig config, ErrorCode failure = ErrorCode::PolicyUnavailable);

    std::string complete(const std::vector<ChatMessage>& messages) const;

    [[nodiscard]] const EndpointConfig& config() const { return _config; }

  private:
    EndpointConfig _config;
    ErrorCode _failure;
};

class EmbeddingClient
{
  public:
    explicit EmbeddingClient(EndpointConfig config);

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const;

  private:
    EndpointConfig _config;
};

} // namespace agentml
