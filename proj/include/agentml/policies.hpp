// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/episode.hpp>
#include <agentml/remote.hpp>

#include <memory>
#include <string>

namespace agentml
{

/// Response text in the required six-section layout for a given action.
std::string compose_response(std::string_view reflection,
                             std::string_view plan,
                             std::string_view fact_check,
                             std::string_view thought,
                             const Action& action);

/// Scripted expert for synthetic tasks. It reads the task's edit-response
/// table (the stand-in for an expert model's competence), implements the
/// exploration ideas first when it is given any, then adds the technique
/// with the best expected gain one edit at a time, runs the script and
/// submits. On non-synthetic tasks it lists, executes and submits.
class ExpertBackend final: public PolicyBackend
{
  public:
    std::string respond(const PolicyRequest& request) override;
    [[nodiscard]] std::string id() const override { return "expert"; }
};

/// Adds every technique that moves the metric toward m_best in one edit,
/// then submits. Deterministic.
class ImproverBackend final: public PolicyBackend
{
  public:
    std::string respond(const PolicyRequest& request) override;
    [[nodiscard]] std::string id() const override { return "improver"; }
};

/// Adds every technique that moves the metric away from m_best, then submits.
class WorsenerBackend final: public PolicyBackend
{
  public:
    std::string respond(const PolicyRequest& request) override;
    [[nodiscard]] std::string id() const override { return "worsener"; }
};

/// Submits a final answer immediately.
class FinalAnswerBackend final: public PolicyBackend
{
  public:
    std::string respond(const PolicyRequest& request) override;
    [[nodiscard]] std::string id() const override { return "final"; }
};

/// Chat-completion backend: the initial prompt as the system message, then
/// alternating assistant responses and user observations.
class RemoteBackend final: public PolicyBackend
{
  public:
    RemoteBackend(EndpointConfig config, PromptTemplateSet templates = PromptTemplateSet::defaults());
    std::string respond(const PolicyRequest& request) override;
    [[nodiscard]] std::string id() const override;

  private:
    ChatClient _client;
    PromptTemplateSet _templates;
};

/// The chat messages RemoteBackend sends for a state.
std::vector<ChatMessage> chat_messages(const AgentState& state, const PromptTemplateSet& templates);

} // namespace agentml
