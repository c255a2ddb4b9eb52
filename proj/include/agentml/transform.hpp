// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/remote.hpp>

#include <string>
#include <string_view>

namespace agentml
{

/// Line diff in unified format with three lines of context and empty file
/// names, the way difflib renders it. Identical inputs give "".
std::string unified_diff(std::string_view before, std::string_view after);

/// The model behind the compound actions (Understand File, Edit Script).
/// Both calls throw Error when the request cannot be carried out; the
/// environment turns that into Error feedback.
class TextTransformer
{
  public:
    virtual ~TextTransformer() = default;

    virtual std::string edit(std::string_view source, std::string_view instruction) = 0;
    virtual std::string understand(std::string_view content, std::string_view things_to_look_for) = 0;
};

/// Deterministic stand-in. Edit instructions are lines of the form
/// "REPLACE <old> WITH <new>" applied in order to the first literal match;
/// "\n", "\t" and "\\" escapes are honoured. Other lines are ignored.
class StubTransformer final: public TextTransformer
{
  public:
    std::string edit(std::string_view source, std::string_view instruction) override;
    std::string understand(std::string_view content, std::string_view things_to_look_for) override;
};

/// Chat-completion backed coder model.
class RemoteTransformer final: public TextTransformer
{
  public:
    explicit RemoteTransformer(EndpointConfig config);

    std::string edit(std::string_view source, std::string_view instruction) override;
    std::string understand(std::string_view content, std::string_view things_to_look_for) override;

  private:
    ChatClient _client;
};

} // namespace agentml
