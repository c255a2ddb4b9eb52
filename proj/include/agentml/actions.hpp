// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/common.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace agentml
{

enum class ActionKind
{
    ListFiles,
    CopyFile,
    InspectScriptLines,
    ExecuteScript,
    FinalAnswer,
    UnderstandFile,
    EditScript,
};

inline constexpr std::array kAllActionKinds {
    ActionKind::ListFiles,     ActionKind::CopyFile,    ActionKind::InspectScriptLines, ActionKind::ExecuteScript,
    ActionKind::FinalAnswer,   ActionKind::UnderstandFile, ActionKind::EditScript,
};

namespace actions
{
    struct ListFiles
    {
        std::string dir_path;
        bool operator==(const ListFiles&) const = default;
    };

    struct CopyFile
    {
        std::string source;
        std::string destination;
        bool operator==(const CopyFile&) const = default;
    };

    struct InspectScriptLines
    {
        std::string script_name;
        std::int64_t start_line_number = 1;
        std::int64_t end_line_number = 1;
        bool operator==(const InspectScriptLines&) const = default;
    };

    struct ExecuteScript
    {
        std::string script_name;
        bool operator==(const ExecuteScript&) const = default;
    };

    struct FinalAnswer
    {
        std::string final_answer;
        bool operator==(const FinalAnswer&) const = default;
    };

    struct UnderstandFile
    {
        std::string file_name;
        std::string things_to_look_for;
        bool operator==(const UnderstandFile&) const = default;
    };

    struct EditScript
    {
        std::string script_name;
        std::string edit_instruction;
        std::string save_name;
        bool operator==(const EditScript&) const = default;
    };
} // namespace actions

using Action = std::variant<actions::ListFiles,
                            actions::CopyFile,
                            actions::InspectScriptLines,
                            actions::ExecuteScript,
                            actions::FinalAnswer,
                            actions::UnderstandFile,
                            actions::EditScript>;

ActionKind kind_of(const Action& action);

/// Name as it appears in the tools prompt. EditScript is "Edit Script (AI)".
std::string_view canonical_name(ActionKind kind);

/// Accepts the canonical names plus the "Edit Script" alias.
std::optional<ActionKind> kind_from_name(std::string_view name);

/// Argument keys in tools-prompt order.
std::vector<std::string_view> required_keys(ActionKind kind);

/// The Action Input record, keys in tools-prompt order.
Json action_input(const Action& action);

struct InvalidAction
{
    enum class Reason
    {
        UnknownName,
        MissingArg,
        ExtraArg,
        BadArgType,
    };
    Reason reason;
    std::string detail; // offending name or key
    bool operator==(const InvalidAction&) const = default;
};

struct ParseError
{
    enum class Reason
    {
        MissingSection,
        BadActionInput,
        SectionOrder,
    };
    Reason reason;
    std::string detail;
    bool operator==(const ParseError&) const = default;
};

std::string_view to_string(InvalidAction::Reason reason);
std::string_view to_string(ParseError::Reason reason);

/// Builds an Action from a tool name and its input record, enforcing exact
/// key sets and value types.
std::variant<Action, InvalidAction> action_from_input(std::string_view name, const Json& input);

/// Outcome of interpreting one agent response.
using ParsedAction = std::variant<Action, InvalidAction, ParseError>;

/// Human-readable observation text for a rejected response.
std::string describe_rejection(const ParsedAction& parsed);

Json to_json(const ParsedAction& parsed);
ParsedAction parsed_action_from_json(const Json& record);

} // namespace agentml
