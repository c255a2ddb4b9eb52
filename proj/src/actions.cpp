// SPDX-License-Identifier: Apache-2.0
#include <agentml/actions.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace agentml
{

ActionKind kind_of(const Action& action)
{
    return static_cast<ActionKind>(action.index());
}

std::string_view canonical_name(ActionKind kind)
{
    switch (kind)
    {
        case ActionKind::ListFiles: return "List Files";
        case ActionKind::CopyFile: return "Copy File";
        case ActionKind::InspectScriptLines: return "Inspect Script Lines";
        case ActionKind::ExecuteScript: return "Execute Script";
        case ActionKind::FinalAnswer: return "Final Answer";
        case ActionKind::UnderstandFile: return "Understand File";
        case ActionKind::EditScript: return "Edit Script (AI)";
    }
    return "";
}

std::optional<ActionKind> kind_from_name(std::string_view name)
{
    if (name == "Edit Script")
        return ActionKind::EditScript;
    for (auto kind: kAllActionKinds)
        if (canonical_name(kind) == name)
            return kind;
    return std::nullopt;
}

std::vector<std::string_view> required_keys(ActionKind kind)
{
    switch (kind)
    {
        case ActionKind::ListFiles: return { "dir_path" };
        case ActionKind::CopyFile: return { "source", "destination" };
        case ActionKind::InspectScriptLines: return { "script_name", "start_line_number", "end_line_number" };
        case ActionKind::ExecuteScript: return { "script_name" };
        case ActionKind::FinalAnswer: return { "final_answer" };
        case ActionKind::UnderstandFile: return { "file_name", "things_to_look_for" };
        case ActionKind::EditScript: return { "script_name", "edit_instruction", "save_name" };
    }
    return {};
}

Json action_input(const Action& action)
{
    using namespace actions;
    Json input = Json::object();
    std::visit(
        [&](const auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, ListFiles>)
                input["dir_path"] = a.dir_path;
            else if constexpr (std::is_same_v<T, CopyFile>)
            {
                input["source"] = a.source;
                input["destination"] = a.destination;
            }
            else if constexpr (std::is_same_v<T, InspectScriptLines>)
            {
                input["script_name"] = a.script_name;
                input["start_line_number"] = a.start_line_number;
                input["end_line_number"] = a.end_line_number;
            }
            else if constexpr (std::is_same_v<T, ExecuteScript>)
                input["script_name"] = a.script_name;
            else if constexpr (std::is_same_v<T, FinalAnswer>)
                input["final_answer"] = a.final_answer;
            else if constexpr (std::is_same_v<T, UnderstandFile>)
            {
                input["file_name"] = a.file_name;
                input["things_to_look_for"] = a.things_to_look_for;
            }
            else if constexpr (std::is_same_v<T, EditScript>)
            {
                input["script_name"] = a.script_name;
                input["edit_instruction"] = a.edit_instruction;
                input["save_name"] = a.save_name;
            }
        },
        action);
    return input;
}

std::string_view to_string(InvalidAction::Reason reason)
{
    switch (reason)
    {
        case InvalidAction::Reason::UnknownName: return "UnknownName";
        case InvalidAction::Reason::MissingArg: return "MissingArg";
        case InvalidAction::Reason::ExtraArg: return "ExtraArg";
        case InvalidAction::Reason::BadArgType: return "BadArgType";
    }
    return "";
}

std::string_view to_string(ParseError::Reason reason)
{
    switch (reason)
    {
        case ParseError::Reason::MissingSection: return "MissingSection";
        case ParseError::Reason::BadActionInput: return "BadActionInput";
        case ParseError::Reason::SectionOrder: return "SectionOrder";
    }
    return "";
}

namespace
{
    template <typename E>
    E reason_from_string(std::string_view text, std::initializer_list<E> all)
    {
        for (auto e: all)
            if (to_string(e) == text)
                return e;
        throw Error(ErrorCode::SchemaViolation, fmt::format("unknown reason '{}'", text));
    }

    bool is_line_number(const Json& value)
    {
        return value.is_number_integer() || value.is_number_unsigned();
    }
} // namespace

std::variant<Action, InvalidAction> action_from_input(std::string_view name, const Json& input)
{
    using Reason = InvalidAction::Reason;
    auto const kind = kind_from_name(name);
    if (!kind)
        return InvalidAction { Reason::UnknownName, std::string(name) };
    if (!input.is_object())
        return InvalidAction { Reason::BadArgType, "action_input" };

    auto const keys = required_keys(*kind);
    for (auto key: keys)
        if (!input.contains(key))
            return InvalidAction { Reason::MissingArg, std::string(key) };
    for (auto const& [key, _]: input.items())
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            return InvalidAction { Reason::ExtraArg, key };

    for (auto key: keys)
    {
        auto const& value = input.at(std::string(key));
        bool const numeric = key == "start_line_number" || key == "end_line_number";
        if (numeric ? !is_line_number(value) : !value.is_string())
            return InvalidAction { Reason::BadArgType, std::string(key) };
    }

    auto const str = [&](const char* key) { return input.at(key).get<std::string>(); };
    switch (*kind)
    {
        case ActionKind::ListFiles: return Action { actions::ListFiles { str("dir_path") } };
        case ActionKind::CopyFile: return Action { actions::CopyFile { str("source"), str("destination") } };
        case ActionKind::InspectScriptLines:
            return Action { actions::InspectScriptLines { str("script_name"),
                                                          input.at("start_line_number").get<std::int64_t>(),
                                                          input.at("end_line_number").get<std::int64_t>() } };
        case ActionKind::ExecuteScript: return Action { actions::ExecuteScript { str("script_name") } };
        case ActionKind::FinalAnswer: return Action { actions::FinalAnswer { str("final_answer") } };
        case ActionKind::UnderstandFile:
            return Action { actions::UnderstandFile { str("file_name"), str("things_to_look_for") } };
        case ActionKind::EditScript:
            return Action { actions::EditScript { str("script_name"), str("edit_instruction"), str("save_name") } };
    }
    return InvalidAction { Reason::UnknownName, std::string(name) };
}

std::string describe_rejection(const ParsedAction& parsed)
{
    if (auto const* invalid = std::get_if<InvalidAction>(&parsed))
    {
        switch (invalid->reason)
        {
            case InvalidAction::Reason::UnknownName:
                return fmt::format("Invalid action: '{}' is not a valid tool name. Use one of: List Files, Copy File, "
                                   "Inspect Script Lines, Execute Script, Final Answer, Understand File, Edit Script (AI).",
                                   invalid->detail);
            case InvalidAction::Reason::MissingArg:
                return fmt::format("Invalid action input: missing required key \"{}\".", invalid->detail);
            case InvalidAction::Reason::ExtraArg:
                return fmt::format("Invalid action input: unexpected key \"{}\".", invalid->detail);
            case InvalidAction::Reason::BadArgType:
                return fmt::format("Invalid action input: value of \"{}\" has the wrong type.", invalid->detail);
        }
    }
    if (auto const* error = std::get_if<ParseError>(&parsed))
    {
        switch (error->reason)
        {
            case ParseError::Reason::MissingSection:
                return fmt::format("The response is missing the \"{}\" section. Always respond in the required format.",
                                   error->detail);
            case ParseError::Reason::BadActionInput:
                return fmt::format("The action input is not a valid JSON object: {}", error->detail);
            case ParseError::Reason::SectionOrder:
                return fmt::format("The response sections are out of order near \"{}\".", error->detail);
        }
    }
    return "";
}

Json to_json(const ParsedAction& parsed)
{
    Json record = Json::object();
    if (auto const* action = std::get_if<Action>(&parsed))
    {
        record["type"] = "action";
        record["name"] = canonical_name(kind_of(*action));
        record["input"] = action_input(*action);
    }
    else if (auto const* invalid = std::get_if<InvalidAction>(&parsed))
    {
        record["type"] = "invalid_action";
        record["reason"] = to_string(invalid->reason);
        record["detail"] = invalid->detail;
    }
    else
    {
        auto const& error = std::get<ParseError>(parsed);
        record["type"] = "parse_error";
        record["reason"] = to_string(error.reason);
        record["detail"] = error.detail;
    }
    return record;
}

ParsedAction parsed_action_from_json(const Json& record)
{
    auto const type = record.at("type").get<std::string>();
    if (type == "action")
    {
        auto built = action_from_input(record.at("name").get<std::string>(), record.at("input"));
        if (auto const* action = std::get_if<Action>(&built))
            return *action;
        throw Error(ErrorCode::SchemaViolation, "stored action does not validate");
    }
    if (type == "invalid_action")
    {
        using R = InvalidAction::Reason;
        return InvalidAction {
            reason_from_string(record.at("reason").get<std::string>(),
                               { R::UnknownName, R::MissingArg, R::ExtraArg, R::BadArgType }),
            record.at("detail").get<std::string>(),
        };
    }
    if (type == "parse_error")
    {
        using R = ParseError::Reason;
        return ParseError {
            reason_from_string(record.at("reason").get<std::string>(),
                               { R::MissingSection, R::BadActionInput, R::SectionOrder }),
            record.at("detail").get<std::string>(),
        };
    }
    throw Error(ErrorCode::SchemaViolation, fmt::format("unknown parsed-action type '{}'", type));
}

} // namespace agentml
