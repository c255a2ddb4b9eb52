// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <agentml/actions.hpp>
#include <agentml/pool.hpp>
#include <agentml/protocol.hpp>
#include <agentml/verify.hpp>

#include <doctest.h>

using namespace agentml;
using agentml::test::kSourceDir;

namespace
{
std::string fixture(std::string_view name) { return read_file((kSourceDir / "tests" / "fixtures" / name).string()); }

std::string prompt_file(std::string_view name) { return read_file((kSourceDir / "data" / "prompts" / name).string()); }

// sha256 of the transcribed prompt files under data/prompts.
constexpr std::string_view kInitialPromptSha = "500ea49e00e28fc83f79f59e76352f01fad031de13220843983881c848618594";
constexpr std::string_view kToolsPromptSha = "f413e1e0ee01b96ad26b076cb56c521018d490db18d12c3e76596882b4d1cdb5";
constexpr std::string_view kFormatPromptSha = "48ed3e59b7cb5e5a89cedf73dfa1165da330eccda778cfee864080527e1913ba";
constexpr std::string_view kAdvicePromptSha = "67451e492a15f75a209701e770bc9a8c6073c764d82ee40bd47677e85353b02d";

std::string replace_all(std::string text, std::string_view from, std::string_view to)
{
    for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
        text.replace(pos, from.size(), to);
    return text;
}
} // namespace

TEST_CASE("case study step 7 parses to an Edit Script (AI) action")
{
    auto const text = fixture("case_study_step7.txt");
    auto const parsed = interpret_response(text);
    REQUIRE(std::holds_alternative<Action>(parsed));
    auto const& action = std::get<Action>(parsed);
    REQUIRE(kind_of(action) == ActionKind::EditScript);
    auto const& edit = std::get<actions::EditScript>(action);
    CHECK(edit.script_name == "train_modified_optimizer.py");
    CHECK(edit.edit_instruction == "Change the learning rate from 1e-4 to 1e-5.");
    CHECK(edit.save_name == "train_modified_optimizer_lr.py");
    CHECK(classify_action(parsed) == ActionClass::Edit);

    // The recorded observation is not part of the response.
    auto const block = std::get<ResponseBlock>(parse_response(text));
    CHECK(block.action_name == "Edit Script (AI)");
    CHECK(block.thought.starts_with("I will experiment with adjusting the learning rate"));
    CHECK(block.fact_check == "1. The validation RMSE after changing the optimizer is approximately 0.0838. (Confirmed)");
    CHECK(strip_observation(text).find("Observation:") == std::string_view::npos);
}

TEST_CASE("case study step 8 parses to an Execute Script action")
{
    auto const parsed = interpret_response(fixture("case_study_step8.txt"));
    REQUIRE(std::holds_alternative<Action>(parsed));
    auto const& action = std::get<Action>(parsed);
    REQUIRE(kind_of(action) == ActionKind::ExecuteScript);
    CHECK(std::get<actions::ExecuteScript>(action).script_name == "train_modified_optimizer_lr.py");
    CHECK(classify_action(parsed) == ActionClass::ValidNonEdit);
}

TEST_CASE("shipped templates hash-match their transcriptions")
{
    CHECK(sha256_hex(prompt_file("initial_prompt.txt")) == kInitialPromptSha);
    CHECK(sha256_hex(prompt_file("tools_prompt.txt")) == kToolsPromptSha);
    CHECK(sha256_hex(prompt_file("format_prompt.txt")) == kFormatPromptSha);
    CHECK(sha256_hex(prompt_file("advice_prompt.txt")) == kAdvicePromptSha);

    auto const t = PromptTemplateSet::defaults();
    CHECK(sha256_hex(t.initial_template) == kInitialPromptSha);
    CHECK(sha256_hex(t.tools_prompt) == kToolsPromptSha);
    CHECK(sha256_hex(t.format_prompt) == kFormatPromptSha);

    auto const loaded = PromptTemplateSet::from_directory(kSourceDir / "data" / "prompts");
    CHECK(loaded.initial_template == t.initial_template);

    // The idea-generation prompt: everything around the axis focus is the
    // transcription with its slots filled.
    auto expected = replace_all(prompt_file("advice_prompt.txt"), "{number_to_generate}", "12");
    auto const cut = expected.find("{axis_focus}");
    REQUIRE(cut != std::string::npos);
    auto const head = expected.substr(0, cut);
    auto const tail = expected.substr(cut + std::string_view("{axis_focus}").size());
    auto const actual = advice_prompt(IdeaAxis::Model, "{task_description}", "{initial_script}", 12);
    CHECK(actual.starts_with(head));
    CHECK(actual.ends_with(tail));
    CHECK(actual.size() > head.size() + tail.size());
}

TEST_CASE("initial prompt substitutes each slot once and verbatim")
{
    auto const t = PromptTemplateSet::defaults();
    auto const p = build_initial_prompt("Predict {format_prompt} prices.", t);
    CHECK(p.find("Research Problem: Predict {format_prompt} prices.") != std::string::npos);
    CHECK(p.find("{tools_prompt}") == std::string::npos);
    CHECK(p.find(t.tools_prompt) != std::string::npos);

    PromptTemplateSet broken = t;
    broken.initial_template = "no slots here";
    CHECK_THROWS_AS(build_initial_prompt("x", broken), Error);
}

TEST_CASE("missing sections and bad input are parse errors")
{
    auto const noInput = interpret_response("Reflection: r\nResearch Plan and Status: p\nFact Check: f\nThought: t\nAction: List Files\n");
    REQUIRE(std::holds_alternative<ParseError>(noInput));
    CHECK(std::get<ParseError>(noInput).reason == ParseError::Reason::MissingSection);

    auto const badJson = interpret_response(
        "Reflection: r\nResearch Plan and Status: p\nFact Check: f\nThought: t\nAction: List Files\nAction Input: {dir_path: .}\n");
    REQUIRE(std::holds_alternative<ParseError>(badJson));
    CHECK(std::get<ParseError>(badJson).reason == ParseError::Reason::BadActionInput);
}

TEST_CASE("unknown tools and wrong argument sets are invalid actions")
{
    auto const unknown = action_from_input("Delete Everything", Json::object());
    REQUIRE(std::holds_alternative<InvalidAction>(unknown));
    CHECK(std::get<InvalidAction>(unknown).reason == InvalidAction::Reason::UnknownName);

    auto const missing = action_from_input("Copy File", Json { { "source", "a.py" } });
    REQUIRE(std::holds_alternative<InvalidAction>(missing));
    CHECK(std::get<InvalidAction>(missing).reason == InvalidAction::Reason::MissingArg);

    auto const extra = action_from_input("List Files", Json { { "dir_path", "." }, { "recursive", true } });
    REQUIRE(std::holds_alternative<InvalidAction>(extra));
    CHECK(std::get<InvalidAction>(extra).reason == InvalidAction::Reason::ExtraArg);

    auto const type = action_from_input("Execute Script", Json { { "script_name", 3 } });
    REQUIRE(std::holds_alternative<InvalidAction>(type));
    CHECK(std::get<InvalidAction>(type).reason == InvalidAction::Reason::BadArgType);

    auto const alias = action_from_input("Edit Script",
                                         Json { { "script_name", "a.py" }, { "edit_instruction", "x" }, { "save_name", "b.py" } });
    CHECK(std::holds_alternative<Action>(alias));
}

TEST_CASE("format then parse is the identity")
{
    ResponseBlock b;
    b.reflection = "The script ran.";
    b.plan_and_status = "1. Baseline done.\n2. **Try dropout.**";
    b.fact_check = "Accuracy 0.61 (Confirmed)";
    b.thought = "Add dropout.";
    b.action_name = "Edit Script (AI)";
    b.action_input = Json { { "script_name", "train.py" }, { "edit_instruction", "add \"dropout\"\nplease" }, { "save_name", "train.py" } };
    auto const text = format_response(b);
    auto const back = parse_response(text);
    REQUIRE(std::holds_alternative<ResponseBlock>(back));
    CHECK(std::get<ResponseBlock>(back) == b);
    CHECK(format_response(std::get<ResponseBlock>(back)) == text);
}

TEST_CASE("round trip holds on generated blocks")
{
    auto const r = verify_protocol_round_trip(2000, 21);
    CHECK(r.passed());
}

TEST_CASE("rendered states only ever grow")
{
    auto const t = PromptTemplateSet::defaults();
    auto task = std::make_shared<TaskSpec>();
    task->task_id = "x";
    task->research_problem = "Improve things.";
    AgentState s { task, {} };
    auto const r0 = render_state(s, t);
    HistoryEntry e;
    e.response_text = "Reflection: a\nResearch Plan and Status: b\nFact Check: c\nThought: d\nAction: List Files\nAction Input: {\"dir_path\": \".\"}";
    e.action = interpret_response(e.response_text);
    e.feedback.raw = "train.py";
    s.history.push_back(e);
    auto const r1 = render_state(s, t);
    CHECK(r1.starts_with(r0));
    CHECK(r1.substr(r0.size()) == render_step(e));
    CHECK(state_digest(r0) != state_digest(r1));
}
