// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <agentml/env.hpp>
#include <agentml/process.hpp>
#include <agentml/protocol.hpp>
#include <agentml/transform.hpp>

#include <doctest.h>

using namespace agentml;
using agentml::test::TempDir;

namespace
{
MetricSpec rmse()
{
    MetricSpec m;
    m.name = "RMSE";
    m.beta = -1;
    m.m_init = 0.5;
    m.m_best = 0.3;
    m.marker = MetricSpec::default_marker("RMSE");
    return m;
}

std::string respond(const Action& action)
{
    ResponseBlock b;
    b.reflection = "r";
    b.plan_and_status = "p";
    b.fact_check = "f";
    b.thought = "t";
    b.action_name = std::string(canonical_name(kind_of(action)));
    b.action_input = action_input(action);
    return format_response(b);
}
} // namespace

TEST_CASE("the last metric marker wins")
{
    auto const m = rmse();
    auto const s = extract_metric("Final Validation RMSE: 0.41\nretrying\nFinal Validation RMSE: 0.39\n", m);
    REQUIRE(s);
    CHECK(s->value == 0.39);
    CHECK_FALSE(extract_metric("Validation loss 0.2\n", m));
    CHECK_THROWS_AS(extract_metric("Final Validation RMSE: nan-ish\n", m), Error);
}

TEST_CASE("feedback classes")
{
    auto const m = rmse();
    ExitStatus ok;
    ExitStatus failed { 1, false };
    ExitStatus timeout { 0, true };
    CHECK(classify_feedback(ok, "Final Validation RMSE: 0.4", ActionKind::ExecuteScript, m) == FeedbackClass::Success);
    CHECK(classify_feedback(ok, "done", ActionKind::ExecuteScript, m) == FeedbackClass::Neutral);
    CHECK(classify_feedback(failed, "boom", ActionKind::ExecuteScript, m) == FeedbackClass::Error);
    CHECK(classify_feedback(ok, "Traceback (most recent call last):\n", ActionKind::ExecuteScript, m) == FeedbackClass::Error);
    CHECK(classify_feedback(timeout, "", ActionKind::ExecuteScript, m) == FeedbackClass::Corner);
    CHECK(classify_feedback(failed, "RuntimeError: CUDA out of memory", ActionKind::ExecuteScript, m) == FeedbackClass::Corner);
    // Reading a file that talks about memory is not resource exhaustion.
    CHECK(classify_feedback(ok, "notes: out of memory last time", ActionKind::UnderstandFile, m) == FeedbackClass::Neutral);
    CHECK(classify_feedback(ok, "Final Validation RMSE: x", ActionKind::ExecuteScript, m) == FeedbackClass::Error);
}

TEST_CASE("synthetic scripts evaluate in-process exactly as under python3")
{
    TempDir dir("mirror");
    ProcessRunner runner;
    auto probe = runner.run({ "python3", "-c", "print(1)" }, dir.path(), Seconds(30));
    if (probe.status.code != 0)
    {
        WARN_MESSAGE(false, "python3 not available; mirror check skipped");
        return;
    }
    SyntheticSuiteConfig c;
    c.seed = 5;
    c.n_tasks = 2;
    c.noise = 0.3; // wide tables so errors and corner cases show up
    auto const tasks = make_synthetic_suite(c, dir / "tasks");
    Rng rng(17);
    int checked = 0, failures = 0;
    for (auto const& task: tasks)
        for (int i = 0; i < 30; ++i)
        {
            std::string techniques;
            for (auto kw: kTechniqueKeywords)
                if (rng.uniform() < 0.4)
                    techniques += std::string(kw) + " ";
            if (i == 0)
                techniques = "not_a_technique";
            auto const source = synthetic_train_script(*task->synthetic, task->synthetic_seed, techniques);
            auto const sim = simulate_synthetic_script(source);
            REQUIRE(sim);
            write_file((dir / "probe.py").string(), source);
            auto const real = runner.run({ "python3", "probe.py" }, dir.path(), Seconds(30));
            CAPTURE(techniques);
            CHECK(real.status.code == sim->exit_code);
            CHECK(real.output == sim->output);
            failures += sim->exit_code != 0;
            ++checked;
        }
    CHECK(checked == 60);
    CHECK(failures > 1); // the failure branches were exercised too
}

TEST_CASE("edited scripts are not simulated")
{
    TempDir dir("sim");
    SyntheticSuiteConfig c;
    c.n_tasks = 1;
    auto const task = make_synthetic_suite(c, dir / "tasks").front();
    auto source = synthetic_train_script(*task->synthetic, task->synthetic_seed);
    CHECK(simulate_synthetic_script(source));
    source += "\nprint('extra')\n";
    CHECK_FALSE(simulate_synthetic_script(source));
}

TEST_CASE("workspace actions and their feedback")
{
    TempDir dir("ws");
    auto const task = test::scripted_task(dir / "tasks", "ws-task", 1, 0.5, 0.7, { { "augment", 0.05 }, { "widen", -0.02 } });
    auto ws = init_workspace(task, dir / "scratch", 3);
    StubTransformer stub;
    EnvOptions const opts;

    auto const listed = apply_action(ws, actions::ListFiles { "." }, stub, opts);
    CHECK(listed.cls == FeedbackClass::Neutral);
    CHECK(listed.raw.find("train.py") != std::string::npos);
    CHECK(listed.raw.find("task.meta") == std::string::npos);

    auto const ran = apply_action(ws, actions::ExecuteScript { "train.py" }, stub, opts);
    CHECK(ran.cls == FeedbackClass::Success);
    REQUIRE(ran.metric_sample);
    CHECK(ran.metric_sample->value == 0.5);

    auto const escape = apply_action(ws, actions::ListFiles { "../.." }, stub, opts);
    CHECK(escape.cls == FeedbackClass::Error);

    auto const tooMany = apply_action(ws, actions::InspectScriptLines { "train.py", 1, 101 }, stub, opts);
    CHECK(tooMany.cls == FeedbackClass::Error);
    auto const some = apply_action(ws, actions::InspectScriptLines { "train.py", 1, 3 }, stub, opts);
    CHECK(some.cls == FeedbackClass::Neutral);

    auto const missing = apply_action(ws, actions::ExecuteScript { "nope.py" }, stub, opts);
    CHECK(missing.cls == FeedbackClass::Error);

    // An edit through the stub transformer is run right away.
    auto const edit = apply_action(ws,
                                   actions::EditScript { "train.py", technique_instruction({ "augment" }), "train.py" },
                                   stub,
                                   opts);
    CHECK(edit.cls == FeedbackClass::Success);
    REQUIRE(edit.metric_sample);
    CHECK(edit.metric_sample->value == doctest::Approx(0.55).epsilon(1e-9));

    auto const copy = apply_action(ws, actions::CopyFile { "train.py", "backup.py" }, stub, opts);
    CHECK(copy.cls == FeedbackClass::Neutral);
    CHECK(fs::exists(ws.root() / "backup.py"));
}

TEST_CASE("take_step scores a step")
{
    TempDir dir("step");
    auto const task = test::scripted_task(dir / "tasks", "step-task", 1, 0.5, 0.7, { { "augment", 0.05 } });
    auto ws = init_workspace(task, dir / "scratch", 3);
    StubTransformer stub;
    auto const edit = respond(actions::EditScript { "train.py", technique_instruction({ "augment" }), "train.py" });
    auto const out = take_step(ws, edit, 0.5, 0, stub, {}, {});
    CHECK(out.action_class == ActionClass::Edit);
    CHECK(out.feedback.cls == FeedbackClass::Success);
    CHECK(out.reward == doctest::Approx(0.25).epsilon(1e-9)); // 0.05 / 0.2

    auto const junk = take_step(ws, "I refuse to follow the format.", 0.55, 1, stub, {}, {});
    CHECK(junk.action_class == ActionClass::Invalid);
    CHECK(junk.reward == -1.0);
}

TEST_CASE("snapshots restore the workspace exactly")
{
    TempDir dir("snap");
    auto const task = test::scripted_task(dir / "tasks", "snap-task", 1, 0.5, 0.7, { { "augment", 0.05 } });
    auto ws = init_workspace(task, dir / "scratch", 3);
    auto const before = ws.content_digest();
    auto const snap = ws.snapshot();
    StubTransformer stub;
    apply_action(ws, actions::EditScript { "train.py", technique_instruction({ "augment" }), "new.py" }, stub, {});
    CHECK(ws.content_digest() != before);
    ws.restore(snap);
    CHECK(ws.content_digest() == before);
}

TEST_CASE("workspaces are private copies")
{
    TempDir dir("iso");
    auto const task = test::scripted_task(dir / "tasks", "iso-task", 1, 0.5, 0.7, { { "augment", 0.05 } });
    fs::path root;
    {
        auto a = init_workspace(task, dir / "scratch", 1);
        auto b = init_workspace(task, dir / "scratch", 2);
        CHECK(a.root() != b.root());
        write_file((a.root() / "train.py").string(), "changed");
        CHECK(read_file((b.root() / "train.py").string()) != "changed");
        CHECK(read_file((task->bundle_root / "train.py").string()) != "changed");
        root = a.root();
    }
    CHECK_FALSE(fs::exists(root));
}
