// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <agentml/pipeline.hpp>
#include <agentml/policies.hpp>
#include <agentml/store.hpp>
#include <agentml/transform.hpp>

#include <doctest.h>

#include <fstream>
#include <set>
#include <thread>

using namespace agentml;
using agentml::test::TempDir;

namespace
{
struct Fixture
{
    TempDir dir { "store" };
    std::vector<TaskPtr> tasks;
    std::vector<Trajectory> trajectories;

    Fixture()
    {
        SyntheticSuiteConfig c;
        c.seed = 3;
        c.n_tasks = 2;
        tasks = make_synthetic_suite(c, dir / "tasks");
        ExpertBackend expert;
        StubTransformer stub;
        EpisodeOptions o;
        o.scratch_root = dir / "scratch";
        for (std::uint64_t i = 0; i < 4; ++i)
            trajectories.push_back(run_episode(tasks[i % 2], expert, stub, derive_seed(9, i), o));
    }
};
} // namespace

TEST_CASE("trajectory records round trip and pass the audit")
{
    Fixture f;
    for (auto const& t: f.trajectories)
    {
        CHECK(t.steps.size() <= 15);
        CHECK_NOTHROW(audit_trajectory(t));
        auto const j = to_json(t);
        CHECK(j.at("schema_version") == kSchemaVersion);
        auto const back = trajectory_from_json(j);
        CHECK(to_json(back) == j);
    }
}

TEST_CASE("the audit catches tampered rewards and metrics")
{
    Fixture f;
    auto t = f.trajectories.front();
    REQUIRE(!t.steps.empty());
    t.steps.front().reward += 0.5;
    CHECK_THROWS_AS(audit_trajectory(t), Error);

    t = f.trajectories.front();
    t.final_metric += 1.0;
    CHECK_THROWS_AS(audit_trajectory(t), Error);

    t = f.trajectories.front();
    t.steps.front().step_index = 3;
    CHECK_THROWS_AS(audit_trajectory(t), Error);

    auto j = to_json(f.trajectories.front());
    j.erase("task_id");
    CHECK_THROWS_AS(trajectory_from_json(j), Error);
}

TEST_CASE("concurrent appends never interleave")
{
    Fixture f;
    TrajectoryStore store(f.dir / "store.jsonl");
    std::vector<std::thread> threads;
    for (int w = 0; w < 4; ++w)
        threads.emplace_back([&, w] {
            for (int i = 0; i < 25; ++i)
                store.append(f.trajectories[static_cast<std::size_t>((w + i) % 4)]);
        });
    for (auto& t: threads)
        t.join();
    auto const all = store.read_all();
    CHECK(all.size() == 100);
    std::set<std::string> ids;
    for (auto const& s: all)
        ids.insert(s.id);
    CHECK(ids.size() == 4); // identical records share an id
}

TEST_CASE("a half-written last line is ignored and a missing file is empty")
{
    Fixture f;
    TrajectoryStore store(f.dir / "s.jsonl");
    CHECK(store.read_all().empty());
    store.append(f.trajectories[0]);
    {
        std::ofstream out(f.dir / "s.jsonl", std::ios::app);
        out << R"({"schema_version":1,"kind":"traj)";
    }
    CHECK(store.read_all().size() == 1);
}

TEST_CASE("SFT examples rebuild the states the responses answered")
{
    Fixture f;
    TrajectoryStore store(f.dir / "s.jsonl");
    std::size_t steps = 0;
    for (auto const& t: f.trajectories)
    {
        store.append(t);
        steps += t.steps.size();
    }
    TaskCatalog const catalog(f.tasks);
    auto const examples = build_sft_dataset(store.read_all(), catalog);
    CHECK(examples.size() == steps);
    for (auto const& e: examples)
    {
        CHECK(e.rendered_state == render_state(e.state, PromptTemplateSet::defaults()));
        CHECK(e.state.history.size() == static_cast<std::size_t>(e.step_index));
    }
    auto const edits = build_sft_dataset(store.read_all(), catalog, [](const Trajectory&, const StepRecord& s) {
        return s.action_class == ActionClass::Edit;
    });
    CHECK(edits.size() < steps);
    for (auto const& e: edits)
        CHECK(e.target.find("Edit Script (AI)") != std::string::npos);
}

TEST_CASE("state pools: sizes, terminal states, weighting, export")
{
    Fixture f;
    TrajectoryStore store(f.dir / "s.jsonl");
    for (auto const& t: f.trajectories)
        store.append(t);
    auto const stored = store.read_all();
    TaskCatalog const catalog(f.tasks);

    Rng rng(1);
    auto const pool = build_state_pool(stored, catalog, 64, rng);
    CHECK(pool.size() == 64);
    for (auto const& e: pool)
    {
        CHECK(e.step_index < static_cast<int>(e.trajectory->steps.size()));
        CHECK(e.state_digest == e.trajectory->steps[static_cast<std::size_t>(e.step_index)].state_digest);
    }

    for (auto w: { PoolWeighting::ByTask, PoolWeighting::ByTrajectory })
    {
        Rng r(2);
        StatePoolOptions o;
        o.weighting = w;
        CHECK(build_state_pool(stored, catalog, 16, r, o).size() == 16);
    }

    Rng r0(1);
    CHECK(build_state_pool(stored, catalog, 0, r0).empty());
    Rng r1(1);
    CHECK_THROWS_AS(build_state_pool({}, catalog, 4, r1), Error);

    write_state_pool(f.dir / "pool.jsonl", pool, "abc");
    auto const back = read_state_pool(f.dir / "pool.jsonl", stored, catalog);
    REQUIRE(back.size() == pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
    {
        CHECK(back[i].trajectory_id == pool[i].trajectory_id);
        CHECK(back[i].step_index == pool[i].step_index);
        CHECK(back[i].m_t == pool[i].m_t);
    }
}

TEST_CASE("collection is reproducible and independent of the worker count")
{
    Fixture f;
    FixtureGenerator gen(test::kSourceDir / "data" / "ideas");
    HashEmbedder e;
    PoolBuildConfig pc;
    pc.m = 30;
    pc.k = 5;
    auto const pool = build_action_pool(gen, e, pc);
    CollectConfig c;
    c.n_trajectories = 8;
    c.seed = 4;
    c.episode.scratch_root = f.dir / "scratch";

    ExpertBackend expert;
    StubTransformer stub;
    TrajectoryStore a(f.dir / "a.jsonl");
    auto const sa = collect_trajectories(f.tasks, expert, stub, &pool, c, a);
    CHECK(sa.written == 8);

    c.workers = 3;
    TrajectoryStore b(f.dir / "b.jsonl");
    collect_trajectories(
        f.tasks, [] { return std::make_unique<ExpertBackend>(); }, [] { return std::make_unique<StubTransformer>(); }, &pool, c, b);
    CHECK(read_file((f.dir / "a.jsonl").string()) == read_file((f.dir / "b.jsonl").string()));

    // Every trajectory carries the prefix it was steered with.
    for (auto const& s: a.read_all())
    {
        CHECK(!s.trajectory->prefix.empty());
        CHECK(s.trajectory->prefix.size() <= 3);
    }

    // A threaded run refuses a shared backend.
    TrajectoryStore x(f.dir / "x.jsonl");
    CHECK_THROWS_AS(collect_trajectories(f.tasks, expert, stub, &pool, c, x), Error);
}

namespace
{
class DeadBackend final: public PolicyBackend
{
  public:
    std::string respond(const PolicyRequest&) override { throw Error(ErrorCode::PolicyUnavailable, "connection refused"); }
    [[nodiscard]] std::string id() const override { return "dead"; }
};
} // namespace

TEST_CASE("an unreachable backend aborts collection")
{
    Fixture f;
    DeadBackend dead;
    StubTransformer stub;
    CollectConfig c;
    c.n_trajectories = 3;
    c.episode.scratch_root = f.dir / "scratch";
    TrajectoryStore s(f.dir / "dead.jsonl");
    try
    {
        collect_trajectories(f.tasks, dead, stub, nullptr, c, s);
        FAIL("expected PolicyUnavailable");
    }
    catch (const Error& e)
    {
        CHECK(e.code() == ErrorCode::PolicyUnavailable);
    }
    CHECK(s.read_all().empty());
}
