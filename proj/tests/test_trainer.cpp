// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <agentml/pipeline.hpp>
#include <agentml/policies.hpp>
#include <agentml/tabular.hpp>
#include <agentml/trainer.hpp>
#include <agentml/verify.hpp>

#include <doctest.h>

#include <cmath>

using namespace agentml;
using agentml::test::TempDir;

namespace
{
// One expert store and state pool shared by the trainer tests.
struct World
{
    TempDir dir { "trainer" };
    std::vector<TaskPtr> tasks;
    std::vector<StoredTrajectory> stored;
    std::vector<StatePoolEntry> pool;
    StubTransformer stub;
    TrainerOptions options;

    World()
    {
        SyntheticSuiteConfig c;
        c.seed = 11;
        c.n_tasks = 6;
        c.id_prefix = "syn-train";
        tasks = make_synthetic_suite(c, dir / "tasks");
        ExpertBackend expert;
        TrajectoryStore store(dir / "expert.jsonl");
        CollectConfig cc;
        cc.n_trajectories = 12;
        cc.seed = 5;
        cc.episode.scratch_root = dir / "scratch";
        collect_trajectories(tasks, expert, stub, nullptr, cc, store);
        stored = store.read_all();
        Rng rng(3);
        pool = build_state_pool(stored, TaskCatalog(tasks), 256, rng);
        options.episode.scratch_root = dir / "scratch";
    }

    std::vector<StatePoolEntry> initial_states() const
    {
        std::vector<StatePoolEntry> out;
        for (auto const& e: pool)
            if (e.step_index == 0)
                out.push_back(e);
        return out;
    }
};

World& world()
{
    static World w;
    return w;
}

std::string dump(const LearningCurve& curve)
{
    std::string out;
    for (auto const& p: curve)
        out += p.to_json().dump() + "\n";
    return out;
}

TabularMDP two_state_cycle(int horizon)
{
    TabularMDP m;
    m.n_states = 2;
    m.n_actions = 1;
    m.horizon = horizon;
    m.p = { 0.0, 1.0, 1.0, 0.0 };
    m.r = { 1.0, 0.0 };
    m.initial = { 1.0, 0.0 };
    return m;
}
} // namespace

// ---- tabular identity ------------------------------------------------------

TEST_CASE("horizon 0 keeps the initial distribution and has zero objective")
{
    auto m = two_state_cycle(0);
    m.initial = { 0.25, 0.75 };
    TabularPolicy pi { 2, 1, { 1.0, 1.0 } };
    auto const d = exact_state_distribution(m, pi);
    REQUIRE(d.d.size() == 1);
    CHECK(d.d[0] == m.initial);
    CHECK(objective_by_enumeration(m, pi) == 0.0);
}

TEST_CASE("deterministic cycle alternates point masses")
{
    auto const m = two_state_cycle(4);
    TabularPolicy pi { 2, 1, { 1.0, 1.0 } };
    auto const d = exact_state_distribution(m, pi);
    REQUIRE(d.d.size() == 5);
    for (std::size_t t = 0; t < 5; ++t)
        CHECK(d.d[t] == (t % 2 == 0 ? std::vector<double> { 1.0, 0.0 } : std::vector<double> { 0.0, 1.0 }));
    // Rewarded in state 0 only, which is visited at t = 0 and t = 2.
    CHECK(objective_by_enumeration(m, pi) == 2.0);
    CHECK(objective_by_state_expansion(m, pi) == 2.0);
}

TEST_CASE("single state, single action, reward 1, horizon 3 gives 3")
{
    TabularMDP m;
    m.n_states = 1;
    m.n_actions = 1;
    m.horizon = 3;
    m.p = { 1.0 };
    m.r = { 1.0 };
    m.initial = { 1.0 };
    TabularPolicy pi { 1, 1, { 1.0 } };
    CHECK(objective_by_enumeration(m, pi) == 3.0);
    CHECK(objective_by_state_expansion(m, pi) == 3.0);
}

TEST_CASE("enumeration and state expansion agree")
{
    CHECK(verify_state_identity(distribution_under(Mutation::None), 200, 41).passed());
    CHECK_FALSE(verify_state_identity(distribution_under(Mutation::DistributionOffByOne), 200, 41).passed());
}

TEST_CASE("rows must sum to one")
{
    auto m = two_state_cycle(2);
    CHECK_NOTHROW(m.validate());
    m.p[0] = 0.1;
    CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("enumeration refuses instances that are too large")
{
    TabularMDP m;
    m.n_states = 4;
    m.n_actions = 3;
    m.horizon = 9; // 12^9 paths
    m.p.assign(4 * 3 * 4, 0.25);
    m.r.assign(4 * 3, 1.0);
    m.initial = { 0.25, 0.25, 0.25, 0.25 };
    TabularPolicy pi { 4, 3, std::vector<double>(12, 1.0 / 3.0) };
    CHECK_THROWS_AS(objective_by_enumeration(m, pi), Error);
}

TEST_CASE("exact state distribution matches Monte-Carlo visitation within 3 sigma")
{
    TabularMDP m;
    m.n_states = 3;
    m.n_actions = 2;
    m.horizon = 4;
    // p[(s * A + a) * S + s2]
    m.p = { 0.7, 0.2, 0.1, /**/ 0.1, 0.1, 0.8, //
            0.0, 0.5, 0.5, /**/ 0.3, 0.3, 0.4, //
            0.6, 0.0, 0.4, /**/ 0.2, 0.7, 0.1 };
    m.r = { 0.0, 1.0, 0.5, -0.5, 0.2, 0.3 };
    m.initial = { 0.5, 0.3, 0.2 };
    m.validate();
    TabularPolicy pi { 3, 2, { 0.6, 0.4, 0.1, 0.9, 0.5, 0.5 } };
    auto const exact = exact_state_distribution(m, pi);
    constexpr std::size_t n = 100000;
    Rng rng(77);
    auto const mc = monte_carlo_state_distribution(m, pi, n, rng);
    REQUIRE(mc.d.size() == exact.d.size());
    for (std::size_t t = 0; t < exact.d.size(); ++t)
        for (int s = 0; s < m.n_states; ++s)
        {
            double const p = exact.d[t][static_cast<std::size_t>(s)];
            double const sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
            CAPTURE(t);
            CAPTURE(s);
            CHECK(std::abs(mc.d[t][static_cast<std::size_t>(s)] - p) <= 3.0 * sigma + 1e-12);
        }
}

// ---- toy policy, losses and gradients ---------------------------------------

TEST_CASE("uniform policy has log-loss ln V on a one-symbol target")
{
    ToyPolicy const policy;
    SftTarget t;
    t.seq = { SymList };
    auto const lg = sft_loss_and_grad(policy, std::span(&t, 1));
    CHECK(lg.value == doctest::Approx(std::log(static_cast<double>(kVocabSize))).epsilon(1e-12));
    CHECK_THROWS_AS(sft_loss_and_grad(policy, std::span<const SftTarget> {}), Error);
}

TEST_CASE("a target at probability one has loss near zero")
{
    ToyPolicy policy;
    SftTarget t;
    t.x[0] = 1.0;
    t.seq = { SymExec };
    policy.theta[ToyPolicy::index(kStartContext, SymExec, 0)] = 40.0;
    CHECK(sft_loss_and_grad(policy, std::span(&t, 1)).value < 1e-12);
}

TEST_CASE("analytic gradients match finite differences")
{
    CHECK(verify_sft_gradients(50, 51).passed());
    CHECK(verify_ppo_gradients(50, 52).passed());
}

TEST_CASE("advantage estimates")
{
    CHECK(estimate_advantage(0.4, 0.4, 3) == std::vector<double> { 0.0, 0.0, 0.0 });
    auto const a = estimate_advantage(1.0, 0.2, 3);
    REQUIRE(a.size() == 3);
    for (double v: a)
        CHECK(v == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(estimate_advantage(1.0, 0.2, 2, AdvantageMode::Reward) == std::vector<double> { 1.0, 1.0 });
}

TEST_CASE("surrogate at ratio one is the mean advantage; zero advantages give zero")
{
    ToyPolicy policy;
    Rng rng(5);
    for (auto& v: policy.theta)
        v = 0.3 * rng.normal();
    std::vector<PpoSample> batch;
    double advSum = 0.0;
    std::size_t symbols = 0;
    for (int i = 0; i < 20; ++i)
    {
        PpoSample s;
        for (auto& v: s.x)
            v = rng.uniform();
        s.seq = policy.sample(s.x, rng);
        s.old_log_probs = policy.token_log_probs(s.x, s.seq);
        s.advantages = estimate_advantage(rng.normal(), 0.0, s.seq.size());
        for (double a: s.advantages)
            advSum += a;
        symbols += s.seq.size();
        batch.push_back(s);
    }
    auto const same = ppo_objective(policy, batch, 0.2, 0.0, nullptr);
    CHECK(same.value == doctest::Approx(advSum / static_cast<double>(symbols)).epsilon(1e-12));
    CHECK(clipped_symbols(policy, batch, 0.2) == 0);

    for (auto& s: batch)
        std::fill(s.advantages.begin(), s.advantages.end(), 0.0);
    CHECK(ppo_objective(policy, batch, 0.2, 0.0, nullptr).value == 0.0);

    batch.front().advantages.pop_back();
    CHECK_THROWS_AS(ppo_objective(policy, batch, 0.2, 0.0, nullptr), Error);
}

TEST_CASE("clip branch is reached after a large policy move")
{
    CHECK(verify_clip_activity(53).passed());
}

TEST_CASE("sampled sequences are complete and decode or are invalid")
{
    ToyPolicy const policy;
    Rng rng(8);
    Features x {};
    x[0] = 1.0;
    std::size_t valid = 0;
    for (int i = 0; i < 2000; ++i)
    {
        auto const seq = policy.sample(x, rng);
        CHECK(sequence_complete(seq));
        CHECK(seq.size() <= static_cast<std::size_t>(kMaxSymbols));
        if (auto const a = decode_symbols(seq))
        {
            ++valid;
            // Slots may come in any order; the action is the sorted set.
            CHECK(decode_symbols(encode_action(*a)) == a);
            CHECK(encode_action(*a).size() == seq.size());
        }
    }
    CHECK(valid > 0);
    CHECK(all_toy_actions().size() == 98);
}

// ---- step-wise collection and training ---------------------------------------

TEST_CASE("step-wise batches cost exactly batch_size transitions")
{
    auto& w = world();
    StepEvaluator ev(w.stub, w.options.episode);
    ToyPolicy const policy;
    Rng rng(1);
    CHECK(collect_stepwise_batch(w.pool, policy, ev, 0, rng).empty());
    CHECK(ev.transitions() == 0);
    auto const batch = collect_stepwise_batch(w.pool, policy, ev, 32, rng);
    CHECK(batch.size() == 32);
    CHECK(ev.transitions() == 32);
    for (auto const& s: batch)
    {
        CHECK(s.reward >= -1.0);
        CHECK(s.reward <= 1.0);
    }
    collect_stepwise_batch(w.pool, policy, ev, 32, rng);
    CHECK(ev.transitions() == 64);
}

TEST_CASE("Monte-Carlo step rewards converge to the exact pool objective")
{
    auto& w = world();
    StepEvaluator ev(w.stub, w.options.episode);
    ToyPolicy policy;
    Rng init(4);
    for (auto& v: policy.theta)
        v = 0.5 * init.normal();
    auto const exact = pool_objective(policy, w.pool, ev);
    Rng rng(12);
    constexpr std::size_t n = 8000;
    auto const batch = collect_stepwise_batch(w.pool, policy, ev, n, rng);
    double sum = 0.0, sq = 0.0;
    for (auto const& s: batch)
    {
        sum += s.reward;
        sq += s.reward * s.reward;
    }
    double const mean = sum / n;
    double const sd = std::sqrt((sq - n * mean * mean) / (n - 1));
    CHECK(std::abs(mean - exact) <= 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("episode-wise batches count every step taken")
{
    auto& w = world();
    ToyPolicy const policy;
    Rng rng(2);
    EpisodeOptions o = w.options.episode;
    auto const batch = collect_episodewise_batch(w.tasks, policy, w.stub, 3, rng, o);
    REQUIRE(batch.size() == 3);
    for (auto const& e: batch)
    {
        CHECK(e.emitted.size() == e.trajectory.steps.size());
        CHECK_NOTHROW(audit_trajectory(e.trajectory));
    }

    // The trainer's first round draws the same episodes from Rng(seed).
    PPOConfig c;
    c.batch_size = 3;
    c.seed = 2;
    Trainer t(c, TrainMode::Episodewise, { w.pool, w.tasks }, w.stub, w.options);
    auto const p = t.update();
    std::size_t steps = 0;
    for (auto const& e: batch)
        steps += e.trajectory.steps.size();
    CHECK(p.env_transitions == steps);
    CHECK(t.transitions() == steps);
}

TEST_CASE("zero updates give an empty curve")
{
    auto& w = world();
    Trainer t(PPOConfig {}, TrainMode::Stepwise, { w.pool, w.tasks }, w.stub, w.options);
    CHECK(t.run(0).empty());
    CHECK(t.transitions() == 0);
}

TEST_CASE("pinned seeds give identical curves, with or without the memo")
{
    auto& w = world();
    PPOConfig c;
    c.seed = 7;
    auto run = [&](bool memo) {
        auto o = w.options;
        o.memoize = memo;
        o.track_objective = true;
        Trainer t(c, TrainMode::Stepwise, { w.pool, w.tasks }, w.stub, o);
        auto const curve = t.run(6);
        return std::make_pair(dump(curve), to_json(t.policy()).dump());
    };
    auto const a = run(true);
    auto const b = run(true);
    auto const off = run(false);
    CHECK(a == b);
    CHECK(a == off);
}

TEST_CASE("resuming from a checkpoint continues bit-exactly")
{
    auto& w = world();
    PPOConfig c;
    c.seed = 3;
    Trainer full(c, TrainMode::Stepwise, { w.pool, w.tasks }, w.stub, w.options);
    auto const whole = dump(full.run(10));

    Trainer first(c, TrainMode::Stepwise, { w.pool, w.tasks }, w.stub, w.options);
    auto const head = dump(first.run(5));
    auto const ck = Json::parse(first.checkpoint().dump()); // through text, as on disk
    Trainer second(c, TrainMode::Stepwise, { w.pool, w.tasks }, w.stub, w.options);
    second.restore(ck);
    auto const tail = dump(second.run(5));
    CHECK(head + tail == whole);
    CHECK(to_json(second.policy()).dump() == to_json(full.policy()).dump());
    CHECK(second.transitions() == full.transitions());
}

TEST_CASE("episode-wise training is reproducible too")
{
    auto& w = world();
    PPOConfig c;
    c.batch_size = 2;
    auto run = [&] {
        Trainer t(c, TrainMode::Episodewise, { w.pool, w.tasks }, w.stub, w.options);
        return dump(t.run(3));
    };
    CHECK(run() == run());
}

TEST_CASE("mean step reward strictly increases over the first 10 updates on the initial-state pool")
{
    // Every pooled state is an s_0, so each draw is a one-step bandit. The
    // exact objective is tracked because a 32-sample batch mean is noise.
    auto& w = world();
    auto const bandit = w.initial_states();
    REQUIRE(bandit.size() >= 10);
    auto o = w.options;
    o.track_objective = true;
    PPOConfig c;
    c.seed = 1;
    Trainer t(c, TrainMode::Stepwise, { bandit, w.tasks }, w.stub, o);
    double prev = t.objective();
    for (int u = 0; u < 10; ++u)
    {
        auto const p = t.update();
        REQUIRE(p.pool_objective);
        CAPTURE(u);
        CHECK(*p.pool_objective > prev);
        prev = *p.pool_objective;
    }
}

TEST_CASE("batch advantages average out once the critic has converged")
{
    auto& w = world();
    PPOConfig c;
    c.seed = 1;
    Trainer t(c, TrainMode::Stepwise, { w.pool, w.tasks }, w.stub, w.options);
    t.run(40);
    StepEvaluator ev(w.stub, w.options.episode);
    Rng rng(99);
    auto const batch = collect_stepwise_batch(w.pool, t.policy(), ev, 512, rng);
    double mean = 0.0;
    for (auto const& s: batch)
        mean += estimate_advantage(s.reward, t.critic().value(s.sample.x), 1).front();
    mean /= static_cast<double>(batch.size());
    CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("bad configurations are rejected")
{
    PPOConfig c;
    c.clip_eps = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    auto const back = PPOConfig::from_json(PPOConfig {}.to_json());
    CHECK(back.to_json() == PPOConfig {}.to_json());
}
