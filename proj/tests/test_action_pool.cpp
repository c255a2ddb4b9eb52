// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <agentml/pool.hpp>
#include <agentml/verify.hpp>

#include <doctest.h>

#include <map>
#include <set>

using namespace agentml;
using agentml::test::kSourceDir;

namespace
{
std::vector<IdeaCandidate> line(std::vector<double> xs)
{
    std::vector<IdeaCandidate> out;
    for (double x: xs)
        out.push_back({ IdeaAxis::Data, "p" + std::to_string(x), { x } });
    return out;
}

// Pearson chi-square of observed counts against equal expected counts.
double chi_square_uniform(const std::vector<std::size_t>& counts)
{
    double total = 0.0;
    for (auto c: counts)
        total += static_cast<double>(c);
    double const expected = total / static_cast<double>(counts.size());
    double chi = 0.0;
    for (auto c: counts)
        chi += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
    return chi;
}
} // namespace

TEST_CASE("FPS and average distance disagree on a clustered line")
{
    // Points 0, 1, 2, 10. Mean distances: 13/3, 11/3, 11/3, 9.
    auto const pts = line({ 0.0, 1.0, 2.0, 10.0 });
    CHECK(avg_distance_top_k(pts, 3) == std::vector<std::size_t> { 3, 0, 1 });
    // FPS: seed 10, then 0 (distance 10), then 2 (nearest selected is 2 away, vs 1 for point 1).
    CHECK(farthest_point_sample(pts, 3) == std::vector<std::size_t> { 3, 0, 2 });
    CHECK(farthest_point_sample(pts, 4) == std::vector<std::size_t> { 3, 0, 2, 1 });
}

TEST_CASE("selection ties go to the lower index")
{
    // Symmetric square: every point has the same mean distance.
    std::vector<IdeaCandidate> sq {
        { IdeaAxis::Data, "a", { 0, 0 } }, { IdeaAxis::Data, "b", { 1, 0 } },
        { IdeaAxis::Data, "c", { 1, 1 } }, { IdeaAxis::Data, "d", { 0, 1 } },
    };
    CHECK(farthest_point_sample(sq, 2) == std::vector<std::size_t> { 0, 2 });
    CHECK(avg_distance_top_k(sq, 2) == std::vector<std::size_t> { 0, 1 });
}

TEST_CASE("selection input errors")
{
    CHECK_THROWS_AS(farthest_point_sample({}, 1), Error);
    CHECK_THROWS_AS(farthest_point_sample(line({ 0.0, 1.0 }), 3), Error);
    CHECK(farthest_point_sample(line({ 0.0, 1.0 }), 0).empty());
}

TEST_CASE("FPS trace matches brute-force greedy")
{
    CHECK(verify_fps_trace(100, 31).passed());
}

TEST_CASE("FPS stays within half of the best random subset")
{
    auto const r = verify_fps_dominance(50, 300, 32);
    CHECK(r.passed());
}

TEST_CASE("advice replies are read after the flag")
{
    auto const ideas = parse_advice("Sure! Here you go.\n[advice]\n1. Use mixup augmentation\n- Add dropout\n\n...\n");
    CHECK(ideas == std::vector<std::string> { "Use mixup augmentation", "Add dropout" });
    CHECK(parse_advice("no flag at all").empty());
}

TEST_CASE("hash embeddings are deterministic and normalised by the pool builder")
{
    HashEmbedder e(16);
    auto const a = e.embed({ "add dropout to the model", "add dropout to the model", "cosine schedule" });
    CHECK(a[0] == a[1]);
    CHECK(a[0] != a[2]);
    FixtureGenerator gen(kSourceDir / "data" / "ideas");
    auto const cands = generate_candidates(IdeaAxis::Model, gen, 12, e);
    REQUIRE(cands.size() == 12);
    for (auto const& c: cands)
    {
        double n = 0.0;
        for (double v: c.embedding)
            n += v * v;
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("pool archive round trip keeps provenance and digest")
{
    FixtureGenerator gen(kSourceDir / "data" / "ideas");
    HashEmbedder e;
    PoolBuildConfig c;
    c.m = 30;
    c.k = 6;
    auto const pool = build_action_pool(gen, e, c);
    for (auto axis: kAllAxes)
        CHECK(pool.axes.at(axis).size() == 6);
    CHECK(pool.provenance.at("selection") == "fps");
    CHECK(pool.provenance.at("generator") == "fixture:ideas");
    auto const back = ActionPool::from_json(pool.to_json());
    CHECK(back.digest() == pool.digest());
    CHECK(back.to_json() == pool.to_json());

    c.k = 1000;
    CHECK_THROWS_AS(build_action_pool(gen, e, c), Error);
}

TEST_CASE("exploration prefixes follow the sampling rule")
{
    // 1-3 distinct axes, count uniform, order a uniform permutation, one idea
    // uniformly from each axis.
    ActionPool pool;
    pool.k = 10;
    for (auto axis: kAllAxes)
        for (int i = 0; i < 10; ++i)
            pool.axes[axis].push_back({ axis, std::string(to_string(axis)) + "-" + std::to_string(i), { 1.0 } });

    constexpr std::size_t n = 30000;
    Rng rng(2024);
    std::vector<std::size_t> lengths(3, 0);
    std::vector<std::size_t> firstCell(30, 0); // axis * 10 + idea at position 0
    std::map<std::string, std::size_t> orders;  // full axis order of 3-idea prefixes
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const p = sample_exploration_prefix(pool, rng);
        REQUIRE(!p.empty());
        REQUIRE(p.size() <= 3);
        ++lengths[p.size() - 1];
        std::set<IdeaAxis> seen;
        std::string order;
        for (auto const& idea: p)
        {
            CHECK(seen.insert(idea.axis).second);
            order += std::string(to_string(idea.axis)) + ",";
        }
        auto const dash = p[0].text.rfind('-');
        firstCell[static_cast<std::size_t>(p[0].axis) * 10 + std::stoul(p[0].text.substr(dash + 1))]++;
        if (p.size() == 3)
            ++orders[order];
    }
    // Critical values at p = 0.001: 13.82 (2 dof), 58.30 (29 dof), 20.52 (5 dof).
    CHECK(chi_square_uniform(lengths) < 13.82);
    CHECK(chi_square_uniform(firstCell) < 58.30);
    REQUIRE(orders.size() == 6);
    std::vector<std::size_t> orderCounts;
    for (auto const& [o, c]: orders)
        orderCounts.push_back(c);
    CHECK(chi_square_uniform(orderCounts) < 20.52);
}

TEST_CASE("enriched problem lists ideas in order")
{
    CHECK(format_enriched_problem("Base.", {}) == "Base.");
    auto const text = format_enriched_problem("Base.", { "first idea", "second idea" });
    CHECK(text.starts_with("Base.\n\n"));
    CHECK(text.find("1. first idea\n2. second idea\n") != std::string::npos);
}
