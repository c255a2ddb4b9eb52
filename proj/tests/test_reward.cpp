// SPDX-License-Identifier: Apache-2.0
#include <agentml/reward.hpp>
#include <agentml/verify.hpp>

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace agentml;

namespace
{
MetricSpec accuracy(double m_init, double m_best)
{
    MetricSpec m;
    m.name = "Accuracy";
    m.beta = 1;
    m.m_init = m_init;
    m.m_best = m_best;
    m.marker = MetricSpec::default_marker(m.name);
    return m;
}
} // namespace

TEST_CASE("every action/feedback combination has its case value")
{
    auto const metric = accuracy(0.60, 0.80);
    // Invalid actions and errors are -1; valid non-edits and corner cases 0;
    // a successful edit earns the scaled metric change.
    struct Row
    {
        ActionClass a;
        FeedbackClass f;
        double expected;
    };
    std::vector<Row> const rows {
        { ActionClass::Invalid, FeedbackClass::Error, -1.0 },
        { ActionClass::Invalid, FeedbackClass::Corner, -1.0 },
        { ActionClass::Invalid, FeedbackClass::Success, -1.0 },
        { ActionClass::Invalid, FeedbackClass::Neutral, -1.0 },
        { ActionClass::ValidNonEdit, FeedbackClass::Error, -1.0 },
        { ActionClass::ValidNonEdit, FeedbackClass::Corner, 0.0 },
        { ActionClass::ValidNonEdit, FeedbackClass::Success, 0.0 },
        { ActionClass::ValidNonEdit, FeedbackClass::Neutral, 0.0 },
        { ActionClass::Edit, FeedbackClass::Error, -1.0 },
        { ActionClass::Edit, FeedbackClass::Corner, 0.0 },
        { ActionClass::Edit, FeedbackClass::Neutral, 0.0 },
    };
    for (auto const& r: rows)
    {
        CAPTURE(to_string(r.a));
        CAPTURE(to_string(r.f));
        CHECK(step_reward(r.a, r.f, 0.60, 0.66, metric) == r.expected);
    }
    // (0.66 - 0.60) / (0.80 - 0.60)
    CHECK(step_reward(ActionClass::Edit, FeedbackClass::Success, 0.60, 0.66, metric)
          == doctest::Approx(0.30).epsilon(1e-12));
}

TEST_CASE("lower-is-better metrics reward a decrease")
{
    MetricSpec rmse = accuracy(0.50, 0.30);
    rmse.name = "RMSE";
    rmse.beta = -1;
    rmse.marker = MetricSpec::default_marker("RMSE");
    // (0.46 - 0.50) / (0.30 - 0.50) = 0.2
    CHECK(step_reward(ActionClass::Edit, FeedbackClass::Success, 0.50, 0.46, rmse) == doctest::Approx(0.20).epsilon(1e-12));
    CHECK(step_reward(ActionClass::Edit, FeedbackClass::Success, 0.50, 0.54, rmse) < 0.0);
}

TEST_CASE("clamp bounds edit rewards and can be switched off")
{
    auto const metric = accuracy(0.5, 0.6);
    CHECK(step_reward(ActionClass::Edit, FeedbackClass::Success, 0.5, 0.9, metric) == 1.0);
    CHECK(step_reward(ActionClass::Edit, FeedbackClass::Success, 0.5, 0.1, metric) == -1.0);
    RewardClamp off;
    off.enabled = false;
    CHECK(step_reward(ActionClass::Edit, FeedbackClass::Success, 0.5, 0.9, metric, off) == doctest::Approx(4.0));
}

TEST_CASE("edit rewards telescope along a chain")
{
    auto const metric = accuracy(0.25, 0.75);
    RewardClamp off;
    off.enabled = false;
    std::vector<double> const chain { 0.25, 0.375, 0.3125, 0.5, 0.625 };
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < chain.size(); ++i)
        sum += step_reward(ActionClass::Edit, FeedbackClass::Success, chain[i], chain[i + 1], metric, off);
    // Dyadic values: the sum is exact.
    CHECK(sum == (chain.back() - chain.front()) / (metric.m_best - metric.m_init));
}

TEST_CASE("a successful edit must carry its metric")
{
    // Success is only ever assigned when a metric was printed.
    CHECK_THROWS_AS(step_reward(ActionClass::Edit, FeedbackClass::Success, 0.6, std::nullopt, accuracy(0.6, 0.8)), Error);
}

TEST_CASE("degenerate metric specs are rejected")
{
    CHECK_THROWS_AS(accuracy(0.5, 0.5).validate(), Error);
    MetricSpec wrongWay = accuracy(0.5, 0.4); // higher is better but best is lower
    CHECK_THROWS_AS(wrongWay.validate(), Error);
}

TEST_CASE("performance gain and best@K")
{
    CHECK(performance_gain(110.0, 100.0, 1) == 0.10);
    CHECK(performance_gain(0.9, 1.0, -1) == doctest::Approx(0.1));
    CHECK_THROWS_AS(performance_gain(1.0, 0.0, 1), Error);

    std::vector<double> const s { 3.0, 1.0, 4.0, 1.0, 5.0 };
    CHECK(best_at_k(s, 1, 1) == 3.0);
    CHECK(best_at_k(s, 3, 1) == 4.0);
    CHECK(best_at_k(s, 5, 1) == 5.0);
    CHECK(best_at_k(s, 2, -1) == 1.0);
    CHECK_THROWS_AS(best_at_k(s, 0, 1), Error);
    CHECK_THROWS_AS(best_at_k(s, 6, 1), Error);
}

TEST_CASE("reward suite passes and catches a flipped denominator")
{
    CHECK(verify_reward_cases(reward_under(Mutation::None)).passed());
    auto const broken = verify_reward_cases(reward_under(Mutation::RewardDenominatorSign));
    CHECK_FALSE(broken.passed());
    CHECK(broken.failures > 0);
}
