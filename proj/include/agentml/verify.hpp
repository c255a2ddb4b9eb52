// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/reward.hpp>
#include <agentml/tabular.hpp>

#include <functional>
#include <string>
#include <vector>

namespace agentml
{

// Oracle suites behind `agentml verify`. Each one checks an implementation
// against an independent computation with pinned seeds. The reward and
// state-distribution suites take the implementation under test as a
// parameter so a deliberately broken variant can be run through them.

struct SuiteResult
{
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    std::string detail; // first failure, or a summary

    [[nodiscard]] bool passed() const { return cases > 0 && failures == 0; }
};

using RewardFn = std::function<
    double(ActionClass, FeedbackClass, double, std::optional<double>, const MetricSpec&, const RewardClamp&)>;
using DistributionFn = std::function<StateDistribution(const TabularMDP&, const TabularPolicy&)>;

enum class Mutation
{
    None,
    RewardDenominatorSign, // (m_init - m_best) in the edit reward
    DistributionOffByOne,  // d(s_t) stored one step late
};

std::string_view to_string(Mutation m);
Mutation mutation_from_string(std::string_view text);

RewardFn reward_under(Mutation m);
DistributionFn distribution_under(Mutation m);

/// All 12 (action class, feedback class) cases, direction coherence, and
/// exact telescoping on dyadic edit chains.
SuiteResult verify_reward_cases(const RewardFn& reward, std::uint64_t seed = 1);

/// Enumerated trajectory objective vs the state-expansion form on random
/// tabular MDPs (|S| <= 4, |A| <= 3, n <= 5), plus hand-forced cases.
SuiteResult verify_state_identity(const DistributionFn& distribution, std::size_t instances = 200, std::uint64_t seed = 2);

/// Analytic SFT / PPO gradients vs central differences.
SuiteResult verify_sft_gradients(std::size_t instances = 50, std::uint64_t seed = 3);
SuiteResult verify_ppo_gradients(std::size_t instances = 50, std::uint64_t seed = 4);

/// PPO clip branch is reached when the policy moves far from the
/// collecting one.
SuiteResult verify_clip_activity(std::uint64_t seed = 5);

/// FPS trace vs a brute-force greedy recomputation on sets of <= 12 points.
SuiteResult verify_fps_trace(std::size_t instances = 100, std::uint64_t seed = 6);

struct FpsDominance
{
    std::size_t instances = 0;
    std::size_t beats_mean = 0; // FPS min-pairwise >= mean over the random subsets
    std::size_t beats_all = 0;  // FPS min-pairwise >= every random subset
    std::size_t within_half = 0; // FPS min-pairwise >= half the best random subset
};

/// FPS selection vs `subsets` random k-subsets of the same points.
FpsDominance fps_dominance(std::size_t instances, std::size_t subsets, std::uint64_t seed);

/// Greedy max-min selection is within a factor 2 of the optimal subset
/// whatever its first point (each greedy pick stays at least OPT/2 from the
/// earlier ones), so it can never fall below half the best random subset.
/// That bound must hold on every instance; how often FPS beats every random
/// subset, or their mean, is reported alongside.
SuiteResult verify_fps_dominance(std::size_t instances = 200, std::size_t subsets = 1000, std::uint64_t seed = 7);

/// parse(format(b)) == b and format is a fixed point on generated blocks.
SuiteResult verify_protocol_round_trip(std::size_t blocks = 10000, std::uint64_t seed = 8);

/// Every suite, with the given mutation injected where it applies.
std::vector<SuiteResult> run_verify_suites(Mutation mutation = Mutation::None);

} // namespace agentml
