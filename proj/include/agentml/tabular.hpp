// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/common.hpp>

#include <vector>

namespace agentml
{

/// Small finite-horizon MDP. Tables are dense and row-major:
/// p[(s * A + a) * S + s2], r[s * A + a].
struct TabularMDP
{
    int n_states = 0;
    int n_actions = 0;
    int horizon = 0;
    std::vector<double> p;
    std::vector<double> r;
    std::vector<double> initial;

    [[nodiscard]] double P(int s, int a, int s2) const { return p[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2]; }
    [[nodiscard]] double R(int s, int a) const { return r[static_cast<std::size_t>(s) * n_actions + a]; }

    /// Shapes, non-negative entries, rows summing to 1 within 1e-12.
    void validate() const;
};

/// Stationary stochastic policy pi(a|s), row-major [s * A + a].
struct TabularPolicy
{
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> pi;

    [[nodiscard]] double operator()(int s, int a) const { return pi[static_cast<std::size_t>(s) * n_actions + a]; }
};

/// d[t][s] for t = 0..horizon: the probability of being in s before the
/// (t+1)-th action. d[0] is the initial distribution.
struct StateDistribution
{
    std::vector<std::vector<double>> d;
};

StateDistribution exact_state_distribution(const TabularMDP& mdp, const TabularPolicy& policy);

/// J = sum over trajectories of P(tau) * sum_t R(s_t, a_t), enumerating
/// every (s_0, a_0, ..., s_{n-1}, a_{n-1}). Throws InstanceTooLarge past
/// kMaxEnumeratedPaths.
inline constexpr double kMaxEnumeratedPaths = 1e7;
double objective_by_enumeration(const TabularMDP& mdp, const TabularPolicy& policy);

/// J = sum_t sum_s d(s_t) sum_a pi(a|s) R(s, a), with d as given (t < n).
double objective_by_state_expansion(const TabularMDP& mdp, const TabularPolicy& policy, const StateDistribution& d);
double objective_by_state_expansion(const TabularMDP& mdp, const TabularPolicy& policy);

/// Empirical d[t][s] over n_rollouts sampled rollouts.
StateDistribution monte_carlo_state_distribution(const TabularMDP& mdp,
                                                 const TabularPolicy& policy,
                                                 std::size_t n_rollouts,
                                                 Rng& rng);

/// Random instance with 1..max_states states, 1..max_actions actions and
/// horizon 0..max_horizon. Some rows are made sparse or deterministic.
TabularMDP random_tabular_mdp(Rng& rng, int max_states, int max_actions, int max_horizon);
TabularPolicy random_tabular_policy(Rng& rng, int n_states, int n_actions);

} // namespace agentml
