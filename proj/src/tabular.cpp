// SPDX-License-Identifier: Apache-2.0
#include <agentml/tabular.hpp>

#include <fmt/format.h>

#include <cmath>

namespace agentml
{

namespace
{
    void check_row(const double* row, int n, double tol, std::string_view what)
    {
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
        {
            if (!(row[i] >= 0.0) || !std::isfinite(row[i]))
                throw Error(ErrorCode::InvalidArgument, fmt::format("{} has a bad entry {}", what, row[i]));
            sum += row[i];
        }
        if (std::abs(sum - 1.0) > tol)
            throw Error(ErrorCode::InvalidArgument, fmt::format("{} sums to {:.17g}", what, sum));
    }

    void check_policy(const TabularMDP& mdp, const TabularPolicy& policy)
    {
        mdp.validate();
        if (policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions ||
            policy.pi.size() != static_cast<std::size_t>(mdp.n_states * mdp.n_actions))
            throw Error(ErrorCode::ShapeMismatch, "policy shape does not match the MDP");
        for (int s = 0; s < mdp.n_states; ++s)
            check_row(policy.pi.data() + static_cast<std::size_t>(s) * mdp.n_actions, mdp.n_actions, 1e-12, "policy row");
    }

    // Random point on the simplex; sometimes sparse, sometimes a point mass.
    std::vector<double> random_row(Rng& rng, int n)
    {
        std::vector<double> row(n, 0.0);
        auto const shape = rng.below(4);
        if (shape == 0)
        {
            row[rng.below(n)] = 1.0;
            return row;
        }
        double sum = 0.0;
        for (auto& v: row)
        {
            v = (shape == 1 && rng.uniform() < 0.4) ? 0.0 : -std::log(1.0 - rng.uniform());
            sum += v;
        }
        if (sum == 0.0)
        {
            row[rng.below(n)] = 1.0;
            return row;
        }
        for (auto& v: row)
            v /= sum;
        return row;
    }
} // namespace

void TabularMDP::validate() const
{
    if (n_states < 1 || n_actions < 1 || horizon < 0)
        throw Error(ErrorCode::InvalidArgument, "MDP needs at least one state and one action");
    auto const sa = static_cast<std::size_t>(n_states) * n_actions;
    if (p.size() != sa * n_states || r.size() != sa || initial.size() != static_cast<std::size_t>(n_states))
        throw Error(ErrorCode::ShapeMismatch, "MDP table sizes do not match the declared dimensions");
    for (std::size_t i = 0; i < sa; ++i)
        check_row(p.data() + i * n_states, n_states, 1e-12, "transition row");
    check_row(initial.data(), n_states, 1e-12, "initial distribution");
    for (double v: r)
        if (!std::isfinite(v))
            throw Error(ErrorCode::InvalidArgument, "reward table has a non-finite entry");
}

StateDistribution exact_state_distribution(const TabularMDP& mdp, const TabularPolicy& policy)
{
    check_policy(mdp, policy);
    StateDistribution out;
    out.d.push_back(mdp.initial);
    for (int t = 0; t < mdp.horizon; ++t)
    {
        auto const& cur = out.d.back();
        std::vector<double> next(mdp.n_states, 0.0);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a)
            {
                auto const w = cur[s] * policy(s, a);
                for (int s2 = 0; s2 < mdp.n_states; ++s2)
                    next[s2] += w * mdp.P(s, a, s2);
            }
        out.d.push_back(std::move(next));
    }
    return out;
}

double objective_by_enumeration(const TabularMDP& mdp, const TabularPolicy& policy)
{
    check_policy(mdp, policy);
    auto const paths = std::pow(static_cast<double>(mdp.n_states) * mdp.n_actions, mdp.horizon);
    if (paths > kMaxEnumeratedPaths)
        throw Error(ErrorCode::InstanceTooLarge,
                    fmt::format("{} trajectories to enumerate (limit {:g})", paths, kMaxEnumeratedPaths));

    // Walk every prefix depth-first, carrying P(prefix) and its reward sum.
    double total = 0.0;
    auto walk = [&](auto&& self, int t, int s, double prob, double ret) -> void {
        if (t == mdp.horizon)
        {
            total += prob * ret;
            return;
        }
        for (int a = 0; a < mdp.n_actions; ++a)
        {
            auto const pa = prob * policy(s, a);
            if (t + 1 == mdp.horizon)
            {
                // s_n does not affect the return; its transition sums to 1.
                self(self, t + 1, s, pa, ret + mdp.R(s, a));
                continue;
            }
            for (int s2 = 0; s2 < mdp.n_states; ++s2)
                self(self, t + 1, s2, pa * mdp.P(s, a, s2), ret + mdp.R(s, a));
        }
    };
    if (mdp.horizon == 0)
        return 0.0;
    for (int s0 = 0; s0 < mdp.n_states; ++s0)
        walk(walk, 0, s0, mdp.initial[s0], 0.0);
    return total;
}

double objective_by_state_expansion(const TabularMDP& mdp, const TabularPolicy& policy, const StateDistribution& d)
{
    check_policy(mdp, policy);
    if (d.d.size() < static_cast<std::size_t>(mdp.horizon))
        throw Error(ErrorCode::ShapeMismatch, "state distribution is shorter than the horizon");
    double total = 0.0;
    for (int t = 0; t < mdp.horizon; ++t)
        for (int s = 0; s < mdp.n_states; ++s)
        {
            double expected = 0.0;
            for (int a = 0; a < mdp.n_actions; ++a)
                expected += policy(s, a) * mdp.R(s, a);
            total += d.d[t][s] * expected;
        }
    return total;
}

double objective_by_state_expansion(const TabularMDP& mdp, const TabularPolicy& policy)
{
    return objective_by_state_expansion(mdp, policy, exact_state_distribution(mdp, policy));
}

StateDistribution
monte_carlo_state_distribution(const TabularMDP& mdp, const TabularPolicy& policy, std::size_t n_rollouts, Rng& rng)
{
    check_policy(mdp, policy);
    if (n_rollouts == 0)
        throw Error(ErrorCode::InvalidArgument, "need at least one rollout");
    auto draw = [&](auto const& weight, int n) {
        auto u = rng.uniform();
        for (int i = 0; i < n; ++i)
        {
            u -= weight(i);
            if (u < 0.0)
                return i;
        }
        // Rounding left a sliver: take the last index with mass.
        for (int i = n - 1; i > 0; --i)
            if (weight(i) > 0.0)
                return i;
        return 0;
    };
    std::vector<std::vector<std::size_t>> counts(mdp.horizon + 1, std::vector<std::size_t>(mdp.n_states, 0));
    for (std::size_t k = 0; k < n_rollouts; ++k)
    {
        int s = draw([&](int i) { return mdp.initial[i]; }, mdp.n_states);
        ++counts[0][s];
        for (int t = 0; t < mdp.horizon; ++t)
        {
            int const a = draw([&](int i) { return policy(s, i); }, mdp.n_actions);
            s = draw([&](int i) { return mdp.P(s, a, i); }, mdp.n_states);
            ++counts[t + 1][s];
        }
    }
    StateDistribution out;
    for (auto const& row: counts)
    {
        std::vector<double> freq;
        for (auto c: row)
            freq.push_back(static_cast<double>(c) / static_cast<double>(n_rollouts));
        out.d.push_back(std::move(freq));
    }
    return out;
}

TabularMDP random_tabular_mdp(Rng& rng, int max_states, int max_actions, int max_horizon)
{
    TabularMDP m;
    m.n_states = 1 + static_cast<int>(rng.below(max_states));
    m.n_actions = 1 + static_cast<int>(rng.below(max_actions));
    m.horizon = static_cast<int>(rng.below(max_horizon + 1));
    for (int i = 0; i < m.n_states * m.n_actions; ++i)
    {
        auto const row = random_row(rng, m.n_states);
        m.p.insert(m.p.end(), row.begin(), row.end());
        m.r.push_back(2.0 * rng.uniform() - 1.0);
    }
    m.initial = random_row(rng, m.n_states);
    return m;
}

TabularPolicy random_tabular_policy(Rng& rng, int n_states, int n_actions)
{
    TabularPolicy p { n_states, n_actions, {} };
    for (int s = 0; s < n_states; ++s)
    {
        auto const row = random_row(rng, n_actions);
        p.pi.insert(p.pi.end(), row.begin(), row.end());
    }
    return p;
}

} // namespace agentml
