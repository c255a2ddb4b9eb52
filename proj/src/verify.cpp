// SPDX-License-Identifier: Apache-2.0
#include <agentml/verify.hpp>

#include <agentml/pool.hpp>
#include <agentml/protocol.hpp>
#include <agentml/toy_policy.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace agentml
{

namespace
{
    void fail(SuiteResult& r, std::string what)
    {
        if (r.failures++ == 0)
            r.detail = std::move(what);
    }

    MetricSpec metric(int beta, double m_init, double m_best)
    {
        MetricSpec m;
        m.name = beta > 0 ? "Accuracy" : "RMSE";
        m.beta = beta;
        m.m_init = m_init;
        m.m_best = m_best;
        m.marker = MetricSpec::default_marker(m.name);
        return m;
    }

    Features random_features(Rng& rng)
    {
        Features x {};
        x[0] = 1.0;
        for (int f = 1; f < kFeatures; ++f)
            x[f] = 2.0 * rng.uniform() - 1.0;
        return x;
    }

    ToyPolicy random_policy(Rng& rng, double scale)
    {
        ToyPolicy p;
        for (auto& v: p.theta)
            v = scale * rng.normal();
        return p;
    }

    // ||a - b|| / max(||a||, ||b||) over the listed coordinates.
    double relative_error(const std::vector<double>& a, const std::vector<double>& b, const std::vector<std::size_t>& coords)
    {
        double diff = 0.0, na = 0.0, nb = 0.0;
        for (auto i: coords)
        {
            diff += (a[i] - b[i]) * (a[i] - b[i]);
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        auto const scale = std::max({ std::sqrt(na), std::sqrt(nb), 1e-12 });
        return std::sqrt(diff) / scale;
    }

    // Every parameter of the contexts a batch visits, plus a few others
    // whose analytic gradient should be exactly zero.
    std::vector<std::size_t> gradient_coords(const std::vector<SymbolSeq>& seqs, Rng& rng)
    {
        std::vector<bool> visited(kContexts, false);
        for (auto const& seq: seqs)
            for (std::size_t i = 0; i < seq.size(); ++i)
                visited[context_of(std::span<const int>(seq.data(), i))] = true;
        std::vector<std::size_t> coords;
        for (int c = 0; c < kContexts; ++c)
            if (visited[c])
                for (int v = 0; v < kVocabSize; ++v)
                    for (int f = 0; f < kFeatures; ++f)
                        coords.push_back(ToyPolicy::index(c, v, f));
        auto const total = static_cast<std::size_t>(kContexts) * kVocabSize * kFeatures;
        for (int k = 0; k < 32; ++k)
            coords.push_back(rng.below(total));
        return coords;
    }

    template <typename Fn>
    std::vector<double> central_differences(ToyPolicy policy, const std::vector<std::size_t>& coords, Fn&& value, double h)
    {
        std::vector<double> g(policy.theta.size(), 0.0);
        for (auto i: coords)
        {
            auto const keep = policy.theta[i];
            policy.theta[i] = keep + h;
            auto const up = value(policy);
            policy.theta[i] = keep - h;
            auto const down = value(policy);
            policy.theta[i] = keep;
            g[i] = (up - down) / (2.0 * h);
        }
        return g;
    }

    double min_pairwise(const std::vector<IdeaCandidate>& c, const std::vector<std::size_t>& pick)
    {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pick.size(); ++i)
            for (std::size_t j = i + 1; j < pick.size(); ++j)
                best = std::min(best, euclidean(c[pick[i]].embedding, c[pick[j]].embedding));
        return best;
    }

    std::vector<IdeaCandidate> random_points(Rng& rng, std::size_t n, std::size_t dim)
    {
        std::vector<IdeaCandidate> out(n);
        for (auto& c: out)
        {
            double norm = 0.0;
            c.embedding.resize(dim);
            for (auto& v: c.embedding)
            {
                v = rng.normal();
                norm += v * v;
            }
            for (auto& v: c.embedding)
                v /= std::sqrt(norm);
        }
        return out;
    }

    constexpr std::array<std::string_view, 24> kWords {
        "the",   "model",  "loss",  "val",     "score", "is",     "0.42",  "improved", "after",   "we",  "try",   "a",
        "lower", "rate,",  "then",  "Action",  "plan",  "\"q\"",  "{x}",   "step-3",   "résumé",  "n/a", "(ok)",  "`code`",
    };

    std::string random_text(Rng& rng)
    {
        std::string out;
        auto const words = 1 + rng.below(12);
        for (std::size_t i = 0; i < words; ++i)
        {
            if (i > 0)
                out += rng.below(6) == 0 ? "\n" : " ";
            out += kWords[rng.below(kWords.size())];
        }
        return out;
    }

    std::string random_value_text(Rng& rng)
    {
        static constexpr std::string_view kChars = "abcXYZ019 _-./\\\"'{}[]:,\n\té";
        std::string out;
        auto const n = rng.below(16);
        for (std::size_t i = 0; i < n; ++i)
        {
            auto const at = rng.below(kChars.size());
            // Keep multi-byte characters whole.
            if (static_cast<unsigned char>(kChars[at]) >= 0x80)
                out += "é";
            else
                out += kChars[at];
        }
        return out;
    }
} // namespace

std::string_view to_string(Mutation m)
{
    switch (m)
    {
        case Mutation::None: return "none";
        case Mutation::RewardDenominatorSign: return "reward-denominator-sign";
        case Mutation::DistributionOffByOne: return "distribution-off-by-one";
    }
    return "?";
}

Mutation mutation_from_string(std::string_view text)
{
    for (auto m: { Mutation::None, Mutation::RewardDenominatorSign, Mutation::DistributionOffByOne })
        if (to_string(m) == text)
            return m;
    throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown mutation '{}'", text));
}

RewardFn reward_under(Mutation m)
{
    if (m != Mutation::RewardDenominatorSign)
        return [](ActionClass a, FeedbackClass f, double m_t, std::optional<double> m_next, const MetricSpec& spec, const RewardClamp& c) {
            return step_reward(a, f, m_t, m_next, spec, c);
        };
    return [](ActionClass a, FeedbackClass f, double m_t, std::optional<double> m_next, const MetricSpec& spec, const RewardClamp& c) {
        if (a == ActionClass::Edit && f == FeedbackClass::Success && m_next)
            return c.apply((*m_next - m_t) / (spec.m_init - spec.m_best));
        return step_reward(a, f, m_t, m_next, spec, c);
    };
}

DistributionFn distribution_under(Mutation m)
{
    if (m != Mutation::DistributionOffByOne)
        return [](const TabularMDP& mdp, const TabularPolicy& pi) { return exact_state_distribution(mdp, pi); };
    return [](const TabularMDP& mdp, const TabularPolicy& pi) {
        auto d = exact_state_distribution(mdp, pi);
        d.d.insert(d.d.begin(), d.d.front());
        d.d.pop_back();
        return d;
    };
}

SuiteResult verify_reward_cases(const RewardFn& reward, std::uint64_t seed)
{
    SuiteResult r;
    r.name = "reward-cases";
    RewardClamp const clamp;

    // The two worked edit examples: (0.65-0.50)/(1.00-0.50) and
    // (0.21-0.26)/(0.05-0.30).
    struct Worked
    {
        MetricSpec spec;
        double m_t, m_next, expected;
    };
    std::array<Worked, 2> const worked { Worked { metric(1, 0.50, 1.00), 0.50, 0.65, 0.30 },
                                         Worked { metric(-1, 0.30, 0.05), 0.26, 0.21, 0.20 } };
    for (auto const& w: worked)
        for (auto a: kAllActionClasses)
            for (auto f: kAllFeedbackClasses)
            {
                ++r.cases;
                double expected = 0.0;
                if (a == ActionClass::Invalid || f == FeedbackClass::Error)
                    expected = -1.0;
                else if (a == ActionClass::Edit && f == FeedbackClass::Success)
                    expected = w.expected;
                auto const got = reward(a, f, w.m_t, w.m_next, w.spec, clamp);
                bool const exact = expected != w.expected || a != ActionClass::Edit;
                if (exact ? got != expected : std::abs(got - expected) > 1e-12)
                    fail(r,
                         fmt::format("({}, {}) on {} gave {} instead of {}",
                                     to_string(a),
                                     to_string(f),
                                     w.spec.name,
                                     got,
                                     expected));
            }

    // A successful edit is rewarded positively exactly when it moves toward
    // m_best.
    Rng rng(seed);
    for (int i = 0; i < 200; ++i)
    {
        int const beta = rng.below(2) ? 1 : -1;
        auto const init = 0.2 + 0.5 * rng.uniform();
        auto const spec = metric(beta, init, init + beta * (0.05 + 0.3 * rng.uniform()));
        auto const m_t = init + 0.2 * (rng.uniform() - 0.5);
        auto const m_next = init + 0.2 * (rng.uniform() - 0.5);
        auto const got = reward(ActionClass::Edit, FeedbackClass::Success, m_t, m_next, spec, clamp);
        bool const toward = std::abs(m_next - spec.m_best) < std::abs(m_t - spec.m_best);
        ++r.cases;
        if ((got > 0.0) != toward && m_next != m_t)
            fail(r, fmt::format("edit {} -> {} (best {}) rewarded {}", m_t, m_next, spec.m_best, got));
    }

    // Telescoping. Scores are multiples of 1/256 and the span is +-0.5, so
    // every difference, quotient and partial sum is exact in binary.
    RewardClamp const off { -1.0, 1.0, false };
    for (int i = 0; i < 200; ++i)
    {
        int const beta = rng.below(2) ? 1 : -1;
        auto const spec = beta > 0 ? metric(1, 0.25, 0.75) : metric(-1, 0.75, 0.25);
        auto grid = [&] { return static_cast<double>(rng.below(257)) / 256.0; };
        double m_t = spec.m_init;
        double const first = m_t;
        double sum = 0.0;
        auto const n = 1 + rng.below(12);
        for (std::size_t k = 0; k < n; ++k)
        {
            auto const next = grid();
            sum += reward(ActionClass::Edit, FeedbackClass::Success, m_t, next, spec, off);
            m_t = next;
        }
        ++r.cases;
        auto const expected = (m_t - first) / (spec.m_best - spec.m_init);
        if (sum != expected)
            fail(r, fmt::format("chain of {} edits summed to {} instead of {}", n, sum, expected));
    }
    if (r.failures == 0)
        r.detail = "12 cases on two metrics, direction coherence, exact telescoping";
    return r;
}

SuiteResult verify_state_identity(const DistributionFn& distribution, std::size_t instances, std::uint64_t seed)
{
    SuiteResult r;
    r.name = "state-identity";
    auto expand = [&](const TabularMDP& m, const TabularPolicy& pi) {
        return objective_by_state_expansion(m, pi, distribution(m, pi));
    };

    // One state, one action, reward 1, three steps.
    {
        TabularMDP m { 1, 1, 3, { 1.0 }, { 1.0 }, { 1.0 } };
        TabularPolicy pi { 1, 1, { 1.0 } };
        ++r.cases;
        if (objective_by_enumeration(m, pi) != 3.0 || expand(m, pi) != 3.0)
            fail(r, "forced single-state chain does not give J = 3");
    }
    // Deterministic two-state cycle: point masses alternate.
    {
        TabularMDP m { 2, 1, 4, { 0.0, 1.0, 1.0, 0.0 }, { 1.0, 0.0 }, { 1.0, 0.0 } };
        TabularPolicy pi { 2, 1, { 1.0, 1.0 } };
        auto const d = distribution(m, pi);
        ++r.cases;
        bool ok = d.d.size() == 5;
        for (std::size_t t = 0; ok && t < d.d.size(); ++t)
            ok = d.d[t][t % 2] == 1.0 && d.d[t][1 - t % 2] == 0.0;
        if (!ok)
            fail(r, "two-state cycle does not alternate");
        ++r.cases;
        if (objective_by_enumeration(m, pi) != 2.0 || expand(m, pi) != 2.0)
            fail(r, "two-state cycle objective is not 2");
    }

    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i)
    {
        auto m = random_tabular_mdp(rng, 4, 3, 5);
        auto const pi = random_tabular_policy(rng, m.n_states, m.n_actions);
        if (i % 10 == 0)
            std::fill(m.r.begin(), m.r.end(), 0.0);
        ++r.cases;
        auto const d = distribution(m, pi);
        bool shape = d.d.size() == static_cast<std::size_t>(m.horizon) + 1 && d.d.front() == m.initial;
        for (auto const& row: d.d)
            shape = shape && std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-10;
        auto const lhs = objective_by_enumeration(m, pi);
        auto const rhs = objective_by_state_expansion(m, pi, d);
        worst = std::max(worst, std::abs(lhs - rhs));
        if (!shape)
            fail(r, fmt::format("instance {}: d(s_t) has the wrong shape or does not start at the initial distribution", i));
        else if (!(std::abs(lhs - rhs) < 1e-10))
            fail(r, fmt::format("instance {} (|S|={}, |A|={}, n={}): enumeration {} vs expansion {}", i, m.n_states, m.n_actions, m.horizon, lhs, rhs));
        else if (i % 10 == 0 && (lhs != 0.0 || rhs != 0.0))
            fail(r, fmt::format("instance {}: zero rewards gave J = {} / {}", i, lhs, rhs));
    }
    if (r.failures == 0)
        r.detail = fmt::format("{} random MDPs, worst gap {:.3g}", instances, worst);
    return r;
}

SuiteResult verify_sft_gradients(std::size_t instances, std::uint64_t seed)
{
    SuiteResult r;
    r.name = "sft-gradient";
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i)
    {
        auto const policy = random_policy(rng, 0.5);
        std::vector<SftTarget> data;
        std::vector<SymbolSeq> seqs;
        auto const n = 1 + rng.below(5);
        for (std::size_t k = 0; k < n; ++k)
        {
            auto const x = random_features(rng);
            data.push_back({ x, policy.sample(x, rng) });
            seqs.push_back(data.back().seq);
        }
        auto const analytic = sft_loss_and_grad(policy, data);
        auto const coords = gradient_coords(seqs, rng);
        auto const numeric = central_differences(
            policy, coords, [&](const ToyPolicy& p) { return sft_loss_and_grad(p, data).value; }, 1e-6);
        auto const err = relative_error(analytic.grad, numeric, coords);
        worst = std::max(worst, err);
        ++r.cases;
        if (!(err < 1e-5))
            fail(r, fmt::format("instance {}: relative error {:.3g}", i, err));
    }
    if (r.failures == 0)
        r.detail = fmt::format("{} instances, worst relative error {:.3g}", instances, worst);
    return r;
}

SuiteResult verify_ppo_gradients(std::size_t instances, std::uint64_t seed)
{
    SuiteResult r;
    r.name = "ppo-gradient";
    Rng rng(seed);
    double worst = 0.0;
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < instances; ++i)
    {
        auto const old = random_policy(rng, 0.5);
        auto policy = old;
        for (auto& v: policy.theta)
            v += 0.3 * rng.normal();
        auto const reference = random_policy(rng, 0.5);
        std::vector<PpoSample> batch;
        std::vector<SymbolSeq> seqs;
        auto const n = 1 + rng.below(6);
        for (std::size_t k = 0; k < n; ++k)
        {
            PpoSample s;
            s.x = random_features(rng);
            s.seq = old.sample(s.x, rng);
            s.old_log_probs = old.token_log_probs(s.x, s.seq);
            s.advantages.assign(s.seq.size(), rng.normal());
            seqs.push_back(s.seq);
            batch.push_back(std::move(s));
        }
        std::array<double, 3> const kl { 0.0, 0.001, 0.5 };
        auto const kl_coef = kl[i % 3];
        auto const* ref = i % 3 == 0 ? nullptr : &reference;
        auto const analytic = ppo_objective(policy, batch, 0.2, kl_coef, ref);
        auto const coords = gradient_coords(seqs, rng);
        auto const numeric = central_differences(
            policy, coords, [&](const ToyPolicy& p) { return ppo_objective(p, batch, 0.2, kl_coef, ref).value; }, 1e-6);
        auto const err = relative_error(analytic.grad, numeric, coords);
        worst = std::max(worst, err);
        clipped += clipped_symbols(policy, batch, 0.2);
        ++r.cases;
        if (!(err < 1e-4))
            fail(r, fmt::format("instance {}: relative error {:.3g}", i, err));
    }
    if (r.failures == 0)
        r.detail = fmt::format("{} instances, worst relative error {:.3g}, {} clipped symbols seen", instances, worst, clipped);
    return r;
}

SuiteResult verify_clip_activity(std::uint64_t seed)
{
    SuiteResult r;
    r.name = "clip-activity";
    Rng rng(seed);
    auto const old = random_policy(rng, 0.5);
    auto far = old;
    for (auto& v: far.theta)
        v += 3.0 * rng.normal();
    std::vector<PpoSample> batch;
    for (int k = 0; k < 16; ++k)
    {
        PpoSample s;
        s.x = random_features(rng);
        s.seq = old.sample(s.x, rng);
        s.old_log_probs = old.token_log_probs(s.x, s.seq);
        s.advantages.assign(s.seq.size(), 1.0);
        batch.push_back(std::move(s));
    }
    ++r.cases;
    auto const same = clipped_symbols(old, batch, 0.2);
    if (same != 0)
        fail(r, fmt::format("{} symbols clipped with the policy equal to the collecting one", same));
    ++r.cases;
    auto const moved = clipped_symbols(far, batch, 0.2);
    if (moved == 0)
        fail(r, "no symbol clipped after a large perturbation");
    // With r = 1 the surrogate is the mean advantage.
    ++r.cases;
    auto const at_one = ppo_objective(old, batch, 0.2, 0.0, nullptr).value;
    if (std::abs(at_one - 1.0) > 1e-12)
        fail(r, fmt::format("surrogate at ratio one is {} instead of the mean advantage 1", at_one));
    if (r.failures == 0)
        r.detail = fmt::format("{} of the batch's symbols clipped after perturbation", moved);
    return r;
}

SuiteResult verify_fps_trace(std::size_t instances, std::uint64_t seed)
{
    SuiteResult r;
    r.name = "fps-trace";
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i)
    {
        auto const n = 1 + rng.below(12);
        auto const k = 1 + rng.below(n);
        auto const dim = 1 + rng.below(8);
        auto const points = random_points(rng, n, dim);

        // Brute force: full distance matrix, every step rescans everything.
        std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
            {
                double s = 0.0;
                for (std::size_t j = 0; j < dim; ++j)
                    s += (points[a].embedding[j] - points[b].embedding[j]) * (points[a].embedding[j] - points[b].embedding[j]);
                dist[a][b] = std::sqrt(s);
            }
        std::vector<std::size_t> expected;
        std::size_t seedIndex = 0;
        double bestMean = -1.0;
        for (std::size_t a = 0; a < n; ++a)
        {
            double sum = 0.0;
            for (std::size_t b = 0; b < n; ++b)
                sum += dist[a][b];
            auto const mean = n > 1 ? sum / static_cast<double>(n - 1) : 0.0;
            if (mean > bestMean)
            {
                bestMean = mean;
                seedIndex = a;
            }
        }
        expected.push_back(seedIndex);
        while (expected.size() < k)
        {
            std::size_t pick = n;
            double pickDist = -1.0;
            for (std::size_t a = 0; a < n; ++a)
            {
                if (std::find(expected.begin(), expected.end(), a) != expected.end())
                    continue;
                double m = std::numeric_limits<double>::infinity();
                for (auto s: expected)
                    m = std::min(m, dist[a][s]);
                if (m > pickDist)
                {
                    pickDist = m;
                    pick = a;
                }
            }
            expected.push_back(pick);
        }
        ++r.cases;
        auto const got = farthest_point_sample(points, k);
        if (got != expected)
            fail(r,
                 fmt::format("instance {} (n={}, k={}): trace [{}] vs brute force [{}]",
                             i,
                             n,
                             k,
                             fmt::join(got, ","),
                             fmt::join(expected, ",")));
    }
    if (r.failures == 0)
        r.detail = fmt::format("{} instances with up to 12 points", instances);
    return r;
}

FpsDominance fps_dominance(std::size_t instances, std::size_t subsets, std::uint64_t seed)
{
    FpsDominance out;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i)
    {
        auto const n = 3 + rng.below(10);
        auto const k = 2 + rng.below(n - 2); // 2..n-1
        auto const points = random_points(rng, n, 8);
        auto const chosen = min_pairwise(points, farthest_point_sample(points, k));
        double sum = 0.0, most = 0.0;
        std::vector<std::size_t> idx(n);
        for (std::size_t s = 0; s < subsets; ++s)
        {
            std::iota(idx.begin(), idx.end(), 0);
            rng.shuffle(idx);
            auto const v = min_pairwise(points, { idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k) });
            sum += v;
            most = std::max(most, v);
        }
        ++out.instances;
        out.beats_mean += chosen >= sum / static_cast<double>(subsets);
        out.beats_all += chosen >= most;
        out.within_half += chosen >= 0.5 * most;
    }
    return out;
}

SuiteResult verify_fps_dominance(std::size_t instances, std::size_t subsets, std::uint64_t seed)
{
    SuiteResult r;
    r.name = "fps-dominance";
    auto const d = fps_dominance(instances, subsets, seed);
    r.cases = d.instances;
    r.failures = d.instances - d.within_half;
    r.detail = fmt::format("FPS >= half the best of {} random subsets in {}/{}; >= every subset in {}/{}; "
                           ">= their mean in {}/{}",
                           subsets,
                           d.within_half,
                           d.instances,
                           d.beats_all,
                           d.instances,
                           d.beats_mean,
                           d.instances);
    return r;
}

SuiteResult verify_protocol_round_trip(std::size_t blocks, std::uint64_t seed)
{
    SuiteResult r;
    r.name = "protocol-round-trip";
    Rng rng(seed);
    std::array<std::string_view, 9> const names { "List Files",   "Copy File",       "Inspect Script Lines",
                                                  "Execute Script", "Final Answer",  "Understand File",
                                                  "Edit Script (AI)", "Edit Script", "Run Script" };
    for (std::size_t i = 0; i < blocks; ++i)
    {
        ResponseBlock b;
        b.reflection = random_text(rng);
        b.plan_and_status = random_text(rng);
        b.fact_check = random_text(rng);
        b.thought = random_text(rng);
        b.action_name = std::string(names[rng.below(names.size())]);
        auto const keys = rng.below(4);
        for (std::size_t k = 0; k < keys; ++k)
        {
            auto const key = fmt::format("key_{}", rng.below(6));
            switch (rng.below(3))
            {
                case 0: b.action_input[key] = random_value_text(rng); break;
                case 1: b.action_input[key] = static_cast<std::int64_t>(rng.below(2000)) - 1000; break;
                default: b.action_input[key] = rng.below(2) == 1; break;
            }
        }
        auto const text = format_response(b);
        auto const parsed = parse_response(text);
        ++r.cases;
        auto const* back = std::get_if<ResponseBlock>(&parsed);
        if (!back)
            fail(r, fmt::format("block {} did not parse: {}", i, describe_rejection(std::get<ParseError>(parsed))));
        else if (!(*back == b) || format_response(*back) != text)
            fail(r, fmt::format("block {} changed across format/parse", i));
    }
    if (r.failures == 0)
        r.detail = fmt::format("{} generated blocks", blocks);
    return r;
}

std::vector<SuiteResult> run_verify_suites(Mutation mutation)
{
    std::vector<SuiteResult> out;
    out.push_back(verify_reward_cases(reward_under(mutation)));
    out.push_back(verify_state_identity(distribution_under(mutation)));
    out.push_back(verify_sft_gradients());
    out.push_back(verify_ppo_gradients());
    out.push_back(verify_clip_activity());
    out.push_back(verify_fps_trace());
    out.push_back(verify_fps_dominance());
    out.push_back(verify_protocol_round_trip());
    return out;
}

} // namespace agentml
