// SPDX-License-Identifier: Apache-2.0
#include <agentml/policies.hpp>
#include <agentml/synthetic.hpp>
#include <agentml/toy_policy.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace agentml
{

namespace
{
    bool is_slot(int s)
    {
        return s >= SymSlot0 && s < kVocabSize;
    }

    bool is_plain_head(int s)
    {
        return s >= SymList && s <= SymUnderstand;
    }

    bool repeats_last(const SymbolSeq& seq)
    {
        return std::find(seq.begin() + 1, seq.end() - 1, seq.back()) != seq.end() - 1;
    }

    std::array<double, kVocabSize> masked_log_softmax(const std::array<double, kVocabSize>& z,
                                                      const std::array<bool, kVocabSize>& allowed)
    {
        auto top = -std::numeric_limits<double>::infinity();
        for (int v = 0; v < kVocabSize; ++v)
            if (allowed[v])
                top = std::max(top, z[v]);
        double sum = 0.0;
        for (int v = 0; v < kVocabSize; ++v)
            if (allowed[v])
                sum += std::exp(z[v] - top);
        auto const lse = top + std::log(sum);
        std::array<double, kVocabSize> out {};
        for (int v = 0; v < kVocabSize; ++v)
            out[v] = allowed[v] ? z[v] - lse : -std::numeric_limits<double>::infinity();
        return out;
    }

    void check_sample(const PpoSample& s)
    {
        if (s.seq.empty() || s.old_log_probs.size() != s.seq.size() || s.advantages.size() != s.seq.size())
            throw Error(ErrorCode::ShapeMismatch,
                        fmt::format("sample has {} symbols, {} old log-probs and {} advantages",
                                    s.seq.size(),
                                    s.old_log_probs.size(),
                                    s.advantages.size()));
    }

    std::size_t token_count(std::span<const PpoSample> batch)
    {
        std::size_t n = 0;
        for (auto const& s: batch)
        {
            check_sample(s);
            n += s.seq.size();
        }
        return n;
    }
} // namespace

std::string_view symbol_name(int symbol)
{
    static constexpr std::array<std::string_view, SymSlot0> heads { "END",  "LIST",  "COPY",       "INSPECT",
                                                                    "EXEC", "FINAL", "UNDERSTAND", "EDIT" };
    if (symbol >= 0 && symbol < SymSlot0)
        return heads[symbol];
    if (is_slot(symbol))
        return kTechniqueKeywords[symbol - SymSlot0];
    return "?";
}

std::string format_symbols(const SymbolSeq& seq)
{
    std::string out;
    for (auto s: seq)
        out += fmt::format("{}{}", out.empty() ? "" : " ", symbol_name(s));
    return out;
}

bool sequence_complete(const SymbolSeq& seq)
{
    if (seq.empty())
        return false;
    if (seq.front() != SymEdit)
        return true;
    if (seq.size() == 1)
        return false;
    auto const last = seq.back();
    if (!is_slot(last) || repeats_last(seq))
        return true;
    return seq.size() >= static_cast<std::size_t>(kMaxSymbols);
}

std::optional<ToyAction> decode_symbols(const SymbolSeq& seq)
{
    if (seq.empty() || !sequence_complete(seq))
        return std::nullopt;
    if (is_plain_head(seq.front()))
        return seq.size() == 1 ? std::optional(ToyAction { seq.front(), {} }) : std::nullopt;
    if (seq.front() != SymEdit)
        return std::nullopt;
    ToyAction action { SymEdit, {} };
    for (std::size_t i = 1; i < seq.size(); ++i)
    {
        auto const s = seq[i];
        if (s == SymEnd && i + 1 == seq.size() && !action.slots.empty())
            break;
        if (!is_slot(s))
            return std::nullopt;
        auto const slot = s - SymSlot0;
        if (std::find(action.slots.begin(), action.slots.end(), slot) != action.slots.end())
            return std::nullopt;
        action.slots.push_back(slot);
    }
    std::sort(action.slots.begin(), action.slots.end());
    return action;
}

SymbolSeq encode_action(const ToyAction& action)
{
    SymbolSeq seq { action.head };
    if (action.head != SymEdit)
        return seq;
    auto slots = action.slots;
    std::sort(slots.begin(), slots.end());
    for (auto s: slots)
        seq.push_back(SymSlot0 + s);
    if (seq.size() < static_cast<std::size_t>(kMaxSymbols))
        seq.push_back(SymEnd);
    return seq;
}

const std::vector<ToyAction>& all_toy_actions()
{
    static const std::vector<ToyAction> actions = [] {
        std::vector<ToyAction> out;
        for (int h = SymList; h <= SymUnderstand; ++h)
            out.push_back({ h, {} });
        for (int a = 0; a < 8; ++a)
            out.push_back({ SymEdit, { a } });
        for (int a = 0; a < 8; ++a)
            for (int b = a + 1; b < 8; ++b)
                out.push_back({ SymEdit, { a, b } });
        for (int a = 0; a < 8; ++a)
            for (int b = a + 1; b < 8; ++b)
                for (int c = b + 1; c < 8; ++c)
                    out.push_back({ SymEdit, { a, b, c } });
        return out;
    }();
    return actions;
}

std::size_t toy_action_index(const ToyAction& action)
{
    static const std::map<ToyAction, std::size_t> index = [] {
        std::map<ToyAction, std::size_t> out;
        auto const& all = all_toy_actions();
        for (std::size_t i = 0; i < all.size(); ++i)
            out[all[i]] = i;
        return out;
    }();
    auto const it = index.find(action);
    if (it == index.end())
        throw Error(ErrorCode::InvalidArgument, "not a valid toy action");
    return it->second;
}

std::string toy_response(const TaskSpec& task, const std::optional<ToyAction>& action)
{
    auto const& script = task.train_script;
    if (!action)
    {
        ResponseBlock block;
        block.reflection = "-";
        block.plan_and_status = "-";
        block.fact_check = "-";
        block.thought = "-";
        block.action_name = "Unrecognized Symbols";
        return format_response(block);
    }
    auto respond = [](std::string_view thought, const Action& a) {
        return compose_response("-", "-", "-", thought, a);
    };
    switch (action->head)
    {
        case SymList: return respond("List the files.", actions::ListFiles { "." });
        case SymCopy: return respond("Keep a copy of the script.", actions::CopyFile { script, "train_copy.py" });
        case SymInspect: return respond("Read the script.", actions::InspectScriptLines { script, 1, 100 });
        case SymExec: return respond("Run the script.", actions::ExecuteScript { script });
        case SymFinal: return respond("Submit.", actions::FinalAnswer { "Submitting the current script." });
        case SymUnderstand:
            return respond("Read the data description.",
                           actions::UnderstandFile { "data_description.txt", "which techniques are available" });
        default: break;
    }
    std::vector<std::string> keywords;
    for (auto s: action->slots)
        keywords.emplace_back(kTechniqueKeywords[s]);
    return respond("Enable techniques.", actions::EditScript { script, technique_instruction(keywords), script });
}

std::optional<ToyAction> toy_action_of(const ParsedAction& parsed)
{
    auto const* action = std::get_if<Action>(&parsed);
    if (!action)
        return std::nullopt;
    switch (kind_of(*action))
    {
        case ActionKind::ListFiles: return ToyAction { SymList, {} };
        case ActionKind::CopyFile: return ToyAction { SymCopy, {} };
        case ActionKind::InspectScriptLines: return ToyAction { SymInspect, {} };
        case ActionKind::ExecuteScript: return ToyAction { SymExec, {} };
        case ActionKind::FinalAnswer: return ToyAction { SymFinal, {} };
        case ActionKind::UnderstandFile: return ToyAction { SymUnderstand, {} };
        case ActionKind::EditScript: break;
    }
    auto const keywords = parse_technique_instruction(std::get<actions::EditScript>(*action).edit_instruction);
    if (!keywords || keywords->empty())
        return std::nullopt;
    ToyAction out { SymEdit, {} };
    for (auto const& kw: *keywords)
    {
        auto const it = std::find(kTechniqueKeywords.begin(), kTechniqueKeywords.end(), kw);
        if (it == kTechniqueKeywords.end())
            return std::nullopt;
        auto const slot = static_cast<int>(it - kTechniqueKeywords.begin());
        if (std::find(out.slots.begin(), out.slots.end(), slot) == out.slots.end())
            out.slots.push_back(slot);
    }
    if (out.slots.size() > 3)
        return std::nullopt;
    std::sort(out.slots.begin(), out.slots.end());
    return out;
}

Features featurize(const AgentState& state)
{
    Features x {};
    x[0] = 1.0;
    for (auto const& kw: applied_techniques(state))
    {
        auto const it = std::find(kTechniqueKeywords.begin(), kTechniqueKeywords.end(), kw);
        if (it != kTechniqueKeywords.end())
            x[1 + (it - kTechniqueKeywords.begin())] = 1.0;
    }
    auto const& task = *state.task;
    auto const& history = state.history;
    x[9] = static_cast<double>(history.size()) / task.limits.max_steps;

    double m = task.metric.m_init;
    int edits = 0;
    for (std::size_t i = 0; i < history.size(); ++i)
    {
        auto const& fb = history[i].feedback;
        if (fb.cls == FeedbackClass::Error)
            x[15] = 1.0;
        if (auto const* a = std::get_if<Action>(&history[i].action); a && kind_of(*a) == ActionKind::EditScript)
            ++edits;
        bool const success = fb.cls == FeedbackClass::Success && fb.metric_sample;
        if (i + 1 == history.size())
        {
            x[10 + static_cast<int>(fb.cls)] = 1.0;
            if (success)
            {
                auto const change = (fb.metric_sample->value - m) / (task.metric.m_best - task.metric.m_init);
                x[14] = change > 0.0 ? 1.0 : (change < 0.0 ? -1.0 : 0.0);
            }
        }
        if (success)
            m = fb.metric_sample->value;
    }
    x[16] = edits / 8.0;
    return x;
}

std::array<double, kVocabSize> ToyPolicy::logits(int context, const Features& x) const
{
    std::array<double, kVocabSize> z {};
    for (int v = 0; v < kVocabSize; ++v)
    {
        auto const* row = theta.data() + index(context, v, 0);
        double sum = 0.0;
        for (int f = 0; f < kFeatures; ++f)
            sum += row[f] * x[f];
        z[v] = sum;
    }
    return z;
}

std::array<double, kVocabSize> ToyPolicy::log_probs(std::span<const int> prefix, const Features& x) const
{
    return masked_log_softmax(logits(context_of(prefix), x), allowed_symbols(prefix));
}

std::array<double, kVocabSize> ToyPolicy::probs(std::span<const int> prefix, const Features& x) const
{
    auto p = log_probs(prefix, x);
    for (double& v: p)
        v = std::exp(v);
    return p;
}

int context_of(std::span<const int> prefix)
{
    return prefix.empty() ? kStartContext : prefix.back();
}

std::array<bool, kVocabSize> allowed_symbols(std::span<const int> prefix)
{
    std::array<bool, kVocabSize> allowed {};
    if (prefix.empty())
    {
        allowed.fill(true);
        return allowed;
    }
    if (prefix.front() != SymEdit || prefix.size() >= static_cast<std::size_t>(kMaxSymbols))
        return allowed;
    allowed[SymEnd] = prefix.size() > 1;
    for (int s = SymSlot0; s < kVocabSize; ++s)
        allowed[s] = std::find(prefix.begin() + 1, prefix.end(), s) == prefix.end();
    return allowed;
}

std::vector<double> ToyPolicy::token_log_probs(const Features& x, const SymbolSeq& seq) const
{
    std::vector<double> out;
    out.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i)
        out.push_back(log_probs(std::span(seq).first(i), x)[seq[i]]);
    return out;
}

double ToyPolicy::log_prob(const Features& x, const SymbolSeq& seq) const
{
    double sum = 0.0;
    for (double lp: token_log_probs(x, seq))
        sum += lp;
    return sum;
}

SymbolSeq ToyPolicy::sample(const Features& x, Rng& rng) const
{
    SymbolSeq seq;
    while (!sequence_complete(seq))
    {
        auto const p = probs(seq, x);
        auto const u = rng.uniform();
        double acc = 0.0;
        int pick = kVocabSize - 1;
        for (int v = 0; v < kVocabSize; ++v)
        {
            acc += p[v];
            if (u < acc)
            {
                pick = v;
                break;
            }
        }
        seq.push_back(pick);
    }
    return seq;
}

void ToyPolicy::accumulate_token_grad(const Features& x, std::span<const int> prefix, int symbol, double scale, std::vector<double>& grad) const
{
    auto const p = probs(prefix, x);
    auto const context = context_of(prefix);
    for (int u = 0; u < kVocabSize; ++u)
    {
        auto const coeff = scale * ((u == symbol ? 1.0 : 0.0) - p[u]);
        auto* row = grad.data() + index(context, u, 0);
        for (int f = 0; f < kFeatures; ++f)
            row[f] += coeff * x[f];
    }
}

double ValueBaseline::value(const Features& x) const
{
    double sum = 0.0;
    for (int f = 0; f < kFeatures; ++f)
        sum += phi[f] * x[f];
    return sum;
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad, bool ascend)
{
    if (grad.size() != params.size())
        throw Error(ErrorCode::ShapeMismatch, "gradient and parameter sizes differ");
    if (m.size() != params.size())
    {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    ++t;
    auto const c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    auto const c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto const sign = ascend ? 1.0 : -1.0;
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] += sign * lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

Json Adam::to_json() const
{
    return Json { { "lr", lr }, { "beta1", beta1 }, { "beta2", beta2 }, { "eps", eps }, { "m", m }, { "v", v }, { "t", t } };
}

Adam Adam::from_json(const Json& r)
{
    Adam a;
    a.lr = r.at("lr").get<double>();
    a.beta1 = r.at("beta1").get<double>();
    a.beta2 = r.at("beta2").get<double>();
    a.eps = r.at("eps").get<double>();
    a.m = r.at("m").get<std::vector<double>>();
    a.v = r.at("v").get<std::vector<double>>();
    a.t = r.at("t").get<std::uint64_t>();
    return a;
}

LossAndGrad sft_loss_and_grad(const ToyPolicy& policy, std::span<const SftTarget> data)
{
    if (data.empty())
        throw Error(ErrorCode::EmptyDataset, "no SFT examples");
    LossAndGrad out { 0.0, std::vector<double>(policy.theta.size(), 0.0) };
    auto const scale = 1.0 / static_cast<double>(data.size());
    for (auto const& ex: data)
    {
        out.value -= scale * policy.log_prob(ex.x, ex.seq);
        for (std::size_t i = 0; i < ex.seq.size(); ++i)
            policy.accumulate_token_grad(ex.x, std::span(ex.seq).first(i), ex.seq[i], -scale, out.grad);
    }
    return out;
}

std::string_view to_string(AdvantageMode m)
{
    return m == AdvantageMode::RewardMinusValue ? "reward_minus_value" : "reward";
}

AdvantageMode advantage_mode_from_string(std::string_view text)
{
    if (text == "reward_minus_value")
        return AdvantageMode::RewardMinusValue;
    if (text == "reward")
        return AdvantageMode::Reward;
    throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown advantage mode '{}'", text));
}

std::vector<double> estimate_advantage(double reward, double value, std::size_t n_symbols, AdvantageMode mode)
{
    auto const a = mode == AdvantageMode::RewardMinusValue ? reward - value : reward;
    return std::vector<double>(n_symbols, a);
}

LossAndGrad ppo_objective(const ToyPolicy& policy,
                          std::span<const PpoSample> batch,
                          double clip_eps,
                          double kl_coef,
                          const ToyPolicy* reference)
{
    LossAndGrad out { 0.0, std::vector<double>(policy.theta.size(), 0.0) };
    auto const tokens = token_count(batch);
    if (tokens == 0)
        return out;
    auto const scale = 1.0 / static_cast<double>(tokens);
    bool const penalise = reference && kl_coef != 0.0;

    for (auto const& s: batch)
    {
        for (std::size_t i = 0; i < s.seq.size(); ++i)
        {
            auto const prefix = std::span(s.seq).first(i);
            auto const c = context_of(prefix);
            auto const lp = policy.log_probs(prefix, s.x);
            auto const ratio = std::exp(lp[s.seq[i]] - s.old_log_probs[i]);
            auto const adv = s.advantages[i];
            auto const unclipped = ratio * adv;
            auto const clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
            out.value += scale * std::min(unclipped, clipped);
            if (unclipped <= clipped)
                policy.accumulate_token_grad(s.x, prefix, s.seq[i], scale * unclipped, out.grad);

            if (!penalise)
                continue;
            auto const lq = reference->log_probs(prefix, s.x);
            double kl = 0.0;
            for (int u = 0; u < kVocabSize; ++u)
                if (std::isfinite(lp[u]))
                    kl += std::exp(lp[u]) * (lp[u] - lq[u]);
            out.value -= scale * kl_coef * kl;
            for (int u = 0; u < kVocabSize; ++u)
            {
                if (!std::isfinite(lp[u]))
                    continue;
                auto const coeff = -scale * kl_coef * std::exp(lp[u]) * (lp[u] - lq[u] - kl);
                auto* row = out.grad.data() + ToyPolicy::index(c, u, 0);
                for (int f = 0; f < kFeatures; ++f)
                    row[f] += coeff * s.x[f];
            }
        }
    }
    return out;
}

std::size_t clipped_symbols(const ToyPolicy& policy, std::span<const PpoSample> batch, double clip_eps)
{
    token_count(batch);
    std::size_t n = 0;
    for (auto const& s: batch)
    {
        auto const lp = policy.token_log_probs(s.x, s.seq);
        for (std::size_t i = 0; i < s.seq.size(); ++i)
        {
            auto const ratio = std::exp(lp[i] - s.old_log_probs[i]);
            if (ratio < 1.0 - clip_eps || ratio > 1.0 + clip_eps)
                ++n;
        }
    }
    return n;
}

std::string ToyPolicyBackend::respond(const PolicyRequest& request)
{
    auto const x = featurize(request.state);
    auto seq = _policy.sample(x, request.rng);
    auto text = toy_response(*request.state.task, decode_symbols(seq));
    _emitted.push_back({ x, std::move(seq) });
    return text;
}

Json to_json(const ToyPolicy& policy)
{
    return Json { { "vocab", kVocabSize }, { "contexts", kContexts }, { "features", kFeatures }, { "theta", policy.theta } };
}

ToyPolicy toy_policy_from_json(const Json& record)
{
    try
    {
        if (record.at("vocab") != kVocabSize || record.at("contexts") != kContexts || record.at("features") != kFeatures)
            throw Error(ErrorCode::ShapeMismatch, "policy record has different dimensions");
        ToyPolicy p;
        p.theta = record.at("theta").get<std::vector<double>>();
        if (p.theta.size() != static_cast<std::size_t>(kContexts * kVocabSize * kFeatures))
            throw Error(ErrorCode::ShapeMismatch, "policy parameter vector has the wrong length");
        return p;
    }
    catch (const Json::exception& e)
    {
        throw Error(ErrorCode::SchemaViolation, fmt::format("malformed policy record: {}", e.what()));
    }
}

} // namespace agentml
