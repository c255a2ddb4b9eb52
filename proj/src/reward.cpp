// SPDX-License-Identifier: Apache-2.0
#include <agentml/reward.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace agentml
{

void MetricSpec::validate() const
{
    if (beta != 1 && beta != -1)
        throw Error(ErrorCode::ConfigInvalid, fmt::format("metric '{}': beta must be +1 or -1", name));
    if (!std::isfinite(m_init) || !std::isfinite(m_best))
        throw Error(ErrorCode::ConfigInvalid, fmt::format("metric '{}': non-finite anchor", name));
    if (m_best == m_init)
        throw Error(ErrorCode::DegenerateSpec, fmt::format("metric '{}': m_best equals m_init", name));
    if ((beta == 1) != (m_best > m_init))
        throw Error(ErrorCode::ConfigInvalid,
                    fmt::format("metric '{}': m_best must lie in the improving direction of beta", name));
    if (marker.empty())
        throw Error(ErrorCode::ConfigInvalid, fmt::format("metric '{}': empty marker", name));
}

std::string MetricSpec::default_marker(std::string_view name)
{
    return fmt::format("Final Validation {}:", name);
}

std::string_view to_string(ActionClass c)
{
    switch (c)
    {
        case ActionClass::Invalid: return "Invalid";
        case ActionClass::ValidNonEdit: return "ValidNonEdit";
        case ActionClass::Edit: return "Edit";
    }
    return "";
}

std::string_view to_string(FeedbackClass c)
{
    switch (c)
    {
        case FeedbackClass::Error: return "Error";
        case FeedbackClass::Corner: return "Corner";
        case FeedbackClass::Success: return "Success";
        case FeedbackClass::Neutral: return "Neutral";
    }
    return "";
}

ActionClass action_class_from_string(std::string_view text)
{
    for (auto c: kAllActionClasses)
        if (to_string(c) == text)
            return c;
    throw Error(ErrorCode::SchemaViolation, fmt::format("unknown action class '{}'", text));
}

FeedbackClass feedback_class_from_string(std::string_view text)
{
    for (auto c: kAllFeedbackClasses)
        if (to_string(c) == text)
            return c;
    throw Error(ErrorCode::SchemaViolation, fmt::format("unknown feedback class '{}'", text));
}

double RewardClamp::apply(double value) const
{
    return enabled ? std::clamp(value, lo, hi) : value;
}

double step_reward(ActionClass aclass,
                   FeedbackClass fclass,
                   double m_t,
                   std::optional<double> m_next,
                   const MetricSpec& metric,
                   const RewardClamp& clamp)
{
    if (aclass == ActionClass::Invalid || fclass == FeedbackClass::Error)
        return -1.0;
    if (aclass == ActionClass::ValidNonEdit || fclass == FeedbackClass::Corner)
        return 0.0;
    if (fclass == FeedbackClass::Neutral)
        return 0.0;

    // Edit with Success feedback.
    if (!m_next)
        throw Error(ErrorCode::MissingMetric, "successful edit without a metric sample");
    auto const span = metric.m_best - metric.m_init;
    if (span == 0.0)
        throw Error(ErrorCode::DegenerateSpec, "m_best equals m_init");
    return clamp.apply((*m_next - m_t) / span);
}

double performance_gain(double m_avg, double m_init, int beta)
{
    if (m_init == 0.0)
        throw Error(ErrorCode::ZeroBaseline, "performance gain undefined for m_init = 0");
    return beta * (m_avg - m_init) / m_init;
}

double best_at_k(std::span<const double> scores, std::size_t k, int beta)
{
    if (k < 1 || k > scores.size())
        throw Error(ErrorCode::KOutOfRange, fmt::format("k={} outside [1, {}]", k, scores.size()));
    auto const prefix = scores.first(k);
    return beta > 0 ? *std::max_element(prefix.begin(), prefix.end())
                    : *std::min_element(prefix.begin(), prefix.end());
}

ActionClass classify_action(const ParsedAction& parsed)
{
    auto const* action = std::get_if<Action>(&parsed);
    if (!action)
        return ActionClass::Invalid;
    return kind_of(*action) == ActionKind::EditScript ? ActionClass::Edit : ActionClass::ValidNonEdit;
}

} // namespace agentml
