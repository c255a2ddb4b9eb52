// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/actions.hpp>

#include <optional>
#include <span>
#include <string>

namespace agentml
{

/// Task metric: name, direction and the two anchors that scale edit rewards.
struct MetricSpec
{
    std::string name;
    int beta = 1;        // +1 higher-is-better, -1 lower-is-better
    double m_init = 0.0; // score of the initial script
    double m_best = 1.0; // reference best achievable score
    std::string marker;  // literal prefix preceding the printed value

    /// Throws DegenerateSpec / ConfigInvalid on a broken spec.
    void validate() const;

    static std::string default_marker(std::string_view name);

    bool operator==(const MetricSpec&) const = default;
};

struct MetricSample
{
    double value = 0.0;
    int step_index = 0;
    bool operator==(const MetricSample&) const = default;
};

enum class ActionClass
{
    Invalid,
    ValidNonEdit,
    Edit,
};

enum class FeedbackClass
{
    Error,
    Corner,
    Success,
    Neutral,
};

inline constexpr std::array kAllActionClasses { ActionClass::Invalid, ActionClass::ValidNonEdit, ActionClass::Edit };
inline constexpr std::array kAllFeedbackClasses {
    FeedbackClass::Error, FeedbackClass::Corner, FeedbackClass::Success, FeedbackClass::Neutral
};

std::string_view to_string(ActionClass c);
std::string_view to_string(FeedbackClass c);
ActionClass action_class_from_string(std::string_view text);
FeedbackClass feedback_class_from_string(std::string_view text);

struct RewardClamp
{
    double lo = -1.0;
    double hi = 1.0;
    bool enabled = true;

    [[nodiscard]] double apply(double value) const;
    bool operator==(const RewardClamp&) const = default;
};

/// Agentic-ML reward for one step:
///   -1  invalid action or error feedback
///    0  valid non-edit action, or corner-case feedback
///   (m_next - m_t) / (m_best - m_init), clamped, for a successful edit
/// An edit whose evaluation printed no metric (Neutral) earns 0.
double step_reward(ActionClass aclass,
                   FeedbackClass fclass,
                   double m_t,
                   std::optional<double> m_next,
                   const MetricSpec& metric,
                   const RewardClamp& clamp = {});

/// Relative improvement beta * (m_avg - m_init) / m_init.
double performance_gain(double m_avg, double m_init, int beta);

/// Best of the first k scores, direction-aware.
double best_at_k(std::span<const double> scores, std::size_t k, int beta);

ActionClass classify_action(const ParsedAction& parsed);

} // namespace agentml
