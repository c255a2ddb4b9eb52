// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/task.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agentml
{

/// Technique names shared by every generated task. Slot i of the toy policy
/// vocabulary always refers to kTechniqueKeywords[i].
inline constexpr std::array<std::string_view, 8> kTechniqueKeywords {
    "augment", "normalize", "dropout", "widen", "ensemble", "cosine_lr", "label_smooth", "weight_decay",
};

enum class IdeaAxis
{
    Data,
    Model,
    Learning,
};

inline constexpr std::array kAllAxes { IdeaAxis::Data, IdeaAxis::Model, IdeaAxis::Learning };

std::string_view to_string(IdeaAxis axis);
IdeaAxis axis_from_string(std::string_view text);

/// Axis a technique belongs to (augment/normalize are Data, and so on).
IdeaAxis technique_axis(std::size_t slot);

/// The train.py text of a synthetic task with the given TECHNIQUES string.
std::string synthetic_train_script(const SyntheticConfig& config, std::uint64_t seed, std::string_view techniques = "");

struct SyntheticRun
{
    int exit_code = 0;
    std::string output;
};

/// Evaluates an unmodified-apart-from-TECHNIQUES synthetic script exactly as
/// python3 would. Returns nullopt for anything else.
std::optional<SyntheticRun> simulate_synthetic_script(std::string_view source);

/// The stub-transformer instruction that prepends keywords to TECHNIQUES.
std::string technique_instruction(const std::vector<std::string>& keywords);

/// Keywords of a technique_instruction, or nullopt if the text is not one.
std::optional<std::vector<std::string>> parse_technique_instruction(std::string_view instruction);

/// Keywords written into the script by earlier successful technique edits,
/// in the order they were added.
std::vector<std::string> applied_techniques(const AgentState& state);

/// Technique an idea text most plausibly refers to; falls back to a hash of
/// the text when no keyword matches.
std::size_t technique_for_idea(std::string_view idea);

/// Expected printed metric for a set of active keywords, ignoring failures.
double synthetic_metric(const SyntheticConfig& config, std::vector<std::string> active);

/// Writes a self-contained bundle into dir and returns its spec.
/// Throws ConfigInvalid when m_best == m_init or the table is malformed.
TaskSpec make_synthetic_task(std::uint64_t seed, const SyntheticConfig& config, const fs::path& dir);

struct SyntheticSuiteConfig
{
    std::uint64_t seed = 1;
    int n_tasks = 6;
    std::string id_prefix = "syn";
    double noise = 0.05;     // task-level spread around the shared slot prior
    ExecutionLimits limits;
};

/// Tasks drawn around one shared per-slot prior, so a policy trained on some
/// of them can transfer to others. Bundles land in root/<task_id>.
std::vector<TaskPtr> make_synthetic_suite(const SyntheticSuiteConfig& config, const fs::path& root);

} // namespace agentml
