// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/store.hpp>
#include <agentml/toy_policy.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agentml
{

struct PPOConfig
{
    double clip_eps = 0.2;
    // Large-model rates are 1e-6 (actor) / 1e-5 (critic); the
    // toy policy needs far larger steps. The 1:10 ratio is not carried over.
    double actor_lr = 0.05;
    double critic_lr = 0.05;
    double kl_coef = 0.001;
    bool kl_enabled = true;
    std::size_t batch_size = 32; // step-wise: states per update; episode-wise: trajectories per update
    int epochs = 4;
    int critic_epochs = 4;
    AdvantageMode advantage = AdvantageMode::RewardMinusValue;
    bool normalize_advantages = false;
    std::uint64_t seed = 1;

    void validate() const;
    [[nodiscard]] Json to_json() const;
    static PPOConfig from_json(const Json& record);
};

enum class TrainMode
{
    Stepwise,
    Episodewise,
};

std::string_view to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view text);

/// Outcome of taking one action in a pooled state.
struct StepEvaluation
{
    ActionClass action_class = ActionClass::Invalid;
    FeedbackClass feedback = FeedbackClass::Error;
    double reward = 0.0;
};

/// Takes single actions in pooled states. A state is rebuilt by replaying
/// its trajectory's recorded responses on a fresh workspace (once; the
/// workspace is snapshotted and restored afterwards). Synthetic tasks are
/// deterministic, so outcomes may be memoised per (state, action) without
/// changing any result.
class StepEvaluator
{
  public:
    StepEvaluator(TextTransformer& transformer, EpisodeOptions options, bool memoize = true);
    ~StepEvaluator();
    StepEvaluator(const StepEvaluator&) = delete;
    StepEvaluator& operator=(const StepEvaluator&) = delete;

    /// One environment transition chosen by the policy; counted.
    StepEvaluation evaluate(const StatePoolEntry& entry, const std::optional<ToyAction>& action);

    /// The same without counting: for exact objective evaluation.
    StepEvaluation peek(const StatePoolEntry& entry, const std::optional<ToyAction>& action);

    /// Policy-chosen transitions taken so far.
    [[nodiscard]] std::size_t transitions() const { return _transitions; }
    /// Recorded steps re-executed to rebuild pooled states.
    [[nodiscard]] std::size_t replay_transitions() const { return _replayed; }
    void restore_transitions(std::size_t n) { _transitions = n; }

    /// [[state key, replayed steps], ...] of every state rebuilt so far.
    [[nodiscard]] Json rebuilt_states() const;
    void restore_rebuilt(const Json& states);

  private:
    struct Cached;
    StepEvaluation run(const StatePoolEntry& entry, const std::optional<ToyAction>& action);

    TextTransformer& _transformer;
    EpisodeOptions _options;
    bool _memoize;
    std::map<std::string, std::unique_ptr<Cached>> _states;
    std::map<std::pair<std::string, int>, StepEvaluation> _memo;
    std::size_t _transitions = 0;
    std::size_t _replayed = 0;
    std::map<std::string, int> _rebuilt;
};

/// Exact step-wise objective on a fixed pool: the mean over entries of
/// E_{a ~ pi(.|s)} R(s, a), enumerating every symbol sequence the policy can
/// emit (invalid ones included) and reading R from the environment.
double pool_objective(const ToyPolicy& policy, const std::vector<StatePoolEntry>& pool, StepEvaluator& evaluator);

/// max_a R(s, a) averaged over the pool: the best any policy can score.
double pool_objective_upper_bound(const std::vector<StatePoolEntry>& pool, StepEvaluator& evaluator);

struct StepwiseSample
{
    std::size_t pool_index = 0;
    PpoSample sample;
    double reward = 0.0;
};

/// batch_size draws: a pooled state uniformly, one action from the policy,
/// its reward from the environment. Advantages are left empty.
std::vector<StepwiseSample> collect_stepwise_batch(const std::vector<StatePoolEntry>& pool,
                                                   const ToyPolicy& policy,
                                                   StepEvaluator& evaluator,
                                                   std::size_t batch_size,
                                                   Rng& rng);

struct EpisodeSample
{
    Trajectory trajectory;
    std::vector<ToyPolicyBackend::Emitted> emitted; // one per step
};

/// Full rollouts from s_0, each on a task drawn uniformly, with a seed drawn
/// from rng.
std::vector<EpisodeSample> collect_episodewise_batch(const std::vector<TaskPtr>& tasks,
                                                     const ToyPolicy& policy,
                                                     TextTransformer& transformer,
                                                     std::size_t n_trajectories,
                                                     Rng& rng,
                                                     const EpisodeOptions& options);

struct CurvePoint
{
    int update_index = 0;
    double mean_reward = 0.0;          // mean step reward of the update's batch
    std::size_t env_transitions = 0;   // cumulative policy-chosen transitions
    std::size_t replay_transitions = 0; // cumulative replayed steps (step-wise only)
    double wall_ms = 0.0;              // 0 unless timing is recorded
    std::optional<double> pool_objective;

    [[nodiscard]] Json to_json() const;
};

using LearningCurve = std::vector<CurvePoint>;

struct TrainerInputs
{
    std::vector<StatePoolEntry> pool; // step-wise sampling, and the exact objective for both modes
    std::vector<TaskPtr> tasks;       // episode-wise rollouts
};

struct TrainerOptions
{
    EpisodeOptions episode;
    bool memoize = true;
    bool track_objective = false; // exact pool objective after every update
    bool record_timing = false;
};

class Trainer
{
  public:
    Trainer(PPOConfig config,
            TrainMode mode,
            TrainerInputs inputs,
            TextTransformer& transformer,
            TrainerOptions options,
            ToyPolicy initial = {},
            std::optional<ToyPolicy> reference = std::nullopt);

    /// One collection and optimisation round. Throws DivergenceDetected.
    CurvePoint update();

    /// n updates; `on_point` sees each point as it is produced.
    LearningCurve run(int n, const std::function<void(const CurvePoint&)>& on_point = {});

    [[nodiscard]] double objective() { return pool_objective(_policy, _inputs.pool, _evaluator); }

    [[nodiscard]] const ToyPolicy& policy() const { return _policy; }
    [[nodiscard]] const ValueBaseline& critic() const { return _critic; }
    [[nodiscard]] const PPOConfig& config() const { return _config; }
    [[nodiscard]] std::size_t transitions() const;
    [[nodiscard]] int updates_done() const { return _update; }

    /// Everything needed to continue bit-exactly.
    [[nodiscard]] Json checkpoint() const;
    void restore(const Json& checkpoint);

  private:
    void stepwise_round(CurvePoint& point);
    void episodewise_round(CurvePoint& point);
    void optimise(std::vector<PpoSample>& batch, const std::vector<double>& targets);

    PPOConfig _config;
    TrainMode _mode;
    TrainerInputs _inputs;
    TextTransformer& _transformer;
    TrainerOptions _options;
    StepEvaluator _evaluator;
    ToyPolicy _policy;
    std::optional<ToyPolicy> _reference;
    ValueBaseline _critic;
    Adam _actorOpt;
    Adam _criticOpt;
    Rng _rng;
    int _update = 0;
    std::size_t _episodeTransitions = 0;
};

/// Full-batch SFT with Adam. Returns the loss before each step.
std::vector<double> sft_train(ToyPolicy& policy, std::span<const SftTarget> data, int steps, double lr);

/// SFT targets from stored examples; examples the toy vocabulary cannot
/// express are skipped and counted in `skipped`.
std::vector<SftTarget> sft_targets(const std::vector<SftExample>& examples, std::size_t* skipped = nullptr);

} // namespace agentml
