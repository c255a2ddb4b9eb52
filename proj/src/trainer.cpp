// SPDX-License-Identifier: Apache-2.0
#include <agentml/trainer.hpp>

#include <fmt/format.h>

#include <chrono>
#include <cmath>

namespace agentml
{

void PPOConfig::validate() const
{
    auto fail = [](const std::string& why) { throw Error(ErrorCode::ConfigInvalid, why); };
    if (!(clip_eps > 0.0))
        fail("clip_eps must be positive");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0))
        fail("step sizes must be positive");
    if (kl_coef < 0.0)
        fail("kl_coef must be non-negative");
    if (batch_size == 0)
        fail("batch_size must be at least 1");
    if (epochs < 1 || critic_epochs < 0)
        fail("epochs must be at least 1 and critic_epochs non-negative");
}

Json PPOConfig::to_json() const
{
    return Json { { "clip_eps", clip_eps },
                  { "actor_lr", actor_lr },
                  { "critic_lr", critic_lr },
                  { "kl_coef", kl_coef },
                  { "kl_enabled", kl_enabled },
                  { "batch_size", batch_size },
                  { "epochs", epochs },
                  { "critic_epochs", critic_epochs },
                  { "advantage", to_string(advantage) },
                  { "normalize_advantages", normalize_advantages },
                  { "seed", seed } };
}

PPOConfig PPOConfig::from_json(const Json& r)
{
    PPOConfig c;
    c.clip_eps = r.value("clip_eps", c.clip_eps);
    c.actor_lr = r.value("actor_lr", c.actor_lr);
    c.critic_lr = r.value("critic_lr", c.critic_lr);
    c.kl_coef = r.value("kl_coef", c.kl_coef);
    c.kl_enabled = r.value("kl_enabled", c.kl_enabled);
    c.batch_size = r.value("batch_size", c.batch_size);
    c.epochs = r.value("epochs", c.epochs);
    c.critic_epochs = r.value("critic_epochs", c.critic_epochs);
    c.advantage = advantage_mode_from_string(r.value("advantage", std::string(to_string(c.advantage))));
    c.normalize_advantages = r.value("normalize_advantages", c.normalize_advantages);
    c.seed = r.value("seed", c.seed);
    return c;
}

std::string_view to_string(TrainMode m)
{
    return m == TrainMode::Stepwise ? "stepwise" : "episodewise";
}

TrainMode train_mode_from_string(std::string_view text)
{
    if (text == "stepwise")
        return TrainMode::Stepwise;
    if (text == "episodewise")
        return TrainMode::Episodewise;
    throw Error(ErrorCode::ConfigInvalid, fmt::format("unknown training mode '{}' (stepwise or episodewise)", text));
}

struct StepEvaluator::Cached
{
    Workspace workspace;
    WorkspaceSnapshot snapshot;
    double m_t;
};

StepEvaluator::StepEvaluator(TextTransformer& transformer, EpisodeOptions options, bool memoize):
    _transformer(transformer), _options(std::move(options)), _memoize(memoize)
{
}

StepEvaluator::~StepEvaluator() = default;

StepEvaluation StepEvaluator::run(const StatePoolEntry& entry, const std::optional<ToyAction>& action)
{
    if (entry.state_digest.empty() || !entry.trajectory)
        throw Error(ErrorCode::InvalidArgument, "terminal states cannot be evaluated");
    auto const key = fmt::format("{}:{}", entry.trajectory_id, entry.step_index);
    auto const actionId = action ? static_cast<int>(toy_action_index(*action)) : -1;
    if (_memoize)
        if (auto const it = _memo.find({ key, actionId }); it != _memo.end())
            return it->second;

    auto it = _states.find(key);
    if (it == _states.end())
    {
        auto replayed = replay_prefix(entry.state.task,
                                      *entry.trajectory,
                                      static_cast<std::size_t>(entry.step_index),
                                      _transformer,
                                      _options);
        // Counted once per state, also across a resume from checkpoint.
        if (_rebuilt.emplace(key, entry.step_index).second)
            _replayed += static_cast<std::size_t>(entry.step_index);
        auto snap = replayed.workspace.snapshot();
        it = _states
                 .emplace(key,
                          std::make_unique<Cached>(Cached { std::move(replayed.workspace), std::move(snap), replayed.m_t }))
                 .first;
    }
    else
        it->second->workspace.restore(it->second->snapshot);

    auto& cached = *it->second;
    auto const outcome = take_step(cached.workspace,
                                   toy_response(*entry.state.task, action),
                                   cached.m_t,
                                   entry.step_index,
                                   _transformer,
                                   _options.env,
                                   _options.clamp);
    StepEvaluation result { outcome.action_class, outcome.feedback.cls, outcome.reward };
    if (_memoize)
        _memo.emplace(std::pair { key, actionId }, result);
    return result;
}

Json StepEvaluator::rebuilt_states() const
{
    Json out = Json::array();
    for (auto const& [key, steps]: _rebuilt)
        out.push_back(Json::array({ key, steps }));
    return out;
}

void StepEvaluator::restore_rebuilt(const Json& states)
{
    _rebuilt.clear();
    _replayed = 0;
    for (auto const& row: states)
    {
        auto const steps = row.at(1).get<int>();
        _rebuilt.emplace(row.at(0).get<std::string>(), steps);
        _replayed += static_cast<std::size_t>(steps);
    }
}

StepEvaluation StepEvaluator::evaluate(const StatePoolEntry& entry, const std::optional<ToyAction>& action)
{
    ++_transitions;
    return run(entry, action);
}

StepEvaluation StepEvaluator::peek(const StatePoolEntry& entry, const std::optional<ToyAction>& action)
{
    return run(entry, action);
}

namespace
{
    double expected_reward(const ToyPolicy& policy,
                           const Features& x,
                           SymbolSeq& seq,
                           double prob,
                           const std::vector<double>& table,
                           double invalid)
    {
        if (sequence_complete(seq))
        {
            auto const action = decode_symbols(seq);
            return prob * (action ? table[toy_action_index(*action)] : invalid);
        }
        auto const p = policy.probs(seq, x);
        double sum = 0.0;
        for (int v = 0; v < kVocabSize; ++v)
        {
            if (p[v] == 0.0)
                continue;
            seq.push_back(v);
            sum += expected_reward(policy, x, seq, prob * p[v], table, invalid);
            seq.pop_back();
        }
        return sum;
    }

    struct RewardTable
    {
        std::vector<double> valid;
        double invalid = 0.0;
    };

    RewardTable reward_table(const StatePoolEntry& entry, StepEvaluator& evaluator)
    {
        RewardTable t;
        for (auto const& a: all_toy_actions())
            t.valid.push_back(evaluator.peek(entry, a).reward);
        t.invalid = evaluator.peek(entry, std::nullopt).reward;
        return t;
    }

    std::string state_key(const StatePoolEntry& e)
    {
        return fmt::format("{}:{}", e.trajectory_id, e.step_index);
    }
} // namespace

double pool_objective(const ToyPolicy& policy, const std::vector<StatePoolEntry>& pool, StepEvaluator& evaluator)
{
    if (pool.empty())
        throw Error(ErrorCode::EmptyStore, "empty state pool");
    std::map<std::string, double> perState;
    double sum = 0.0;
    for (auto const& entry: pool)
    {
        auto const key = state_key(entry);
        auto it = perState.find(key);
        if (it == perState.end())
        {
            auto const table = reward_table(entry, evaluator);
            SymbolSeq seq;
            it = perState.emplace(key, expected_reward(policy, featurize(entry.state), seq, 1.0, table.valid, table.invalid)).first;
        }
        sum += it->second;
    }
    return sum / static_cast<double>(pool.size());
}

double pool_objective_upper_bound(const std::vector<StatePoolEntry>& pool, StepEvaluator& evaluator)
{
    if (pool.empty())
        throw Error(ErrorCode::EmptyStore, "empty state pool");
    std::map<std::string, double> perState;
    double sum = 0.0;
    for (auto const& entry: pool)
    {
        auto const key = state_key(entry);
        auto it = perState.find(key);
        if (it == perState.end())
        {
            auto const table = reward_table(entry, evaluator);
            auto best = table.invalid;
            for (double r: table.valid)
                best = std::max(best, r);
            it = perState.emplace(key, best).first;
        }
        sum += it->second;
    }
    return sum / static_cast<double>(pool.size());
}

std::vector<StepwiseSample> collect_stepwise_batch(const std::vector<StatePoolEntry>& pool,
                                                   const ToyPolicy& policy,
                                                   StepEvaluator& evaluator,
                                                   std::size_t batch_size,
                                                   Rng& rng)
{
    std::vector<StepwiseSample> batch;
    if (batch_size == 0)
        return batch;
    if (pool.empty())
        throw Error(ErrorCode::EmptyStore, "empty state pool");
    for (std::size_t b = 0; b < batch_size; ++b)
    {
        StepwiseSample s;
        s.pool_index = rng.below(pool.size());
        auto const& entry = pool[s.pool_index];
        s.sample.x = featurize(entry.state);
        s.sample.seq = policy.sample(s.sample.x, rng);
        s.sample.old_log_probs = policy.token_log_probs(s.sample.x, s.sample.seq);
        s.reward = evaluator.evaluate(entry, decode_symbols(s.sample.seq)).reward;
        batch.push_back(std::move(s));
    }
    return batch;
}

std::vector<EpisodeSample> collect_episodewise_batch(const std::vector<TaskPtr>& tasks,
                                                     const ToyPolicy& policy,
                                                     TextTransformer& transformer,
                                                     std::size_t n_trajectories,
                                                     Rng& rng,
                                                     const EpisodeOptions& options)
{
    std::vector<EpisodeSample> out;
    if (n_trajectories == 0)
        return out;
    if (tasks.empty())
        throw Error(ErrorCode::EmptyInput, "no tasks to roll out on");
    ToyPolicyBackend backend(policy);
    for (std::size_t i = 0; i < n_trajectories; ++i)
    {
        auto const& task = tasks[rng.below(tasks.size())];
        auto const seed = rng.next();
        backend.clear();
        auto traj = run_episode(task, backend, transformer, seed, options);
        if (backend.emitted().size() != traj.steps.size())
            throw Error(ErrorCode::ShapeMismatch, "backend emitted a different number of actions than steps taken");
        out.push_back({ std::move(traj), backend.emitted() });
    }
    return out;
}

Json CurvePoint::to_json() const
{
    Json r { { "update_index", update_index },
             { "mean_reward", mean_reward },
             { "env_transitions", env_transitions },
             { "replay_transitions", replay_transitions },
             { "wall_ms", wall_ms } };
    if (pool_objective)
        r["pool_objective"] = *pool_objective;
    return r;
}

Trainer::Trainer(PPOConfig config,
                 TrainMode mode,
                 TrainerInputs inputs,
                 TextTransformer& transformer,
                 TrainerOptions options,
                 ToyPolicy initial,
                 std::optional<ToyPolicy> reference):
    _config(std::move(config)),
    _mode(mode),
    _inputs(std::move(inputs)),
    _transformer(transformer),
    _options(std::move(options)),
    _evaluator(transformer, _options.episode, _options.memoize),
    _policy(std::move(initial)),
    _reference(std::move(reference)),
    _rng(_config.seed)
{
    _config.validate();
    if (_mode == TrainMode::Stepwise && _inputs.pool.empty())
        throw Error(ErrorCode::ConfigInvalid, "step-wise training needs a state pool");
    if (_mode == TrainMode::Episodewise && _inputs.tasks.empty())
        throw Error(ErrorCode::ConfigInvalid, "episode-wise training needs tasks");
    if (_config.kl_enabled && !_reference)
        _reference = _policy;
    _actorOpt.lr = _config.actor_lr;
    _criticOpt.lr = _config.critic_lr;
}

std::size_t Trainer::transitions() const
{
    return _mode == TrainMode::Stepwise ? _evaluator.transitions() : _episodeTransitions;
}

void Trainer::optimise(std::vector<PpoSample>& batch, const std::vector<double>& targets)
{
    if (_config.normalize_advantages && batch.size() > 1)
    {
        double mean = 0.0;
        for (auto const& s: batch)
            mean += s.advantages.front();
        mean /= static_cast<double>(batch.size());
        double var = 0.0;
        for (auto const& s: batch)
            var += (s.advantages.front() - mean) * (s.advantages.front() - mean);
        auto const sd = std::sqrt(var / static_cast<double>(batch.size() - 1));
        for (auto& s: batch)
            for (double& a: s.advantages)
                a = (a - mean) / (sd + 1e-8);
    }

    auto const* reference = _config.kl_enabled ? &*_reference : nullptr;
    double lastObjective = 0.0;
    double maxGrad = 0.0;
    for (int e = 0; e < _config.epochs; ++e)
    {
        auto const g = ppo_objective(_policy, batch, _config.clip_eps, _config.kl_coef, reference);
        lastObjective = g.value;
        for (double v: g.grad)
            maxGrad = std::max(maxGrad, std::abs(v));
        _actorOpt.step(_policy.theta, g.grad, true);
    }

    for (int e = 0; e < _config.critic_epochs; ++e)
    {
        std::vector<double> grad(kFeatures, 0.0);
        for (std::size_t i = 0; i < batch.size(); ++i)
        {
            auto const err = _critic.value(batch[i].x) - targets[i];
            for (int f = 0; f < kFeatures; ++f)
                grad[f] += err * batch[i].x[f] / static_cast<double>(batch.size());
        }
        _criticOpt.step(_critic.phi, grad, false);
    }

    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(_policy.theta) || !finite(_critic.phi))
        throw Error(ErrorCode::DivergenceDetected,
                    fmt::format("update {}: non-finite parameters (last surrogate {}, max |grad| {})", _update, lastObjective, maxGrad));
}

void Trainer::stepwise_round(CurvePoint& point)
{
    auto collected = collect_stepwise_batch(_inputs.pool, _policy, _evaluator, _config.batch_size, _rng);
    std::vector<PpoSample> batch;
    std::vector<double> targets;
    double sum = 0.0;
    for (auto& s: collected)
    {
        s.sample.advantages = estimate_advantage(s.reward, _critic.value(s.sample.x), s.sample.seq.size(), _config.advantage);
        sum += s.reward;
        targets.push_back(s.reward);
        batch.push_back(std::move(s.sample));
    }
    point.mean_reward = collected.empty() ? 0.0 : sum / static_cast<double>(collected.size());
    optimise(batch, targets);
}

void Trainer::episodewise_round(CurvePoint& point)
{
    auto episodes = collect_episodewise_batch(_inputs.tasks, _policy, _transformer, _config.batch_size, _rng, _options.episode);
    std::vector<PpoSample> batch;
    std::vector<double> targets;
    double sum = 0.0;
    std::size_t steps = 0;
    for (auto& ep: episodes)
    {
        auto const& traj = ep.trajectory;
        // Undiscounted reward-to-go.
        std::vector<double> togo(traj.steps.size() + 1, 0.0);
        for (std::size_t t = traj.steps.size(); t-- > 0;)
            togo[t] = togo[t + 1] + traj.steps[t].reward;
        for (std::size_t t = 0; t < traj.steps.size(); ++t)
        {
            PpoSample s;
            s.x = ep.emitted[t].x;
            s.seq = ep.emitted[t].seq;
            s.old_log_probs = _policy.token_log_probs(s.x, s.seq);
            s.advantages = estimate_advantage(togo[t], _critic.value(s.x), s.seq.size(), _config.advantage);
            targets.push_back(togo[t]);
            batch.push_back(std::move(s));
            sum += traj.steps[t].reward;
        }
        steps += traj.steps.size();
    }
    _episodeTransitions += steps;
    point.mean_reward = steps == 0 ? 0.0 : sum / static_cast<double>(steps);
    optimise(batch, targets);
}

CurvePoint Trainer::update()
{
    auto const started = std::chrono::steady_clock::now();
    CurvePoint point;
    point.update_index = _update;
    if (_mode == TrainMode::Stepwise)
        stepwise_round(point);
    else
        episodewise_round(point);
    ++_update;
    point.env_transitions = transitions();
    point.replay_transitions = _evaluator.replay_transitions();
    if (_options.track_objective)
        point.pool_objective = objective();
    if (_options.record_timing)
        point.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return point;
}

LearningCurve Trainer::run(int n, const std::function<void(const CurvePoint&)>& on_point)
{
    LearningCurve curve;
    for (int i = 0; i < n; ++i)
    {
        curve.push_back(update());
        if (on_point)
            on_point(curve.back());
    }
    return curve;
}

Json Trainer::checkpoint() const
{
    return Json { { "schema_version", kSchemaVersion },
                  { "kind", "checkpoint" },
                  { "mode", to_string(_mode) },
                  { "config", _config.to_json() },
                  { "update_index", _update },
                  { "policy", to_json(_policy) },
                  { "reference", _reference ? to_json(*_reference) : Json() },
                  { "critic", _critic.phi },
                  { "actor_opt", _actorOpt.to_json() },
                  { "critic_opt", _criticOpt.to_json() },
                  { "rng", _rng.state() },
                  { "transitions", transitions() },
                  { "rebuilt_states", _evaluator.rebuilt_states() } };
}

void Trainer::restore(const Json& r)
{
    try
    {
        if (r.at("schema_version").get<int>() != kSchemaVersion || r.at("kind") != "checkpoint")
            throw Error(ErrorCode::SchemaViolation, "not a checkpoint record of this schema version");
        if (train_mode_from_string(r.at("mode").get<std::string>()) != _mode)
            throw Error(ErrorCode::ConfigInvalid, "checkpoint was written by the other training mode");
        _config = PPOConfig::from_json(r.at("config"));
        _update = r.at("update_index").get<int>();
        _policy = toy_policy_from_json(r.at("policy"));
        if (r.at("reference").is_null())
            _reference.reset();
        else
            _reference = toy_policy_from_json(r.at("reference"));
        _critic.phi = r.at("critic").get<std::vector<double>>();
        _actorOpt = Adam::from_json(r.at("actor_opt"));
        _criticOpt = Adam::from_json(r.at("critic_opt"));
        _rng.restore(r.at("rng").get<std::string>());
        auto const done = r.at("transitions").get<std::size_t>();
        _evaluator.restore_rebuilt(r.at("rebuilt_states"));
        if (_mode == TrainMode::Stepwise)
            _evaluator.restore_transitions(done);
        else
            _episodeTransitions = done;
    }
    catch (const Json::exception& e)
    {
        throw Error(ErrorCode::SchemaViolation, fmt::format("malformed checkpoint: {}", e.what()));
    }
}

std::vector<double> sft_train(ToyPolicy& policy, std::span<const SftTarget> data, int steps, double lr)
{
    Adam opt;
    opt.lr = lr;
    std::vector<double> losses;
    for (int s = 0; s < steps; ++s)
    {
        auto const g = sft_loss_and_grad(policy, data);
        losses.push_back(g.value);
        opt.step(policy.theta, g.grad, false);
    }
    return losses;
}

std::vector<SftTarget> sft_targets(const std::vector<SftExample>& examples, std::size_t* skipped)
{
    std::vector<SftTarget> out;
    std::size_t dropped = 0;
    for (auto const& ex: examples)
    {
        auto const action = toy_action_of(interpret_response(ex.target));
        if (!action)
        {
            ++dropped;
            continue;
        }
        out.push_back({ featurize(ex.state), encode_action(*action) });
    }
    if (skipped)
        *skipped = dropped;
    return out;
}

} // namespace agentml
