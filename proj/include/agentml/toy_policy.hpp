// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/episode.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agentml
{

// Actions of the toy policy are short symbol sequences. A sequence starts
// with a head symbol; every head except EDIT is a complete action by itself.
// EDIT is followed by one to three distinct technique slots and then END,
// except that a sequence stops at kMaxSymbols without END. The policy may
// put END or a slot first, which is an invalid action; after EDIT it only
// chooses among continuations that keep the edit well formed.
enum Symbol : int
{
    SymEnd = 0,
    SymList,
    SymCopy,
    SymInspect,
    SymExec,
    SymFinal,
    SymUnderstand,
    SymEdit,
    SymSlot0, // SymSlot0 + i stands for kTechniqueKeywords[i]
};

inline constexpr int kVocabSize = SymSlot0 + 8;
inline constexpr int kMaxSymbols = 4;
inline constexpr int kStartContext = kVocabSize; // context of the first position
inline constexpr int kContexts = kVocabSize + 1;
inline constexpr int kFeatures = 17;

using SymbolSeq = std::vector<int>;
using Features = std::array<double, kFeatures>;

std::string_view symbol_name(int symbol);
std::string format_symbols(const SymbolSeq& seq);

/// True once the sequence can take no further symbol.
bool sequence_complete(const SymbolSeq& seq);

/// Decoded content of a complete sequence: the head and, for edits, the
/// sorted slot set. nullopt for an invalid sequence.
struct ToyAction
{
    int head = SymFinal;
    std::vector<int> slots; // slot indices 0..7, ascending
    auto operator<=>(const ToyAction&) const = default;
};

std::optional<ToyAction> decode_symbols(const SymbolSeq& seq);

/// Canonical sequence of a toy action (slots ascending).
SymbolSeq encode_action(const ToyAction& action);

/// All 98 valid toy actions, in a fixed order.
const std::vector<ToyAction>& all_toy_actions();

/// Index of an action in all_toy_actions().
std::size_t toy_action_index(const ToyAction& action);

/// Response text realising a toy action (or an unknown action name for an
/// invalid sequence) on the given task.
std::string toy_response(const TaskSpec& task, const std::optional<ToyAction>& action);

/// Toy action a response text corresponds to, for building SFT targets.
/// nullopt when the response is not expressible (unparseable edit, more than
/// three techniques, an invalid response).
std::optional<ToyAction> toy_action_of(const ParsedAction& parsed);

/// State features: bias, the eight applied-technique indicators, t/max_steps,
/// one-hot class of the last feedback (Error, Corner, Success, Neutral; all
/// zero at t=0), the sign of the last metric change in the improving
/// direction, whether any step has failed, and edits/8.
Features featurize(const AgentState& state);

/// Per-position softmax policy. Logits for a position with context c (the
/// previous symbol, or kStartContext) are theta[c][v] . x.
class ToyPolicy
{
  public:
    ToyPolicy(): theta(kContexts * kVocabSize * kFeatures, 0.0) {}

    std::vector<double> theta;

    [[nodiscard]] std::array<double, kVocabSize> logits(int context, const Features& x) const;
    /// Distribution of the next symbol after `prefix`, restricted to
    /// allowed_symbols(prefix). Disallowed symbols get log-probability -inf.
    [[nodiscard]] std::array<double, kVocabSize> log_probs(std::span<const int> prefix, const Features& x) const;
    [[nodiscard]] std::array<double, kVocabSize> probs(std::span<const int> prefix, const Features& x) const;

    /// Sum of log-probabilities of the symbols of seq.
    [[nodiscard]] double log_prob(const Features& x, const SymbolSeq& seq) const;
    /// Per-position log-probabilities.
    [[nodiscard]] std::vector<double> token_log_probs(const Features& x, const SymbolSeq& seq) const;

    /// Samples symbols until the sequence is complete.
    SymbolSeq sample(const Features& x, Rng& rng) const;

    /// Adds scale * d log p(symbol | prefix) / d theta into grad.
    void accumulate_token_grad(const Features& x, std::span<const int> prefix, int symbol, double scale, std::vector<double>& grad) const;

    static std::size_t index(int context, int symbol, int feature)
    {
        return (static_cast<std::size_t>(context) * kVocabSize + symbol) * kFeatures + feature;
    }
};

/// Context of the position following `prefix`: its last symbol, or
/// kStartContext.
int context_of(std::span<const int> prefix);

/// Symbols the policy may emit after `prefix`.
std::array<bool, kVocabSize> allowed_symbols(std::span<const int> prefix);

/// Linear critic V(x) = phi . x.
struct ValueBaseline
{
    std::vector<double> phi = std::vector<double>(kFeatures, 0.0);
    [[nodiscard]] double value(const Features& x) const;
};

/// Adam optimiser state for one parameter vector.
struct Adam
{
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    /// Ascent when `ascend`, descent otherwise.
    void step(std::vector<double>& params, const std::vector<double>& grad, bool ascend);
    [[nodiscard]] Json to_json() const;
    static Adam from_json(const Json& record);
};

struct LossAndGrad
{
    double value = 0.0;
    std::vector<double> grad;
};

struct SftTarget
{
    Features x {};
    SymbolSeq seq;
};

/// Negative mean over examples of the summed log-probability of the target
/// symbols, with its exact gradient. Throws EmptyDataset.
LossAndGrad sft_loss_and_grad(const ToyPolicy& policy, std::span<const SftTarget> data);

enum class AdvantageMode
{
    RewardMinusValue, // reward - V(s), the same value at every symbol
    Reward,           // raw reward, no baseline
};

std::string_view to_string(AdvantageMode m);
AdvantageMode advantage_mode_from_string(std::string_view text);

/// Per-symbol advantages for one sampled action.
std::vector<double> estimate_advantage(double reward, double value, std::size_t n_symbols, AdvantageMode mode = AdvantageMode::RewardMinusValue);

struct PpoSample
{
    Features x {};
    SymbolSeq seq;
    std::vector<double> old_log_probs; // per symbol, under the collecting policy
    std::vector<double> advantages;    // per symbol
};

/// Token-averaged clipped surrogate
///   mean_i min(r_i A_i, clip(r_i, 1-eps, 1+eps) A_i)
/// minus kl_coef times the token-averaged KL(pi || reference) over the
/// visited positions, with its exact gradient. The value is to be
/// maximised. `reference` may be null (no penalty). Throws ShapeMismatch
/// when a sample's per-symbol vectors do not match its sequence.
LossAndGrad ppo_objective(const ToyPolicy& policy,
                          std::span<const PpoSample> batch,
                          double clip_eps,
                          double kl_coef,
                          const ToyPolicy* reference);

/// Number of symbols in the batch whose ratio lies outside [1-eps, 1+eps].
std::size_t clipped_symbols(const ToyPolicy& policy, std::span<const PpoSample> batch, double clip_eps);

/// Policy backend that samples a symbol sequence and writes it out as a
/// response. Uses the request's rng, so episodes are reproducible.
class ToyPolicyBackend final: public PolicyBackend
{
  public:
    explicit ToyPolicyBackend(const ToyPolicy& policy, std::string id = "toy"): _policy(policy), _id(std::move(id)) {}
    std::string respond(const PolicyRequest& request) override;
    [[nodiscard]] std::string id() const override { return _id; }

    struct Emitted
    {
        Features x {};
        SymbolSeq seq;
    };

    /// Features and symbols behind every response since the last clear().
    [[nodiscard]] const std::vector<Emitted>& emitted() const { return _emitted; }
    void clear() { _emitted.clear(); }

  private:
    const ToyPolicy& _policy;
    std::string _id;
    std::vector<Emitted> _emitted;
};

Json to_json(const ToyPolicy& policy);
ToyPolicy toy_policy_from_json(const Json& record);

} // namespace agentml
