// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agentml/remote.hpp>
#include <agentml/synthetic.hpp>

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace agentml
{

struct IdeaCandidate
{
    IdeaAxis axis = IdeaAxis::Data;
    std::string text;
    std::vector<double> embedding;
    bool operator==(const IdeaCandidate&) const = default;
};

class Embedder
{
  public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    [[nodiscard]] virtual std::string id() const = 0;
};

/// Deterministic pseudo-embedding: signed feature hashing of lower-cased
/// word unigrams and bigrams.
class HashEmbedder final: public Embedder
{
  public:
    explicit HashEmbedder(std::size_t dim = 64): _dim(dim) {}
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    [[nodiscard]] std::string id() const override;

  private:
    std::size_t _dim;
};

class RemoteEmbedder final: public Embedder
{
  public:
    explicit RemoteEmbedder(EndpointConfig config): _client(config), _model(config.model) {}
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override { return _client.embed(texts); }
    [[nodiscard]] std::string id() const override { return "remote:" + _model; }

  private:
    EmbeddingClient _client;
    std::string _model;
};

/// Source of raw idea texts for one axis.
class IdeaGenerator
{
  public:
    virtual ~IdeaGenerator() = default;
    /// Throws GeneratorUnavailable.
    virtual std::vector<std::string> generate(IdeaAxis axis, std::size_t m) = 0;
    [[nodiscard]] virtual std::string id() const = 0;
};

/// Reads <dir>/<axis>.txt (data.txt, model.txt, learning.txt), one idea per
/// line; blank lines are skipped. Returns the first m lines.
class FixtureGenerator final: public IdeaGenerator
{
  public:
    explicit FixtureGenerator(fs::path dir): _dir(std::move(dir)) {}
    std::vector<std::string> generate(IdeaAxis axis, std::size_t m) override;
    [[nodiscard]] std::string id() const override { return "fixture:" + _dir.filename().string(); }

  private:
    fs::path _dir;
};

/// Asks a chat model for advice with the idea-generation prompt and reads
/// the lines after the "[advice]" flag.
class RemoteGenerator final: public IdeaGenerator
{
  public:
    RemoteGenerator(EndpointConfig config, std::string task_description, std::string initial_script);
    std::vector<std::string> generate(IdeaAxis axis, std::size_t m) override;
    [[nodiscard]] std::string id() const override;

  private:
    ChatClient _client;
    std::string _taskDescription;
    std::string _initialScript;
};

/// The idea-generation prompt with its slots filled in.
std::string advice_prompt(IdeaAxis axis, std::string_view task_description, std::string_view initial_script, std::size_t m);

/// Idea lines of a generator reply: everything after the first "[advice]"
/// flag, one per non-empty line, list markers stripped.
std::vector<std::string> parse_advice(std::string_view reply);

/// m ideas for an axis, exact duplicates dropped (reported through
/// `duplicates`), embedded and L2-normalised.
std::vector<IdeaCandidate>
generate_candidates(IdeaAxis axis, IdeaGenerator& generator, std::size_t m, Embedder& embedder, std::size_t* duplicates = nullptr);

double euclidean(const std::vector<double>& a, const std::vector<double>& b);

/// Greedy farthest-point sampling. Seed: the candidate with the largest mean
/// distance to all others; then repeatedly the candidate whose distance to
/// the nearest selected one is largest. Ties go to the lower index.
/// Returns indices in selection order. Throws EmptyInput / KTooLarge.
std::vector<std::size_t> farthest_point_sample(const std::vector<IdeaCandidate>& candidates, std::size_t k);

/// The k candidates with the largest mean distance to all others, ordered by
/// that mean (ties to the lower index).
std::vector<std::size_t> avg_distance_top_k(const std::vector<IdeaCandidate>& candidates, std::size_t k);

enum class Selection
{
    FarthestPoint,
    AverageDistance,
};

std::string_view to_string(Selection s);
Selection selection_from_string(std::string_view text);

struct ActionPool
{
    std::map<IdeaAxis, std::vector<IdeaCandidate>> axes;
    std::size_t k = 10;
    Json provenance = Json::object();

    [[nodiscard]] Json to_json() const;
    static ActionPool from_json(const Json& record);
    [[nodiscard]] std::string digest() const;
};

struct PoolBuildConfig
{
    std::size_t m = 100;
    std::size_t k = 10;
    Selection selection = Selection::FarthestPoint;
};

/// Builds every axis. Throws TooFewCandidates when an axis has fewer than k
/// distinct ideas.
ActionPool build_action_pool(IdeaGenerator& generator, Embedder& embedder, const PoolBuildConfig& config);

struct PrefixIdea
{
    IdeaAxis axis;
    std::string text;
};

/// 1-3 distinct axes in random order, one idea drawn uniformly from each.
std::vector<PrefixIdea> sample_exploration_prefix(const ActionPool& pool, Rng& rng);

/// Base problem plus an instruction block asking for the ideas, in order,
/// in the first step. No ideas: the base problem unchanged.
std::string format_enriched_problem(std::string_view base_problem, const std::vector<std::string>& ideas);

std::vector<std::string> idea_texts(const std::vector<PrefixIdea>& ideas);

} // namespace agentml
