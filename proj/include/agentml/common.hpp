// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace agentml
{

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class ErrorCode
{
    BundleInvalid,
    PrepareFailed,
    MalformedNumber,
    ConfigInvalid,
    PolicyUnavailable,
    SlotMissing,
    MissingMetric,
    DegenerateSpec,
    ZeroBaseline,
    KOutOfRange,
    GeneratorUnavailable,
    TooFewCandidates,
    KTooLarge,
    EmptyInput,
    SchemaViolation,
    IoFailure,
    EmptyStore,
    EmptyDataset,
    ShapeMismatch,
    EnvReplayFailure,
    DivergenceDetected,
    InstanceTooLarge,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error: public std::runtime_error
{
  public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return _code; }

  private:
    ErrorCode _code;
};

/// Seeded generator with platform-independent draws. The standard
/// distributions are implementation-defined, so everything that must be
/// reproducible goes through these helpers instead.
class Rng
{
  public:
    explicit Rng(std::uint64_t seed = 0): _engine(seed) {}

    std::uint64_t next() { return _engine(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[below(i)]);
    }

    [[nodiscard]] std::string state() const;
    void restore(const std::string& state);

  private:
    std::mt19937_64 _engine;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic unit-interval value for a key; mirrored bit-for-bit by the
/// generated synthetic task scripts.
double hash_unit(std::string_view key);

/// Child seed derivation so that per-item streams are independent of the
/// order in which items are processed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

std::string sha256_hex(std::string_view data);

/// Digest of a configuration record, computed over its compact dump.
std::string config_digest(const Json& config);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

std::string trim(std::string_view text);
std::vector<std::string> split_lines(std::string_view text);
std::string to_lower(std::string_view text);

} // namespace agentml
