// SPDX-License-Identifier: Apache-2.0
#include <agentml/common.hpp>

#include <openssl/evp.h>

#include <fmt/format.h>

#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace agentml
{

std::string_view to_string(ErrorCode code)
{
    switch (code)
    {
        case ErrorCode::BundleInvalid: return "BundleInvalid";
        case ErrorCode::PrepareFailed: return "PrepareFailed";
        case ErrorCode::MalformedNumber: return "MalformedNumber";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::PolicyUnavailable: return "PolicyUnavailable";
        case ErrorCode::SlotMissing: return "SlotMissing";
        case ErrorCode::MissingMetric: return "MissingMetric";
        case ErrorCode::DegenerateSpec: return "DegenerateSpec";
        case ErrorCode::ZeroBaseline: return "ZeroBaseline";
        case ErrorCode::KOutOfRange: return "KOutOfRange";
        case ErrorCode::GeneratorUnavailable: return "GeneratorUnavailable";
        case ErrorCode::TooFewCandidates: return "TooFewCandidates";
        case ErrorCode::KTooLarge: return "KTooLarge";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::EmptyStore: return "EmptyStore";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EnvReplayFailure: return "EnvReplayFailure";
        case ErrorCode::DivergenceDetected: return "DivergenceDetected";
        case ErrorCode::InstanceTooLarge: return "InstanceTooLarge";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message):
    std::runtime_error(fmt::format("{}: {}", to_string(code), message)), _code(code)
{
}

std::uint64_t Rng::below(std::uint64_t n)
{
    if (n == 0)
        throw Error(ErrorCode::InvalidArgument, "Rng::below(0)");
    auto const limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    for (;;)
    {
        auto const x = next();
        if (x < limit)
            return x % n;
    }
}

double Rng::normal()
{
    auto u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    auto const u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const
{
    std::ostringstream out;
    out << _engine;
    return out.str();
}

void Rng::restore(const std::string& state)
{
    std::istringstream in(state);
    in >> _engine;
    if (!in)
        throw Error(ErrorCode::SchemaViolation, "corrupt RNG state");
}

std::uint64_t fnv1a64(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c: text)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    auto z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double hash_unit(std::string_view key)
{
    return static_cast<double>(splitmix64(fnv1a64(key)) >> 11) * 0x1.0p-53;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index)
{
    return splitmix64(splitmix64(base) ^ (index * 0xD1B54A32D192ED03ULL));
}

std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest {};
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::IoFailure, "sha256 digest failed");
    std::string hex;
    hex.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i)
        hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string config_digest(const Json& config)
{
    return sha256_hex(config.dump()).substr(0, 16);
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoFailure, fmt::format("cannot read {}", path));
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", path));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw Error(ErrorCode::IoFailure, fmt::format("short write to {}", path));
}

std::string trim(std::string_view text)
{
    auto const isSpace = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && isSpace(text[begin]))
        ++begin;
    while (end > begin && isSpace(text[end - 1]))
        --end;
    return std::string(text.substr(begin, end - begin));
}

std::vector<std::string> split_lines(std::string_view text)
{
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size())
    {
        auto const nl = text.find('\n', start);
        if (nl == std::string_view::npos)
        {
            if (start < text.size())
                lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string to_lower(std::string_view text)
{
    std::string out(text);
    for (auto& c: out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace agentml
