#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace w2sg {

namespace fs = std::filesystem;

// ---- error hierarchy -------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input files, bad records.
struct ParseError : Error {
    using Error::Error;
};

// Invalid configuration, missing templates, bad CLI usage.
struct ConfigError : Error {
    using Error::Error;
};

// A request the backend rejects before any network activity.
struct InvalidRequestError : Error {
    using Error::Error;
};

// Retry budget exhausted / connection-level failures.
struct TransportError : Error {
    TransportError(const std::string& msg, int attempts_)
        : Error(msg), attempts(attempts_) {}
    int attempts = 0;
};

// Non-2xx response with a parseable upstream error message.
struct UpstreamError : Error {
    UpstreamError(const std::string& msg, int status_) : Error(msg), status(status_) {}
    int status = 0;
};

// Training aborted (non-finite loss and the like).
struct TrainError : Error {
    using Error::Error;
};

// A pipeline phase failed; carries the phase tag.
struct PipelineError : Error {
    PipelineError(const std::string& phase_, const std::string& msg)
        : Error("phase " + phase_ + ": " + msg), phase(phase_) {}
    std::string phase;
};

// ---- stable hashing / seeded randomness ------------------------------------
//
// All randomness in the project flows through these functions so that runs are
// reproducible across platforms. Never use std::hash or std::random_device in
// anything that touches an experiment.

// FNV-1a 64-bit over raw bytes.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

// splitmix64 finalizer; good avalanche, stable constants.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (splitmix64(b) + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// Subseed derivation used everywhere a master seed fans out:
//   subseed = hash_mix(hash_mix(master, fnv1a64(tag)), index)
// The derivation is recorded in run manifests so seeds are auditable.
inline std::uint64_t subseed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    return hash_mix(hash_mix(master, fnv1a64(tag)), index);
}

// Deterministic counter-based generator built on splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n) without modulo bias (rejection sampling).
    std::uint64_t below(std::uint64_t n);

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool coin() { return (next() & 1ull) != 0; }

    // Standard normal via Box-Muller; consumes two draws.
    double normal();

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// ---- small helpers -----------------------------------------------------------

std::string to_hex(const unsigned char* data, std::size_t len);

std::string read_text_file(const fs::path& path);

// Writes via a unique temp file in the same directory followed by an atomic
// rename, so concurrent writers of the same path converge to one valid value.
void write_text_file_atomic(const fs::path& path, std::string_view content);

std::string replace_all(std::string text, std::string_view from, std::string_view to);

std::string lowercase(std::string s);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Rethrows the first
// exception after all workers have stopped. jobs <= 1 runs inline.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

} // namespace w2sg
