#pragma once

#include "w2sg/backend.hpp"
#include "w2sg/common.hpp"

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>

namespace w2sg {

// Directory of content-addressed JSON entries, one file per key. Writes go
// through a temp file plus atomic rename, so concurrent duplicate misses
// converge to one stored value. Undecodable entries are treated as misses and
// rewritten.
class ResponseCache {
public:
    explicit ResponseCache(fs::path dir);

    const fs::path& dir() const { return dir_; }

    // sha256 over the canonical JSON of
    // {model_id, prompt, temperature, max_tokens, sampling_seed}.
    static std::string key_for(const GenerationParams& params, const std::string& prompt);

    std::optional<std::string> lookup(const std::string& key) const;
    void store(const std::string& key, const GenerationParams& params, const std::string& prompt,
               const std::string& text) const;

    struct Stats {
        std::size_t entries = 0;
        std::uintmax_t bytes = 0;
    };
    Stats stats() const;

    // Removes all entries; returns how many were deleted.
    std::size_t clear() const;

private:
    fs::path entry_path(const std::string& key) const;
    fs::path dir_;
};

// Cache-through generate: on hit returns the stored text with zero backend
// calls; on miss calls the backend and persists before returning.
std::string cached_generate(Backend& backend, const GenerationRequest& req, ResponseCache& cache);

// Backend decorator wrapping cached_generate; counts hits and misses.
class CachedBackend final : public Backend {
public:
    CachedBackend(Backend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}

    std::string generate(const GenerationRequest& req) override;
    std::string id() const override { return inner_.id(); }

    std::uint64_t hits() const { return hits_.load(); }
    std::uint64_t misses() const { return misses_.load(); }

private:
    Backend& inner_;
    ResponseCache& cache_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

} // namespace w2sg
