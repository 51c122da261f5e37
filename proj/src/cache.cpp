#include "w2sg/cache.hpp"

#include "w2sg/sha256.hpp"

#include <iostream>

#include <json.hpp>

namespace w2sg {

using nlohmann::json;

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
}

std::string ResponseCache::key_for(const GenerationParams& params, const std::string& prompt) {
    json j{{"model_id", params.model_id},
           {"prompt", prompt},
           {"temperature", params.temperature},
           {"max_tokens", params.max_tokens},
           {"sampling_seed", params.sampling_seed}};
    return sha256_hex(j.dump());
}

fs::path ResponseCache::entry_path(const std::string& key) const { return dir_ / (key + ".json"); }

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
    fs::path path = entry_path(key);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    std::string raw;
    try {
        raw = read_text_file(path);
    } catch (const Error&) {
        return std::nullopt;
    }
    json j = json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.contains("text") || !j["text"].is_string()) {
        std::cerr << "[w2sg] warning: corrupt cache entry " << path.string()
                  << ", treating as miss\n";
        return std::nullopt;
    }
    return j["text"].get<std::string>();
}

void ResponseCache::store(const std::string& key, const GenerationParams& params,
                          const std::string& prompt, const std::string& text) const {
    json j{{"model_id", params.model_id},
           {"prompt", prompt},
           {"temperature", params.temperature},
           {"max_tokens", params.max_tokens},
           {"sampling_seed", params.sampling_seed},
           {"text", text}};
    write_text_file_atomic(entry_path(key), j.dump());
}

ResponseCache::Stats ResponseCache::stats() const {
    Stats s;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir_, ec)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        ++s.entries;
        s.bytes += entry.file_size();
    }
    return s;
}

std::size_t ResponseCache::clear() const {
    std::size_t removed = 0;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir_, ec)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        fs::remove(entry.path(), ec);
        if (!ec) ++removed;
    }
    return removed;
}

std::string cached_generate(Backend& backend, const GenerationRequest& req, ResponseCache& cache) {
    const std::string key = ResponseCache::key_for(req.params, req.prompt);
    if (auto hit = cache.lookup(key)) return *hit;
    std::string text = backend.generate(req);
    cache.store(key, req.params, req.prompt, text);
    return text;
}

std::string CachedBackend::generate(const GenerationRequest& req) {
    const std::string key = ResponseCache::key_for(req.params, req.prompt);
    if (auto hit = cache_.lookup(key)) {
        hits_.fetch_add(1);
        return *hit;
    }
    misses_.fetch_add(1);
    std::string text = inner_.generate(req);
    cache_.store(key, req.params, req.prompt, text);
    return text;
}

} // namespace w2sg
