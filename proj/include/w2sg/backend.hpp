#pragma once

#include "w2sg/common.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace w2sg {

struct GenerationParams {
    double temperature = 0.7;
    int max_tokens = 512;
    std::uint64_t sampling_seed = 0;
    std::string model_id = "mock";

    void validate() const {
        if (max_tokens < 1) throw ConfigError("GenerationParams: max_tokens must be >= 1");
        if (temperature < 0.0) throw ConfigError("GenerationParams: temperature must be >= 0");
    }
};

// Synthetic grounding the protocol engines attach to each request. The wire
// client ignores it; the mock debater needs it to correlate markers with the
// sample's ground truth. Everything in here is recoverable from the prompt
// text, so cache keys stay a function of (params, prompt).
struct GenerationContext {
    bool claim_correct = true;           // the claim this turn argues for
    int ground_truth = 0;                // the sample's label
    int turn_position = 1;               // 1-based
    std::vector<std::string> prior_args; // argument texts of turns 1..t-1
};

struct GenerationRequest {
    std::string prompt;
    GenerationParams params;
    std::optional<GenerationContext> context;
};

class Backend {
public:
    virtual ~Backend() = default;
    // Returns the completion text. Throws InvalidRequestError on an empty
    // prompt, TransportError when retries are exhausted, UpstreamError on a
    // non-retryable upstream failure.
    virtual std::string generate(const GenerationRequest& req) = 0;
    virtual std::string id() const = 0;
};

// ---- deterministic mock debater ---------------------------------------------

// Synthetic argument process: truthful-side turns leak a ground-truth marker
// with probability leak_rate (the marker itself is truthful with probability
// honesty); lying-side turns emit the marker of their own false claim at the
// same rate; truthful-side rebuttal turns flag each misleading marker in an
// opponent turn with probability rebuttal_rate.
struct MockDebaterConfig {
    double honesty = 0.9;
    double leak_rate = 0.6;
    double rebuttal_rate = 0.8;
    std::uint64_t vocab_seed = 0;

    void validate() const {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in01(honesty) || !in01(leak_rate) || !in01(rebuttal_rate))
            throw ConfigError("MockDebaterConfig: rates must be within [0, 1]");
    }
};

// Marker vocabulary used by the mock debater. "sigpos"/"signeg" assert the
// answer is correct/incorrect; a rebuttal line "REBUT(i) liepos." (or lieneg)
// flags a fabricated marker in turn i.
std::string marker_token(bool correct_side);
std::string lie_token(bool correct_side);

// One mock argument. Fully deterministic given all arguments.
std::string mock_generate(const std::string& prompt, bool claim_correct, int ground_truth,
                          int turn_position, const std::vector<std::string>& prior_args,
                          const MockDebaterConfig& config, std::uint64_t seed);

class MockBackend final : public Backend {
public:
    explicit MockBackend(MockDebaterConfig config) : config_(config) { config_.validate(); }

    std::string generate(const GenerationRequest& req) override;
    std::string id() const override { return "mock-" + std::to_string(config_.vocab_seed); }

    const MockDebaterConfig& config() const { return config_; }

private:
    MockDebaterConfig config_;
};

// ---- wire client -------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 5;
    int initial_backoff_ms = 1000;
    double multiplier = 2.0;
    double jitter = 0.1; // +-10% of the delay
};

// Chat-completion client: POST {base_url}/v1/chat/completions with
// {model, messages, temperature, max_tokens, seed}; reads
// choices[0].message.content. Transient failures (connect errors, 408/429/5xx)
// are retried with jittered exponential backoff; other non-2xx responses raise
// UpstreamError with the upstream message. At most max_inflight requests run
// concurrently.
class WireBackend final : public Backend {
public:
    WireBackend(std::string base_url, std::string api_key, RetryPolicy retry = {},
                int max_inflight = 8);
    ~WireBackend() override;

    std::string generate(const GenerationRequest& req) override;
    std::string id() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace w2sg
