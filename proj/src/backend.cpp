#include "w2sg/backend.hpp"

#include <chrono>
#include <semaphore>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace w2sg {

using nlohmann::json;

// ---- mock debater ------------------------------------------------------------

std::string marker_token(bool correct_side) { return correct_side ? "sigpos" : "signeg"; }
std::string lie_token(bool correct_side) { return correct_side ? "liepos" : "lieneg"; }

std::string mock_generate(const std::string& prompt, bool claim_correct, int ground_truth,
                          int turn_position, const std::vector<std::string>& prior_args,
                          const MockDebaterConfig& config, std::uint64_t seed) {
    (void)prompt; // the grounding context carries everything the mock needs
    config.validate();
    const bool truth_correct = ground_truth == 1;
    const bool truthful_side = claim_correct == truth_correct;

    Rng rng(hash_mix(hash_mix(seed, config.vocab_seed),
                     fnv1a64(claim_correct ? "claim-correct" : "claim-incorrect") ^
                         static_cast<std::uint64_t>(turn_position * 2 + ground_truth)));

    std::ostringstream out;
    out << "I argue the answer is " << (claim_correct ? "correct" : "incorrect") << ".";

    if (rng.uniform01() < config.leak_rate) {
        bool marker_side;
        if (truthful_side) {
            // Honest evidence, with an occasional slip.
            marker_side = rng.uniform01() < config.honesty ? truth_correct : !truth_correct;
        } else {
            // Fabricated evidence for the false claim.
            marker_side = claim_correct;
        }
        out << " Evidence: " << marker_token(marker_side) << ".";
    }

    // Only the truthful side calls out fabricated markers, and only in
    // opponent turns (debate alternates, so opponent turns have the other
    // parity).
    if (turn_position >= 2 && truthful_side) {
        for (std::size_t i = 0; i < prior_args.size(); ++i) {
            const int prior_turn = static_cast<int>(i) + 1;
            if ((turn_position - prior_turn) % 2 == 0) continue; // own side
            for (bool side : {true, false}) {
                if (side == truth_correct) continue; // marker consistent with truth
                if (prior_args[i].find("Evidence: " + marker_token(side) + ".") ==
                    std::string::npos)
                    continue;
                if (rng.uniform01() < config.rebuttal_rate)
                    out << " REBUT(" << prior_turn << ") " << lie_token(side) << ".";
            }
        }
    }
    return out.str();
}

std::string MockBackend::generate(const GenerationRequest& req) {
    if (req.prompt.empty()) throw InvalidRequestError("mock backend: empty prompt");
    req.params.validate();
    if (!req.context) {
        // Grounding-free call: deterministic filler derived from the seed.
        return "Mock argument " + std::to_string(splitmix64(req.params.sampling_seed) % 100000) +
               ".";
    }
    const GenerationContext& ctx = *req.context;
    return mock_generate(req.prompt, ctx.claim_correct, ctx.ground_truth, ctx.turn_position,
                         ctx.prior_args, config_, req.params.sampling_seed);
}

// ---- wire client -------------------------------------------------------------

struct WireBackend::Impl {
    std::string base_url;
    std::string api_key;
    RetryPolicy retry;
    std::counting_semaphore<256> inflight;

    Impl(std::string url, std::string key, RetryPolicy r, int max_inflight)
        : base_url(std::move(url)), api_key(std::move(key)), retry(r),
          inflight(std::max(1, max_inflight)) {}
};

WireBackend::WireBackend(std::string base_url, std::string api_key, RetryPolicy retry,
                         int max_inflight)
    : impl_(std::make_unique<Impl>(std::move(base_url), std::move(api_key), retry, max_inflight)) {}

WireBackend::~WireBackend() = default;

std::string WireBackend::id() const { return "wire:" + impl_->base_url; }

namespace {

bool retryable_status(int status) {
    return status == 408 || status == 429 || (status >= 500 && status < 600);
}

std::string upstream_message(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) return {};
    if (j.contains("error")) {
        if (j["error"].is_string()) return j["error"].get<std::string>();
        if (j["error"].is_object() && j["error"].contains("message") &&
            j["error"]["message"].is_string())
            return j["error"]["message"].get<std::string>();
    }
    return {};
}

} // namespace

std::string WireBackend::generate(const GenerationRequest& req) {
    if (req.prompt.empty()) throw InvalidRequestError("wire backend: empty prompt");
    req.params.validate();

    json body{{"model", req.params.model_id},
              {"messages", json::array({json{{"role", "user"}, {"content", req.prompt}}})},
              {"temperature", req.params.temperature},
              {"max_tokens", req.params.max_tokens},
              {"seed", req.params.sampling_seed}};
    const std::string payload = body.dump();

    impl_->inflight.acquire();
    struct Release {
        std::counting_semaphore<256>& sem;
        ~Release() { sem.release(); }
    } release{impl_->inflight};

    httplib::Client client(impl_->base_url);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);

    // Jitter is deterministic in the request so reruns behave identically.
    Rng jitter_rng(hash_mix(fnv1a64(req.prompt), req.params.sampling_seed));
    std::string last_error;
    const int attempts = std::max(1, impl_->retry.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
        if (res) {
            if (res->status >= 200 && res->status < 300) {
                json j = json::parse(res->body, nullptr, false);
                if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
                    j["choices"].empty() || !j["choices"][0].contains("message") ||
                    !j["choices"][0]["message"].contains("content"))
                    throw UpstreamError("wire backend: malformed completion response", res->status);
                return j["choices"][0]["message"]["content"].get<std::string>();
            }
            std::string msg = upstream_message(res->body);
            if (!retryable_status(res->status)) {
                throw UpstreamError("wire backend: HTTP " + std::to_string(res->status) +
                                        (msg.empty() ? "" : ": " + msg),
                                    res->status);
            }
            last_error = "HTTP " + std::to_string(res->status) + (msg.empty() ? "" : ": " + msg);
        } else {
            last_error = "connection error (" + httplib::to_string(res.error()) + ")";
        }
        if (attempt < attempts) {
            double delay = static_cast<double>(impl_->retry.initial_backoff_ms);
            for (int k = 1; k < attempt; ++k) delay *= impl_->retry.multiplier;
            delay *= 1.0 + impl_->retry.jitter * (2.0 * jitter_rng.uniform01() - 1.0);
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(std::max(0.0, delay))));
        }
    }
    throw TransportError("wire backend: retry budget exhausted after " + std::to_string(attempts) +
                             " attempts (" + last_error + ")",
                         attempts);
}

} // namespace w2sg
