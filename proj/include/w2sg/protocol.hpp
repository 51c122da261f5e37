#pragma once

#include "w2sg/backend.hpp"
#include "w2sg/common.hpp"
#include "w2sg/dataset.hpp"
#include "w2sg/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace w2sg {

enum class Claim { answer_is_correct, answer_is_incorrect };
enum class Role { A, B, consultant, market_maker };

std::string claim_name(Claim c);
std::string role_name(Role r);

struct Stance {
    Claim claim = Claim::answer_is_correct;
    Role role = Role::A;
};

struct Turn {
    int index = 1; // 1-based, no gaps
    Role author = Role::A;
    Claim claim = Claim::answer_is_correct;
    std::string argument_text;
    std::string prompt_used;
};

enum class ProtocolKind { debate, consultancy, market_making };

ProtocolKind parse_protocol_kind(const std::string& name);
std::string protocol_kind_name(ProtocolKind p);

struct Transcript {
    std::string sample_id;
    ProtocolKind protocol = ProtocolKind::debate;
    std::vector<Turn> turns;
    std::uint64_t protocol_seed = 0;
    std::string backend_id;
};

// Template lookup key rendered as "<protocol>/<position>/<correct|incorrect>".
// Debate positions beyond 3 reuse the position-3 counterargument template.
std::string template_key(ProtocolKind protocol, int position, Claim claim);

struct ProtocolConfig {
    ProtocolKind protocol = ProtocolKind::debate;
    int num_turns = 3; // consultancy and market-making always run one turn
    std::map<std::string, std::string> templates = {};
    std::string task_description =
        "There is a question, followed by an answer.";
    GenerationParams generation;
    // When set, stance assignment is seeded from this value instead of the
    // protocol seed, so ensemble members can share stances while re-seeding
    // text sampling.
    std::optional<std::uint64_t> stance_seed_override;
};

// Built-in prompt templates (same text as the files under templates/).
std::map<std::string, std::string> default_templates();

// Reads "<key with / replaced by _>.txt" files from dir, overlaying the
// defaults. Unknown files are ignored.
std::map<std::string, std::string> load_templates(const fs::path& dir);

// Fair seeded coin flip of which role receives answer_is_correct. The opening
// speaker is always the answer_is_correct claimant, whichever role holds it.
std::pair<Stance, Stance> assign_stances(const BinarySample& sample, std::uint64_t seed);

// Canonical transcript rendering: one line per turn,
// "Turn i (argues correct|argues incorrect): <text>". Empty transcripts render
// as the marker "[no prior turns]".
std::string render_transcript(const Transcript& t);

// Fills {task_description}, {question}, {answer}, {transcript} in the template
// for (protocol, position, claim). Throws ConfigError naming the key when the
// template is missing, and Error when position exceeds num_turns.
std::string render_prompt(const ProtocolConfig& config, int turn_position, const Stance& stance,
                          const BinarySample& sample, const Transcript& so_far);

// Three protocol engines. Each returns a complete transcript or throws with
// the sample id and turn index attached; partial transcripts are never
// emitted. Per-turn backend seeds derive from
// hash(hash(seed, sample id), role, turn index).
Transcript run_debate(const BinarySample& sample, Backend& backend, const ProtocolConfig& config,
                      std::uint64_t seed);
Transcript run_consultancy(const BinarySample& sample, Backend& backend,
                           const ProtocolConfig& config, std::uint64_t seed);
// The debater argues against the class the weak supervisor selects on the
// plain sample (argmax, ties to label 0).
Transcript run_market_making(const BinarySample& sample, const Classifier& weak_supervisor,
                             Backend& backend, const ProtocolConfig& config);

// Dispatch on config.protocol; market-making requires a supervisor.
Transcript run_protocol(const BinarySample& sample, Backend& backend,
                        const ProtocolConfig& config, std::uint64_t seed,
                        const Classifier* weak_supervisor = nullptr);

// question block + answer block + separator + canonical transcript rendering.
// Throws on sample/transcript id mismatch.
std::string augment_sample(const BinarySample& sample, const Transcript& transcript);

// JSONL persistence, one full transcript per line.
void save_transcripts_jsonl(const fs::path& path, const std::vector<Transcript>& transcripts);
std::vector<Transcript> load_transcripts_jsonl(const fs::path& path);

std::string transcript_to_json_line(const Transcript& t);

// Order-insensitive digest over a sample_id -> transcript mapping.
std::string transcripts_digest(const std::map<std::string, Transcript>& transcripts);

} // namespace w2sg
