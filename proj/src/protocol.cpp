#include "w2sg/protocol.hpp"

#include "w2sg/sha256.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace w2sg {

using nlohmann::json;

std::string claim_name(Claim c) {
    return c == Claim::answer_is_correct ? "answer_is_correct" : "answer_is_incorrect";
}

std::string role_name(Role r) {
    switch (r) {
        case Role::A: return "A";
        case Role::B: return "B";
        case Role::consultant: return "consultant";
        case Role::market_maker: return "market_maker";
    }
    return "?";
}

namespace {

Role parse_role(const std::string& s) {
    if (s == "A") return Role::A;
    if (s == "B") return Role::B;
    if (s == "consultant") return Role::consultant;
    if (s == "market_maker") return Role::market_maker;
    throw ParseError("unknown role: " + s);
}

Claim parse_claim(const std::string& s) {
    if (s == "answer_is_correct") return Claim::answer_is_correct;
    if (s == "answer_is_incorrect") return Claim::answer_is_incorrect;
    throw ParseError("unknown claim: " + s);
}

} // namespace

ProtocolKind parse_protocol_kind(const std::string& name) {
    if (name == "debate") return ProtocolKind::debate;
    if (name == "consultancy") return ProtocolKind::consultancy;
    if (name == "market_making") return ProtocolKind::market_making;
    throw ConfigError("unknown protocol: " + name +
                      " (expected debate, consultancy, or market_making)");
}

std::string protocol_kind_name(ProtocolKind p) {
    switch (p) {
        case ProtocolKind::debate: return "debate";
        case ProtocolKind::consultancy: return "consultancy";
        case ProtocolKind::market_making: return "market_making";
    }
    return "?";
}

std::string template_key(ProtocolKind protocol, int position, Claim claim) {
    int pos = protocol == ProtocolKind::debate ? std::min(position, 3) : 1;
    return protocol_kind_name(protocol) + "/" + std::to_string(pos) + "/" +
           (claim == Claim::answer_is_correct ? "correct" : "incorrect");
}

std::map<std::string, std::string> default_templates() {
    auto body = [](const std::string& instruction) {
        return "{task_description} " + instruction +
               "\n\nQuestion: {question}\nAnswer: {answer}\n\nTranscript so far:\n{transcript}\n";
    };
    const std::string debate_frame =
        "Debate with another opponent for whether the answer is correct or incorrect. ";
    std::map<std::string, std::string> t;
    t["debate/1/correct"] =
        body(debate_frame + "Construct your argument for why the answer is correct.");
    t["debate/1/incorrect"] =
        body(debate_frame + "Construct your argument for why the answer is incorrect.");
    t["debate/2/correct"] =
        body(debate_frame + "Construct your argument for why the answer is correct and list out "
                            "flaws in your opponent's argument.");
    t["debate/2/incorrect"] =
        body(debate_frame + "Construct your argument for why the answer is incorrect and list out "
                            "flaws in your opponent's argument.");
    t["debate/3/correct"] = body(debate_frame + "Construct the counterargument to opponent's argument.");
    t["debate/3/incorrect"] =
        body(debate_frame + "Construct the counterargument to opponent's argument.");
    t["consultancy/1/correct"] =
        body("Construct your argument for why the answer is correct.");
    t["consultancy/1/incorrect"] =
        body("Construct your argument for why the answer is incorrect.");
    t["market_making/1/correct"] =
        body("Construct your argument for why the answer is correct.");
    t["market_making/1/incorrect"] =
        body("Construct your argument for why the answer is incorrect.");
    return t;
}

std::map<std::string, std::string> load_templates(const fs::path& dir) {
    auto templates = default_templates();
    if (dir.empty()) return templates;
    if (!fs::exists(dir)) throw ConfigError("template directory not found: " + dir.string());
    for (auto& [key, text] : templates) {
        fs::path file = dir / (replace_all(key, "/", "_") + ".txt");
        if (fs::exists(file)) text = read_text_file(file);
    }
    return templates;
}

std::pair<Stance, Stance> assign_stances(const BinarySample& sample, std::uint64_t seed) {
    Rng rng(hash_mix(seed, fnv1a64(sample.id)));
    const bool a_correct = rng.coin();
    Stance a{a_correct ? Claim::answer_is_correct : Claim::answer_is_incorrect, Role::A};
    Stance b{a_correct ? Claim::answer_is_incorrect : Claim::answer_is_correct, Role::B};
    return {a, b};
}

std::string render_transcript(const Transcript& t) {
    if (t.turns.empty()) return "[no prior turns]";
    std::ostringstream out;
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        if (i > 0) out << "\n";
        const Turn& turn = t.turns[i];
        out << "Turn " << turn.index << " ("
            << (turn.claim == Claim::answer_is_correct ? "argues correct" : "argues incorrect")
            << "): " << turn.argument_text;
    }
    return out.str();
}

std::string render_prompt(const ProtocolConfig& config, int turn_position, const Stance& stance,
                          const BinarySample& sample, const Transcript& so_far) {
    if (turn_position < 1 || turn_position > config.num_turns)
        throw Error("render_prompt: turn position " + std::to_string(turn_position) +
                    " outside 1.." + std::to_string(config.num_turns));
    const auto& templates = config.templates.empty() ? default_templates() : config.templates;
    const std::string key = template_key(config.protocol, turn_position, stance.claim);
    auto it = templates.find(key);
    if (it == templates.end()) throw ConfigError("missing prompt template: " + key);
    std::string text = it->second;
    text = replace_all(std::move(text), "{task_description}", config.task_description);
    text = replace_all(std::move(text), "{question}", sample.question_text);
    text = replace_all(std::move(text), "{answer}", sample.answer_text);
    text = replace_all(std::move(text), "{transcript}", render_transcript(so_far));
    return text;
}

namespace {

std::uint64_t role_tag(Role r) {
    switch (r) {
        case Role::A: return 1;
        case Role::B: return 2;
        case Role::consultant: return 3;
        case Role::market_maker: return 4;
    }
    return 0;
}

Turn generate_turn(const BinarySample& sample, Backend& backend, const ProtocolConfig& config,
                   int position, const Stance& stance, const Transcript& so_far,
                   std::uint64_t per_sample_seed) {
    GenerationRequest req;
    req.prompt = render_prompt(config, position, stance, sample, so_far);
    req.params = config.generation;
    req.params.sampling_seed = hash_mix(hash_mix(per_sample_seed, role_tag(stance.role)),
                                        static_cast<std::uint64_t>(position));
    GenerationContext ctx;
    ctx.claim_correct = stance.claim == Claim::answer_is_correct;
    ctx.ground_truth = sample.label;
    ctx.turn_position = position;
    for (const Turn& turn : so_far.turns) ctx.prior_args.push_back(turn.argument_text);
    req.context = ctx;

    std::string text;
    try {
        text = backend.generate(req);
    } catch (const Error& e) {
        throw Error("protocol failure on sample " + sample.id + " turn " +
                    std::to_string(position) + ": " + e.what());
    }
    if (text.empty())
        throw Error("protocol failure on sample " + sample.id + " turn " +
                    std::to_string(position) + ": backend returned empty argument");
    return Turn{position, stance.role, stance.claim, std::move(text), std::move(req.prompt)};
}

} // namespace

Transcript run_debate(const BinarySample& sample, Backend& backend, const ProtocolConfig& config,
                      std::uint64_t seed) {
    if (config.protocol != ProtocolKind::debate)
        throw ConfigError("run_debate: config.protocol must be debate");
    if (config.num_turns < 1) throw ConfigError("run_debate: num_turns must be >= 1");

    const std::uint64_t stance_seed = config.stance_seed_override.value_or(seed);
    auto [a, b] = assign_stances(sample, stance_seed);
    const Stance& opener = a.claim == Claim::answer_is_correct ? a : b;
    const Stance& other = a.claim == Claim::answer_is_correct ? b : a;

    const std::uint64_t per_sample_seed = hash_mix(seed, fnv1a64(sample.id));

    Transcript t;
    t.sample_id = sample.id;
    t.protocol = ProtocolKind::debate;
    t.protocol_seed = seed;
    t.backend_id = backend.id();
    for (int position = 1; position <= config.num_turns; ++position) {
        const Stance& stance = position % 2 == 1 ? opener : other;
        t.turns.push_back(generate_turn(sample, backend, config, position, stance, t,
                                        per_sample_seed));
    }
    return t;
}

Transcript run_consultancy(const BinarySample& sample, Backend& backend,
                           const ProtocolConfig& config, std::uint64_t seed) {
    if (config.protocol != ProtocolKind::consultancy)
        throw ConfigError("run_consultancy: config.protocol must be consultancy");

    const std::uint64_t stance_seed = config.stance_seed_override.value_or(seed);
    Rng rng(hash_mix(hash_mix(stance_seed, fnv1a64(sample.id)), fnv1a64("consultant-claim")));
    Stance stance{rng.coin() ? Claim::answer_is_correct : Claim::answer_is_incorrect,
                  Role::consultant};

    const std::uint64_t per_sample_seed = hash_mix(seed, fnv1a64(sample.id));

    Transcript t;
    t.sample_id = sample.id;
    t.protocol = ProtocolKind::consultancy;
    t.protocol_seed = seed;
    t.backend_id = backend.id();
    t.turns.push_back(generate_turn(sample, backend, config, 1, stance, t, per_sample_seed));
    return t;
}

Transcript run_market_making(const BinarySample& sample, const Classifier& weak_supervisor,
                             Backend& backend, const ProtocolConfig& config) {
    if (config.protocol != ProtocolKind::market_making)
        throw ConfigError("run_market_making: config.protocol must be market_making");

    const SoftLabel pred = weak_supervisor.predict(plain_text(sample));
    const int selected = pred.p1 > pred.p0 ? 1 : 0; // tie selects label 0
    Stance stance{selected == 1 ? Claim::answer_is_incorrect : Claim::answer_is_correct,
                  Role::market_maker};

    const std::uint64_t seed = hash_mix(config.generation.sampling_seed, fnv1a64("market-making"));
    const std::uint64_t per_sample_seed = hash_mix(seed, fnv1a64(sample.id));

    Transcript t;
    t.sample_id = sample.id;
    t.protocol = ProtocolKind::market_making;
    t.protocol_seed = seed;
    t.backend_id = backend.id();
    t.turns.push_back(generate_turn(sample, backend, config, 1, stance, t, per_sample_seed));
    return t;
}

Transcript run_protocol(const BinarySample& sample, Backend& backend, const ProtocolConfig& config,
                        std::uint64_t seed, const Classifier* weak_supervisor) {
    switch (config.protocol) {
        case ProtocolKind::debate: return run_debate(sample, backend, config, seed);
        case ProtocolKind::consultancy: return run_consultancy(sample, backend, config, seed);
        case ProtocolKind::market_making:
            if (!weak_supervisor)
                throw ConfigError("market_making protocol requires a trained weak supervisor");
            return run_market_making(sample, *weak_supervisor, backend, config);
    }
    throw ConfigError("run_protocol: bad protocol kind");
}

std::string augment_sample(const BinarySample& sample, const Transcript& transcript) {
    if (transcript.sample_id != sample.id)
        throw Error("augment_sample: transcript for " + transcript.sample_id +
                    " does not match sample " + sample.id);
    return plain_text(sample) + "\n---\n" + render_transcript(transcript);
}

std::string transcript_to_json_line(const Transcript& t) {
    json turns = json::array();
    for (const Turn& turn : t.turns) {
        turns.push_back(json{{"index", turn.index},
                             {"author", role_name(turn.author)},
                             {"claim", claim_name(turn.claim)},
                             {"argument_text", turn.argument_text},
                             {"prompt_used", turn.prompt_used}});
    }
    json j{{"sample_id", t.sample_id},
           {"protocol", protocol_kind_name(t.protocol)},
           {"protocol_seed", t.protocol_seed},
           {"backend_id", t.backend_id},
           {"turns", turns}};
    return j.dump();
}

void save_transcripts_jsonl(const fs::path& path, const std::vector<Transcript>& transcripts) {
    std::ostringstream out;
    for (const auto& t : transcripts) out << transcript_to_json_line(t) << "\n";
    write_text_file_atomic(path, out.str());
}

std::vector<Transcript> load_transcripts_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open transcript file: " + path.string());
    std::vector<Transcript> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON");
        try {
            Transcript t;
            t.sample_id = j.at("sample_id").get<std::string>();
            t.protocol = parse_protocol_kind(j.at("protocol").get<std::string>());
            t.protocol_seed = j.at("protocol_seed").get<std::uint64_t>();
            t.backend_id = j.at("backend_id").get<std::string>();
            for (const auto& tj : j.at("turns")) {
                Turn turn;
                turn.index = tj.at("index").get<int>();
                turn.author = parse_role(tj.at("author").get<std::string>());
                turn.claim = parse_claim(tj.at("claim").get<std::string>());
                turn.argument_text = tj.at("argument_text").get<std::string>();
                turn.prompt_used = tj.at("prompt_used").get<std::string>();
                t.turns.push_back(std::move(turn));
            }
            out.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string transcripts_digest(const std::map<std::string, Transcript>& transcripts) {
    Sha256 h;
    for (const auto& [id, t] : transcripts) {
        h.update(transcript_to_json_line(t));
        h.update("\n");
    }
    return h.hex_digest();
}

} // namespace w2sg
