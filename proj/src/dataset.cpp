#include "w2sg/dataset.hpp"

#include "w2sg/sha256.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace w2sg {

using nlohmann::json;

void validate_question(const RawQuestion& q) {
    bool any_correct = false, any_incorrect = false;
    std::set<std::string> texts;
    for (const auto& c : q.candidates) {
        (c.is_correct ? any_correct : any_incorrect) = true;
        if (!texts.insert(c.answer_text).second)
            throw ParseError("question " + q.id + ": duplicate candidate answer text");
    }
    if (!any_correct) throw ParseError("question " + q.id + ": no correct candidate");
    if (!any_incorrect) throw ParseError("question " + q.id + ": no incorrect candidate");
}

std::string plain_text(const BinarySample& s) {
    return "Question: " + s.question_text + "\nAnswer: " + s.answer_text;
}

DatasetFormat parse_dataset_format(const std::string& name) {
    if (name == "multiple_choice") return DatasetFormat::multiple_choice;
    if (name == "boolean") return DatasetFormat::boolean_qa;
    if (name == "preference_pair") return DatasetFormat::preference_pair;
    throw ConfigError("unknown dataset format: " + name +
                      " (expected multiple_choice, boolean, or preference_pair)");
}

std::string dataset_format_name(DatasetFormat f) {
    switch (f) {
        case DatasetFormat::multiple_choice: return "multiple_choice";
        case DatasetFormat::boolean_qa: return "boolean";
        case DatasetFormat::preference_pair: return "preference_pair";
    }
    return "?";
}

namespace {

std::string require_string(const json& j, const char* key, int line) {
    if (!j.contains(key) || !j[key].is_string())
        throw ParseError("line " + std::to_string(line) + ": missing string field \"" + key + "\"");
    return j[key].get<std::string>();
}

// yes/no and true/false answers expand to a two-candidate question.
std::string boolean_complement(const std::string& answer, const std::string& id) {
    std::string a = lowercase(answer);
    if (a == "yes") return "no";
    if (a == "no") return "yes";
    if (a == "true") return "false";
    if (a == "false") return "true";
    throw ParseError("question " + id + ": boolean answer must be yes/no/true/false, got \"" +
                     answer + "\"");
}

RawQuestion parse_record(const json& j, DatasetFormat format, int line) {
    RawQuestion q;
    q.id = require_string(j, "id", line);
    switch (format) {
        case DatasetFormat::multiple_choice: {
            q.question_text = require_string(j, "question", line);
            if (!j.contains("candidates") || !j["candidates"].is_array())
                throw ParseError("line " + std::to_string(line) + ": missing \"candidates\" array");
            for (const auto& cj : j["candidates"]) {
                if (!cj.is_object() || !cj.contains("text") || !cj.contains("correct") ||
                    !cj["text"].is_string() || !cj["correct"].is_boolean())
                    throw ParseError("line " + std::to_string(line) +
                                     ": candidate must be {\"text\": str, \"correct\": bool}");
                q.candidates.push_back({cj["text"].get<std::string>(), cj["correct"].get<bool>()});
            }
            break;
        }
        case DatasetFormat::boolean_qa: {
            q.question_text = require_string(j, "question", line);
            std::string answer = require_string(j, "answer", line);
            if (!j.contains("label") || !j["label"].is_boolean())
                throw ParseError("line " + std::to_string(line) + ": missing boolean field \"label\"");
            bool label = j["label"].get<bool>();
            q.candidates.push_back({answer, label});
            q.candidates.push_back({boolean_complement(answer, q.id), !label});
            break;
        }
        case DatasetFormat::preference_pair: {
            q.question_text = j.contains("question") ? require_string(j, "question", line)
                                                     : require_string(j, "prompt", line);
            q.candidates.push_back({require_string(j, "chosen", line), true});
            q.candidates.push_back({require_string(j, "rejected", line), false});
            break;
        }
    }
    if (j.contains("meta")) {
        if (!j["meta"].is_object())
            throw ParseError("line " + std::to_string(line) + ": \"meta\" must be an object");
        for (auto it = j["meta"].begin(); it != j["meta"].end(); ++it) {
            if (!it.value().is_string())
                throw ParseError("line " + std::to_string(line) + ": meta values must be strings");
            q.metadata[it.key()] = it.value().get<std::string>();
        }
    }
    return q;
}

} // namespace

std::vector<RawQuestion> load_dataset(const fs::path& path, DatasetFormat format) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file: " + path.string());
    std::vector<RawQuestion> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON");
        RawQuestion q = parse_record(j, format, line_no);
        validate_question(q);
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<BinarySample> convert_to_binary(const RawQuestion& q, std::uint64_t balance_seed) {
    validate_question(q);

    std::vector<std::size_t> correct_idx, incorrect_idx;
    for (std::size_t i = 0; i < q.candidates.size(); ++i)
        (q.candidates[i].is_correct ? correct_idx : incorrect_idx).push_back(i);

    const std::size_t m = std::min(correct_idx.size(), incorrect_idx.size());
    Rng rng(hash_mix(balance_seed, fnv1a64(q.id)));

    // Keep a uniform random subset of size m of the majority class; the
    // minority class is kept whole. Original candidate order is preserved.
    auto downsample = [&](std::vector<std::size_t> idx) {
        if (idx.size() > m) {
            rng.shuffle(idx);
            idx.resize(m);
            std::sort(idx.begin(), idx.end());
        }
        return idx;
    };
    correct_idx = downsample(std::move(correct_idx));
    incorrect_idx = downsample(std::move(incorrect_idx));

    std::vector<BinarySample> out;
    out.reserve(2 * m);
    auto emit = [&](const std::vector<std::size_t>& idx, int label) {
        for (std::size_t i : idx) {
            BinarySample s;
            s.id = q.id + "#" + std::to_string(i);
            s.question_text = q.question_text;
            s.answer_text = q.candidates[i].answer_text;
            s.label = label;
            s.origin_question_id = q.id;
            out.push_back(std::move(s));
        }
    };
    emit(correct_idx, 1);
    emit(incorrect_idx, 0);
    return out;
}

std::vector<BinarySample> convert_all(const std::vector<RawQuestion>& questions,
                                      std::uint64_t balance_seed) {
    std::vector<BinarySample> out;
    std::unordered_set<std::string> seen;
    for (const auto& q : questions) {
        auto samples = convert_to_binary(q, balance_seed);
        for (auto& s : samples) {
            if (!seen.insert(s.id).second)
                throw ParseError("duplicate sample id: " + s.id);
            out.push_back(std::move(s));
        }
    }
    return out;
}

SplitDataset sample_and_split(const std::vector<BinarySample>& samples, std::size_t max_n,
                              double test_fraction, std::uint64_t seed) {
    if (samples.empty()) throw Error("sample_and_split: empty sample list");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw Error("sample_and_split: test_fraction must be in [0, 1)");

    // Group by origin question, first-appearance order.
    std::vector<std::vector<const BinarySample*>> groups;
    std::unordered_map<std::string, std::size_t> group_of;
    for (const auto& s : samples) {
        auto it = group_of.find(s.origin_question_id);
        if (it == group_of.end()) {
            group_of.emplace(s.origin_question_id, groups.size());
            groups.push_back({});
            groups.back().push_back(&s);
        } else {
            groups[it->second].push_back(&s);
        }
    }

    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(hash_mix(seed, fnv1a64("split-order")));
    rng.shuffle(order);

    SplitDataset out;
    out.split_seed = seed;

    const std::size_t total = samples.size();
    const auto target_test =
        static_cast<std::size_t>(test_fraction * static_cast<double>(total) + 0.5);

    std::size_t cursor = 0;
    std::size_t test_count = 0;
    while (cursor < order.size() && test_count < target_test) {
        for (const BinarySample* s : groups[order[cursor]]) out.test_set.push_back(*s);
        test_count += groups[order[cursor]].size();
        ++cursor;
    }

    // Draw whole groups into the training pool while they fit under max_n.
    std::vector<std::size_t> pool;
    std::size_t pool_count = 0;
    for (; cursor < order.size(); ++cursor) {
        std::size_t gsize = groups[order[cursor]].size();
        if (pool_count + gsize > max_n) continue;
        pool.push_back(order[cursor]);
        pool_count += gsize;
    }
    if (pool_count < 2) throw Error("split impossible: fewer than 2 non-test samples");

    // Greedy halving at question granularity: each group goes to the smaller
    // side (ties to train). If group sizes leave the halves more than one
    // sample apart, drop whole groups from the larger side, largest reduction
    // first, until balanced.
    std::vector<std::size_t> train_groups, heldout_groups;
    std::size_t train_count = 0, heldout_count = 0;
    for (std::size_t g : pool) {
        if (train_count <= heldout_count) {
            train_groups.push_back(g);
            train_count += groups[g].size();
        } else {
            heldout_groups.push_back(g);
            heldout_count += groups[g].size();
        }
    }
    while (true) {
        std::size_t diff = train_count > heldout_count ? train_count - heldout_count
                                                       : heldout_count - train_count;
        if (diff <= 1) break;
        auto& larger = train_count > heldout_count ? train_groups : heldout_groups;
        auto& larger_count = train_count > heldout_count ? train_count : heldout_count;
        // Pick the group whose removal minimizes the residual imbalance.
        std::size_t best = larger.size();
        std::size_t best_res = diff;
        for (std::size_t i = 0; i < larger.size(); ++i) {
            std::size_t gsize = groups[larger[i]].size();
            std::size_t res = gsize > diff ? gsize - diff : diff - gsize;
            if (res < best_res) {
                best_res = res;
                best = i;
            }
        }
        if (best == larger.size())
            throw Error("split impossible: question grouping cannot balance halves");
        larger_count -= groups[larger[best]].size();
        larger.erase(larger.begin() + static_cast<std::ptrdiff_t>(best));
    }
    if (train_count == 0 || heldout_count == 0)
        throw Error("split impossible: question grouping cannot balance halves");

    for (std::size_t g : train_groups)
        for (const BinarySample* s : groups[g]) out.train_half.push_back(*s);
    for (std::size_t g : heldout_groups)
        for (const BinarySample* s : groups[g]) out.heldout_half.push_back(*s);
    return out;
}

void save_samples_jsonl(const fs::path& path, const std::vector<BinarySample>& samples) {
    std::ostringstream out;
    for (const auto& s : samples) {
        json j{{"id", s.id},
               {"question", s.question_text},
               {"answer", s.answer_text},
               {"label", s.label},
               {"origin_question_id", s.origin_question_id}};
        out << j.dump() << "\n";
    }
    write_text_file_atomic(path, out.str());
}

std::vector<BinarySample> load_samples_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open samples file: " + path.string());
    std::vector<BinarySample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON");
        BinarySample s;
        try {
            s.id = j.at("id").get<std::string>();
            s.question_text = j.at("question").get<std::string>();
            s.answer_text = j.at("answer").get<std::string>();
            s.label = j.at("label").get<int>();
            s.origin_question_id = j.at("origin_question_id").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (s.label != 0 && s.label != 1)
            throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1");
        out.push_back(std::move(s));
    }
    return out;
}

std::string samples_digest(const std::vector<BinarySample>& samples) {
    Sha256 h;
    for (const auto& s : samples) {
        json j{{"id", s.id},
               {"question", s.question_text},
               {"answer", s.answer_text},
               {"label", s.label},
               {"origin_question_id", s.origin_question_id}};
        h.update(j.dump());
        h.update("\n");
    }
    return h.hex_digest();
}

} // namespace w2sg
