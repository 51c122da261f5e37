#pragma once

#include "w2sg/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace w2sg {

// One source question with its candidate answers. Every dataset format is
// normalized to this shape before conversion.
struct Candidate {
    std::string answer_text;
    bool is_correct = false;
};

struct RawQuestion {
    std::string id;
    std::string question_text;
    std::vector<Candidate> candidates;
    std::map<std::string, std::string> metadata;
};

// Throws ParseError naming the question id if an invariant is violated:
// at least one correct candidate, at least one incorrect candidate, and
// pairwise-distinct answer texts.
void validate_question(const RawQuestion& q);

// One (question, answer) classification point. label 1 means the answer is
// the correct one for its origin question.
struct BinarySample {
    std::string id;
    std::string question_text;
    std::string answer_text;
    int label = 0;
    std::string origin_question_id;

    bool operator==(const BinarySample&) const = default;
};

// Canonical transcript-free rendering of a sample, shared by every model
// input path.
std::string plain_text(const BinarySample& s);

enum class DatasetFormat { multiple_choice, boolean_qa, preference_pair };

DatasetFormat parse_dataset_format(const std::string& name);
std::string dataset_format_name(DatasetFormat f);

// Loads a JSONL file, one record per line. Parse failures name the line
// number; invariant violations name the record id. Order is preserved.
//
// Schemas per format:
//   multiple_choice: {"id", "question", "candidates":[{"text","correct"}], "meta"?}
//   boolean_qa:      {"id", "question", "answer", "label"}  (answer yes/no/true/false)
//   preference_pair: {"id", "question"|"prompt", "chosen", "rejected"}
std::vector<RawQuestion> load_dataset(const fs::path& path, DatasetFormat format);

// Converts one question to balanced binary samples: m = min(#correct,
// #incorrect) per class, the surplus majority-class candidates dropped by
// seeded uniform sampling (per-question stream seeded by hash_mix(balance_seed,
// fnv1a64(q.id))). Output order: all label-1 samples first, then label-0,
// each in original candidate order. Sample ids are "<question id>#<candidate index>".
std::vector<BinarySample> convert_to_binary(const RawQuestion& q, std::uint64_t balance_seed);

// convert_to_binary over a whole dataset, ids checked for uniqueness.
std::vector<BinarySample> convert_all(const std::vector<RawQuestion>& questions,
                                      std::uint64_t balance_seed);

struct SplitDataset {
    std::vector<BinarySample> train_half;
    std::vector<BinarySample> heldout_half;
    std::vector<BinarySample> test_set;
    std::uint64_t split_seed = 0;
};

// Seeded question-grouped split: the test set is held out first, then at most
// max_n of the remaining samples are drawn and halved. All samples sharing an
// origin question land on the same side of every boundary; whole questions are
// dropped when that is the only way to keep | |train|-|heldout| | <= 1.
// Throws Error("split impossible...") when no valid halving exists.
SplitDataset sample_and_split(const std::vector<BinarySample>& samples, std::size_t max_n,
                              double test_fraction, std::uint64_t seed);

// JSONL persistence for converted samples:
// {"id","question","answer","label","origin_question_id"}
void save_samples_jsonl(const fs::path& path, const std::vector<BinarySample>& samples);
std::vector<BinarySample> load_samples_jsonl(const fs::path& path);

// Canonical line-oriented digest of a sample list (order-sensitive).
std::string samples_digest(const std::vector<BinarySample>& samples);

} // namespace w2sg
