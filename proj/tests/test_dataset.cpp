#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "w2sg/dataset.hpp"

#include <fstream>
#include <map>
#include <set>

using namespace w2sg;

namespace {

fs::path scratch_dir() {
    fs::path dir = fs::temp_directory_path() / "w2sg-test-dataset";
    fs::create_directories(dir);
    return dir;
}

fs::path write_lines(const std::string& name, const std::vector<std::string>& lines) {
    fs::path p = scratch_dir() / name;
    std::ofstream out(p, std::ios::trunc);
    for (const auto& l : lines) out << l << "\n";
    return p;
}

RawQuestion mc_question(const std::string& id, int n_correct, int n_incorrect) {
    RawQuestion q;
    q.id = id;
    q.question_text = "question " + id;
    for (int i = 0; i < n_correct; ++i)
        q.candidates.push_back({"good-" + std::to_string(i), true});
    for (int i = 0; i < n_incorrect; ++i)
        q.candidates.push_back({"bad-" + std::to_string(i), false});
    return q;
}

} // namespace

TEST_CASE("well-formed multiple-choice file loads in order") {
    auto p = write_lines(
        "mc.jsonl",
        {R"({"id":"q1","question":"one?","candidates":[{"text":"a","correct":true},{"text":"b","correct":false}]})",
         R"({"id":"q2","question":"two?","candidates":[{"text":"c","correct":false},{"text":"d","correct":true}],"meta":{"topic":"x"}})",
         R"({"id":"q3","question":"three?","candidates":[{"text":"e","correct":true},{"text":"f","correct":false}]})"});
    auto qs = load_dataset(p, DatasetFormat::multiple_choice);
    REQUIRE(qs.size() == 3);
    CHECK(qs[0].id == "q1");
    CHECK(qs[1].id == "q2");
    CHECK(qs[2].id == "q3");
    CHECK(qs[1].metadata.at("topic") == "x");
}

TEST_CASE("all-correct candidates is an invariant violation naming the record") {
    auto p = write_lines(
        "allcorrect.jsonl",
        {R"({"id":"qq","question":"?","candidates":[{"text":"a","correct":true},{"text":"b","correct":true}]})"});
    try {
        load_dataset(p, DatasetFormat::multiple_choice);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("no incorrect candidate") != std::string::npos);
        CHECK(std::string(e.what()).find("qq") != std::string::npos);
    }
}

TEST_CASE("parse failure names the line number") {
    auto p = write_lines("badline.jsonl",
                         {R"({"id":"q1","question":"?","candidates":[{"text":"a","correct":true},{"text":"b","correct":false}]})",
                          "this is not json"});
    try {
        load_dataset(p, DatasetFormat::multiple_choice);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("boolean record expands to a yes/no candidate pair") {
    auto p = write_lines("bool.jsonl",
                         {R"({"id":"b1","question":"is water wet?","answer":"yes","label":true})"});
    auto qs = load_dataset(p, DatasetFormat::boolean_qa);
    REQUIRE(qs.size() == 1);
    REQUIRE(qs[0].candidates.size() == 2);
    CHECK(qs[0].candidates[0].answer_text == "yes");
    CHECK(qs[0].candidates[0].is_correct);
    CHECK(qs[0].candidates[1].answer_text == "no");
    CHECK_FALSE(qs[0].candidates[1].is_correct);
}

TEST_CASE("preference pair maps chosen/rejected to labels") {
    auto p = write_lines(
        "pref.jsonl",
        {R"({"id":"p1","question":"prompt text","chosen":"good reply","rejected":"bad reply"})"});
    auto qs = load_dataset(p, DatasetFormat::preference_pair);
    REQUIRE(qs.size() == 1);
    CHECK(qs[0].candidates[0].answer_text == "good reply");
    CHECK(qs[0].candidates[0].is_correct);
    CHECK(qs[0].candidates[1].answer_text == "bad reply");
    CHECK_FALSE(qs[0].candidates[1].is_correct);
}

TEST_CASE("already balanced question converts without sampling") {
    RawQuestion q;
    q.id = "q";
    q.question_text = "Q";
    q.candidates = {{"A", true}, {"B", false}};
    auto s = convert_to_binary(q, 1234);
    REQUIRE(s.size() == 2);
    CHECK(s[0].answer_text == "A");
    CHECK(s[0].label == 1);
    CHECK(s[1].answer_text == "B");
    CHECK(s[1].label == 0);
    CHECK(s[0].origin_question_id == "q");
}

TEST_CASE("seeded majority downsample keeps the frozen pick") {
    RawQuestion q;
    q.id = "q1";
    q.question_text = "Q";
    q.candidates = {{"A", true}, {"B", false}, {"C", false}, {"D", false}};
    auto s = convert_to_binary(q, 7);
    REQUIRE(s.size() == 2);
    CHECK(s[0].answer_text == "A");
    CHECK(s[0].label == 1);
    // Frozen output of the seeded sampler at seed 7.
    CHECK(s[1].answer_text == "B");
    CHECK(s[1].label == 0);

    CHECK(convert_to_binary(q, 7) == std::vector<BinarySample>(s));
}

TEST_CASE("conversion balances every question and the pooled dataset") {
    std::vector<RawQuestion> qs;
    for (int i = 0; i < 50; ++i) qs.push_back(mc_question("q" + std::to_string(i), 1 + i % 3, 1 + (i * 7) % 4));
    auto all = convert_all(qs, 99);
    std::map<std::string, std::pair<int, int>> per_q;
    for (const auto& s : all) {
        if (s.label == 1) per_q[s.origin_question_id].first++;
        else per_q[s.origin_question_id].second++;
    }
    int pos = 0, neg = 0;
    for (auto& [id, counts] : per_q) {
        CHECK(counts.first == counts.second);
        pos += counts.first;
        neg += counts.second;
    }
    CHECK(pos == neg);

    std::set<std::string> ids;
    for (const auto& s : all) CHECK(ids.insert(s.id).second);
}

namespace {

std::vector<BinarySample> pooled_samples(int num_questions) {
    std::vector<RawQuestion> qs;
    qs.reserve(static_cast<std::size_t>(num_questions));
    for (int i = 0; i < num_questions; ++i) qs.push_back(mc_question("q" + std::to_string(i), 1, 1));
    return convert_all(qs, 5);
}

} // namespace

TEST_CASE("split caps at 20k and halves evenly") {
    auto samples = pooled_samples(15000); // 30k samples
    auto split = sample_and_split(samples, 20000, 0.0, 11);
    CHECK(split.train_half.size() == 10000);
    CHECK(split.heldout_half.size() == 10000);
    CHECK(split.test_set.empty());
}

TEST_CASE("split below the cap halves what it has") {
    auto samples = pooled_samples(2500); // 5k samples
    auto split = sample_and_split(samples, 20000, 0.0, 11);
    CHECK(split.train_half.size() == 2500);
    CHECK(split.heldout_half.size() == 2500);
}

TEST_CASE("split is deterministic") {
    auto samples = pooled_samples(300);
    auto a = sample_and_split(samples, 400, 0.25, 77);
    auto b = sample_and_split(samples, 400, 0.25, 77);
    CHECK(a.train_half == b.train_half);
    CHECK(a.heldout_half == b.heldout_half);
    CHECK(a.test_set == b.test_set);
    auto c = sample_and_split(samples, 400, 0.25, 78);
    CHECK(c.train_half != a.train_half);
}

TEST_CASE("no origin question crosses a split boundary") {
    auto samples = pooled_samples(501); // odd question count exercises the parity repair
    auto split = sample_and_split(samples, 20000, 0.2, 3);

    auto sides = {&split.train_half, &split.heldout_half, &split.test_set};
    std::map<std::string, int> side_of;
    int side_idx = 0;
    for (const auto* side : sides) {
        for (const auto& s : *side) {
            auto it = side_of.find(s.origin_question_id);
            if (it == side_of.end()) side_of[s.origin_question_id] = side_idx;
            else CHECK(it->second == side_idx);
        }
        ++side_idx;
    }
    std::size_t diff = split.train_half.size() > split.heldout_half.size()
                           ? split.train_half.size() - split.heldout_half.size()
                           : split.heldout_half.size() - split.train_half.size();
    CHECK(diff <= 1);
    // Questions stay whole: every question contributes its full pair or nothing.
    std::map<std::string, int> counts;
    for (const auto* side : sides)
        for (const auto& s : *side) counts[s.origin_question_id]++;
    for (auto& [id, n] : counts) CHECK(n == 2);
}

TEST_CASE("split with too few non-test samples fails") {
    auto samples = pooled_samples(1); // one question, 2 samples, same group
    CHECK_THROWS_WITH_AS(sample_and_split(samples, 20000, 0.0, 1),
                         doctest::Contains("split impossible"), Error);
    std::vector<BinarySample> one = {samples[0]};
    CHECK_THROWS_WITH_AS(sample_and_split(one, 20000, 0.0, 1),
                         doctest::Contains("split impossible"), Error);
}

TEST_CASE("samples jsonl round trip and digest stability") {
    auto samples = pooled_samples(20);
    fs::path p = scratch_dir() / "samples.jsonl";
    save_samples_jsonl(p, samples);
    auto loaded = load_samples_jsonl(p);
    CHECK(loaded == samples);
    CHECK(samples_digest(loaded) == samples_digest(samples));
    CHECK(samples_digest(loaded).size() == 64);
}
