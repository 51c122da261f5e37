#include "w2sg/synthetic.hpp"

#include <array>
#include <numeric>
#include <sstream>

namespace w2sg {

std::array<std::array<int, 4>, 4> synthetic_rule_table(std::uint64_t hidden_rule_seed) {
    Rng rng(hash_mix(hidden_rule_seed, fnv1a64("rule-table")));
    std::array<int, 4> p1{0, 1, 2, 3};
    std::vector<int> tmp(p1.begin(), p1.end());
    rng.shuffle(tmp);
    std::copy(tmp.begin(), tmp.end(), p1.begin());

    // Second permutation disjoint from the first, so every row and column of
    // the table sums to exactly 2.
    std::array<int, 4> p2{};
    while (true) {
        rng.shuffle(tmp);
        bool disjoint = true;
        for (int i = 0; i < 4; ++i)
            if (tmp[static_cast<std::size_t>(i)] == p1[static_cast<std::size_t>(i)]) {
                disjoint = false;
                break;
            }
        if (disjoint) {
            std::copy(tmp.begin(), tmp.end(), p2.begin());
            break;
        }
    }

    std::array<std::array<int, 4>, 4> table{};
    for (int x = 0; x < 4; ++x) {
        table[static_cast<std::size_t>(x)][static_cast<std::size_t>(p1[static_cast<std::size_t>(x)])] = 1;
        table[static_cast<std::size_t>(x)][static_cast<std::size_t>(p2[static_cast<std::size_t>(x)])] = 1;
    }
    return table;
}

namespace {

// Uniform draw of a (x, y) cell whose table value equals `label`.
std::pair<int, int> draw_cell(const std::array<std::array<int, 4>, 4>& table, int label, Rng& rng) {
    while (true) {
        int x = static_cast<int>(rng.below(4));
        int y = static_cast<int>(rng.below(4));
        if (table[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] == label)
            return {x, y};
    }
}

std::string hint_token(int label) { return label == 1 ? "hintpos" : "hintneg"; }

} // namespace

std::vector<RawQuestion> generate_synthetic_task(const SyntheticTaskSpec& spec) {
    spec.validate();
    const auto table = synthetic_rule_table(spec.hidden_rule_seed);

    std::vector<RawQuestion> out;
    out.reserve(static_cast<std::size_t>(spec.num_questions));
    for (int q = 0; q < spec.num_questions; ++q) {
        Rng rng(subseed(spec.hidden_rule_seed, "question", static_cast<std::uint64_t>(q)));

        RawQuestion question;
        question.id = "syn-q" + std::to_string(q);
        {
            std::ostringstream text;
            text << "question q" << q << " about topic" << rng.below(50) << " regarding aspect a"
                 << rng.below(30);
            question.question_text = text.str();
        }
        question.metadata["source"] = "synthetic";

        // First candidate correct, second incorrect; the two always differ in
        // their (kx, ky) cell since the rule table values differ, so answer
        // texts stay pairwise distinct without a per-candidate tag (which
        // would leak the label).
        for (int c = 0; c < 2; ++c) {
            const int label = c == 0 ? 1 : 0;
            auto [x, y] = draw_cell(table, label, rng);
            const bool hint_true = rng.uniform01() >= spec.surface_noise;
            const std::string hint = hint_true ? hint_token(label) : hint_token(rng.coin() ? 1 : 0);
            std::ostringstream text;
            text << "option states z" << rng.below(40) << " with key kx" << x << " link ky" << y
                 << " mark cue " << hint << " end";
            question.candidates.push_back({text.str(), label == 1});
        }
        out.push_back(std::move(question));
    }
    return out;
}

} // namespace w2sg
