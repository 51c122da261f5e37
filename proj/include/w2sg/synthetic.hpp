#pragma once

#include "w2sg/backend.hpp"
#include "w2sg/common.hpp"
#include "w2sg/dataset.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace w2sg {

// Desk-scale synthetic classification task.
//
// Each question carries two candidate answers (one correct, one incorrect)
// whose ground truth is a deterministic function of a planted hidden token
// pair (kx<i>, ky<j>): label = table[i][j] for a seeded 4x4 binary table with
// balanced rows and columns. The pair is only informative jointly, so a linear
// model gains nothing from it while a hidden-layer model can learn the rule.
// Surface text additionally carries a noisy hint token that is truthful with
// probability 1 - surface_noise (random otherwise), which bounds
// transcript-free linear accuracy near 1 - surface_noise/2. The mock debater
// leaks ground-truth markers into transcripts on top of this.
struct SyntheticTaskSpec {
    int num_questions = 2000;
    std::uint64_t hidden_rule_seed = 1;
    double surface_noise = 0.8;
    MockDebaterConfig mock_debater;

    void validate() const {
        if (num_questions < 1) throw ConfigError("SyntheticTaskSpec: num_questions must be >= 1");
        if (surface_noise < 0.0 || surface_noise > 1.0)
            throw ConfigError("SyntheticTaskSpec: surface_noise must be in [0, 1]");
        mock_debater.validate();
    }
};

// The planted rule table: 4x4 0/1 matrix, every row and column summing to 2
// (superposition of two disjoint permutation matrices), so single hidden
// tokens carry no label information.
std::array<std::array<int, 4>, 4> synthetic_rule_table(std::uint64_t hidden_rule_seed);

std::vector<RawQuestion> generate_synthetic_task(const SyntheticTaskSpec& spec);

} // namespace w2sg
