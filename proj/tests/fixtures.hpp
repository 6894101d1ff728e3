// Replay fixtures for the published leave-one-out / input-reduction /
// add-sentence examples, shared by the unit and acceptance suites.
#pragma once

#include <string>
#include <vector>

#include "slaudit/corpus.hpp"
#include "slaudit/explain.hpp"

namespace fixtures {

inline std::string example_note_text() {
    return "Transferred from outside hospital via [**Location (un) **]. "
           "Pt. apparently fell at home down [**5-4**] steps and had a +loc. "
           "When he aroused he was very combative.";
}

struct LooExpectation {
    size_t position;   // token index in the tokenized note
    double masked_probability;
    double delta_pp;   // percentage points
    size_t rank;
};

inline constexpr double kOriginalProbability = 0.4823;

// The seven final-clause words of the example note, with their published
// masked probabilities and importance ranks.
inline std::vector<LooExpectation> loo_expectations() {
    return {
        {22, 0.4455, -3.68, 2},   // when
        {23, 0.4634, -1.89, 4},   // he
        {24, 0.2719, -21.04, 1},  // aroused
        {25, 0.4616, -2.07, 3},   // he
        {26, 0.5028, 2.05, 6},    // was
        {27, 0.4955, 1.32, 5},    // very
        {28, 0.5976, 11.53, 7},   // combative
    };
}

// Probability assigned to masked positions outside the final clause; larger
// delta than every published one, so those positions rank 8 and later.
inline constexpr double kFillerProbability = 0.6500;

inline slaudit::ReplayScorer leave_one_out_stub() {
    slaudit::ReplayScorer stub;
    slaudit::TokenSeq note = slaudit::tokenize(example_note_text());
    stub.add(note, kOriginalProbability);
    auto expectations = loo_expectations();
    for (size_t i = 0; i < note.tokens.size(); ++i) {
        slaudit::TokenSeq masked = note;
        masked.tokens[i] = slaudit::kMaskToken;
        double p = kFillerProbability;
        for (const auto& e : expectations)
            if (e.position == i) p = e.masked_probability;
        stub.add(masked, p);
    }
    return stub;
}

struct SentenceExpectation {
    std::string sentence;
    double probability;
    double delta_pp;
};

inline std::vector<SentenceExpectation> add_sentence_expectations() {
    return {
        {"Pt is a Caucasian.", 0.4818, -0.05},
        {"Pt is an African American.", 0.3236, -15.87},
    };
}

inline slaudit::ReplayScorer add_sentence_stub() {
    slaudit::ReplayScorer stub;
    slaudit::TokenSeq note = slaudit::tokenize(example_note_text());
    stub.add(note, kOriginalProbability);
    for (const auto& e : add_sentence_expectations()) {
        slaudit::TokenSeq appended = note;
        slaudit::TokenSeq extra = slaudit::tokenize(e.sentence);
        appended.tokens.insert(appended.tokens.end(), extra.tokens.begin(), extra.tokens.end());
        stub.add(appended, e.probability);
    }
    return stub;
}

// Input-reduction fixture on the final clause: the masked probabilities make
// "combative" the least important token, and deleting it moves the score
// from 48.23% to 59.91%.
inline slaudit::TokenSeq reduction_clause() {
    return slaudit::tokenize("When he aroused he was very combative");
}

inline slaudit::ReplayScorer reduction_stub() {
    slaudit::ReplayScorer stub;
    slaudit::TokenSeq clause = reduction_clause();
    stub.add(clause, kOriginalProbability);
    const double masked[] = {0.4455, 0.4634, 0.2719, 0.4616, 0.5028, 0.4955, 0.5976};
    for (size_t i = 0; i < clause.tokens.size(); ++i) {
        slaudit::TokenSeq m = clause;
        m.tokens[i] = slaudit::kMaskToken;
        stub.add(m, masked[i]);
    }
    slaudit::TokenSeq without_combative = clause;
    without_combative.tokens.pop_back();
    stub.add(without_combative, 0.5991);
    return stub;
}

}  // namespace fixtures
