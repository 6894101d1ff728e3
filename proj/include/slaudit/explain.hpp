/*
 * Copyright 2025 The slaudit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slaudit/corpus.hpp"
#include "slaudit/lexicon.hpp"
#include "slaudit/metrics.hpp"
#include "slaudit/tinyformer.hpp"

namespace slaudit {

/// Black-box probability source. Implementations must be pure: the same
/// token sequence always yields the same probability.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double score(const TokenSeq& t) const = 0;
};

class ModelScorer : public Scorer {
public:
    explicit ModelScorer(const TransformerModel& m) : model_(&m) {}
    double score(const TokenSeq& t) const override { return predict(*model_, t).probability; }

private:
    const TransformerModel* model_;
};

/// Fixed map from joined token strings to probabilities, for replaying
/// published examples through the engines. Unknown inputs are an error.
class ReplayScorer : public Scorer {
public:
    void add(const TokenSeq& t, double probability);
    void add(const std::string& joined, double probability);
    static ReplayScorer from_json_file(const std::string& path);

    double score(const TokenSeq& t) const override;

private:
    std::map<std::string, double> table_;
};

struct TokenImportance {
    std::string token;
    size_t position = 0;
    double masked_probability = 0;
    double delta = 0;  // masked - original
    double drop = 0;   // original - masked
    size_t rank = 0;   // 1 = most important (most negative delta)
};

struct ImportanceReport {
    double original_probability = 0;
    std::vector<TokenImportance> tokens;  // in position order
    /// positions ordered by rank (ranking[0] is the rank-1 position)
    std::vector<size_t> ranking;
};

/// Masks each position in turn with the reserved mask token and rescans the
/// scorer. Rank 1 is the most negative delta; ties break by position.
ImportanceReport leave_one_out(const Scorer& s, const TokenSeq& t);

struct ReductionStep {
    std::string removed_token;
    size_t position = 0;     // position in the sequence at removal time
    double probability = 0;  // scorer on the shrunk sequence
};

struct ReductionTrace {
    double original_probability = 0;
    std::vector<ReductionStep> steps;
    TokenSeq final_tokens;
};

/// Iteratively deletes the least important token (max leave-one-out delta,
/// ties to the rightmost). `budget` bounds the number of deletions; nullopt
/// runs down to a single token.
ReductionTrace input_reduction(const Scorer& s, const TokenSeq& t,
                               std::optional<size_t> budget = std::nullopt);

struct AddSentenceResult {
    double probability = 0;
    double delta = 0;  // vs the unmodified sequence
    TokenSeq perturbed;
};

/// Appends tokenize(sentence) to t and rescores. An empty sentence is the
/// identity (delta 0).
AddSentenceResult add_sentence(const Scorer& s, const TokenSeq& t, const std::string& sentence);

struct ConditionRow {
    std::string condition;
    MetricsReport metrics;
    MetricGaps delta_vs_original;  // percentage points
    bool has_delta = false;
};

struct ComparisonTable {
    std::vector<ConditionRow> rows;
    bool empty_flagged = false;  // no eligible samples
    std::string note;
    long long sample_count = 0;
};

/// Table-6-style comparison restricted to SL-containing samples: original
/// vs SL removal vs the mean of `random_reps` random equal-count non-SL
/// removals. Deterministic for a given seed and invariant to corpus order.
ComparisonTable global_leave_one_out(const Scorer& s, const Corpus& test, const SlLexicon& lex,
                                     int random_reps = 100, uint64_t seed = 0);

/// Table-9-style comparison: each sentence appended to every test sample.
ComparisonTable global_add_sentence(const Scorer& s, const Corpus& test,
                                    const std::vector<std::string>& sentences);

extern const std::vector<std::string> kDefaultAdversarialSentences;

void write_importance_csv(const ImportanceReport& rep, const std::string& path);
void write_reduction_csv(const ReductionTrace& trace, const std::string& path);
void write_comparison_csv(const ComparisonTable& table, const std::string& path);
std::string comparison_to_json(const ComparisonTable& table);

}  // namespace slaudit
