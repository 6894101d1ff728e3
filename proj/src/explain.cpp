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

#include "slaudit/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "slaudit/rng.hpp"

namespace slaudit {

const std::vector<std::string> kDefaultAdversarialSentences = {
    "Pt is a Caucasian.",
    "Pt is an African American.",
    "Pt has a history of drug abuse.",
    "Pt is a Caucasian and has a history of drug abuse.",
    "Pt is an African American and has a history of drug abuse.",
};

void ReplayScorer::add(const TokenSeq& t, double probability) {
    table_[join_tokens(t)] = probability;
}

void ReplayScorer::add(const std::string& joined, double probability) {
    table_[joined] = probability;
}

ReplayScorer ReplayScorer::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("replay scorer: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ReplayScorer s;
    for (auto& [key, value] : j.items()) s.table_[key] = value.get<double>();
    return s;
}

double ReplayScorer::score(const TokenSeq& t) const {
    auto it = table_.find(join_tokens(t));
    if (it == table_.end())
        throw std::runtime_error("replay scorer: no entry for \"" + join_tokens(t) + "\"");
    return it->second;
}

ImportanceReport leave_one_out(const Scorer& s, const TokenSeq& t) {
    if (t.tokens.empty()) throw std::invalid_argument("leave_one_out: empty token sequence");

    ImportanceReport rep;
    rep.original_probability = s.score(t);
    rep.tokens.reserve(t.tokens.size());
    for (size_t i = 0; i < t.tokens.size(); ++i) {
        TokenSeq masked = t;
        masked.tokens[i] = kMaskToken;
        double p;
        try {
            p = s.score(masked);
        } catch (const std::exception& e) {
            throw std::runtime_error("leave_one_out: scorer failed at position " +
                                     std::to_string(i) + " (token \"" + t.tokens[i] +
                                     "\"): " + e.what());
        }
        TokenImportance ti;
        ti.token = t.tokens[i];
        ti.position = i;
        ti.masked_probability = p;
        ti.delta = p - rep.original_probability;
        ti.drop = rep.original_probability - p;
        rep.tokens.push_back(ti);
    }

    rep.ranking.resize(t.tokens.size());
    std::iota(rep.ranking.begin(), rep.ranking.end(), size_t{0});
    std::sort(rep.ranking.begin(), rep.ranking.end(), [&](size_t a, size_t b) {
        if (rep.tokens[a].delta != rep.tokens[b].delta)
            return rep.tokens[a].delta < rep.tokens[b].delta;
        return a < b;
    });
    for (size_t r = 0; r < rep.ranking.size(); ++r) rep.tokens[rep.ranking[r]].rank = r + 1;
    return rep;
}

ReductionTrace input_reduction(const Scorer& s, const TokenSeq& t, std::optional<size_t> budget) {
    if (t.tokens.size() < 2 && budget.value_or(1) > 0)
        throw std::invalid_argument("input_reduction: need at least 2 tokens");

    ReductionTrace trace;
    trace.original_probability = s.score(t);
    TokenSeq cur = t;
    size_t steps_left = budget.value_or(std::numeric_limits<size_t>::max());
    while (steps_left > 0 && cur.tokens.size() > 1) {
        ImportanceReport rep = leave_one_out(s, cur);
        // least important = max delta; ties -> rightmost
        size_t best = 0;
        for (size_t i = 1; i < rep.tokens.size(); ++i)
            if (rep.tokens[i].delta >= rep.tokens[best].delta) best = i;

        ReductionStep step;
        step.removed_token = cur.tokens[best];
        step.position = best;
        cur.tokens.erase(cur.tokens.begin() + static_cast<long>(best));
        step.probability = s.score(cur);
        trace.steps.push_back(std::move(step));
        --steps_left;
    }
    trace.final_tokens = cur;
    return trace;
}

AddSentenceResult add_sentence(const Scorer& s, const TokenSeq& t, const std::string& sentence) {
    AddSentenceResult res;
    res.perturbed = t;
    TokenSeq extra = tokenize(sentence);
    res.perturbed.tokens.insert(res.perturbed.tokens.end(), extra.tokens.begin(),
                                extra.tokens.end());
    res.probability = s.score(res.perturbed);
    res.delta = res.probability - s.score(t);
    return res;
}

namespace {

ConfusionCounts score_condition(const Scorer& s, const std::vector<const Note*>& notes,
                                const std::vector<TokenSeq>& seqs) {
    ConfusionCounts cc;
    for (size_t i = 0; i < notes.size(); ++i) {
        bool at_risk = exceeds_threshold(s.score(seqs[i]));
        if (notes[i]->label == 1)
            (at_risk ? cc.tp : cc.fn)++;
        else
            (at_risk ? cc.fp : cc.tn)++;
    }
    return cc;
}

MetricsReport mean_metrics(const std::vector<MetricsReport>& reports) {
    MetricsReport m;
    if (reports.empty()) return m;
    for (const auto& r : reports) {
        m.accuracy += r.accuracy;
        m.precision += r.precision;
        m.recall_macro += r.recall_macro;
        m.recall_positive += r.recall_positive;
        m.f1 += r.f1;
        m.precision_defined = m.precision_defined && r.precision_defined;
        m.f1_defined = m.f1_defined && r.f1_defined;
    }
    double k = double(reports.size());
    m.accuracy /= k;
    m.precision /= k;
    m.recall_macro /= k;
    m.recall_positive /= k;
    m.f1 /= k;
    return m;
}

}  // namespace

ComparisonTable global_leave_one_out(const Scorer& s, const Corpus& test, const SlLexicon& lex,
                                     int random_reps, uint64_t seed) {
    if (test.notes.empty()) throw std::invalid_argument("global_leave_one_out: empty test corpus");

    // Ordered by note_id so the result does not depend on corpus order.
    std::vector<const Note*> notes;
    for (const auto& n : test.notes) notes.push_back(&n);
    std::sort(notes.begin(), notes.end(),
              [](const Note* a, const Note* b) { return a->note_id < b->note_id; });

    std::vector<const Note*> sl_notes;
    std::vector<TokenSeq> originals;
    std::vector<size_t> sl_token_counts;
    for (const Note* n : notes) {
        TokenSeq toks = tokenize(n->text, n->note_id);
        auto matches = detect(toks, lex);
        if (matches.empty()) continue;
        size_t count = 0;
        for (const auto& m : matches) count += m.end_token - m.start_token + 1;
        sl_notes.push_back(n);
        originals.push_back(std::move(toks));
        sl_token_counts.push_back(count);
    }

    ComparisonTable table;
    table.sample_count = static_cast<long long>(sl_notes.size());
    if (sl_notes.empty()) {
        table.empty_flagged = true;
        table.note = "no SL-containing samples in the test corpus";
        return table;
    }

    ConditionRow original_row;
    original_row.condition = "original";
    original_row.metrics = compute_metrics(score_condition(s, sl_notes, originals));
    table.rows.push_back(original_row);

    std::vector<TokenSeq> removed;
    removed.reserve(originals.size());
    for (const auto& t : originals) removed.push_back(remove_sl(t, lex));
    ConditionRow removed_row;
    removed_row.condition = "sl_removed";
    removed_row.metrics = compute_metrics(score_condition(s, sl_notes, removed));
    removed_row.delta_vs_original = racial_gap(original_row.metrics, removed_row.metrics);
    removed_row.has_delta = true;
    table.rows.push_back(removed_row);

    std::vector<MetricsReport> rep_metrics;
    for (int rep = 0; rep < random_reps; ++rep) {
        std::vector<TokenSeq> randomized;
        randomized.reserve(originals.size());
        for (size_t i = 0; i < originals.size(); ++i) {
            // Per-note stream derived from content, not position, so the
            // table is invariant to test-set ordering.
            uint64_t note_seed =
                splitmix64(seed ^ splitmix64(uint64_t(rep) + 1) ^ hash_str(sl_notes[i]->note_id));
            randomized.push_back(
                remove_random_nonsl(originals[i], sl_token_counts[i], note_seed, lex));
        }
        rep_metrics.push_back(compute_metrics(score_condition(s, sl_notes, randomized)));
    }
    if (random_reps > 0) {
        ConditionRow random_row;
        random_row.condition = "random_removal_mean";
        random_row.metrics = mean_metrics(rep_metrics);
        random_row.delta_vs_original = racial_gap(original_row.metrics, random_row.metrics);
        random_row.has_delta = true;
        table.rows.push_back(random_row);
    }
    return table;
}

ComparisonTable global_add_sentence(const Scorer& s, const Corpus& test,
                                    const std::vector<std::string>& sentences) {
    if (test.notes.empty()) throw std::invalid_argument("global_add_sentence: empty test corpus");

    std::vector<const Note*> notes;
    for (const auto& n : test.notes) notes.push_back(&n);
    std::sort(notes.begin(), notes.end(),
              [](const Note* a, const Note* b) { return a->note_id < b->note_id; });

    std::vector<TokenSeq> originals;
    for (const Note* n : notes) originals.push_back(tokenize(n->text, n->note_id));

    ComparisonTable table;
    table.sample_count = static_cast<long long>(notes.size());

    ConditionRow original_row;
    original_row.condition = "original";
    original_row.metrics = compute_metrics(score_condition(s, notes, originals));
    table.rows.push_back(original_row);

    for (const auto& sentence : sentences) {
        TokenSeq extra = tokenize(sentence);
        std::vector<TokenSeq> perturbed = originals;
        for (auto& t : perturbed)
            t.tokens.insert(t.tokens.end(), extra.tokens.begin(), extra.tokens.end());
        ConditionRow row;
        row.condition = sentence;
        row.metrics = compute_metrics(score_condition(s, notes, perturbed));
        row.delta_vs_original = racial_gap(original_row.metrics, row.metrics);
        row.has_delta = true;
        table.rows.push_back(row);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace

void write_importance_csv(const ImportanceReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_importance_csv: cannot open " + path);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.6f", rep.original_probability);
    out << "# original_probability," << buf << "\n";
    out << "position,token,masked_probability,delta,rank\n";
    for (const auto& t : rep.tokens) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.6f,%.6f,%zu\n", t.position,
                      csv_escape(t.token).c_str(), t.masked_probability, t.delta, t.rank);
        out << buf;
    }
}

void write_reduction_csv(const ReductionTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_reduction_csv: cannot open " + path);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.6f", trace.original_probability);
    out << "# original_probability," << buf << "\n";
    out << "step,removed_token,position,probability\n";
    for (size_t i = 0; i < trace.steps.size(); ++i) {
        const auto& st = trace.steps[i];
        std::snprintf(buf, sizeof(buf), "%zu,%s,%zu,%.6f\n", i + 1,
                      csv_escape(st.removed_token).c_str(), st.position, st.probability);
        out << buf;
    }
}

void write_comparison_csv(const ComparisonTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_comparison_csv: cannot open " + path);
    if (table.empty_flagged) {
        out << "# empty," << table.note << "\n";
        return;
    }
    out << "condition,samples,accuracy,precision,recall,recall_positive,f1,"
           "d_recall_pp,d_recall_positive_pp,d_f1_pp\n";
    char buf[320];
    for (const auto& row : table.rows) {
        if (row.has_delta) {
            std::snprintf(buf, sizeof(buf), "%s,%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f\n",
                          csv_escape(row.condition).c_str(), table.sample_count,
                          row.metrics.accuracy, row.metrics.precision, row.metrics.recall_macro,
                          row.metrics.recall_positive, row.metrics.f1,
                          row.delta_vs_original.recall_macro,
                          row.delta_vs_original.recall_positive, row.delta_vs_original.f1);
        } else {
            std::snprintf(buf, sizeof(buf), "%s,%lld,%.6f,%.6f,%.6f,%.6f,%.6f,,,\n",
                          csv_escape(row.condition).c_str(), table.sample_count,
                          row.metrics.accuracy, row.metrics.precision, row.metrics.recall_macro,
                          row.metrics.recall_positive, row.metrics.f1);
        }
        out << buf;
    }
}

std::string comparison_to_json(const ComparisonTable& table) {
    nlohmann::json j;
    j["empty"] = table.empty_flagged;
    if (table.empty_flagged) {
        j["note"] = table.note;
        return j.dump(2);
    }
    j["samples"] = table.sample_count;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json r;
        r["condition"] = row.condition;
        r["accuracy"] = row.metrics.accuracy;
        r["precision"] = row.metrics.precision;
        r["recall"] = row.metrics.recall_macro;
        r["recall_positive"] = row.metrics.recall_positive;
        r["f1"] = row.metrics.f1;
        if (row.has_delta) {
            r["delta_pp"] = {{"recall", row.delta_vs_original.recall_macro},
                             {"recall_positive", row.delta_vs_original.recall_positive},
                             {"f1", row.delta_vs_original.f1}};
        }
        j["rows"].push_back(r);
    }
    return j.dump(2);
}

}  // namespace slaudit
