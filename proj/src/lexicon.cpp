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

#include "slaudit/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "slaudit/rng.hpp"

namespace slaudit {

namespace {

// Default keyword list (33 entries). Order follows the source list.
const std::vector<std::string> kDefaultEntries = {
    "adherence",     "nonadherent", "compliance",        "unwilling",
    "abuse",         "belligerent", "drug seeking",      "abuser",
    "difficult patient", "refused", "refuses",           "noncompliance",
    "argumentative", "cheat",       "abuses",            "malingering",
    "user",          "secondary gain", "in denial",      "refuse",
    "compliant",     "substance abuse", "nonadherence",  "degenerate",
    "drug problem",  "combative",   "fake",              "been clean",
    "noncompliant",  "addicted",    "narcotics",         "habit",
    "adherent",
};

// Terms dropped from the source list because in the ICU they usually
// describe the patient's condition (cardiac failure, glycemic control)
// rather than the patient.
const std::vector<std::string> kDefaultExcluded = {
    "fail", "fails", "failed", "failure", "control", "controls", "controlled",
};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string to_lower(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string w;
    while (iss >> w) out.push_back(w);
    return out;
}

std::vector<std::string> read_entry_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("lexicon: cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string entry = trim(line);
        if (!entry.empty()) out.push_back(to_lower(entry));
    }
    return out;
}

}  // namespace

void SlLexicon::build_index() {
    by_first_token_.clear();
    for (const auto& entry : entries_) {
        auto words = split_words(entry);
        if (words.empty()) continue;
        by_first_token_[words.front()].push_back(words);
    }
    for (auto& [first, seqs] : by_first_token_) {
        std::stable_sort(seqs.begin(), seqs.end(),
                         [](const auto& a, const auto& b) { return a.size() > b.size(); });
    }
}

SlLexicon SlLexicon::from_entries(std::vector<std::string> entries,
                                  std::vector<std::string> excluded) {
    SlLexicon lex;
    std::set<std::string> excluded_set;
    for (auto& e : excluded) {
        e = to_lower(trim(e));
        excluded_set.insert(e);
    }
    std::set<std::string> seen;
    for (auto& e : entries) {
        e = to_lower(trim(e));
        if (e.empty()) throw std::invalid_argument("lexicon: empty entry");
        if (excluded_set.count(e)) continue;
        if (seen.insert(e).second) lex.entries_.push_back(e);
    }
    if (lex.entries_.empty()) throw std::invalid_argument("lexicon: no entries");
    lex.excluded_.assign(excluded_set.begin(), excluded_set.end());
    lex.build_index();
    return lex;
}

SlLexicon SlLexicon::default_lexicon() {
    return from_entries(kDefaultEntries, kDefaultExcluded);
}

SlLexicon SlLexicon::from_files(const std::string& entries_path,
                                const std::string& excluded_path) {
    std::vector<std::string> excluded;
    if (!excluded_path.empty()) excluded = read_entry_file(excluded_path);
    return from_entries(read_entry_file(entries_path), std::move(excluded));
}

const std::vector<std::vector<std::string>>* SlLexicon::candidates(const std::string& first) const {
    auto it = by_first_token_.find(first);
    return it == by_first_token_.end() ? nullptr : &it->second;
}

std::vector<SlMatch> detect(const TokenSeq& t, const SlLexicon& lex) {
    std::vector<SlMatch> out;
    const auto& toks = t.tokens;
    size_t i = 0;
    while (i < toks.size()) {
        const auto* cands = lex.candidates(toks[i]);
        if (cands) {
            bool matched = false;
            for (const auto& words : *cands) {  // longest first
                if (i + words.size() > toks.size()) continue;
                bool ok = true;
                for (size_t k = 1; k < words.size(); ++k) {
                    if (toks[i + k] != words[k]) {
                        ok = false;
                        break;
                    }
                }
                if (ok) {
                    std::string entry;
                    for (size_t k = 0; k < words.size(); ++k) {
                        if (k) entry.push_back(' ');
                        entry += words[k];
                    }
                    out.push_back({entry, i, i + words.size() - 1});
                    i += words.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        ++i;
    }
    return out;
}

bool is_sl_note(const TokenSeq& t, const SlLexicon& lex) {
    return !detect(t, lex).empty();
}

namespace {

std::vector<bool> sl_mask(const TokenSeq& t, const SlLexicon& lex) {
    std::vector<bool> mask(t.tokens.size(), false);
    for (const auto& m : detect(t, lex))
        for (size_t i = m.start_token; i <= m.end_token; ++i) mask[i] = true;
    return mask;
}

}  // namespace

TokenSeq remove_sl(const TokenSeq& t, const SlLexicon& lex) {
    auto mask = sl_mask(t, lex);
    TokenSeq out;
    out.origin_note_id = t.origin_note_id;
    for (size_t i = 0; i < t.tokens.size(); ++i)
        if (!mask[i]) out.tokens.push_back(t.tokens[i]);
    return out;
}

TokenSeq remove_random_nonsl(const TokenSeq& t, size_t n, uint64_t seed, const SlLexicon& lex) {
    auto mask = sl_mask(t, lex);
    std::vector<size_t> non_sl;
    for (size_t i = 0; i < t.tokens.size(); ++i)
        if (!mask[i]) non_sl.push_back(i);
    if (n > non_sl.size())
        throw std::invalid_argument("remove_random_nonsl: asked to remove " + std::to_string(n) +
                                    " tokens but only " + std::to_string(non_sl.size()) +
                                    " non-SL tokens exist");
    Rng rng(seed);
    auto chosen = rng.sample_indices(non_sl.size(), n);
    std::vector<bool> drop(t.tokens.size(), false);
    for (size_t k : chosen) drop[non_sl[k]] = true;

    TokenSeq out;
    out.origin_note_id = t.origin_note_id;
    for (size_t i = 0; i < t.tokens.size(); ++i)
        if (!drop[i]) out.tokens.push_back(t.tokens[i]);
    return out;
}

double SlStatistics::pct_gap(const std::string& a, const std::string& b) const {
    auto ia = per_group.find(a);
    auto ib = per_group.find(b);
    if (ia == per_group.end() || ib == per_group.end())
        throw std::invalid_argument("sl_statistics: unknown group in pct_gap");
    return ia->second.pct() - ib->second.pct();
}

SlStatistics sl_statistics(const Corpus& c, const SlLexicon& lex) {
    SlStatistics s;
    for (const auto& n : c.notes) {
        auto matches = detect(tokenize(n.text, n.note_id), lex);
        bool sl = !matches.empty();
        s.overall.total_notes++;
        s.per_group[n.group].total_notes++;
        s.per_category[n.category].total_notes++;
        if (sl) {
            s.overall.sl_notes++;
            s.per_group[n.group].sl_notes++;
            s.per_category[n.category].sl_notes++;
        }
        for (const auto& m : matches) s.term_frequency[m.entry]++;
    }
    return s;
}

}  // namespace slaudit
