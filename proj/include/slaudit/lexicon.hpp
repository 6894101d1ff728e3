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

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "slaudit/corpus.hpp"

namespace slaudit {

/// A whole-token match of a lexicon entry; end_token is inclusive.
struct SlMatch {
    std::string entry;
    size_t start_token = 0;
    size_t end_token = 0;

    bool operator==(const SlMatch&) const = default;
};

/// Ordered list of lowercase stigmatizing-language words and phrases, plus
/// the documented list of terms excluded from the source list. Phrases are
/// space-separated token sequences.
class SlLexicon {
public:
    static SlLexicon default_lexicon();
    static SlLexicon from_entries(std::vector<std::string> entries,
                                  std::vector<std::string> excluded = {});
    /// One entry per line, '#' comments allowed. The optional excluded file
    /// has the same format.
    static SlLexicon from_files(const std::string& entries_path,
                                const std::string& excluded_path = "");

    const std::vector<std::string>& entries() const { return entries_; }
    const std::vector<std::string>& excluded() const { return excluded_; }

    /// Entry token sequences starting with `first`, longest first.
    const std::vector<std::vector<std::string>>* candidates(const std::string& first) const;

private:
    std::vector<std::string> entries_;
    std::vector<std::string> excluded_;
    std::unordered_map<std::string, std::vector<std::vector<std::string>>> by_first_token_;

    void build_index();
};

/// All non-overlapping matches; whole-token matching over the sequence,
/// longest match wins at each position, deterministic left-to-right scan.
std::vector<SlMatch> detect(const TokenSeq& t, const SlLexicon& lex);

bool is_sl_note(const TokenSeq& t, const SlLexicon& lex);

/// Deletes every token inside any match span; surviving tokens keep order.
TokenSeq remove_sl(const TokenSeq& t, const SlLexicon& lex);

/// Deletes exactly n uniformly chosen non-SL tokens, deterministically for a
/// given seed. Throws if fewer than n non-SL tokens exist.
TokenSeq remove_random_nonsl(const TokenSeq& t, size_t n, uint64_t seed, const SlLexicon& lex);

struct SlGroupCount {
    long long sl_notes = 0;
    long long total_notes = 0;
    double pct() const { return total_notes ? 100.0 * double(sl_notes) / double(total_notes) : 0.0; }
};

/// Per-group, per-category and per-entry SL statistics for a corpus.
struct SlStatistics {
    SlGroupCount overall;
    std::map<std::string, SlGroupCount> per_group;
    std::map<std::string, SlGroupCount> per_category;
    std::map<std::string, long long> term_frequency;  // entry -> match count

    /// Percentage-point difference in SL-note rate, group a minus group b.
    double pct_gap(const std::string& a, const std::string& b) const;
};

SlStatistics sl_statistics(const Corpus& c, const SlLexicon& lex);

}  // namespace slaudit
