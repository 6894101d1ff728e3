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
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace slaudit {

/// One clinical-note record. `label` is 1 when the patient deceased during
/// the admission; `window_hours` is the offset of the note from ICU admission.
struct Note {
    std::string note_id;
    std::string patient_id;
    std::vector<std::string> clinician_ids;
    std::string category;
    std::string group;
    int label = 0;
    double window_hours = 0.0;
    std::string text;

    bool operator==(const Note&) const = default;
};

enum class Split { train, test };

struct Corpus {
    std::vector<Note> notes;
    std::map<std::string, Split> split_assignment;  // note_id -> split
    std::string variant_tag = "original";

    const Note* find(const std::string& note_id) const;
    std::set<std::string> groups() const;
    std::set<std::string> patients() const;
};

struct TokenSeq {
    std::vector<std::string> tokens;
    std::string origin_note_id;

    bool operator==(const TokenSeq&) const = default;
    size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
};

// Reserved mask token; the tokenizer can never produce it, so it appears in a
// TokenSeq only when an explainability engine inserted it.
inline const std::string kMaskToken = "[mask]";

// Sentinel accepted by window_filter to mean "no horizon".
inline constexpr double kNoHorizon = std::numeric_limits<double>::infinity();

/// Reads a JSONL corpus. One object per line with keys note_id, patient_id,
/// clinician_ids, category, group, label, window_hours, text. Throws with the
/// offending line number on malformed input, and on duplicate note ids.
Corpus ingest(const std::string& path);

/// Writes the canonical JSONL form (fixed key order, LF endings) so that
/// ingest(export_corpus(c)) reproduces c byte-stably.
void export_corpus(const Corpus& c, const std::string& path);

/// Drops notes in excluded categories and notes with fewer than `min_words`
/// whitespace-delimited words. All surviving notes are untouched.
Corpus preprocess(const Corpus& c, size_t min_words = 20,
                  const std::set<std::string>& exclude_categories = {"Discharge summary"});

/// Keeps notes with window_hours <= horizon_hours. kNoHorizon is the identity.
Corpus window_filter(const Corpus& c, double horizon_hours);

/// Lowercases, keeps de-identification placeholders of the form [** ... **]
/// as single atomic tokens, splits on whitespace, and splits every other
/// non-alphanumeric character into its own token.
TokenSeq tokenize(const std::string& text, const std::string& origin_note_id = "");

/// Non-overlapping contiguous chunks of at most max_len tokens.
std::vector<TokenSeq> segment(const TokenSeq& t, size_t max_len);

std::string join_tokens(const TokenSeq& t);

/// Patient-level stratified train/test split: patients are stratified by
/// outcome (any note with label 1) and shuffled with the given seed; all
/// notes of a patient land in the same split.
void assign_split(Corpus& c, double test_fraction, uint64_t seed);

/// Notes belonging to the given side of the split (split must be assigned).
Corpus split_subset(const Corpus& c, Split which);

}  // namespace slaudit
