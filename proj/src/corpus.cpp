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

#include "slaudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "slaudit/rng.hpp"

namespace slaudit {

using ordered_json = nlohmann::ordered_json;

const Note* Corpus::find(const std::string& note_id) const {
    for (const auto& n : notes)
        if (n.note_id == note_id) return &n;
    return nullptr;
}

std::set<std::string> Corpus::groups() const {
    std::set<std::string> out;
    for (const auto& n : notes) out.insert(n.group);
    return out;
}

std::set<std::string> Corpus::patients() const {
    std::set<std::string> out;
    for (const auto& n : notes) out.insert(n.patient_id);
    return out;
}

namespace {

[[noreturn]] void line_error(size_t line_no, const std::string& what) {
    throw std::runtime_error("corpus ingest: line " + std::to_string(line_no) + ": " + what);
}

Note parse_note(const ordered_json& j, size_t line_no) {
    Note n;
    try {
        if (!j.is_object()) line_error(line_no, "not a JSON object");
        n.note_id = j.at("note_id").get<std::string>();
        n.patient_id = j.at("patient_id").get<std::string>();
        for (const auto& c : j.at("clinician_ids"))
            n.clinician_ids.push_back(c.get<std::string>());
        n.category = j.at("category").get<std::string>();
        n.group = j.at("group").get<std::string>();
        if (!j.at("label").is_number_integer())
            line_error(line_no, "label must be the integer 0 or 1");
        n.label = j.at("label").get<int>();
        n.window_hours = j.at("window_hours").get<double>();
        n.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        line_error(line_no, e.what());
    }
    if (n.label != 0 && n.label != 1) line_error(line_no, "label must be 0 or 1");
    if (n.window_hours < 0) line_error(line_no, "window_hours must be nonnegative");
    if (n.text.empty()) line_error(line_no, "text is empty");
    return n;
}

}  // namespace

Corpus ingest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("corpus ingest: cannot open " + path);

    Corpus c;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded()) line_error(line_no, "malformed JSON");
        Note n = parse_note(j, line_no);
        if (!seen_ids.insert(n.note_id).second)
            line_error(line_no, "duplicate note_id \"" + n.note_id + "\"");
        c.notes.push_back(std::move(n));
    }
    return c;
}

void export_corpus(const Corpus& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("corpus export: cannot open " + path);
    for (const auto& n : c.notes) {
        ordered_json j;
        j["note_id"] = n.note_id;
        j["patient_id"] = n.patient_id;
        j["clinician_ids"] = n.clinician_ids;
        j["category"] = n.category;
        j["group"] = n.group;
        j["label"] = n.label;
        j["window_hours"] = n.window_hours;
        j["text"] = n.text;
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("corpus export: write failed for " + path);
}

namespace {

size_t whitespace_word_count(const std::string& text) {
    size_t count = 0;
    bool in_word = false;
    for (char ch : text) {
        bool ws = std::isspace(static_cast<unsigned char>(ch));
        if (!ws && !in_word) ++count;
        in_word = !ws;
    }
    return count;
}

}  // namespace

Corpus preprocess(const Corpus& c, size_t min_words,
                  const std::set<std::string>& exclude_categories) {
    Corpus out;
    out.variant_tag = c.variant_tag;
    for (const auto& n : c.notes) {
        if (exclude_categories.count(n.category)) continue;
        if (whitespace_word_count(n.text) < min_words) continue;
        out.notes.push_back(n);
        auto it = c.split_assignment.find(n.note_id);
        if (it != c.split_assignment.end()) out.split_assignment[n.note_id] = it->second;
    }
    return out;
}

Corpus window_filter(const Corpus& c, double horizon_hours) {
    if (!(horizon_hours > 0))
        throw std::invalid_argument("window_filter: horizon_hours must be > 0");
    Corpus out;
    out.variant_tag = c.variant_tag;
    for (const auto& n : c.notes) {
        if (n.window_hours <= horizon_hours) {
            out.notes.push_back(n);
            auto it = c.split_assignment.find(n.note_id);
            if (it != c.split_assignment.end()) out.split_assignment[n.note_id] = it->second;
        }
    }
    return out;
}

TokenSeq tokenize(const std::string& text, const std::string& origin_note_id) {
    TokenSeq out;
    out.origin_note_id = origin_note_id;

    auto lower = [](std::string s) {
        for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        return s;
    };

    const size_t n = text.size();
    size_t i = 0;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.tokens.push_back(cur);
            cur.clear();
        }
    };
    while (i < n) {
        unsigned char ch = static_cast<unsigned char>(text[i]);
        // De-identification placeholder: from "[**" to the matching "**]",
        // kept verbatim (lowercased) as one token, interior spaces included.
        if (ch == '[' && i + 2 < n && text[i + 1] == '*' && text[i + 2] == '*') {
            size_t close = text.find("**]", i + 3);
            if (close != std::string::npos) {
                flush();
                out.tokens.push_back(lower(text.substr(i, close + 3 - i)));
                i = close + 3;
                continue;
            }
        }
        if (std::isspace(ch)) {
            flush();
            ++i;
            continue;
        }
        if (std::isalnum(ch) || ch >= 0x80) {
            // Non-ASCII bytes are treated as word characters so UTF-8
            // sequences stay inside one token.
            cur.push_back(static_cast<char>(std::tolower(ch)));
            ++i;
            continue;
        }
        // Punctuation becomes its own single-character token.
        flush();
        out.tokens.push_back(std::string(1, static_cast<char>(ch)));
        ++i;
    }
    flush();
    return out;
}

std::vector<TokenSeq> segment(const TokenSeq& t, size_t max_len) {
    if (max_len < 1) throw std::invalid_argument("segment: max_len must be >= 1");
    std::vector<TokenSeq> out;
    for (size_t start = 0; start < t.tokens.size(); start += max_len) {
        TokenSeq chunk;
        chunk.origin_note_id = t.origin_note_id;
        size_t end = std::min(start + max_len, t.tokens.size());
        chunk.tokens.assign(t.tokens.begin() + static_cast<long>(start),
                            t.tokens.begin() + static_cast<long>(end));
        out.push_back(std::move(chunk));
    }
    return out;
}

std::string join_tokens(const TokenSeq& t) {
    std::string s;
    for (size_t i = 0; i < t.tokens.size(); ++i) {
        if (i) s.push_back(' ');
        s += t.tokens[i];
    }
    return s;
}

void assign_split(Corpus& c, double test_fraction, uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction > 1.0)
        throw std::invalid_argument("assign_split: test_fraction out of [0,1]");

    // Patient outcome = any note with label 1.
    std::map<std::string, int> outcome;
    for (const auto& n : c.notes) {
        int& o = outcome[n.patient_id];
        o = std::max(o, n.label);
    }
    std::vector<std::string> positives, negatives;
    for (const auto& [pid, o] : outcome) (o ? positives : negatives).push_back(pid);

    std::map<std::string, Split> patient_split;
    Rng rng(seed);
    auto assign_stratum = [&](std::vector<std::string>& patients) {
        rng.shuffle(patients);
        size_t test_count = static_cast<size_t>(test_fraction * static_cast<double>(patients.size()) + 0.5);
        for (size_t i = 0; i < patients.size(); ++i)
            patient_split[patients[i]] = i < test_count ? Split::test : Split::train;
    };
    assign_stratum(positives);
    assign_stratum(negatives);

    c.split_assignment.clear();
    for (const auto& n : c.notes) c.split_assignment[n.note_id] = patient_split.at(n.patient_id);
}

Corpus split_subset(const Corpus& c, Split which) {
    Corpus out;
    out.variant_tag = c.variant_tag;
    for (const auto& n : c.notes) {
        auto it = c.split_assignment.find(n.note_id);
        if (it == c.split_assignment.end())
            throw std::runtime_error("split_subset: note \"" + n.note_id + "\" has no split assignment");
        if (it->second == which) {
            out.notes.push_back(n);
            out.split_assignment[n.note_id] = which;
        }
    }
    return out;
}

}  // namespace slaudit
