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
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "slaudit/corpus.hpp"
#include "slaudit/lexicon.hpp"

namespace slaudit {

struct ClinicianNode {
    std::string id;
    std::string role;  // "physician" | "nurse" | "other"
    bool wrote_sl = false;
    long long note_count = 0;
    long long strength = 0;  // sum of incident edge weights
};

struct CareEdge {
    std::string a, b;  // a < b
    long long weight = 0;  // number of distinct co-treated patients
};

struct CareGraph {
    std::vector<ClinicianNode> nodes;  // sorted by id
    std::vector<CareEdge> edges;       // sorted by (a, b)

    const ClinicianNode* find(const std::string& id) const;
};

/// Weighted co-treatment graph: an edge joins two clinicians who appear on
/// notes of the same patient; its weight is the number of distinct such
/// patients. A clinician's wrote_sl flag is set when any note listing them
/// contains SL.
CareGraph build_graph(const Corpus& c, const SlLexicon& lex);

struct CentralitySplit {
    double threshold = 0;  // mean node strength
    std::set<std::string> central;      // strength strictly above the mean
    std::set<std::string> non_central;

    bool is_central(const std::string& id) const { return central.count(id) > 0; }
};

CentralitySplit centrality_split(const CareGraph& g);

struct CentralityClassStats {
    long long clinicians = 0;
    long long sl_clinicians = 0;
    long long notes = 0;
    long long sl_notes = 0;

    double pct_sl_clinicians() const {
        return clinicians ? 100.0 * double(sl_clinicians) / double(clinicians) : 0.0;
    }
    double pct_sl_notes() const { return notes ? 100.0 * double(sl_notes) / double(notes) : 0.0; }
};

struct CentralitySlStats {
    CentralityClassStats central, non_central;
    std::map<std::string, std::pair<CentralityClassStats, CentralityClassStats>> per_role;
    long long total_notes = 0;        // incl. notes with no listed clinician
    long long unattributed_notes = 0;
    bool difference_defined = true;   // false when one class is empty

    double sl_clinician_gap() const {
        return central.pct_sl_clinicians() - non_central.pct_sl_clinicians();
    }
    double sl_note_gap() const { return central.pct_sl_notes() - non_central.pct_sl_notes(); }
    /// Class SL notes as a share of all notes (the "scaled" presentation).
    double scaled_pct(const CentralityClassStats& cls) const {
        return total_notes ? 100.0 * double(cls.sl_notes) / double(total_notes) : 0.0;
    }
};

/// Per-centrality-class clinician/note counts and SL percentages, overall
/// and broken down by clinician role. A note belongs to the central class
/// when any listed clinician is central.
CentralitySlStats centrality_sl_stats(const CareGraph& g, const Corpus& c, const SlLexicon& lex);

/// Applies remove_sl only to notes with at least one central clinician;
/// every other note is byte-identical to its input.
Corpus central_sl_removal(const Corpus& c, const CareGraph& g, const SlLexicon& lex);

enum class GraphFormat { gexf, dot };

/// Writes GEXF 1.2 or Graphviz DOT with node attributes (role, wrote_sl,
/// strength, note_count) and weighted edges. When a floor is given, only
/// edges with weight strictly above it are written; nodes always survive.
void export_graph(const CareGraph& g, const std::string& path, GraphFormat format,
                  std::optional<double> edge_weight_floor = std::nullopt);

std::string graph_to_json(const CareGraph& g);

}  // namespace slaudit
