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

#include "slaudit/carenet.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace slaudit {

namespace {

std::string to_lower(std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

// Role inferred from the categories of the notes a clinician appears on:
// the most frequent category wins, physician/nursing categories map to the
// two named roles, everything else is "other".
std::string role_from_category(const std::string& category) {
    std::string c = to_lower(category);
    if (c.find("physician") != std::string::npos || c.find("consult") != std::string::npos)
        return "physician";
    if (c.find("nurs") != std::string::npos) return "nurse";
    return "other";
}

}  // namespace

const ClinicianNode* CareGraph::find(const std::string& id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const ClinicianNode& n, const std::string& key) { return n.id < key; });
    if (it != nodes.end() && it->id == id) return &*it;
    return nullptr;
}

CareGraph build_graph(const Corpus& c, const SlLexicon& lex) {
    struct Acc {
        std::map<std::string, long long> category_counts;
        bool wrote_sl = false;
        long long note_count = 0;
    };
    std::map<std::string, Acc> clinicians;
    std::map<std::string, std::set<std::string>> patient_roster;

    for (const auto& note : c.notes) {
        bool sl = is_sl_note(tokenize(note.text, note.note_id), lex);
        for (const auto& cid : note.clinician_ids) {
            Acc& a = clinicians[cid];
            a.note_count++;
            a.category_counts[note.category]++;
            a.wrote_sl = a.wrote_sl || sl;
            patient_roster[note.patient_id].insert(cid);
        }
    }

    std::map<std::pair<std::string, std::string>, long long> weights;
    for (const auto& [pid, roster] : patient_roster) {
        std::vector<std::string> ids(roster.begin(), roster.end());
        for (size_t i = 0; i < ids.size(); ++i)
            for (size_t j = i + 1; j < ids.size(); ++j) weights[{ids[i], ids[j]}]++;
    }

    CareGraph g;
    std::unordered_map<std::string, size_t> index;
    for (const auto& [cid, acc] : clinicians) {
        ClinicianNode node;
        node.id = cid;
        node.wrote_sl = acc.wrote_sl;
        node.note_count = acc.note_count;
        std::string best_category;
        long long best_count = -1;
        for (const auto& [cat, count] : acc.category_counts) {
            if (count > best_count) {
                best_count = count;
                best_category = cat;
            }
        }
        node.role = role_from_category(best_category);
        index[cid] = g.nodes.size();
        g.nodes.push_back(std::move(node));
    }
    for (const auto& [pair, w] : weights) {
        g.edges.push_back({pair.first, pair.second, w});
        g.nodes[index[pair.first]].strength += w;
        g.nodes[index[pair.second]].strength += w;
    }
    return g;
}

CentralitySplit centrality_split(const CareGraph& g) {
    if (g.nodes.empty()) throw std::invalid_argument("centrality_split: empty graph");
    CentralitySplit split;
    double sum = 0;
    for (const auto& n : g.nodes) sum += double(n.strength);
    split.threshold = sum / double(g.nodes.size());
    for (const auto& n : g.nodes) {
        if (double(n.strength) > split.threshold)
            split.central.insert(n.id);
        else
            split.non_central.insert(n.id);
    }
    return split;
}

CentralitySlStats centrality_sl_stats(const CareGraph& g, const Corpus& c, const SlLexicon& lex) {
    CentralitySplit split = centrality_split(g);
    CentralitySlStats stats;

    auto class_of = [&](bool central) -> CentralityClassStats& {
        return central ? stats.central : stats.non_central;
    };
    for (const auto& n : g.nodes) {
        bool central = split.is_central(n.id);
        auto& cls = class_of(central);
        cls.clinicians++;
        if (n.wrote_sl) cls.sl_clinicians++;
        auto& role_pair = stats.per_role[n.role];
        auto& role_cls = central ? role_pair.first : role_pair.second;
        role_cls.clinicians++;
        if (n.wrote_sl) role_cls.sl_clinicians++;
    }

    for (const auto& note : c.notes) {
        stats.total_notes++;
        if (note.clinician_ids.empty()) {
            stats.unattributed_notes++;
            continue;
        }
        bool central = false;
        for (const auto& cid : note.clinician_ids) central = central || split.is_central(cid);
        bool sl = is_sl_note(tokenize(note.text, note.note_id), lex);
        auto& cls = class_of(central);
        cls.notes++;
        if (sl) cls.sl_notes++;

        // Role attribution for the note: role of its first listed clinician.
        const ClinicianNode* first = g.find(note.clinician_ids.front());
        if (first) {
            auto& role_pair = stats.per_role[first->role];
            auto& role_cls = central ? role_pair.first : role_pair.second;
            role_cls.notes++;
            if (sl) role_cls.sl_notes++;
        }
    }
    stats.difference_defined = stats.central.clinicians > 0 && stats.non_central.clinicians > 0;
    return stats;
}

Corpus central_sl_removal(const Corpus& c, const CareGraph& g, const SlLexicon& lex) {
    CentralitySplit split = centrality_split(g);
    Corpus out = c;
    out.variant_tag = "central_sl_removed";
    for (auto& note : out.notes) {
        bool central = false;
        for (const auto& cid : note.clinician_ids) central = central || split.is_central(cid);
        if (!central) continue;
        TokenSeq toks = tokenize(note.text, note.note_id);
        if (detect(toks, lex).empty()) continue;
        note.text = join_tokens(remove_sl(toks, lex));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

void write_gexf(const CareGraph& g, std::ostream& out, std::optional<double> floor) {
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<gexf xmlns=\"http://www.gexf.net/1.2draft\" version=\"1.2\">\n";
    out << "  <graph defaultedgetype=\"undirected\">\n";
    out << "    <attributes class=\"node\">\n";
    out << "      <attribute id=\"0\" title=\"role\" type=\"string\"/>\n";
    out << "      <attribute id=\"1\" title=\"wrote_sl\" type=\"boolean\"/>\n";
    out << "      <attribute id=\"2\" title=\"strength\" type=\"long\"/>\n";
    out << "      <attribute id=\"3\" title=\"note_count\" type=\"long\"/>\n";
    out << "    </attributes>\n";
    out << "    <nodes>\n";
    for (const auto& n : g.nodes) {
        out << "      <node id=\"" << xml_escape(n.id) << "\" label=\"" << xml_escape(n.id)
            << "\">\n";
        out << "        <attvalues>\n";
        out << "          <attvalue for=\"0\" value=\"" << xml_escape(n.role) << "\"/>\n";
        out << "          <attvalue for=\"1\" value=\"" << (n.wrote_sl ? "true" : "false")
            << "\"/>\n";
        out << "          <attvalue for=\"2\" value=\"" << n.strength << "\"/>\n";
        out << "          <attvalue for=\"3\" value=\"" << n.note_count << "\"/>\n";
        out << "        </attvalues>\n";
        out << "      </node>\n";
    }
    out << "    </nodes>\n";
    out << "    <edges>\n";
    long long id = 0;
    for (const auto& e : g.edges) {
        if (floor && !(double(e.weight) > *floor)) continue;
        out << "      <edge id=\"" << id++ << "\" source=\"" << xml_escape(e.a) << "\" target=\""
            << xml_escape(e.b) << "\" weight=\"" << e.weight << "\"/>\n";
    }
    out << "    </edges>\n";
    out << "  </graph>\n";
    out << "</gexf>\n";
}

void write_dot(const CareGraph& g, std::ostream& out, std::optional<double> floor) {
    out << "graph carenet {\n";
    for (const auto& n : g.nodes) {
        out << "  \"" << dot_escape(n.id) << "\" [role=\"" << dot_escape(n.role)
            << "\", wrote_sl=" << (n.wrote_sl ? "true" : "false") << ", strength=" << n.strength
            << ", note_count=" << n.note_count << "];\n";
    }
    for (const auto& e : g.edges) {
        if (floor && !(double(e.weight) > *floor)) continue;
        out << "  \"" << dot_escape(e.a) << "\" -- \"" << dot_escape(e.b) << "\" [weight="
            << e.weight << "];\n";
    }
    out << "}\n";
}

}  // namespace

void export_graph(const CareGraph& g, const std::string& path, GraphFormat format,
                  std::optional<double> edge_weight_floor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("export_graph: cannot open " + path);
    if (format == GraphFormat::gexf)
        write_gexf(g, out, edge_weight_floor);
    else
        write_dot(g, out, edge_weight_floor);
    if (!out) throw std::runtime_error("export_graph: write failed for " + path);
}

std::string graph_to_json(const CareGraph& g) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : g.nodes)
        j["nodes"].push_back({{"id", n.id},
                              {"role", n.role},
                              {"wrote_sl", n.wrote_sl},
                              {"note_count", n.note_count},
                              {"strength", n.strength}});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges)
        j["edges"].push_back({{"a", e.a}, {"b", e.b}, {"weight", e.weight}});
    return j.dump(2);
}

}  // namespace slaudit
