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

#include "slaudit/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace slaudit {

MetricsReport compute_metrics(const ConfusionCounts& cc) {
    if (cc.total() <= 0) throw std::invalid_argument("compute_metrics: all-zero counts");
    if (cc.tp < 0 || cc.fp < 0 || cc.fn < 0 || cc.tn < 0)
        throw std::invalid_argument("compute_metrics: negative counts");

    MetricsReport r;
    r.accuracy = double(cc.tp + cc.tn) / double(cc.total());

    if (cc.tp + cc.fp > 0) {
        r.precision = double(cc.tp) / double(cc.tp + cc.fp);
    } else {
        r.precision = 0.0;
        r.precision_defined = false;
    }

    double recall_pos = (cc.tp + cc.fn > 0) ? double(cc.tp) / double(cc.tp + cc.fn) : 0.0;
    double recall_neg = (cc.tn + cc.fp > 0) ? double(cc.tn) / double(cc.tn + cc.fp) : 0.0;
    r.recall_positive = recall_pos;
    if (cc.tp + cc.fn > 0 && cc.tn + cc.fp > 0)
        r.recall_macro = 0.5 * (recall_pos + recall_neg);
    else
        r.recall_macro = (cc.tp + cc.fn > 0) ? recall_pos : recall_neg;

    if (r.precision + recall_pos > 0) {
        r.f1 = 2.0 * r.precision * recall_pos / (r.precision + recall_pos);
    } else {
        r.f1 = 0.0;
        r.f1_defined = false;
    }
    return r;
}

ConfusionCounts confusion_from(const std::vector<Prediction>& preds) {
    ConfusionCounts cc;
    for (const auto& p : preds) {
        if (p.label == 1)
            (p.at_risk ? cc.tp : cc.fn)++;
        else
            (p.at_risk ? cc.fp : cc.tn)++;
    }
    return cc;
}

ConfusionCounts group_slice(const std::vector<Prediction>& preds, const Corpus& c,
                            const std::string& group) {
    auto known = c.groups();
    if (!known.count(group)) {
        std::string msg = "group_slice: unknown group \"" + group + "\"; known groups:";
        for (const auto& g : known) msg += " \"" + g + "\"";
        throw std::invalid_argument(msg);
    }
    std::unordered_map<std::string, const Note*> by_id;
    for (const auto& n : c.notes) by_id[n.note_id] = &n;

    ConfusionCounts cc;
    for (const auto& p : preds) {
        auto it = by_id.find(p.note_id);
        if (it == by_id.end())
            throw std::invalid_argument("group_slice: prediction for unknown note \"" + p.note_id + "\"");
        if (it->second->group != group) continue;
        if (p.label == 1)
            (p.at_risk ? cc.tp : cc.fn)++;
        else
            (p.at_risk ? cc.fp : cc.tn)++;
    }
    return cc;
}

std::vector<Prediction> aggregate_by_patient(const std::vector<Prediction>& preds) {
    std::map<std::string, Prediction> by_patient;
    for (const auto& p : preds) {
        auto [it, inserted] = by_patient.try_emplace(p.patient_id, p);
        if (inserted) {
            it->second.note_id = p.patient_id;
        } else {
            it->second.probability = std::max(it->second.probability, p.probability);
            it->second.at_risk = it->second.at_risk || p.at_risk;
            it->second.label = std::max(it->second.label, p.label);
        }
    }
    std::vector<Prediction> out;
    out.reserve(by_patient.size());
    for (auto& [pid, p] : by_patient) out.push_back(std::move(p));
    return out;
}

MetricGaps racial_gap(const MetricsReport& a, const MetricsReport& b) {
    MetricGaps g;
    g.accuracy = 100.0 * (b.accuracy - a.accuracy);
    g.precision = 100.0 * (b.precision - a.precision);
    g.recall_macro = 100.0 * (b.recall_macro - a.recall_macro);
    g.recall_positive = 100.0 * (b.recall_positive - a.recall_positive);
    g.f1 = 100.0 * (b.f1 - a.f1);
    return g;
}

}  // namespace slaudit
