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

#include <string>
#include <vector>

#include "slaudit/corpus.hpp"

namespace slaudit {

struct ConfusionCounts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;

    long long total() const { return tp + fp + fn + tn; }
    ConfusionCounts operator+(const ConfusionCounts& o) const {
        return {tp + o.tp, fp + o.fp, fn + o.fn, tn + o.tn};
    }
    bool operator==(const ConfusionCounts&) const = default;
};

/// recall_macro averages the per-class recalls; recall_positive is recall on
/// the positive (mortality) class; f1 is the harmonic mean of precision and
/// recall_positive. Degenerate denominators yield 0 with the corresponding
/// *_defined flag cleared.
struct MetricsReport {
    double accuracy = 0;
    double precision = 0;
    double recall_macro = 0;
    double recall_positive = 0;
    double f1 = 0;
    bool precision_defined = true;
    bool f1_defined = true;
    std::string slice;  // descriptor, e.g. "24h/sl_removed/black"
};

MetricsReport compute_metrics(const ConfusionCounts& cc);

struct Prediction {
    std::string note_id;
    double probability = 0;
    bool at_risk = false;
    int label = 0;
    std::string group;
    std::string patient_id;
};

ConfusionCounts confusion_from(const std::vector<Prediction>& preds);

/// Counts restricted to notes of the given group. Throws (listing the known
/// groups) when the group does not occur in the corpus.
ConfusionCounts group_slice(const std::vector<Prediction>& preds, const Corpus& c,
                            const std::string& group);

/// Aggregates note-level predictions to one prediction per patient: max of
/// note probabilities, label = any positive note.
std::vector<Prediction> aggregate_by_patient(const std::vector<Prediction>& preds);

struct MetricGaps {
    double accuracy = 0;
    double precision = 0;
    double recall_macro = 0;
    double recall_positive = 0;
    double f1 = 0;
};

/// Per-metric signed difference, b minus a, in percentage points.
MetricGaps racial_gap(const MetricsReport& a, const MetricsReport& b);

}  // namespace slaudit
