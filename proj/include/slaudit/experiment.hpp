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
#include <optional>
#include <string>
#include <vector>

#include "slaudit/carenet.hpp"
#include "slaudit/corpus.hpp"
#include "slaudit/lexicon.hpp"
#include "slaudit/metrics.hpp"
#include "slaudit/tinyformer.hpp"

namespace slaudit {

struct ExperimentSetting {
    std::string window;   // "full" | "24h"
    std::string variant;  // "original" | "sl_removed" | "central_sl_removed"
    std::string slice;    // "all" or a group name

    std::string id() const { return window + "/" + variant + "/" + slice; }
};

struct ExperimentConfig {
    std::vector<std::string> windows = {"full", "24h"};
    double window_hours = 24.0;
    std::vector<std::string> variants = {"original", "sl_removed"};
    std::vector<std::string> slices = {"all", "white", "black"};
    std::pair<std::string, std::string> gap_groups = {"black", "white"};  // minuend, subtrahend
    Hyperparams hyper;
    std::vector<uint64_t> seeds = {1};
    double test_fraction = 0.2;
    int jobs = 1;
};

struct SettingResult {
    ExperimentSetting setting;
    MetricsReport mean;
    std::vector<MetricsReport> per_seed;
};

struct GapRow {
    std::string window, variant;
    MetricGaps mean;                 // minuend minus subtrahend, percentage points
    std::vector<MetricGaps> per_seed;
};

struct ExperimentMatrix {
    std::vector<ExperimentSetting> settings;  // enumerated before any training
    std::vector<SettingResult> results;
    std::vector<GapRow> gaps;
    std::string config_echo;  // JSON of everything needed to reproduce the run
};

/// Trains one model per (window, variant, seed), evaluates it on the held-out
/// patient-level split, slices the metrics, and aggregates means across
/// seeds. `graph` is required when central_sl_removed is among the variants.
ExperimentMatrix run_experiment_matrix(const Corpus& c, const SlLexicon& lex,
                                       const CareGraph* graph, const ExperimentConfig& cfg);

/// Derives a corpus variant; notes without SL (or without a central author,
/// for the central variant) are byte-identical to the input.
Corpus derive_variant(const Corpus& base, const std::string& variant, const SlLexicon& lex,
                      const CareGraph* graph);

void write_matrix_csv(const ExperimentMatrix& m, const std::string& path);
std::string matrix_to_json(const ExperimentMatrix& m);
void write_gap_dat(const ExperimentMatrix& m, const std::string& path);

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& json_text);

}  // namespace slaudit
