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

#include "slaudit/corpus.hpp"
#include "slaudit/lexicon.hpp"

namespace slaudit {

/// Controls for the planted structure of a synthetic corpus.
///
/// sl_mode "noise" inserts SL independently of the label. sl_mode "signal"
/// correlates SL presence with the label (rate multiplied by sl_label_lift
/// for positive notes, damped for negatives to roughly preserve the
/// marginal). With central_sl_noise set, the signal-mode correlation applies
/// only to notes of teams without a hub clinician, so hub-team SL stays pure
/// noise while spoke-team SL carries signal.
struct SynthConfig {
    uint64_t seed = 1;
    int note_count = 1000;
    int informative_vocab = 24;  // split evenly between the two classes
    int noise_vocab = 300;
    double label_prevalence = 0.095;
    std::string sl_mode = "noise";  // "noise" | "signal"
    std::map<std::string, double> group_sl_rates = {{"black", 0.2423}, {"white", 0.2237}};
    std::map<std::string, double> group_mix = {{"black", 0.3}, {"white", 0.7}};
    int clinician_count = 60;
    double hub_fraction = 0.07;
    double hub_team_rate = 0.6;   // probability a patient's team includes a hub
    double sl_author_bias = 1.0;  // SL-rate multiplier for hub-team notes
    bool central_sl_noise = false;
    double sl_label_lift = 3.0;
    int sl_tokens_per_note = 2;   // mean SL insertions per SL note
    double token_signal = 0.30;   // per-token probability of a class token
    double class_purity = 0.75;   // P(class token comes from the note's own class)
    int mean_note_length = 30;
    int notes_per_patient = 3;
    double window_hours_max = 72.0;
    double discharge_rate = 0.0;  // "Discharge summary" notes, for preprocessing tests
    double short_note_rate = 0.0; // sub-20-word notes, for preprocessing tests
};

SynthConfig synth_config_from_json_file(const std::string& path);
SynthConfig synth_config_from_json(const std::string& json_text);
std::string synth_config_to_json(const SynthConfig& cfg);

/// Deterministic for a given config; emits a standard Corpus. Throws on
/// inconsistent configs (rates outside [0,1], nonpositive counts).
Corpus generate(const SynthConfig& cfg);

/// Config echo plus expected population statistics (expected SL rate per
/// group, hub count, label prevalence) as a JSON manifest.
std::string describe(const SynthConfig& cfg);

}  // namespace slaudit
