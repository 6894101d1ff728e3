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

#include "slaudit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "slaudit/rng.hpp"

namespace slaudit {

namespace {

using nlohmann::json;

void validate(const SynthConfig& cfg) {
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (cfg.note_count < 1) throw std::invalid_argument("synthgen: note_count must be >= 1");
    if (cfg.informative_vocab < 2)
        throw std::invalid_argument("synthgen: informative_vocab must be >= 2");
    if (cfg.noise_vocab < 1) throw std::invalid_argument("synthgen: noise_vocab must be >= 1");
    if (!in01(cfg.label_prevalence))
        throw std::invalid_argument("synthgen: label_prevalence must be in [0,1]");
    if (cfg.sl_mode != "noise" && cfg.sl_mode != "signal")
        throw std::invalid_argument("synthgen: sl_mode must be \"noise\" or \"signal\"");
    if (cfg.group_mix.empty()) throw std::invalid_argument("synthgen: group_mix is empty");
    double mix_sum = 0;
    for (const auto& [g, share] : cfg.group_mix) {
        if (share < 0) throw std::invalid_argument("synthgen: negative group share for " + g);
        if (!cfg.group_sl_rates.count(g))
            throw std::invalid_argument("synthgen: group \"" + g + "\" missing from group_sl_rates");
        mix_sum += share;
    }
    if (mix_sum <= 0) throw std::invalid_argument("synthgen: group_mix sums to zero");
    for (const auto& [g, rate] : cfg.group_sl_rates)
        if (!in01(rate))
            throw std::invalid_argument("synthgen: SL rate for \"" + g + "\" outside [0,1]");
    if (cfg.clinician_count < 3)
        throw std::invalid_argument("synthgen: clinician_count must be >= 3");
    if (!in01(cfg.hub_fraction)) throw std::invalid_argument("synthgen: hub_fraction outside [0,1]");
    if (!in01(cfg.hub_team_rate)) throw std::invalid_argument("synthgen: hub_team_rate outside [0,1]");
    if (cfg.sl_author_bias < 0) throw std::invalid_argument("synthgen: sl_author_bias negative");
    if (cfg.sl_label_lift < 0) throw std::invalid_argument("synthgen: sl_label_lift negative");
    if (cfg.sl_tokens_per_note < 1)
        throw std::invalid_argument("synthgen: sl_tokens_per_note must be >= 1");
    if (!in01(cfg.token_signal)) throw std::invalid_argument("synthgen: token_signal outside [0,1]");
    if (!in01(cfg.class_purity)) throw std::invalid_argument("synthgen: class_purity outside [0,1]");
    if (cfg.mean_note_length < 1)
        throw std::invalid_argument("synthgen: mean_note_length must be >= 1");
    if (cfg.notes_per_patient < 1)
        throw std::invalid_argument("synthgen: notes_per_patient must be >= 1");
    if (cfg.window_hours_max <= 0)
        throw std::invalid_argument("synthgen: window_hours_max must be > 0");
    if (!in01(cfg.discharge_rate)) throw std::invalid_argument("synthgen: discharge_rate outside [0,1]");
    if (!in01(cfg.short_note_rate))
        throw std::invalid_argument("synthgen: short_note_rate outside [0,1]");
}

int hub_count(const SynthConfig& cfg) {
    int h = static_cast<int>(std::lround(cfg.hub_fraction * cfg.clinician_count));
    return std::max(1, std::min(h, cfg.clinician_count - 2));
}

// Probability that a given note carries SL, as a function of group base
// rate, team composition and label. Shared by generate() and describe().
double note_sl_probability(const SynthConfig& cfg, double group_rate, bool hub_team, int label) {
    double damp = 1.0;
    if (cfg.sl_label_lift > 0 && cfg.label_prevalence < 1.0)
        damp = std::max(0.0, (1.0 - cfg.label_prevalence * cfg.sl_label_lift) /
                                 (1.0 - cfg.label_prevalence));

    double p = group_rate;
    bool label_correlated = cfg.sl_mode == "signal" && !(cfg.central_sl_noise && hub_team);
    if (label_correlated) p *= label ? cfg.sl_label_lift : damp;
    if (hub_team) p *= cfg.sl_author_bias;
    return std::min(1.0, std::max(0.0, p));
}

struct Patient {
    std::string id;
    std::string group;
    int label = 0;
    std::vector<std::string> team;  // sorted
    bool hub_team = false;
    std::string lead_role;
};

}  // namespace

Corpus generate(const SynthConfig& cfg) {
    validate(cfg);
    Rng rng(cfg.seed);
    SlLexicon lex = SlLexicon::default_lexicon();
    const auto& entries = lex.entries();

    const int H = hub_count(cfg);
    const int C = cfg.clinician_count;
    std::vector<std::string> clinician_ids(C);
    std::vector<std::string> roles(C);
    for (int i = 0; i < C; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "c%04d", i + 1);
        clinician_ids[i] = buf;
        double u = rng.uniform01();
        roles[i] = u < 0.35 ? "physician" : (u < 0.85 ? "nurse" : "other");
    }
    // hubs are ids c0001..c000H; spokes are the rest
    const int S = C - H;

    std::vector<std::string> groups;
    std::vector<double> group_cum;
    {
        double mix_sum = 0;
        for (const auto& [g, share] : cfg.group_mix) mix_sum += share;
        double acc = 0;
        for (const auto& [g, share] : cfg.group_mix) {
            acc += share / mix_sum;
            groups.push_back(g);
            group_cum.push_back(acc);
        }
    }
    auto draw_group = [&]() {
        double u = rng.uniform01();
        for (size_t i = 0; i < groups.size(); ++i)
            if (u <= group_cum[i]) return groups[i];
        return groups.back();
    };

    const int P = std::max(1, cfg.note_count / cfg.notes_per_patient);
    std::vector<Patient> patients(static_cast<size_t>(P));
    for (int p = 0; p < P; ++p) {
        Patient& pat = patients[static_cast<size_t>(p)];
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%05d", p + 1);
        pat.id = buf;
        pat.group = draw_group();
        pat.label = rng.bernoulli(cfg.label_prevalence) ? 1 : 0;

        int lead;
        pat.hub_team = rng.bernoulli(cfg.hub_team_rate);
        if (pat.hub_team)
            lead = static_cast<int>(rng.bounded(static_cast<uint64_t>(H)));
        else
            lead = H + static_cast<int>(rng.bounded(static_cast<uint64_t>(S)));
        pat.lead_role = roles[static_cast<size_t>(lead)];

        int m1 = H + static_cast<int>(rng.bounded(static_cast<uint64_t>(S)));
        while (m1 == lead) m1 = H + static_cast<int>(rng.bounded(static_cast<uint64_t>(S)));
        int m2 = H + static_cast<int>(rng.bounded(static_cast<uint64_t>(S)));
        while (m2 == lead || m2 == m1)
            m2 = H + static_cast<int>(rng.bounded(static_cast<uint64_t>(S)));

        pat.team = {clinician_ids[static_cast<size_t>(lead)],
                    clinician_ids[static_cast<size_t>(m1)],
                    clinician_ids[static_cast<size_t>(m2)]};
        std::sort(pat.team.begin(), pat.team.end());
    }

    const int half_vocab = cfg.informative_vocab / 2;
    auto class_token = [&](int label) {
        char buf[24];
        bool own = rng.bernoulli(cfg.class_purity);
        int cls = own ? label : 1 - label;
        std::snprintf(buf, sizeof(buf), "%s%02d", cls ? "risk" : "stab",
                      static_cast<int>(rng.bounded(static_cast<uint64_t>(std::max(1, half_vocab)))));
        return std::string(buf);
    };
    auto noise_token = [&]() {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "fill%03d",
                      static_cast<int>(rng.bounded(static_cast<uint64_t>(cfg.noise_vocab))));
        return std::string(buf);
    };

    Corpus corpus;
    corpus.variant_tag = "original";
    corpus.notes.reserve(static_cast<size_t>(cfg.note_count));
    for (int i = 0; i < cfg.note_count; ++i) {
        const Patient& pat = patients[static_cast<size_t>(i % P)];
        Note note;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "n%06d", i + 1);
        note.note_id = buf;
        note.patient_id = pat.id;
        note.clinician_ids = pat.team;
        note.group = pat.group;
        note.label = pat.label;
        note.window_hours = rng.uniform01() * cfg.window_hours_max;

        bool discharge = rng.bernoulli(cfg.discharge_rate);
        bool short_note = !discharge && rng.bernoulli(cfg.short_note_rate);
        if (discharge) {
            note.category = "Discharge summary";
        } else if (pat.lead_role == "physician") {
            note.category = "Physician";
        } else if (pat.lead_role == "nurse") {
            note.category = rng.bernoulli(0.5) ? "Nursing" : "Nursing/other";
        } else {
            note.category = rng.bernoulli(0.5) ? "Radiology" : "General";
        }

        int length = short_note ? 5 + static_cast<int>(rng.bounded(14))
                                : std::max(21, rng.poisson(double(cfg.mean_note_length)));

        // One slot per word; SL insertion later replaces a noise slot with a
        // (possibly multi-token) lexicon entry.
        std::vector<std::string> slots(static_cast<size_t>(length));
        std::vector<size_t> noise_slots;
        for (int k = 0; k < length; ++k) {
            if (rng.bernoulli(cfg.token_signal)) {
                slots[static_cast<size_t>(k)] = class_token(pat.label);
            } else {
                slots[static_cast<size_t>(k)] = noise_token();
                noise_slots.push_back(static_cast<size_t>(k));
            }
        }

        if (!short_note) {
            double rate = cfg.group_sl_rates.at(pat.group);
            double p_sl = note_sl_probability(cfg, rate, pat.hub_team, pat.label);
            if (rng.bernoulli(p_sl) && !noise_slots.empty()) {
                int insertions = 1 + rng.poisson(double(cfg.sl_tokens_per_note - 1));
                for (int k = 0; k < insertions && !noise_slots.empty(); ++k) {
                    size_t pick = static_cast<size_t>(rng.bounded(noise_slots.size()));
                    size_t slot = noise_slots[pick];
                    noise_slots.erase(noise_slots.begin() + static_cast<long>(pick));
                    slots[slot] = entries[static_cast<size_t>(rng.bounded(entries.size()))];
                }
            }
        }

        std::string text;
        for (size_t k = 0; k < slots.size(); ++k) {
            if (k) text.push_back(' ');
            text += slots[k];
        }
        note.text = text;
        corpus.notes.push_back(std::move(note));
    }
    return corpus;
}

namespace {

json config_to_json_obj(const SynthConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["note_count"] = c.note_count;
    j["informative_vocab"] = c.informative_vocab;
    j["noise_vocab"] = c.noise_vocab;
    j["label_prevalence"] = c.label_prevalence;
    j["sl_mode"] = c.sl_mode;
    j["group_sl_rates"] = c.group_sl_rates;
    j["group_mix"] = c.group_mix;
    j["clinician_count"] = c.clinician_count;
    j["hub_fraction"] = c.hub_fraction;
    j["hub_team_rate"] = c.hub_team_rate;
    j["sl_author_bias"] = c.sl_author_bias;
    j["central_sl_noise"] = c.central_sl_noise;
    j["sl_label_lift"] = c.sl_label_lift;
    j["sl_tokens_per_note"] = c.sl_tokens_per_note;
    j["token_signal"] = c.token_signal;
    j["class_purity"] = c.class_purity;
    j["mean_note_length"] = c.mean_note_length;
    j["notes_per_patient"] = c.notes_per_patient;
    j["window_hours_max"] = c.window_hours_max;
    j["discharge_rate"] = c.discharge_rate;
    j["short_note_rate"] = c.short_note_rate;
    return j;
}

SynthConfig config_from_json_obj(const json& j) {
    SynthConfig c;
    c.seed = j.value("seed", c.seed);
    c.note_count = j.value("note_count", c.note_count);
    c.informative_vocab = j.value("informative_vocab", c.informative_vocab);
    c.noise_vocab = j.value("noise_vocab", c.noise_vocab);
    c.label_prevalence = j.value("label_prevalence", c.label_prevalence);
    c.sl_mode = j.value("sl_mode", c.sl_mode);
    if (j.contains("group_sl_rates"))
        c.group_sl_rates = j.at("group_sl_rates").get<std::map<std::string, double>>();
    if (j.contains("group_mix"))
        c.group_mix = j.at("group_mix").get<std::map<std::string, double>>();
    c.clinician_count = j.value("clinician_count", c.clinician_count);
    c.hub_fraction = j.value("hub_fraction", c.hub_fraction);
    c.hub_team_rate = j.value("hub_team_rate", c.hub_team_rate);
    c.sl_author_bias = j.value("sl_author_bias", c.sl_author_bias);
    c.central_sl_noise = j.value("central_sl_noise", c.central_sl_noise);
    c.sl_label_lift = j.value("sl_label_lift", c.sl_label_lift);
    c.sl_tokens_per_note = j.value("sl_tokens_per_note", c.sl_tokens_per_note);
    c.token_signal = j.value("token_signal", c.token_signal);
    c.class_purity = j.value("class_purity", c.class_purity);
    c.mean_note_length = j.value("mean_note_length", c.mean_note_length);
    c.notes_per_patient = j.value("notes_per_patient", c.notes_per_patient);
    c.window_hours_max = j.value("window_hours_max", c.window_hours_max);
    c.discharge_rate = j.value("discharge_rate", c.discharge_rate);
    c.short_note_rate = j.value("short_note_rate", c.short_note_rate);
    return c;
}

}  // namespace

SynthConfig synth_config_from_json(const std::string& json_text) {
    return config_from_json_obj(json::parse(json_text));
}

SynthConfig synth_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("synthgen: cannot open config " + path);
    return config_from_json_obj(json::parse(in));
}

std::string synth_config_to_json(const SynthConfig& cfg) {
    return config_to_json_obj(cfg).dump(2);
}

std::string describe(const SynthConfig& cfg) {
    validate(cfg);
    json j;
    j["config"] = config_to_json_obj(cfg);

    const double q = cfg.hub_team_rate;
    const double prev = cfg.label_prevalence;
    json per_group;
    double overall = 0, mix_sum = 0;
    for (const auto& [g, share] : cfg.group_mix) mix_sum += share;
    for (const auto& [g, share] : cfg.group_mix) {
        double r = cfg.group_sl_rates.at(g);
        double e = 0;
        for (int hub = 0; hub <= 1; ++hub)
            for (int label = 0; label <= 1; ++label)
                e += (hub ? q : 1 - q) * (label ? prev : 1 - prev) *
                     note_sl_probability(cfg, r, hub != 0, label);
        per_group[g] = e;
        overall += share / mix_sum * e;
    }
    j["expected"] = {
        {"label_prevalence", prev},
        {"patients", std::max(1, cfg.note_count / cfg.notes_per_patient)},
        {"hub_clinicians", hub_count(cfg)},
        {"sl_note_rate_per_group", per_group},
        {"overall_sl_note_rate", overall},
        {"sl_label_independent", cfg.sl_mode == "noise"},
    };
    return j.dump(2);
}

}  // namespace slaudit
