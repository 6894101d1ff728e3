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

#include "slaudit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace slaudit {

using nlohmann::json;

Corpus derive_variant(const Corpus& base, const std::string& variant, const SlLexicon& lex,
                      const CareGraph* graph) {
    if (variant == "original") {
        Corpus out = base;
        out.variant_tag = "original";
        return out;
    }
    if (variant == "sl_removed") {
        Corpus out = base;
        out.variant_tag = "sl_removed";
        for (auto& note : out.notes) {
            TokenSeq toks = tokenize(note.text, note.note_id);
            if (detect(toks, lex).empty()) continue;
            note.text = join_tokens(remove_sl(toks, lex));
        }
        return out;
    }
    if (variant == "central_sl_removed") {
        if (!graph)
            throw std::invalid_argument("derive_variant: central_sl_removed needs a care graph");
        return central_sl_removal(base, *graph, lex);
    }
    throw std::invalid_argument("derive_variant: unknown variant \"" + variant + "\"");
}

namespace {

struct RunKey {
    size_t window_idx, variant_idx, seed_idx;
};

struct RunOutput {
    // Slice name -> metrics for this (window, variant, seed) run.
    std::map<std::string, MetricsReport> by_slice;
};

std::vector<Prediction> evaluate_model(const TransformerModel& model, const Corpus& test) {
    std::vector<Prediction> preds;
    preds.reserve(test.notes.size());
    for (const auto& note : test.notes) {
        TokenSeq toks = tokenize(note.text, note.note_id);
        PredictResult pr = predict(model, toks);
        Prediction p;
        p.note_id = note.note_id;
        p.probability = pr.probability;
        p.at_risk = pr.at_risk;
        p.label = note.label;
        p.group = note.group;
        p.patient_id = note.patient_id;
        preds.push_back(std::move(p));
    }
    return preds;
}

MetricsReport slice_metrics(const std::vector<Prediction>& preds, const Corpus& test,
                            const std::string& slice) {
    ConfusionCounts cc = slice == "all" ? confusion_from(preds) : group_slice(preds, test, slice);
    MetricsReport r = compute_metrics(cc);
    r.slice = slice;
    return r;
}

MetricsReport mean_of(const std::vector<MetricsReport>& rs) {
    MetricsReport m;
    for (const auto& r : rs) {
        m.accuracy += r.accuracy;
        m.precision += r.precision;
        m.recall_macro += r.recall_macro;
        m.recall_positive += r.recall_positive;
        m.f1 += r.f1;
        m.precision_defined = m.precision_defined && r.precision_defined;
        m.f1_defined = m.f1_defined && r.f1_defined;
    }
    double k = double(rs.size());
    if (k > 0) {
        m.accuracy /= k;
        m.precision /= k;
        m.recall_macro /= k;
        m.recall_positive /= k;
        m.f1 /= k;
    }
    return m;
}

}  // namespace

ExperimentMatrix run_experiment_matrix(const Corpus& c, const SlLexicon& lex,
                                       const CareGraph* graph, const ExperimentConfig& cfg) {
    // Validate metadata before any training starts.
    if (c.notes.empty()) throw std::invalid_argument("experiment: empty corpus");
    auto groups = c.groups();
    for (const auto& slice : cfg.slices) {
        if (slice == "all") continue;
        if (!groups.count(slice))
            throw std::invalid_argument("experiment: slice group \"" + slice +
                                        "\" missing from corpus");
    }
    bool wants_central = false;
    for (const auto& v : cfg.variants) wants_central = wants_central || v == "central_sl_removed";
    if (wants_central) {
        if (!graph)
            throw std::invalid_argument("experiment: central_sl_removed variant needs a graph");
        bool any_clinicians = false;
        for (const auto& n : c.notes) any_clinicians = any_clinicians || !n.clinician_ids.empty();
        if (!any_clinicians)
            throw std::invalid_argument("experiment: corpus has no clinician ids");
    }
    if (cfg.seeds.empty()) throw std::invalid_argument("experiment: no seeds given");

    ExperimentMatrix matrix;
    for (const auto& w : cfg.windows)
        for (const auto& v : cfg.variants)
            for (const auto& s : cfg.slices) matrix.settings.push_back({w, v, s});
    matrix.config_echo = experiment_config_to_json(cfg);

    // Prepare all (window, variant) corpora and per-(window, seed) splits up
    // front; training runs then read them immutably.
    std::vector<Corpus> window_corpora;
    for (const auto& w : cfg.windows) {
        Corpus filtered = w == "24h" ? window_filter(c, cfg.window_hours) : c;
        window_corpora.push_back(std::move(filtered));
    }
    // splits[w][s] : note_id -> Split, computed once per window and seed so
    // every variant of a window sees the identical partition.
    std::vector<std::vector<std::map<std::string, Split>>> splits(cfg.windows.size());
    for (size_t w = 0; w < cfg.windows.size(); ++w) {
        for (size_t s = 0; s < cfg.seeds.size(); ++s) {
            Corpus tmp = window_corpora[w];
            assign_split(tmp, cfg.test_fraction, cfg.seeds[s]);
            splits[w].push_back(std::move(tmp.split_assignment));
        }
    }
    std::vector<std::vector<Corpus>> variant_corpora(cfg.windows.size());
    for (size_t w = 0; w < cfg.windows.size(); ++w)
        for (const auto& v : cfg.variants)
            variant_corpora[w].push_back(derive_variant(window_corpora[w], v, lex, graph));

    std::vector<RunKey> runs;
    for (size_t w = 0; w < cfg.windows.size(); ++w)
        for (size_t v = 0; v < cfg.variants.size(); ++v)
            for (size_t s = 0; s < cfg.seeds.size(); ++s) runs.push_back({w, v, s});

    std::vector<RunOutput> outputs(runs.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            const RunKey& key = runs[i];
            Corpus variant = variant_corpora[key.window_idx][key.variant_idx];
            variant.split_assignment = splits[key.window_idx][key.seed_idx];
            Corpus train_set = split_subset(variant, Split::train);
            Corpus test_set = split_subset(variant, Split::test);
            TransformerModel model = train(train_set, cfg.hyper, cfg.seeds[key.seed_idx]);
            auto preds = evaluate_model(model, test_set);
            for (const auto& slice : cfg.slices)
                outputs[i].by_slice[slice] = slice_metrics(preds, test_set, slice);
        }
    };
    int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Deterministic reduce in setting order.
    auto run_index = [&](size_t w, size_t v, size_t s) {
        return (w * cfg.variants.size() + v) * cfg.seeds.size() + s;
    };
    for (const auto& setting : matrix.settings) {
        size_t w = size_t(std::find(cfg.windows.begin(), cfg.windows.end(), setting.window) -
                          cfg.windows.begin());
        size_t v = size_t(std::find(cfg.variants.begin(), cfg.variants.end(), setting.variant) -
                          cfg.variants.begin());
        SettingResult res;
        res.setting = setting;
        for (size_t s = 0; s < cfg.seeds.size(); ++s) {
            auto& by_slice = outputs[run_index(w, v, s)].by_slice;
            res.per_seed.push_back(by_slice.at(setting.slice));
        }
        res.mean = mean_of(res.per_seed);
        res.mean.slice = setting.id();
        matrix.results.push_back(std::move(res));
    }

    bool have_minuend = std::find(cfg.slices.begin(), cfg.slices.end(), cfg.gap_groups.first) !=
                        cfg.slices.end();
    bool have_subtrahend = std::find(cfg.slices.begin(), cfg.slices.end(),
                                     cfg.gap_groups.second) != cfg.slices.end();
    if (have_minuend && have_subtrahend) {
        for (size_t w = 0; w < cfg.windows.size(); ++w) {
            for (size_t v = 0; v < cfg.variants.size(); ++v) {
                GapRow row;
                row.window = cfg.windows[w];
                row.variant = cfg.variants[v];
                for (size_t s = 0; s < cfg.seeds.size(); ++s) {
                    auto& by_slice = outputs[run_index(w, v, s)].by_slice;
                    row.per_seed.push_back(racial_gap(by_slice.at(cfg.gap_groups.second),
                                                      by_slice.at(cfg.gap_groups.first)));
                }
                MetricGaps mean;
                for (const auto& g : row.per_seed) {
                    mean.accuracy += g.accuracy;
                    mean.precision += g.precision;
                    mean.recall_macro += g.recall_macro;
                    mean.recall_positive += g.recall_positive;
                    mean.f1 += g.f1;
                }
                double k = double(row.per_seed.size());
                mean.accuracy /= k;
                mean.precision /= k;
                mean.recall_macro /= k;
                mean.recall_positive /= k;
                mean.f1 /= k;
                row.mean = mean;
                matrix.gaps.push_back(std::move(row));
            }
        }
    }
    return matrix;
}

// ---------------------------------------------------------------------------
// Emission & config

void write_matrix_csv(const ExperimentMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_matrix_csv: cannot open " + path);
    out << "window,variant,slice,accuracy,precision,recall,recall_positive,f1\n";
    char buf[256];
    for (const auto& r : m.results) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      r.setting.window.c_str(), r.setting.variant.c_str(),
                      r.setting.slice.c_str(), r.mean.accuracy, r.mean.precision,
                      r.mean.recall_macro, r.mean.recall_positive, r.mean.f1);
        out << buf;
    }
    for (const auto& g : m.gaps) {
        std::snprintf(buf, sizeof(buf), "%s,%s,gap_pp,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                      g.window.c_str(), g.variant.c_str(), g.mean.accuracy, g.mean.precision,
                      g.mean.recall_macro, g.mean.recall_positive, g.mean.f1);
        out << buf;
    }
}

std::string matrix_to_json(const ExperimentMatrix& m) {
    json j;
    j["config"] = json::parse(m.config_echo);
    j["settings"] = json::array();
    for (const auto& s : m.settings) j["settings"].push_back(s.id());
    j["results"] = json::array();
    auto metrics_json = [](const MetricsReport& r) {
        return json{{"accuracy", r.accuracy},
                    {"precision", r.precision},
                    {"recall", r.recall_macro},
                    {"recall_positive", r.recall_positive},
                    {"f1", r.f1}};
    };
    for (const auto& r : m.results) {
        json e;
        e["window"] = r.setting.window;
        e["variant"] = r.setting.variant;
        e["slice"] = r.setting.slice;
        e["mean"] = metrics_json(r.mean);
        e["per_seed"] = json::array();
        for (const auto& ps : r.per_seed) e["per_seed"].push_back(metrics_json(ps));
        j["results"].push_back(e);
    }
    j["gaps"] = json::array();
    auto gaps_json = [](const MetricGaps& g) {
        return json{{"accuracy_pp", g.accuracy},
                    {"precision_pp", g.precision},
                    {"recall_pp", g.recall_macro},
                    {"recall_positive_pp", g.recall_positive},
                    {"f1_pp", g.f1}};
    };
    for (const auto& g : m.gaps) {
        json e;
        e["window"] = g.window;
        e["variant"] = g.variant;
        e["mean"] = gaps_json(g.mean);
        e["per_seed"] = json::array();
        for (const auto& ps : g.per_seed) e["per_seed"].push_back(gaps_json(ps));
        j["gaps"].push_back(e);
    }
    return j.dump(2);
}

void write_gap_dat(const ExperimentMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_gap_dat: cannot open " + path);
    out << "# window_variant f1_gap_pp recall_positive_gap_pp\n";
    char buf[160];
    for (const auto& g : m.gaps) {
        std::snprintf(buf, sizeof(buf), "%s_%s %.4f %.4f\n", g.window.c_str(), g.variant.c_str(),
                      g.mean.f1, g.mean.recall_positive);
        out << buf;
    }
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["windows"] = cfg.windows;
    j["window_hours"] = cfg.window_hours;
    j["variants"] = cfg.variants;
    j["slices"] = cfg.slices;
    j["gap_groups"] = {cfg.gap_groups.first, cfg.gap_groups.second};
    j["seeds"] = cfg.seeds;
    j["test_fraction"] = cfg.test_fraction;
    j["jobs"] = cfg.jobs;
    j["hyper"] = {{"model_dim", cfg.hyper.model_dim},
                  {"head_count", cfg.hyper.head_count},
                  {"layer_count", cfg.hyper.layer_count},
                  {"ffn_dim", cfg.hyper.ffn_dim},
                  {"max_len", cfg.hyper.max_len},
                  {"vocab_size", cfg.hyper.vocab_size},
                  {"learning_rate", cfg.hyper.learning_rate},
                  {"epochs", cfg.hyper.epochs},
                  {"batch_size", cfg.hyper.batch_size},
                  {"pos_weight_cap", cfg.hyper.pos_weight_cap},
                  {"threshold", cfg.hyper.threshold}};
    return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    ExperimentConfig cfg;
    if (j.contains("windows")) cfg.windows = j.at("windows").get<std::vector<std::string>>();
    cfg.window_hours = j.value("window_hours", cfg.window_hours);
    if (j.contains("variants")) cfg.variants = j.at("variants").get<std::vector<std::string>>();
    if (j.contains("slices")) cfg.slices = j.at("slices").get<std::vector<std::string>>();
    if (j.contains("gap_groups")) {
        auto g = j.at("gap_groups").get<std::vector<std::string>>();
        if (g.size() != 2) throw std::invalid_argument("experiment config: gap_groups needs 2 names");
        cfg.gap_groups = {g[0], g[1]};
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
    cfg.jobs = j.value("jobs", cfg.jobs);
    if (j.contains("hyper")) {
        const auto& h = j.at("hyper");
        cfg.hyper.model_dim = h.value("model_dim", cfg.hyper.model_dim);
        cfg.hyper.head_count = h.value("head_count", cfg.hyper.head_count);
        cfg.hyper.layer_count = h.value("layer_count", cfg.hyper.layer_count);
        cfg.hyper.ffn_dim = h.value("ffn_dim", cfg.hyper.ffn_dim);
        cfg.hyper.max_len = h.value("max_len", cfg.hyper.max_len);
        cfg.hyper.vocab_size = h.value("vocab_size", cfg.hyper.vocab_size);
        cfg.hyper.learning_rate = h.value("learning_rate", cfg.hyper.learning_rate);
        cfg.hyper.epochs = h.value("epochs", cfg.hyper.epochs);
        cfg.hyper.batch_size = h.value("batch_size", cfg.hyper.batch_size);
        cfg.hyper.pos_weight_cap = h.value("pos_weight_cap", cfg.hyper.pos_weight_cap);
        cfg.hyper.threshold = h.value("threshold", cfg.hyper.threshold);
    }
    return cfg;
}

}  // namespace slaudit
