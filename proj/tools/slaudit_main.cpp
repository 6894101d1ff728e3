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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slaudit/carenet.hpp"
#include "slaudit/corpus.hpp"
#include "slaudit/experiment.hpp"
#include "slaudit/explain.hpp"
#include "slaudit/lexicon.hpp"
#include "slaudit/metrics.hpp"
#include "slaudit/synthgen.hpp"
#include "slaudit/tinyformer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slaudit;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
}

// Every command leaves the exact configuration that produced its output
// next to that output.
void write_config_echo(const std::string& primary_out, const json& cfg) {
    write_text(primary_out + ".config.json", cfg.dump(2) + "\n");
}

SlLexicon load_lexicon(const std::string& path, const std::string& excluded_path) {
    if (path.empty()) return SlLexicon::default_lexicon();
    return SlLexicon::from_files(path, excluded_path);
}

std::map<std::string, Split> read_split_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split file " + path);
    std::map<std::string, Split> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first && line == "note_id,split") {
            first = false;
            continue;
        }
        first = false;
        if (line.empty()) continue;
        size_t comma = line.rfind(',');
        if (comma == std::string::npos)
            throw std::runtime_error("split file: malformed line \"" + line + "\"");
        std::string id = line.substr(0, comma);
        std::string which = line.substr(comma + 1);
        out[id] = which == "test" ? Split::test : Split::train;
    }
    return out;
}

void write_split_file(const Corpus& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "note_id,split\n";
    for (const auto& n : c.notes) {
        auto it = c.split_assignment.find(n.note_id);
        out << n.note_id << "," << (it->second == Split::test ? "test" : "train") << "\n";
    }
}

json metrics_json(const MetricsReport& r) {
    return json{{"accuracy", r.accuracy},
                {"precision", r.precision},
                {"recall", r.recall_macro},
                {"recall_positive", r.recall_positive},
                {"f1", r.f1},
                {"precision_defined", r.precision_defined},
                {"f1_defined", r.f1_defined}};
}

const Note& find_note(const Corpus& c, const std::string& note_id) {
    const Note* n = c.find(note_id);
    if (!n) throw std::runtime_error("no note with id \"" + note_id + "\"");
    return *n;
}

struct HyperFlags {
    Hyperparams hyper;

    void attach(CLI::App* cmd) {
        cmd->add_option("--model-dim", hyper.model_dim, "embedding width");
        cmd->add_option("--heads", hyper.head_count, "attention heads");
        cmd->add_option("--layers", hyper.layer_count, "transformer layers");
        cmd->add_option("--ffn-dim", hyper.ffn_dim, "feed-forward width");
        cmd->add_option("--max-len", hyper.max_len, "tokens per segment");
        cmd->add_option("--vocab-size", hyper.vocab_size, "learned vocabulary size");
        cmd->add_option("--lr", hyper.learning_rate, "Adam learning rate");
        cmd->add_option("--epochs", hyper.epochs, "training epochs");
        cmd->add_option("--batch-size", hyper.batch_size, "batch size");
    }

    json to_json() const {
        return json{{"model_dim", hyper.model_dim},     {"head_count", hyper.head_count},
                    {"layer_count", hyper.layer_count}, {"ffn_dim", hyper.ffn_dim},
                    {"max_len", hyper.max_len},         {"vocab_size", hyper.vocab_size},
                    {"learning_rate", hyper.learning_rate}, {"epochs", hyper.epochs},
                    {"batch_size", hyper.batch_size}};
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slaudit: stigmatizing-language bias audit for note classifiers"};
    app.require_subcommand(1);

    // --- synth ---------------------------------------------------------
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_config_path, synth_out, synth_manifest;
    synth_cmd->add_option("--config", synth_config_path, "synth config JSON")->required();
    synth_cmd->add_option("--out", synth_out, "output corpus JSONL")->required();
    synth_cmd->add_option("--manifest", synth_manifest, "manifest JSON path");

    // --- ingest --------------------------------------------------------
    auto* ingest_cmd = app.add_subcommand("ingest", "ingest, preprocess and re-export a corpus");
    std::string ingest_in, ingest_out;
    size_t ingest_min_words = 20;
    std::vector<std::string> ingest_exclude = {"Discharge summary"};
    double ingest_window = 0;
    bool ingest_no_preprocess = false;
    ingest_cmd->add_option("--corpus", ingest_in, "input corpus JSONL")->required();
    ingest_cmd->add_option("--out", ingest_out, "output corpus JSONL")->required();
    ingest_cmd->add_option("--min-words", ingest_min_words, "minimum whitespace words");
    ingest_cmd->add_option("--exclude-category", ingest_exclude, "categories to drop");
    ingest_cmd->add_option("--window-hours", ingest_window, "keep notes within this horizon");
    ingest_cmd->add_flag("--no-preprocess", ingest_no_preprocess, "skip preprocessing");

    // --- detect-sl -----------------------------------------------------
    auto* detect_cmd = app.add_subcommand("detect-sl", "flag SL notes and emit statistics");
    std::string detect_corpus, detect_lexicon, detect_excluded, detect_out, detect_stats;
    detect_cmd->add_option("--corpus", detect_corpus, "corpus JSONL")->required();
    detect_cmd->add_option("--lexicon", detect_lexicon, "keyword file (default: built-in)");
    detect_cmd->add_option("--excluded", detect_excluded, "excluded-terms file");
    detect_cmd->add_option("--out", detect_out, "per-note flags CSV");
    detect_cmd->add_option("--stats", detect_stats, "statistics JSON");

    // --- train ---------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train the classifier");
    std::string train_corpus, train_out, train_curve, train_split_out;
    uint64_t train_seed = 1;
    double train_test_fraction = 0.2;
    bool train_no_split = false;
    HyperFlags train_hyper;
    train_cmd->add_option("--corpus", train_corpus, "corpus JSONL")->required();
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--seed", train_seed, "training seed");
    train_cmd->add_option("--test-fraction", train_test_fraction, "held-out fraction");
    train_cmd->add_flag("--no-split", train_no_split, "train on the whole corpus");
    train_cmd->add_option("--curve", train_curve, "training-curve CSV path");
    train_cmd->add_option("--split-out", train_split_out, "write the split CSV here");
    train_hyper.attach(train_cmd);

    // --- evaluate ------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("evaluate", "score a corpus with a trained model");
    std::string eval_corpus, eval_model, eval_out, eval_split_file, eval_subset = "all";
    std::string eval_lexicon, eval_excluded, eval_dilution;
    std::vector<std::string> eval_groups;
    bool eval_patient_level = false;
    eval_cmd->add_option("--corpus", eval_corpus, "corpus JSONL")->required();
    eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "report JSON")->required();
    eval_cmd->add_option("--split-file", eval_split_file, "split CSV from train");
    eval_cmd->add_option("--subset", eval_subset, "all|train|test")
        ->check(CLI::IsMember({"all", "train", "test"}));
    eval_cmd->add_option("--group", eval_groups, "emit a slice for this group (repeatable)");
    eval_cmd->add_flag("--patient-level", eval_patient_level,
                       "aggregate note scores to patients (max probability)");
    eval_cmd->add_option("--dilution-out", eval_dilution, "attention-dilution report JSON");
    eval_cmd->add_option("--lexicon", eval_lexicon, "keyword file for --dilution-out");
    eval_cmd->add_option("--excluded", eval_excluded, "excluded-terms file");

    // --- explain -------------------------------------------------------
    auto* explain_cmd = app.add_subcommand("explain", "perturbation-based explanations");
    explain_cmd->require_subcommand(1);
    std::string ex_model, ex_replay, ex_corpus, ex_note, ex_out;
    std::string ex_lexicon, ex_excluded;
    std::vector<std::string> ex_sentences;
    int ex_reps = 100;
    uint64_t ex_seed = 0;
    long ex_budget = -1;
    bool ex_global = false;
    auto add_scorer_opts = [&](CLI::App* cmd) {
        cmd->add_option("--model", ex_model, "checkpoint path");
        cmd->add_option("--replay", ex_replay, "replay-stub JSON (joined tokens -> probability)");
        cmd->add_option("--corpus", ex_corpus, "corpus JSONL")->required();
        cmd->add_option("--out", ex_out, "output path")->required();
    };
    auto* loo_cmd = explain_cmd->add_subcommand("loo", "leave-one-out token importance");
    add_scorer_opts(loo_cmd);
    loo_cmd->add_option("--note-id", ex_note, "note to explain");
    loo_cmd->add_flag("--global", ex_global, "Table-6-style global comparison");
    loo_cmd->add_option("--lexicon", ex_lexicon, "keyword file for --global");
    loo_cmd->add_option("--excluded", ex_excluded, "excluded-terms file");
    loo_cmd->add_option("--reps", ex_reps, "random-removal repetitions");
    loo_cmd->add_option("--seed", ex_seed, "random-removal seed");

    auto* reduce_cmd = explain_cmd->add_subcommand("reduce", "input reduction trace");
    add_scorer_opts(reduce_cmd);
    reduce_cmd->add_option("--note-id", ex_note, "note to explain")->required();
    reduce_cmd->add_option("--budget", ex_budget, "max deletions (default: run to one token)");

    auto* perturb_cmd = explain_cmd->add_subcommand("perturb", "add-sentence perturbations");
    add_scorer_opts(perturb_cmd);
    perturb_cmd->add_option("--note-id", ex_note, "note to perturb (omit with --global)");
    perturb_cmd->add_flag("--global", ex_global, "append to every test sample");
    perturb_cmd->add_option("--sentence", ex_sentences,
                            "adversarial sentence (repeatable; default: built-in five)");

    // --- network -------------------------------------------------------
    auto* network_cmd = app.add_subcommand("network", "clinician collaboration network");
    network_cmd->require_subcommand(1);
    std::string net_corpus, net_lexicon, net_excluded, net_out, net_format = "gexf";
    double net_floor = -1;
    auto add_net_opts = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", net_corpus, "corpus JSONL")->required();
        cmd->add_option("--lexicon", net_lexicon, "keyword file (default: built-in)");
        cmd->add_option("--excluded", net_excluded, "excluded-terms file");
        cmd->add_option("--out", net_out, "output path")->required();
    };
    auto* net_build = network_cmd->add_subcommand("build", "build and dump the graph as JSON");
    add_net_opts(net_build);
    auto* net_stats = network_cmd->add_subcommand("stats", "centrality / SL statistics");
    add_net_opts(net_stats);
    auto* net_export = network_cmd->add_subcommand("export", "write GEXF or DOT");
    add_net_opts(net_export);
    net_export->add_option("--format", net_format, "gexf|dot")
        ->check(CLI::IsMember({"gexf", "dot"}));
    net_export->add_option("--floor", net_floor, "drop edges with weight <= floor");

    // --- experiment ----------------------------------------------------
    auto* exp_cmd = app.add_subcommand("experiment", "run the training/removal matrix");
    std::string exp_config_path, exp_out_dir;
    int exp_jobs = 0;
    exp_cmd->add_option("--config", exp_config_path, "experiment config JSON")->required();
    exp_cmd->add_option("--out-dir", exp_out_dir, "output directory")->required();
    exp_cmd->add_option("--jobs", exp_jobs, "parallel training runs (overrides config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth_cmd) {
            SynthConfig cfg = synth_config_from_json_file(synth_config_path);
            Corpus c = generate(cfg);
            export_corpus(c, synth_out);
            std::string manifest = describe(cfg);
            if (!synth_manifest.empty()) write_text(synth_manifest, manifest + "\n");
            write_config_echo(synth_out, json::parse(synth_config_to_json(cfg)));
            std::cout << "wrote " << c.notes.size() << " notes to " << synth_out << "\n";
        } else if (*ingest_cmd) {
            Corpus c = ingest(ingest_in);
            size_t raw = c.notes.size();
            if (!ingest_no_preprocess) {
                std::set<std::string> excl(ingest_exclude.begin(), ingest_exclude.end());
                c = preprocess(c, ingest_min_words, excl);
            }
            if (ingest_window > 0) c = window_filter(c, ingest_window);
            export_corpus(c, ingest_out);
            write_config_echo(ingest_out, json{{"command", "ingest"},
                                               {"corpus", ingest_in},
                                               {"min_words", ingest_min_words},
                                               {"exclude_categories", ingest_exclude},
                                               {"window_hours", ingest_window},
                                               {"no_preprocess", ingest_no_preprocess}});
            std::cout << "kept " << c.notes.size() << " of " << raw << " notes\n";
        } else if (*detect_cmd) {
            Corpus c = ingest(detect_corpus);
            SlLexicon lex = load_lexicon(detect_lexicon, detect_excluded);
            if (!detect_out.empty()) {
                std::ofstream out(detect_out, std::ios::binary);
                if (!out) throw std::runtime_error("cannot open " + detect_out);
                out << "note_id,sl,match_count,matches\n";
                for (const auto& n : c.notes) {
                    auto matches = detect(tokenize(n.text, n.note_id), lex);
                    out << n.note_id << "," << (matches.empty() ? 0 : 1) << "," << matches.size()
                        << ",\"";
                    for (size_t i = 0; i < matches.size(); ++i) {
                        if (i) out << "|";
                        out << matches[i].entry;
                    }
                    out << "\"\n";
                }
                write_config_echo(detect_out, json{{"command", "detect-sl"},
                                                   {"corpus", detect_corpus},
                                                   {"lexicon", detect_lexicon}});
            }
            SlStatistics stats = sl_statistics(c, lex);
            json sj;
            sj["overall"] = {{"sl_notes", stats.overall.sl_notes},
                             {"total_notes", stats.overall.total_notes},
                             {"pct", stats.overall.pct()}};
            for (const auto& [g, gc] : stats.per_group)
                sj["per_group"][g] = {{"sl_notes", gc.sl_notes},
                                      {"total_notes", gc.total_notes},
                                      {"pct", gc.pct()}};
            for (const auto& [cat, gc] : stats.per_category)
                sj["per_category"][cat] = {{"sl_notes", gc.sl_notes},
                                           {"total_notes", gc.total_notes},
                                           {"pct", gc.pct()}};
            sj["term_frequency"] = stats.term_frequency;
            if (!detect_stats.empty())
                write_text(detect_stats, sj.dump(2) + "\n");
            else if (detect_out.empty())
                std::cout << sj.dump(2) << "\n";
        } else if (*train_cmd) {
            Corpus c = ingest(train_corpus);
            Corpus train_set = c;
            if (!train_no_split) {
                assign_split(c, train_test_fraction, train_seed);
                train_set = split_subset(c, Split::train);
                if (!train_split_out.empty()) write_split_file(c, train_split_out);
            }
            TransformerModel model = train(train_set, train_hyper.hyper, train_seed);
            save_checkpoint(model, train_out);
            if (!train_curve.empty()) write_training_curve(model, train_curve);
            write_config_echo(train_out, json{{"command", "train"},
                                              {"corpus", train_corpus},
                                              {"seed", train_seed},
                                              {"test_fraction", train_test_fraction},
                                              {"no_split", train_no_split},
                                              {"hyper", train_hyper.to_json()}});
            std::cout << "trained on " << train_set.notes.size() << " notes; checkpoint at "
                      << train_out << "\n";
        } else if (*eval_cmd) {
            Corpus c = ingest(eval_corpus);
            if (!eval_split_file.empty()) {
                c.split_assignment = read_split_file(eval_split_file);
                if (eval_subset != "all")
                    c = split_subset(c, eval_subset == "test" ? Split::test : Split::train);
            } else if (eval_subset != "all") {
                throw std::runtime_error("--subset needs --split-file");
            }
            TransformerModel model = load_checkpoint(eval_model);
            std::vector<Prediction> preds;
            for (const auto& n : c.notes) {
                PredictResult pr = predict(model, tokenize(n.text, n.note_id));
                preds.push_back({n.note_id, pr.probability, pr.at_risk, n.label, n.group,
                                 n.patient_id});
            }
            if (eval_patient_level) preds = aggregate_by_patient(preds);
            json rep;
            rep["notes"] = preds.size();
            rep["overall"] = metrics_json(compute_metrics(confusion_from(preds)));
            for (const auto& g : eval_groups) {
                if (eval_patient_level) {
                    std::vector<Prediction> sliced;
                    for (const auto& p : preds)
                        if (p.group == g) sliced.push_back(p);
                    rep["groups"][g] = metrics_json(compute_metrics(confusion_from(sliced)));
                } else {
                    rep["groups"][g] = metrics_json(compute_metrics(group_slice(preds, c, g)));
                }
            }
            write_text(eval_out, rep.dump(2) + "\n");
            if (!eval_dilution.empty()) {
                SlLexicon lex = load_lexicon(eval_lexicon, eval_excluded);
                DilutionReport dr = attention_dilution_report(model, c, lex);
                json dj;
                dj["has_sl"] = dr.has_sl;
                dj["sl_tokens"] = dr.sl_tokens;
                dj["total_tokens"] = dr.total_tokens;
                dj["all_mean"] = dr.all_mean;
                if (dr.has_sl) {
                    dj["sl_mean"] = dr.sl_mean;
                    dj["ratio"] = dr.ratio;
                }
                write_text(eval_dilution, dj.dump(2) + "\n");
            }
            write_config_echo(eval_out, json{{"command", "evaluate"},
                                             {"corpus", eval_corpus},
                                             {"model", eval_model},
                                             {"subset", eval_subset},
                                             {"patient_level", eval_patient_level}});
        } else if (*explain_cmd) {
            Corpus c = ingest(ex_corpus);
            std::unique_ptr<Scorer> scorer;
            std::optional<TransformerModel> model;
            if (!ex_replay.empty()) {
                scorer = std::make_unique<ReplayScorer>(ReplayScorer::from_json_file(ex_replay));
            } else if (!ex_model.empty()) {
                model = load_checkpoint(ex_model);
                scorer = std::make_unique<ModelScorer>(*model);
            } else {
                throw std::runtime_error("explain: need --model or --replay");
            }
            json echo{{"command", "explain"},
                      {"corpus", ex_corpus},
                      {"model", ex_model},
                      {"replay", ex_replay}};
            if (*loo_cmd) {
                if (ex_global) {
                    SlLexicon lex = load_lexicon(ex_lexicon, ex_excluded);
                    ComparisonTable t = global_leave_one_out(*scorer, c, lex, ex_reps, ex_seed);
                    write_comparison_csv(t, ex_out);
                    echo["reps"] = ex_reps;
                    echo["seed"] = ex_seed;
                } else {
                    const Note& n = find_note(c, ex_note);
                    ImportanceReport rep = leave_one_out(*scorer, tokenize(n.text, n.note_id));
                    write_importance_csv(rep, ex_out);
                    echo["note_id"] = ex_note;
                }
            } else if (*reduce_cmd) {
                const Note& n = find_note(c, ex_note);
                std::optional<size_t> budget;
                if (ex_budget >= 0) budget = static_cast<size_t>(ex_budget);
                ReductionTrace trace = input_reduction(*scorer, tokenize(n.text, n.note_id), budget);
                write_reduction_csv(trace, ex_out);
                echo["note_id"] = ex_note;
                echo["budget"] = ex_budget;
            } else if (*perturb_cmd) {
                auto sentences =
                    ex_sentences.empty() ? kDefaultAdversarialSentences : ex_sentences;
                if (ex_global) {
                    ComparisonTable t = global_add_sentence(*scorer, c, sentences);
                    write_comparison_csv(t, ex_out);
                } else {
                    const Note& n = find_note(c, ex_note);
                    TokenSeq toks = tokenize(n.text, n.note_id);
                    std::ofstream out(ex_out, std::ios::binary);
                    if (!out) throw std::runtime_error("cannot open " + ex_out);
                    out << "sentence,probability,delta\n";
                    char buf[64];
                    for (const auto& s : sentences) {
                        AddSentenceResult r = add_sentence(*scorer, toks, s);
                        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.probability, r.delta);
                        out << "\"" << s << "\"," << buf << "\n";
                    }
                    echo["note_id"] = ex_note;
                }
                echo["sentences"] = sentences;
            }
            write_config_echo(ex_out, echo);
        } else if (*network_cmd) {
            Corpus c = ingest(net_corpus);
            SlLexicon lex = load_lexicon(net_lexicon, net_excluded);
            CareGraph g = build_graph(c, lex);
            json echo{{"command", "network"}, {"corpus", net_corpus}, {"lexicon", net_lexicon}};
            if (*net_build) {
                write_text(net_out, graph_to_json(g) + "\n");
            } else if (*net_stats) {
                CentralitySlStats st = centrality_sl_stats(g, c, lex);
                auto cls_json = [&](const CentralityClassStats& cs) {
                    return json{{"clinicians", cs.clinicians},
                                {"sl_clinicians", cs.sl_clinicians},
                                {"pct_sl_clinicians", cs.pct_sl_clinicians()},
                                {"notes", cs.notes},
                                {"sl_notes", cs.sl_notes},
                                {"pct_sl_notes", cs.pct_sl_notes()},
                                {"pct_sl_notes_scaled", st.scaled_pct(cs)}};
                };
                json sj;
                sj["central"] = cls_json(st.central);
                sj["non_central"] = cls_json(st.non_central);
                sj["difference_defined"] = st.difference_defined;
                if (st.difference_defined) {
                    sj["sl_clinician_gap_pp"] = st.sl_clinician_gap();
                    sj["sl_note_gap_pp"] = st.sl_note_gap();
                }
                sj["unattributed_notes"] = st.unattributed_notes;
                for (const auto& [role, pair] : st.per_role) {
                    sj["per_role"][role]["central"] = cls_json(pair.first);
                    sj["per_role"][role]["non_central"] = cls_json(pair.second);
                }
                write_text(net_out, sj.dump(2) + "\n");
            } else if (*net_export) {
                std::optional<double> floor;
                if (net_floor >= 0) floor = net_floor;
                export_graph(g, net_out, net_format == "gexf" ? GraphFormat::gexf : GraphFormat::dot,
                             floor);
                echo["format"] = net_format;
                echo["floor"] = net_floor;
            }
            write_config_echo(net_out, echo);
        } else if (*exp_cmd) {
            std::ifstream in(exp_config_path);
            if (!in) throw std::runtime_error("cannot open " + exp_config_path);
            json full = json::parse(in);

            Corpus c;
            if (full.contains("synth")) {
                SynthConfig sc = synth_config_from_json(full.at("synth").dump());
                c = generate(sc);
            } else if (full.contains("corpus")) {
                c = ingest(full.at("corpus").get<std::string>());
            } else {
                throw std::runtime_error("experiment config: need \"corpus\" or \"synth\"");
            }
            if (full.value("preprocess", true)) {
                std::vector<std::string> excl =
                    full.value("exclude_categories", std::vector<std::string>{"Discharge summary"});
                c = preprocess(c, full.value("min_words", size_t{20}),
                               std::set<std::string>(excl.begin(), excl.end()));
            }
            SlLexicon lex = load_lexicon(full.value("lexicon", std::string{}),
                                         full.value("lexicon_excluded", std::string{}));
            ExperimentConfig cfg = experiment_config_from_json(full.dump());
            if (exp_jobs > 0) cfg.jobs = exp_jobs;

            std::optional<CareGraph> graph;
            for (const auto& v : cfg.variants)
                if (v == "central_sl_removed" && !graph) graph = build_graph(c, lex);

            fs::create_directories(exp_out_dir);
            ExperimentMatrix m =
                run_experiment_matrix(c, lex, graph ? &*graph : nullptr, cfg);
            write_matrix_csv(m, exp_out_dir + "/matrix.csv");
            write_text(exp_out_dir + "/matrix.json", matrix_to_json(m) + "\n");
            write_gap_dat(m, exp_out_dir + "/gaps.dat");
            full["resolved"] = json::parse(m.config_echo);
            write_text(exp_out_dir + "/config_echo.json", full.dump(2) + "\n");
            std::cout << "matrix with " << m.settings.size() << " settings written to "
                      << exp_out_dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
