#include <doctest.h>

#include <climits>
#include <cmath>
#include <map>

#include <json.hpp>

#include "slaudit/carenet.hpp"
#include "slaudit/lexicon.hpp"
#include "slaudit/synthgen.hpp"

using namespace slaudit;

TEST_CASE("generate is deterministic for a fixed config") {
    SynthConfig cfg;
    cfg.seed = 42;
    cfg.note_count = 500;
    Corpus a = generate(cfg);
    Corpus b = generate(cfg);
    CHECK(a.notes == b.notes);

    cfg.seed = 43;
    Corpus c = generate(cfg);
    CHECK(a.notes != c.notes);
}

TEST_CASE("group SL rates land within binomial tolerance") {
    SynthConfig cfg;
    cfg.seed = 1;
    cfg.note_count = 10000;
    Corpus c = generate(cfg);
    SlLexicon lex = SlLexicon::default_lexicon();
    SlStatistics st = sl_statistics(c, lex);
    CHECK(std::abs(st.per_group.at("black").pct() / 100.0 - 0.2423) < 0.02);
    CHECK(std::abs(st.per_group.at("white").pct() / 100.0 - 0.2237) < 0.02);

    // label prevalence at the patient level
    std::map<std::string, int> outcome;
    for (const auto& n : c.notes) outcome[n.patient_id] = std::max(outcome[n.patient_id], n.label);
    long long positives = 0;
    for (const auto& [p, o] : outcome) positives += o;
    double prevalence = double(positives) / double(outcome.size());
    CHECK(std::abs(prevalence - 0.095) < 0.02);
}

TEST_CASE("noise mode keeps SL independent of the label") {
    SynthConfig cfg;
    cfg.seed = 2;
    cfg.note_count = 10000;
    cfg.sl_mode = "noise";
    Corpus c = generate(cfg);
    SlLexicon lex = SlLexicon::default_lexicon();

    double n = double(c.notes.size());
    double sum_sl = 0, sum_label = 0, sum_both = 0;
    for (const auto& note : c.notes) {
        double sl = is_sl_note(tokenize(note.text), lex) ? 1.0 : 0.0;
        sum_sl += sl;
        sum_label += note.label;
        sum_both += sl * note.label;
    }
    double mean_sl = sum_sl / n, mean_label = sum_label / n;
    double cov = sum_both / n - mean_sl * mean_label;
    double corr = cov / std::sqrt(mean_sl * (1 - mean_sl) * mean_label * (1 - mean_label));
    CHECK(std::abs(corr) < 0.03);
}

TEST_CASE("signal mode correlates SL with the label") {
    SynthConfig cfg;
    cfg.seed = 3;
    cfg.note_count = 10000;
    cfg.sl_mode = "signal";
    cfg.sl_label_lift = 3.0;
    Corpus c = generate(cfg);
    SlLexicon lex = SlLexicon::default_lexicon();

    long long sl_pos = 0, pos = 0, sl_neg = 0, neg = 0;
    for (const auto& note : c.notes) {
        bool sl = is_sl_note(tokenize(note.text), lex);
        if (note.label) {
            ++pos;
            sl_pos += sl;
        } else {
            ++neg;
            sl_neg += sl;
        }
    }
    double rate_pos = double(sl_pos) / double(pos);
    double rate_neg = double(sl_neg) / double(neg);
    CHECK(rate_pos > 2.0 * rate_neg);
}

TEST_CASE("hub clinicians dominate node strength by construction") {
    SynthConfig cfg;
    cfg.seed = 4;
    cfg.note_count = 1500;
    cfg.clinician_count = 60;
    cfg.hub_fraction = 0.07;
    Corpus c = generate(cfg);
    CareGraph g = build_graph(c, SlLexicon::default_lexicon());

    long long min_hub = LLONG_MAX, max_spoke = 0;
    for (const auto& n : g.nodes) {
        int idx = std::stoi(n.id.substr(1));
        bool hub = idx <= 4;  // 7% of 60
        if (hub)
            min_hub = std::min(min_hub, n.strength);
        else
            max_spoke = std::max(max_spoke, n.strength);
    }
    CHECK(min_hub > max_spoke);
}

TEST_CASE("describe emits config plus consistent expectations") {
    SynthConfig cfg;
    auto manifest = nlohmann::json::parse(describe(cfg));
    CHECK(manifest["expected"]["label_prevalence"].get<double>() == doctest::Approx(0.095));
    CHECK(manifest["config"]["note_count"].get<int>() == cfg.note_count);

    SUBCASE("zero SL rates predict an SL-free corpus, and generate confirms") {
        SynthConfig clean;
        clean.group_sl_rates = {{"black", 0.0}, {"white", 0.0}};
        clean.note_count = 400;
        auto m = nlohmann::json::parse(describe(clean));
        CHECK(m["expected"]["overall_sl_note_rate"].get<double>() == doctest::Approx(0.0));
        Corpus c = generate(clean);
        SlStatistics st = sl_statistics(c, SlLexicon::default_lexicon());
        CHECK(st.overall.sl_notes == 0);
    }

    SUBCASE("expectations match a large draw within binomial bounds") {
        SynthConfig big;
        big.seed = 5;
        big.note_count = 50000;
        big.sl_author_bias = 2.0;  // exercise the hub-team mixing in the formula
        auto m = nlohmann::json::parse(describe(big));
        Corpus c = generate(big);
        SlStatistics st = sl_statistics(c, SlLexicon::default_lexicon());
        for (const auto& [g, gc] : st.per_group) {
            double expected = m["expected"]["sl_note_rate_per_group"][g].get<double>();
            double got = gc.pct() / 100.0;
            // 4-sigma binomial bound on ~these many notes
            double sigma = std::sqrt(expected * (1 - expected) / double(gc.total_notes));
            CHECK(std::abs(got - expected) < 4 * sigma + 1e-9);
        }
    }
}

TEST_CASE("inconsistent configs are rejected") {
    SynthConfig cfg;
    cfg.group_sl_rates["black"] = 1.5;
    CHECK_THROWS(generate(cfg));

    SynthConfig cfg2;
    cfg2.sl_mode = "banana";
    CHECK_THROWS(generate(cfg2));

    SynthConfig cfg3;
    cfg3.group_mix = {{"black", 0.5}, {"green", 0.5}};  // no SL rate for green
    CHECK_THROWS(generate(cfg3));
}

TEST_CASE("config JSON round trip") {
    SynthConfig cfg;
    cfg.seed = 77;
    cfg.sl_mode = "signal";
    cfg.central_sl_noise = true;
    cfg.group_mix = {{"black", 0.4}, {"white", 0.6}};
    SynthConfig back = synth_config_from_json(synth_config_to_json(cfg));
    CHECK(back.seed == cfg.seed);
    CHECK(back.sl_mode == cfg.sl_mode);
    CHECK(back.central_sl_noise == cfg.central_sl_noise);
    CHECK(back.group_mix == cfg.group_mix);
    CHECK(generate(back).notes == generate(cfg).notes);
}
