#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "slaudit/corpus.hpp"
#include "slaudit/rng.hpp"
#include "slaudit/synthgen.hpp"

using namespace slaudit;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

Note make_note(const std::string& id, const std::string& patient, const std::string& text,
               int label = 0) {
    Note n;
    n.note_id = id;
    n.patient_id = patient;
    n.clinician_ids = {"c1"};
    n.category = "Physician";
    n.group = "white";
    n.label = label;
    n.window_hours = 1.0;
    n.text = text;
    return n;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("ingest reads valid jsonl in file order") {
    std::string path = temp_path("corpus_basic.jsonl");
    {
        std::ofstream out(path);
        out << R"({"note_id":"n1","patient_id":"p1","clinician_ids":["c1"],"category":"Physician","group":"white","label":0,"window_hours":3.5,"text":"first note body"})"
            << "\n";
        out << R"({"note_id":"n2","patient_id":"p1","clinician_ids":["c1","c2"],"category":"Nursing","group":"black","label":1,"window_hours":30,"text":"second note body"})"
            << "\n";
        out << R"({"note_id":"n3","patient_id":"p2","clinician_ids":[],"category":"Radiology","group":"white","label":0,"window_hours":0,"text":"third note body"})"
            << "\n";
    }
    Corpus c = ingest(path);
    REQUIRE(c.notes.size() == 3);
    CHECK(c.notes[0].note_id == "n1");
    CHECK(c.notes[1].clinician_ids.size() == 2);
    CHECK(c.notes[1].label == 1);
    CHECK(c.notes[2].window_hours == 0.0);
}

TEST_CASE("ingest rejects duplicates and malformed lines with line numbers") {
    std::string path = temp_path("corpus_bad.jsonl");
    {
        std::ofstream out(path);
        out << R"({"note_id":"n1","patient_id":"p1","clinician_ids":[],"category":"x","group":"g","label":0,"window_hours":1,"text":"a b"})"
            << "\n";
        out << R"({"note_id":"n1","patient_id":"p2","clinician_ids":[],"category":"x","group":"g","label":0,"window_hours":1,"text":"c d"})"
            << "\n";
    }
    CHECK_THROWS_WITH_AS(ingest(path), doctest::Contains("line 2"), std::runtime_error);
    CHECK_THROWS_WITH_AS(ingest(path), doctest::Contains("duplicate"), std::runtime_error);

    {
        std::ofstream out(path);
        out << R"({"note_id":"n1")" << "\n";
    }
    CHECK_THROWS_WITH_AS(ingest(path), doctest::Contains("line 1"), std::runtime_error);

    {
        std::ofstream out(path);
        out << R"({"note_id":"n1","patient_id":"p1","clinician_ids":[],"category":"x","group":"g","label":2,"window_hours":1,"text":"a"})"
            << "\n";
    }
    CHECK_THROWS(ingest(path));
}

TEST_CASE("export then ingest is the identity, byte-stably") {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.note_count = 10000;
    Corpus c = generate(cfg);

    std::string p1 = temp_path("roundtrip1.jsonl");
    std::string p2 = temp_path("roundtrip2.jsonl");
    export_corpus(c, p1);
    Corpus back = ingest(p1);
    REQUIRE(back.notes.size() == c.notes.size());
    CHECK(back.notes == c.notes);
    export_corpus(back, p2);
    CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("preprocess drops short and excluded-category notes") {
    Corpus c;
    std::string nineteen, twenty;
    for (int i = 0; i < 19; ++i) nineteen += "w ";
    twenty = nineteen + "w";
    c.notes.push_back(make_note("n1", "p1", nineteen));
    c.notes.push_back(make_note("n2", "p1", twenty));
    Note discharge = make_note("n3", "p2", twenty + " plus more words here to be safe");
    discharge.category = "Discharge summary";
    c.notes.push_back(discharge);

    Corpus out = preprocess(c);
    REQUIRE(out.notes.size() == 1);
    CHECK(out.notes[0].note_id == "n2");

    SUBCASE("no-op when nothing matches") {
        Corpus all_good;
        all_good.notes.push_back(make_note("a", "p", twenty));
        Corpus res = preprocess(all_good);
        CHECK(res.notes == all_good.notes);
    }
    SUBCASE("idempotent") {
        Corpus once = preprocess(c);
        Corpus twice = preprocess(once);
        CHECK(once.notes == twice.notes);
    }
}

TEST_CASE("window_filter boundary and subset behaviour") {
    Corpus c;
    for (int h : {1, 10, 24, 25, 48}) {
        Note n = make_note("n" + std::to_string(h), "p" + std::to_string(h), "some words here");
        n.window_hours = h;
        c.notes.push_back(n);
    }
    Corpus day = window_filter(c, 24.0);
    REQUIRE(day.notes.size() == 3);  // 1, 10, 24; the hour-25 note drops
    CHECK(day.notes[2].note_id == "n24");

    Corpus all = window_filter(c, kNoHorizon);
    CHECK(all.notes == c.notes);

    CHECK_THROWS(window_filter(c, 0.0));

    SUBCASE("count oracle on a synthetic corpus") {
        SynthConfig cfg;
        cfg.seed = 3;
        cfg.note_count = 2000;
        cfg.window_hours_max = 34.3;  // ~30% of notes beyond 24h
        Corpus synth = generate(cfg);
        size_t expected = 0;
        for (const auto& n : synth.notes)
            if (n.window_hours <= 24.0) ++expected;
        CHECK(window_filter(synth, 24.0).notes.size() == expected);
    }
    SUBCASE("monotone in the horizon") {
        SynthConfig cfg;
        cfg.seed = 4;
        cfg.note_count = 500;
        Corpus synth = generate(cfg);
        auto ids = [](const Corpus& x) {
            std::set<std::string> s;
            for (const auto& n : x.notes) s.insert(n.note_id);
            return s;
        };
        auto small = ids(window_filter(synth, 12.0));
        auto large = ids(window_filter(synth, 48.0));
        for (const auto& id : small) CHECK(large.count(id) == 1);
    }
}

TEST_CASE("tokenize matches the documented rules") {
    CHECK(tokenize("He was very combative.").tokens ==
          std::vector<std::string>{"he", "was", "very", "combative", "."});
    CHECK(tokenize("Transferred via [**Location (un) **].").tokens ==
          std::vector<std::string>{"transferred", "via", "[**location (un) **]", "."});
    CHECK(tokenize("").tokens.empty());
    CHECK(tokenize("  \t \n ").tokens.empty());

    SUBCASE("stable under re-tokenization of the joined output") {
        SynthConfig cfg;
        cfg.seed = 5;
        cfg.note_count = 300;
        Corpus synth = generate(cfg);
        for (const auto& n : synth.notes) {
            TokenSeq t = tokenize(n.text);
            TokenSeq again = tokenize(join_tokens(t));
            CHECK(again.tokens == t.tokens);
        }
        TokenSeq t = tokenize("pt's b/p 120/80, s/p fall... [**2184**] w/ sequelae!");
        CHECK(tokenize(join_tokens(t)).tokens == t.tokens);
    }
}

TEST_CASE("segment covers the sequence in order") {
    TokenSeq t;
    for (int i = 0; i < 10; ++i) t.tokens.push_back("t" + std::to_string(i));
    auto chunks = segment(t, 4);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].tokens.size() == 4);
    CHECK(chunks[1].tokens.size() == 4);
    CHECK(chunks[2].tokens.size() == 2);

    TokenSeq small;
    small.tokens = {"a", "b", "c"};
    CHECK(segment(small, 8).size() == 1);

    SUBCASE("concatenation identity on random sequences") {
        Rng rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            TokenSeq seq;
            size_t len = 1 + rng.bounded(200);
            for (size_t i = 0; i < len; ++i)
                seq.tokens.push_back("w" + std::to_string(rng.bounded(50)));
            size_t max_len = 1 + rng.bounded(16);
            TokenSeq rebuilt;
            for (const auto& chunk : segment(seq, max_len)) {
                CHECK(chunk.tokens.size() <= max_len);
                rebuilt.tokens.insert(rebuilt.tokens.end(), chunk.tokens.begin(),
                                      chunk.tokens.end());
            }
            CHECK(rebuilt.tokens == seq.tokens);
        }
    }
}

TEST_CASE("assign_split keeps patients whole and respects the fraction") {
    SynthConfig cfg;
    cfg.seed = 9;
    cfg.note_count = 1200;
    Corpus c = generate(cfg);
    assign_split(c, 0.2, 42);

    std::map<std::string, Split> patient_side;
    size_t test_notes = 0;
    for (const auto& n : c.notes) {
        Split s = c.split_assignment.at(n.note_id);
        if (s == Split::test) ++test_notes;
        auto [it, fresh] = patient_side.try_emplace(n.patient_id, s);
        CHECK(it->second == s);  // no patient straddles the split
    }
    double frac = double(test_notes) / double(c.notes.size());
    CHECK(frac > 0.1);
    CHECK(frac < 0.3);

    Corpus c2 = generate(cfg);
    assign_split(c2, 0.2, 42);
    CHECK(c2.split_assignment == c.split_assignment);

    Corpus test_set = split_subset(c, Split::test);
    Corpus train_set = split_subset(c, Split::train);
    CHECK(test_set.notes.size() + train_set.notes.size() == c.notes.size());
}
