#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracle_helpers.hpp"
#include "slaudit/corpus.hpp"
#include "slaudit/rng.hpp"
#include "slaudit/synthgen.hpp"
#include "slaudit/tinyformer.hpp"

using namespace slaudit;
using Eigen::MatrixXd;

namespace {

AttentionLayer random_layer(int d, int heads, uint64_t seed) {
    AttentionLayer layer;
    layer.head_count = heads;
    layer.d_k = d / heads;
    layer.wq.reset("wq", d, d);
    layer.wk.reset("wk", d, d);
    layer.wv.reset("wv", d, d);
    layer.wo.reset("wo", d, d);
    Rng rng(seed);
    for (auto* t : {&layer.wq, &layer.wk, &layer.wv, &layer.wo})
        for (long i = 0; i < d; ++i)
            for (long j = 0; j < d; ++j) t->w(i, j) = rng.normal(0, 0.5);
    return layer;
}

// A separable two-class corpus: positive notes say "risk", negatives "stab".
Corpus separable_corpus(int notes, uint64_t seed, double purity = 0.9) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.note_count = notes;
    cfg.label_prevalence = 0.5;
    cfg.class_purity = purity;
    cfg.token_signal = 0.5;
    cfg.group_sl_rates = {{"black", 0.0}, {"white", 0.0}};
    cfg.mean_note_length = 24;
    cfg.notes_per_patient = 1;
    return generate(cfg);
}

Hyperparams tiny_hyper() {
    Hyperparams h;
    h.model_dim = 16;
    h.head_count = 2;
    h.layer_count = 1;
    h.ffn_dim = 32;
    h.max_len = 32;
    h.vocab_size = 200;
    h.epochs = 30;
    h.batch_size = 16;
    return h;
}

}  // namespace

TEST_CASE("self_attention of a single token is the identity mixture") {
    AttentionLayer layer = random_layer(8, 2, 1);
    MatrixXd X(1, 8);
    Rng rng(2);
    for (int j = 0; j < 8; ++j) X(0, j) = rng.normal();

    SelfAttentionResult res = self_attention(X, layer);
    REQUIRE(res.attention.size() == 2);
    for (const auto& A : res.attention) {
        REQUIRE(A.rows() == 1);
        CHECK(A(0, 0) == doctest::Approx(1.0));
    }
    MatrixXd V = X * layer.wv.w;
    for (int j = 0; j < 8; ++j) CHECK(res.output(0, j) == doctest::Approx(V(0, j)));
}

TEST_CASE("zero queries and keys give uniform attention and the V column mean") {
    AttentionLayer layer = random_layer(8, 2, 3);
    layer.wq.w.setZero();
    layer.wk.w.setZero();
    MatrixXd X(5, 8);
    Rng rng(4);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 8; ++j) X(i, j) = rng.normal();

    SelfAttentionResult res = self_attention(X, layer);
    for (const auto& A : res.attention)
        for (long i = 0; i < A.rows(); ++i)
            for (long j = 0; j < A.cols(); ++j) CHECK(A(i, j) == doctest::Approx(0.2));
    MatrixXd V = X * layer.wv.w;
    for (int j = 0; j < 8; ++j)
        CHECK(res.output(2, j) == doctest::Approx(V.col(j).mean()));
}

TEST_CASE("self_attention matches the dense loop oracle") {
    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        int heads = (trial % 2) ? 2 : 1;
        int d = heads * int(2 + rng.bounded(4));
        int n = int(1 + rng.bounded(6));
        AttentionLayer layer = random_layer(d, heads, rng.next_u64());
        MatrixXd X(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = rng.normal();

        SelfAttentionResult got = self_attention(X, layer);
        auto expect = oracle::dense_self_attention(X, layer.wq.w, layer.wk.w, layer.wv.w, heads);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                CHECK(std::abs(got.output(i, j) - expect.output(i, j)) < 1e-6);
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < n; ++i) {
                CHECK(std::abs(got.attention[size_t(h)].row(i).sum() - 1.0) < 1e-5);
                for (int j = 0; j < n; ++j)
                    CHECK(std::abs(got.attention[size_t(h)](i, j) -
                                   expect.attention[size_t(h)](i, j)) < 1e-6);
            }
        }
    }
}

TEST_CASE("self_attention rejects inconsistent shapes") {
    AttentionLayer layer = random_layer(8, 2, 5);
    MatrixXd bad(3, 6);
    bad.setZero();
    CHECK_THROWS(self_attention(bad, layer));
}

TEST_CASE("threshold rule is strict") {
    CHECK(exceeds_threshold(0.5028));
    CHECK_FALSE(exceeds_threshold(0.4823));
    CHECK_FALSE(exceeds_threshold(0.5));
}

TEST_CASE("training is deterministic and learns a separable corpus") {
    Corpus c = separable_corpus(200, 1001);
    Hyperparams h = tiny_hyper();

    // the independent baseline must find the data separable first
    auto baseline = oracle::BowLogistic::fit(c);
    REQUIRE(baseline.accuracy(c) >= 0.95);

    TransformerModel m1 = train(c, h, 7);
    long long correct = 0;
    for (const auto& n : c.notes) {
        PredictResult pr = predict(m1, tokenize(n.text, n.note_id));
        if ((pr.at_risk ? 1 : 0) == n.label) ++correct;
    }
    double acc = double(correct) / double(c.notes.size());
    CHECK(acc >= 0.95);

    SUBCASE("same seed, same weights, bitwise") {
        TransformerModel m2 = train(c, h, 7);
        auto p1 = m1.params();
        auto p2 = m2.params();
        REQUIRE(p1.size() == p2.size());
        for (size_t i = 0; i < p1.size(); ++i) {
            REQUIRE(p1[i]->w.size() == p2[i]->w.size());
            CHECK(std::memcmp(p1[i]->w.data(), p2[i]->w.data(),
                              sizeof(double) * size_t(p1[i]->w.size())) == 0);
        }
    }

    SUBCASE("training curve was recorded") {
        CHECK(m1.curve.size() == size_t(h.epochs));
        CHECK(m1.curve.front().epoch == 1);
        CHECK(m1.curve.back().train_accuracy > 0.9);
    }
}

TEST_CASE("single-class corpora are rejected") {
    Corpus c = separable_corpus(50, 2002);
    for (auto& n : c.notes) n.label = 0;
    CHECK_THROWS(train(c, tiny_hyper(), 1));
    Corpus empty;
    CHECK_THROWS(train(empty, tiny_hyper(), 1));
}

TEST_CASE("prediction is padding-invariant and rejects empty input") {
    Corpus c = separable_corpus(80, 3003);
    Hyperparams h = tiny_hyper();
    h.epochs = 3;
    TransformerModel m = train(c, h, 11);

    TokenSeq t = tokenize(c.notes[3].text);
    PredictResult base = predict(m, t);
    CHECK(base.probability >= 0.0);
    CHECK(base.probability <= 1.0);

    TokenSeq padded = t;
    for (int i = 0; i < 5; ++i) padded.tokens.push_back("<pad>");
    PredictResult with_pad = predict(m, padded);
    CHECK(std::abs(with_pad.probability - base.probability) < 1e-6);

    CHECK_THROWS(predict(m, TokenSeq{}));

    SUBCASE("multi-segment notes score as the mean of segments") {
        TokenSeq longseq = t;
        while (longseq.tokens.size() <= size_t(h.max_len)) {
            longseq.tokens.insert(longseq.tokens.end(), t.tokens.begin(), t.tokens.end());
        }
        PredictResult whole = predict(m, longseq);
        auto chunks = segment(longseq, size_t(h.max_len));
        double mean = 0;
        for (const auto& chunk : chunks) mean += predict(m, chunk).probability;
        mean /= double(chunks.size());
        CHECK(whole.probability == doctest::Approx(mean));
    }

    SUBCASE("attention trace rows sum to one") {
        PredictResult pr = predict(m, t, true);
        REQUIRE(!pr.trace.weights.empty());
        for (const auto& per_layer : pr.trace.weights)
            for (const auto& per_head : per_layer)
                for (const auto& A : per_head)
                    for (long i = 0; i < A.rows(); ++i)
                        CHECK(std::abs(A.row(i).sum() - 1.0) < 1e-5);
        CHECK(pr.trace.token_scores.size() == t.tokens.size());
    }
}

TEST_CASE("gradient check against central differences") {
    Corpus c = separable_corpus(40, 4004);
    Hyperparams h;
    h.model_dim = 8;
    h.head_count = 2;
    h.layer_count = 1;
    h.ffn_dim = 16;
    h.max_len = 24;
    h.vocab_size = 100;
    h.epochs = 1;
    TransformerModel m = train(c, h, 21);

    Rng rng(55);
    for (int trial = 0; trial < 3; ++trial) {
        TokenSeq t;
        size_t len = 4 + rng.bounded(12);
        for (size_t i = 0; i < len; ++i)
            t.tokens.push_back(c.notes[rng.bounded(c.notes.size())].text.substr(0, 6));
        double err = gradient_check(m, t, 1e-5, int(trial % 2), 1.0, 50, rng.next_u64());
        CHECK(err < 1e-3);
    }

    SUBCASE("two seeds pass the same bound") {
        TokenSeq t = tokenize(c.notes[0].text);
        CHECK(gradient_check(m, t, 1e-5, 1, 1.0, 40, 1) < 1e-3);
        CHECK(gradient_check(m, t, 1e-5, 1, 1.0, 40, 2) < 1e-3);
    }

    SUBCASE("zero label weight zeroes the learning signal") {
        TokenSeq t = tokenize(c.notes[0].text);
        double err = gradient_check(m, t, 1e-4, 1, 0.0, 30, 3);
        CHECK(err == doctest::Approx(0.0));
    }

    SUBCASE("epsilon outside the contract is rejected") {
        TokenSeq t = tokenize(c.notes[0].text);
        CHECK_THROWS(gradient_check(m, t, 1e-2));
    }
}

TEST_CASE("checkpoints round-trip through the portable container") {
    Corpus c = separable_corpus(80, 5005);
    Hyperparams h = tiny_hyper();
    h.epochs = 4;
    TransformerModel m = train(c, h, 33);

    std::string path =
        (std::filesystem::temp_directory_path() / "tinyformer_test.ckpt").string();
    save_checkpoint(m, path);
    TransformerModel back = load_checkpoint(path);

    CHECK(back.hyper.model_dim == h.model_dim);
    CHECK(back.hyper.layer_count == h.layer_count);
    CHECK(back.seed == m.seed);
    CHECK(back.pos_weight == doctest::Approx(m.pos_weight));
    CHECK(back.vocab.id_to_token == m.vocab.id_to_token);

    // weights are stored as float32; predictions agree to that precision
    for (int i = 0; i < 10; ++i) {
        TokenSeq t = tokenize(c.notes[size_t(i)].text);
        double a = predict(m, t).probability;
        double b = predict(back, t).probability;
        CHECK(std::abs(a - b) < 2e-3);
    }

    SUBCASE("a second save of the loaded model is byte-identical") {
        std::string path2 =
            (std::filesystem::temp_directory_path() / "tinyformer_test2.ckpt").string();
        save_checkpoint(back, path2);
        std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2);
    }
}

TEST_CASE("attention dilution report") {
    SlLexicon lex = SlLexicon::default_lexicon();
    SynthConfig cfg;
    cfg.seed = 61;
    cfg.note_count = 60;
    cfg.notes_per_patient = 1;
    Corpus c = generate(cfg);
    Hyperparams h = tiny_hyper();
    h.epochs = 2;
    h.max_len = 128;  // keep every note in one segment: the uniform-attention
                      // symmetry below only holds within a segment
    TransformerModel m = train(c, h, 71);

    SUBCASE("uniform attention gives ratio one") {
        for (auto& layer : m.layers) {
            layer.attn.wq.w.setZero();
            layer.attn.wk.w.setZero();
        }
        DilutionReport rep = attention_dilution_report(m, c, lex);
        REQUIRE(rep.has_sl);
        for (const auto& note : rep.per_note)
            if (note.has_sl) CHECK(note.ratio == doctest::Approx(1.0).epsilon(1e-9));

        // corpus-wide the ratio is length-weighted, so pin it with
        // equal-length notes
        Corpus fixed;
        for (int i = 0; i < 8; ++i) {
            Note n;
            n.note_id = "f" + std::to_string(i);
            n.patient_id = n.note_id;
            n.category = "Physician";
            n.group = "white";
            n.window_hours = 1;
            std::string text = i % 2 ? "abuser" : "stable";
            for (int k = 0; k < 11; ++k) text += " filler" + std::to_string(k);
            n.text = text;
            fixed.notes.push_back(n);
        }
        DilutionReport fixed_rep = attention_dilution_report(m, fixed, lex);
        REQUIRE(fixed_rep.has_sl);
        CHECK(fixed_rep.ratio == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("corpus-wide means match a recomputation from raw traces") {
        DilutionReport rep = attention_dilution_report(m, c, lex);
        double sl_sum = 0, all_sum = 0;
        long long sl_count = 0, all_count = 0;
        for (const auto& n : c.notes) {
            TokenSeq toks = tokenize(n.text, n.note_id);
            PredictResult pr = predict(m, toks, true);
            std::vector<bool> sl(toks.size(), false);
            for (const auto& match : detect(toks, lex))
                for (size_t i = match.start_token; i <= match.end_token; ++i) sl[i] = true;
            for (size_t i = 0; i < pr.trace.token_scores.size(); ++i) {
                all_sum += pr.trace.token_scores[i];
                ++all_count;
                if (sl[i]) {
                    sl_sum += pr.trace.token_scores[i];
                    ++sl_count;
                }
            }
        }
        CHECK(rep.all_mean == doctest::Approx(all_sum / double(all_count)));
        if (sl_count > 0) {
            CHECK(rep.sl_mean == doctest::Approx(sl_sum / double(sl_count)));
            CHECK(rep.ratio == doctest::Approx((sl_sum / double(sl_count)) /
                                               (all_sum / double(all_count))));
        }
    }

    SUBCASE("no SL means the SL side is reported absent") {
        SynthConfig clean = cfg;
        clean.group_sl_rates = {{"black", 0.0}, {"white", 0.0}};
        Corpus c2 = generate(clean);
        DilutionReport rep = attention_dilution_report(m, c2, lex);
        CHECK_FALSE(rep.has_sl);
        CHECK(rep.sl_tokens == 0);
    }
}
