#include <doctest.h>

#include <stdexcept>

#include "slaudit/metrics.hpp"
#include "slaudit/rng.hpp"

using namespace slaudit;

TEST_CASE("compute_metrics exact arithmetic") {
    MetricsReport r = compute_metrics({3, 1, 1, 5});
    CHECK(r.accuracy == doctest::Approx(0.8));
    CHECK(r.precision == doctest::Approx(0.75));
    CHECK(r.recall_positive == doctest::Approx(0.75));
    CHECK(r.f1 == doctest::Approx(0.75));
    CHECK(r.recall_macro == doctest::Approx(0.5 * (0.75 + 5.0 / 6.0)));
    CHECK(r.precision_defined);
    CHECK(r.f1_defined);
}

TEST_CASE("compute_metrics flags degenerate denominators") {
    MetricsReport r = compute_metrics({0, 0, 2, 8});
    CHECK(r.precision == 0.0);
    CHECK_FALSE(r.precision_defined);
    CHECK(r.recall_positive == 0.0);
    CHECK_FALSE(r.f1_defined);

    CHECK_THROWS(compute_metrics({0, 0, 0, 0}));
}

TEST_CASE("compute_metrics agrees with an independent formula pass") {
    Rng rng(5150);
    for (int trial = 0; trial < 1000; ++trial) {
        ConfusionCounts cc{(long long)rng.bounded(50), (long long)rng.bounded(50),
                           (long long)rng.bounded(50), (long long)rng.bounded(50)};
        if (cc.total() == 0) continue;
        MetricsReport r = compute_metrics(cc);

        double tp = double(cc.tp), fp = double(cc.fp), fn = double(cc.fn), tn = double(cc.tn);
        CHECK(r.accuracy == doctest::Approx((tp + tn) / (tp + fp + fn + tn)));
        double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        double rec_pos = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        CHECK(r.precision == doctest::Approx(prec));
        CHECK(r.recall_positive == doctest::Approx(rec_pos));
        if (prec + rec_pos > 0)
            CHECK(r.f1 == doctest::Approx(2 * prec * rec_pos / (prec + rec_pos)));
        else
            CHECK(r.f1 == 0.0);
        // harmonic-mean identity stated directly
        if (r.f1_defined)
            CHECK(r.f1 * (r.precision + r.recall_positive) ==
                  doctest::Approx(2 * r.precision * r.recall_positive));
    }
}

namespace {

Corpus two_group_corpus() {
    Corpus c;
    for (int i = 0; i < 10; ++i) {
        Note n;
        n.note_id = "n" + std::to_string(i);
        n.patient_id = "p" + std::to_string(i);
        n.category = "Physician";
        n.group = i < 6 ? "white" : "black";
        n.label = i % 2;
        n.window_hours = 1;
        n.text = "body";
        c.notes.push_back(n);
    }
    return c;
}

std::vector<Prediction> predictions_for(const Corpus& c) {
    std::vector<Prediction> preds;
    int k = 0;
    for (const auto& n : c.notes) {
        Prediction p;
        p.note_id = n.note_id;
        p.label = n.label;
        p.group = n.group;
        p.patient_id = n.patient_id;
        p.probability = (k % 3 == 0) ? 0.9 : 0.2;
        p.at_risk = p.probability > 0.5;
        preds.push_back(p);
        ++k;
    }
    return preds;
}

}  // namespace

TEST_CASE("group_slice partitions the confusion counts") {
    Corpus c = two_group_corpus();
    auto preds = predictions_for(c);

    ConfusionCounts whole = confusion_from(preds);
    ConfusionCounts white = group_slice(preds, c, "white");
    ConfusionCounts black = group_slice(preds, c, "black");
    CHECK(white + black == whole);

    SUBCASE("single-group corpus slice equals full counts") {
        Corpus mono = c;
        for (auto& n : mono.notes) n.group = "white";
        auto mono_preds = predictions_for(mono);
        CHECK(group_slice(mono_preds, mono, "white") == confusion_from(mono_preds));
    }

    SUBCASE("unknown group lists the known ones") {
        CHECK_THROWS_WITH_AS(group_slice(preds, c, "martian"), doctest::Contains("white"),
                             std::invalid_argument);
    }
}

TEST_CASE("racial_gap is a signed percentage-point difference") {
    MetricsReport white, black;
    white.f1 = 0.6411;
    black.f1 = 0.6114;
    MetricGaps gap = racial_gap(white, black);
    CHECK(gap.f1 == doctest::Approx(-2.97));

    SUBCASE("identical reports give zero") {
        MetricGaps zero = racial_gap(white, white);
        CHECK(zero.f1 == doctest::Approx(0.0));
        CHECK(zero.accuracy == doctest::Approx(0.0));
    }
    SUBCASE("antisymmetry") {
        Rng rng(8);
        for (int t = 0; t < 100; ++t) {
            MetricsReport a, b;
            a.accuracy = rng.uniform01();
            a.precision = rng.uniform01();
            a.recall_macro = rng.uniform01();
            a.recall_positive = rng.uniform01();
            a.f1 = rng.uniform01();
            b.accuracy = rng.uniform01();
            b.precision = rng.uniform01();
            b.recall_macro = rng.uniform01();
            b.recall_positive = rng.uniform01();
            b.f1 = rng.uniform01();
            MetricGaps ab = racial_gap(a, b), ba = racial_gap(b, a);
            CHECK(ab.f1 == doctest::Approx(-ba.f1));
            CHECK(ab.recall_positive == doctest::Approx(-ba.recall_positive));
        }
    }
}

TEST_CASE("patient-level aggregation takes the max probability") {
    std::vector<Prediction> preds;
    preds.push_back({"n1", 0.3, false, 1, "white", "p1"});
    preds.push_back({"n2", 0.7, true, 1, "white", "p1"});
    preds.push_back({"n3", 0.1, false, 0, "black", "p2"});
    auto agg = aggregate_by_patient(preds);
    REQUIRE(agg.size() == 2);
    CHECK(agg[0].probability == doctest::Approx(0.7));
    CHECK(agg[0].at_risk);
    CHECK(agg[0].label == 1);
    CHECK(agg[1].probability == doctest::Approx(0.1));
}
