#include "evscout/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace evscout;

namespace {

// a/b as an exact rational compared against a double that should be the
// correctly rounded quotient.
bool equals_ratio(double got, std::int64_t a, std::int64_t b) {
    if (b == 0) return got == 0.0;
    return got == static_cast<double>(a) / static_cast<double>(b);
}

}  // namespace

TEST_CASE("worked example") {
    const Metrics m = compute_metrics({.tp = 8, .tn = 9, .fp = 1, .fn = 2});
    CHECK(m.precision == doctest::Approx(8.0 / 9.0));
    CHECK(m.recall == 0.8);
    CHECK(m.specificity == 0.9);
    CHECK(m.f1 == doctest::Approx(0.842105).epsilon(1e-6));
    CHECK(m.g_mean == doctest::Approx(0.848528).epsilon(1e-6));
}

TEST_CASE("zero denominators") {
    const Metrics m = compute_metrics({.tp = 0, .tn = 5, .fp = 0, .fn = 5});
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
    CHECK(m.g_mean == 0.0);
    CHECK(m.specificity == 1.0);
}

TEST_CASE("invalid counts") {
    CHECK_THROWS_AS(compute_metrics({}), Error);
    CHECK_THROWS_AS(compute_metrics({.tp = -1, .tn = 2, .fp = 0, .fn = 0}), Error);
}

TEST_CASE("exhaustive grid of small confusion counts") {
    int cases = 0;
    for (int tp = 0; tp <= 5; ++tp)
        for (int tn = 0; tn <= 5; ++tn)
            for (int fp = 0; fp <= 5; ++fp)
                for (int fn = 0; fn <= 5; ++fn) {
                    if (tp + tn + fp + fn == 0) continue;
                    const Metrics m = compute_metrics({.tp = tp, .tn = tn, .fp = fp, .fn = fn});
                    CHECK(equals_ratio(m.precision, tp, tp + fp));
                    CHECK(equals_ratio(m.recall, tp, tp + fn));
                    CHECK(equals_ratio(m.specificity, tn, fp + tn));
                    // 2PR/(P+R) with P = tp/(tp+fp), R = tp/(tp+fn) reduces to
                    // 2tp/(2tp+fp+fn) whenever P + R > 0.
                    CHECK(equals_ratio(m.f1, 2 * tp, 2 * tp + fp + fn));
                    const double ar = (tn + fp > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0) *
                                      (tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0);
                    CHECK(m.g_mean == std::sqrt(ar));
                    for (double v : {m.precision, m.recall, m.specificity, m.f1, m.g_mean}) {
                        CHECK(v >= 0.0);
                        CHECK(v <= 1.0);
                    }
                    ++cases;
                }
    CHECK(cases == 1295);
}

TEST_CASE("tally of ten labelled predictions") {
    LabelVector truth(10), pred(10);
    truth << 1, 1, 1, 1, 0, 0, 0, 0, 0, 1;
    pred << 1, 0, 1, 1, 0, 1, 0, 0, 1, 1;
    const Confusion c = tally(truth, pred);
    CHECK(c.tp == 4);
    CHECK(c.fn == 1);
    CHECK(c.fp == 2);
    CHECK(c.tn == 3);
    CHECK_THROWS_AS(tally(truth, LabelVector(3)), Error);
}
