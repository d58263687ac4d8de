#include "metrics/metrics.hpp"

#include <cmath>

#include "doctest.h"

using namespace dreampast;

TEST_CASE("metrics: iou on a hand-checked confusion matrix") {
    // rows = gt, cols = pred
    ConfusionMatrix cm(2);
    cm.add(0, 0, 1);
    cm.add(1, 0, 1);
    cm.add(1, 1, 2);

    auto s = iou_scores(cm);
    REQUIRE(s.size() == 2);
    CHECK(s[0].valid);
    CHECK(s[0].iou == doctest::Approx(1.0 / 2.0));  // TP 1, FP 1, FN 0
    CHECK(s[1].valid);
    CHECK(s[1].iou == doctest::Approx(2.0 / 3.0));  // TP 2, FP 0, FN 1
    CHECK(cm.total() == 4);
}

TEST_CASE("metrics: absent classes are invalid and excluded from means") {
    ConfusionMatrix cm(3);
    cm.add(0, 0, 4);
    cm.add(0, 1, 1);
    cm.add(1, 1, 5);
    // class 2 never appears in gt or pred

    auto s = iou_scores(cm);
    CHECK_FALSE(s[2].valid);
    CHECK(s[2].iou == 0.0);

    double m = mean_iou(s, {0, 1, 2});
    CHECK(m == doctest::Approx((4.0 / 5.0 + 5.0 / 6.0) / 2.0));

    // a group with no valid member scores 0, not NaN
    CHECK(mean_iou(s, {2}) == 0.0);
    CHECK(std::isfinite(mean_iou(s, {2})));
}

TEST_CASE("metrics: merge adds counts elementwise") {
    ConfusionMatrix a(2), b(2);
    a.add(0, 0, 3);
    a.add(1, 0, 1);
    b.add(0, 0, 2);
    b.add(0, 1, 5);
    a.merge(b);
    CHECK(a.at(0, 0) == 5);
    CHECK(a.at(0, 1) == 5);
    CHECK(a.at(1, 0) == 1);
    CHECK(a.at(1, 1) == 0);
    CHECK(a.total() == 11);
}

TEST_CASE("metrics: harmonic mean of base and novel") {
    CHECK(hiou(0.0, 0.0) == 0.0);
    CHECK(hiou(0.5, 0.0) == 0.0);
    CHECK(hiou(0.4, 0.4) == doctest::Approx(0.4));

    // published operating points: (77.31, 36.59) -> 49.67 and (68.10, 55.30) -> 61.04
    CHECK(std::abs(hiou(0.7731, 0.3659) * 100.0 - 49.67) <= 0.01);
    CHECK(std::abs(hiou(0.6810, 0.5530) * 100.0 - 61.04) <= 0.01);
}

TEST_CASE("metrics: record assembly groups channels and maps class ids") {
    // channels: 0 = bg, 1 -> class 3 (base), 2 -> class 7 (novel)
    ConfusionMatrix cm(3);
    cm.add(0, 0, 10);
    cm.add(0, 1, 2);
    cm.add(1, 1, 6);
    cm.add(1, 0, 2);
    cm.add(2, 2, 2);
    cm.add(2, 1, 2);

    MetricsRecord r = make_record(4, cm, {0, 3, 7}, {1}, {2});
    CHECK(r.step == 4);
    CHECK(r.pixels == 24);
    REQUIRE(r.per_class_iou.size() == 3);
    CHECK(r.per_class_iou.at(0) == doctest::Approx(10.0 / 14.0));
    CHECK(r.per_class_iou.at(3) == doctest::Approx(0.5));
    CHECK(r.per_class_iou.at(7) == doctest::Approx(0.5));
    // background joins the base group by default
    CHECK(r.miou_base == doctest::Approx((10.0 / 14.0 + 0.5) / 2.0));
    CHECK(r.miou_novel == doctest::Approx(0.5));
    CHECK(r.miou_all == doctest::Approx((10.0 / 14.0 + 0.5 + 0.5) / 3.0));
    CHECK(r.hiou == doctest::Approx(17.0 / 31.0));

    // without background in base, the base group is class 3 alone
    MetricsRecord r2 = make_record(4, cm, {0, 3, 7}, {1}, {2}, 0, false);
    CHECK(r2.miou_base == doctest::Approx(0.5));
}

TEST_CASE("metrics: record survives a json round trip") {
    ConfusionMatrix cm(2);
    cm.add(0, 0, 7);
    cm.add(1, 1, 3);
    cm.add(1, 0, 1);
    MetricsRecord r = make_record(2, cm, {0, 5}, {1}, {});

    MetricsRecord back = MetricsRecord::from_json(r.to_json());
    CHECK(back.step == r.step);
    CHECK(back.pixels == r.pixels);
    CHECK(back.miou_base == r.miou_base);
    CHECK(back.miou_novel == r.miou_novel);
    CHECK(back.miou_all == r.miou_all);
    CHECK(back.hiou == r.hiou);
    CHECK(back.per_class_iou == r.per_class_iou);
}
