#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support.hpp"
#include "tcvads/errors.hpp"
#include "tcvads/metrics.hpp"
#include "tcvads/rng.hpp"

using namespace tcvads;

namespace {

std::vector<ScoredItem> make_items(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
    std::vector<ScoredItem> items(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        items[i].score = scores[i];
        items[i].label = labels[i];
    }
    return items;
}

// Pairwise rank statistic: fraction of positive/negative pairs ranked
// correctly, ties counted 1/2. Independent of the trapezoid implementation.
double mann_whitney_auc(const std::vector<ScoredItem>& items) {
    double wins = 0.0;
    size_t pairs = 0;
    for (const auto& p : items) {
        if (p.label != 1) continue;
        for (const auto& n : items) {
            if (n.label != 0) continue;
            ++pairs;
            if (p.score > n.score) wins += 1.0;
            else if (p.score == n.score) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// Recomputes AP from scratch with confusion_at at every distinct score.
double brute_force_ap(const std::vector<ScoredItem>& items) {
    std::vector<double> thresholds;
    for (const auto& it : items) thresholds.push_back(it.score);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        auto [precision, recall] = precision_recall(confusion_at(items, t));
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// Maximum-cardinality pred-to-gt assignment subject to IoU >= thr, found by
// exhaustive recursion. Small instances only.
size_t optimal_match_count(const std::vector<TemporalSegment>& preds,
                           const std::vector<TemporalSegment>& gt, double thr, size_t p = 0,
                           std::vector<bool>* used = nullptr) {
    std::vector<bool> local;
    if (!used) {
        local.assign(gt.size(), false);
        used = &local;
    }
    if (p == preds.size()) return 0;
    size_t best = optimal_match_count(preds, gt, thr, p + 1, used);  // leave pred p unmatched
    for (size_t g = 0; g < gt.size(); ++g) {
        if ((*used)[g] || segment_iou(preds[p], gt[g]) < thr) continue;
        (*used)[g] = true;
        best = std::max(best, 1 + optimal_match_count(preds, gt, thr, p + 1, used));
        (*used)[g] = false;
    }
    return best;
}

}  // namespace

TEST_CASE("confusion_at: inclusive threshold") {
    auto items = make_items({0.5, 0.49, 0.51}, {1, 0, 0});
    auto c = confusion_at(items, 0.5);
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 1);
    CHECK(c.fn == 0);
}

TEST_CASE("precision_recall: zero denominators give P=1, R=0") {
    ConfusionCounts none;  // no predictions positive, no positives present
    auto [p, r] = precision_recall(none);
    CHECK(p == 1.0);
    CHECK(r == 0.0);
}

TEST_CASE("average_precision: hand case 0.8333") {
    auto items = make_items({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
    CHECK(average_precision(items) == doctest::Approx(0.5 + 0.5 * (2.0 / 3.0)).epsilon(1e-12));
    CHECK(average_precision(items) == doctest::Approx(0.8333).epsilon(1e-4));
}

TEST_CASE("average_precision: perfect ranking gives 1.0") {
    auto items = make_items({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0});
    CHECK(average_precision(items) == 1.0);
}

TEST_CASE("average_precision: no positives throws") {
    CHECK_THROWS_AS(average_precision(make_items({0.5, 0.2}, {0, 0})), validation_error);
}

TEST_CASE("average_precision: equals exhaustive-threshold brute force exactly") {
    Rng rng(41);
    for (int trial = 0; trial < 60; ++trial) {
        size_t n = 2 + rng.index(60);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool any_pos = false;
        for (size_t i = 0; i < n; ++i) {
            // Quantized scores so ties actually occur.
            scores[i] = static_cast<double>(rng.index(8)) / 8.0;
            labels[i] = rng.index(2) ? 1 : 0;
            any_pos = any_pos || labels[i] == 1;
        }
        if (!any_pos) labels[0] = 1;
        auto items = make_items(scores, labels);
        CHECK(average_precision(items) == brute_force_ap(items));
    }
}

TEST_CASE("roc_auc: hand case 0.75") {
    auto items = make_items({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
    CHECK(roc_auc(items) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("roc_auc: single-class input throws") {
    CHECK_THROWS_AS(roc_auc(make_items({0.5, 0.2}, {1, 1})), validation_error);
    CHECK_THROWS_AS(roc_auc(make_items({0.5, 0.2}, {0, 0})), validation_error);
}

TEST_CASE("roc_auc: matches pairwise rank statistic with ties within 1e-12") {
    Rng rng(43);
    for (int trial = 0; trial < 80; ++trial) {
        size_t n = 2 + rng.index(199);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (size_t i = 0; i < n; ++i) {
            scores[i] = trial % 2 == 0 ? static_cast<double>(rng.index(6)) / 6.0 : rng.uniform();
            labels[i] = rng.index(2) ? 1 : 0;
        }
        labels[0] = 1;
        labels[n - 1] = 0;
        auto items = make_items(scores, labels);
        CHECK(std::fabs(roc_auc(items) - mann_whitney_auc(items)) <= 1e-12);
    }
}

TEST_CASE("ano_auc: hand case 2 of 4 pairs") {
    auto items = make_items({0.8, 0.4, 0.6, 0.2}, {1, 0, 0, 1});
    CHECK(ano_auc(items) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ano_auc: drops normal frames of anomalous videos from the negatives") {
    std::vector<ScoredItem> items;
    // Anomalous video "fights": two anomalous frames, one normal frame whose
    // high score would hurt an unrestricted AUC.
    items.push_back({0.9, 1, "fights", std::nullopt});
    items.push_back({0.8, 1, "fights", std::nullopt});
    items.push_back({0.95, 0, "fights", std::nullopt});
    // Normal video frames.
    items.push_back({0.1, 0, "normal", std::nullopt});
    items.push_back({0.2, 0, "normal", std::nullopt});

    CHECK(ano_auc(items, "normal", true) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ano_auc(items, "normal", false) == roc_auc(items));
    CHECK(ano_auc(items, "normal", false) < 1.0);
}

TEST_CASE("ano_auc: equals roc_auc when the restriction drops nothing") {
    Rng rng(47);
    std::vector<ScoredItem> items;
    for (int i = 0; i < 40; ++i) {
        ScoredItem it;
        it.score = rng.uniform();
        it.label = rng.index(2) ? 1 : 0;
        it.video_class = it.label == 1 ? "explosions" : "normal";
        items.push_back(it);
    }
    items[0].label = 1;
    items[0].video_class = "explosions";
    items[1].label = 0;
    items[1].video_class = "normal";
    CHECK(ano_auc(items) == roc_auc(items));
}

TEST_CASE("ano_auc: single-class restricted set throws") {
    std::vector<ScoredItem> items;
    items.push_back({0.9, 1, "fights", std::nullopt});
    items.push_back({0.2, 0, "fights", std::nullopt});  // dropped by restriction
    CHECK_THROWS_AS(ano_auc(items), validation_error);
}

TEST_CASE("segments_from_scores: runs split on threshold and class changes") {
    std::vector<double> scores{0.9, 0.8, 0.2, 0.7};
    std::vector<std::string> classes{"a", "a", "a", "b"};
    auto segs = segments_from_scores(scores, classes, 0.5);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].start == 0);
    CHECK(segs[0].end == 2);
    CHECK(segs[0].class_label == "a");
    CHECK(segs[0].score == doctest::Approx(0.85));
    CHECK(segs[1].start == 3);
    CHECK(segs[1].end == 4);
    CHECK(segs[1].class_label == "b");

    std::vector<std::string> split_classes{"a", "b", "b", "b"};
    auto segs2 = segments_from_scores(scores, split_classes, 0.5);
    REQUIRE(segs2.size() == 3);
    CHECK(segs2[0].end == 1);
    CHECK(segs2[1].start == 1);
    CHECK(segs2[1].end == 2);
    CHECK(segs2[2].start == 3);
}

TEST_CASE("segment_iou: inclusive at the matching threshold") {
    TemporalSegment pred{0, 5, "a", 0.9};
    TemporalSegment gt{0, 10, "a", 0.0};
    CHECK(segment_iou(pred, gt) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(detection_ap({pred}, {gt}, 0.5) == 1.0);
    CHECK(detection_ap({pred}, {gt}, 0.6) == 0.0);
}

TEST_CASE("detection_ap: missed ground truth caps recall") {
    TemporalSegment pred{0, 10, "a", 0.9};
    std::vector<TemporalSegment> gt{{0, 10, "a", 0.0}, {20, 30, "a", 0.0}};
    // One of two ground-truth segments matched at precision 1.
    CHECK(detection_ap({pred}, gt, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("map_at_iou: greedy matching achieves the optimal match count on jittered runs") {
    Rng rng(53);
    const std::vector<std::string> classes{"fights", "riots"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TemporalSegment> gt, preds;
        size_t cursor = 0;
        size_t n_gt = 1 + rng.index(4);
        for (size_t g = 0; g < n_gt; ++g) {
            size_t start = cursor + 5 + rng.index(5);
            size_t len = 6 + rng.index(8);
            gt.push_back({start, start + len, classes[rng.index(2)], 0.0});
            cursor = start + len;
        }
        for (const auto& g : gt) {
            if (rng.uniform() < 0.2) continue;  // some ground truth goes undetected
            long js = static_cast<long>(rng.index(5)) - 2;
            long je = static_cast<long>(rng.index(5)) - 2;
            long s = std::max<long>(0, static_cast<long>(g.start) + js);
            long e = std::max<long>(s + 1, static_cast<long>(g.end) + je);
            preds.push_back({static_cast<size_t>(s), static_cast<size_t>(e), g.class_label,
                             0.5 + 0.5 * rng.uniform()});
        }
        for (double thr : {0.1, 0.3, 0.5}) {
            for (const auto& cls : classes) {
                std::vector<TemporalSegment> p_cls, g_cls;
                for (const auto& p : preds)
                    if (p.class_label == cls) p_cls.push_back(p);
                for (const auto& g : gt)
                    if (g.class_label == cls) g_cls.push_back(g);
                if (g_cls.empty()) continue;
                // Count greedy matches by replaying detection_ap's protocol.
                std::vector<TemporalSegment> sorted = p_cls;
                std::stable_sort(sorted.begin(), sorted.end(),
                                 [](const TemporalSegment& a, const TemporalSegment& b) {
                                     if (a.score != b.score) return a.score > b.score;
                                     return a.start < b.start;
                                 });
                std::vector<bool> used(g_cls.size(), false);
                size_t greedy = 0;
                for (const auto& p : sorted) {
                    double best_iou = 0.0;
                    size_t best_g = g_cls.size();
                    for (size_t g = 0; g < g_cls.size(); ++g) {
                        if (used[g]) continue;
                        double iou = segment_iou(p, g_cls[g]);
                        if (iou >= thr && iou > best_iou) {
                            best_iou = iou;
                            best_g = g;
                        }
                    }
                    if (best_g < g_cls.size()) {
                        used[best_g] = true;
                        ++greedy;
                    }
                }
                CHECK(greedy == optimal_match_count(p_cls, g_cls, thr));
            }
        }
    }
}

TEST_CASE("map_at_iou: exact detections give 1.0 at every threshold") {
    std::vector<TemporalSegment> gt{{0, 10, "fights", 0.0}, {20, 25, "riots", 0.0}};
    std::vector<TemporalSegment> preds{{0, 10, "fights", 0.9}, {20, 25, "riots", 0.8}};
    auto m = map_at_iou(preds, gt);
    REQUIRE(m.size() == 5);
    for (const auto& [thr, v] : m) CHECK(v == 1.0);
}

TEST_CASE("map_at_iou: empty ground truth yields zeros") {
    auto m = map_at_iou({{0, 5, "fights", 0.9}}, {});
    for (const auto& [thr, v] : m) CHECK(v == 0.0);
}

TEST_CASE("map_at_iou: class missing from predictions scores zero for that class") {
    std::vector<TemporalSegment> gt{{0, 10, "fights", 0.0}, {20, 25, "riots", 0.0}};
    std::vector<TemporalSegment> preds{{0, 10, "fights", 0.9}};
    auto m = map_at_iou(preds, gt, {0.5});
    CHECK(m[0.5] == doctest::Approx(0.5).epsilon(1e-12));
}
