#include "tcvads/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tcvads/errors.hpp"

namespace tcvads {

ConfusionCounts confusion_at(const std::vector<ScoredItem>& items, double threshold) {
    ConfusionCounts c;
    for (const auto& it : items) {
        bool pred_pos = it.score >= threshold;
        if (pred_pos && it.label == 1) ++c.tp;
        else if (pred_pos && it.label == 0) ++c.fp;
        else if (!pred_pos && it.label == 1) ++c.fn;
        else ++c.tn;
    }
    return c;
}

std::pair<double, double> precision_recall(const ConfusionCounts& c) {
    double precision = (c.tp + c.fp == 0)
                           ? 1.0
                           : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    double recall = (c.tp + c.fn == 0)
                        ? 0.0
                        : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return {precision, recall};
}

namespace {

// Items sorted by score descending; tied scores collapse into one threshold.
// Returns per distinct threshold the cumulative (tp, predicted-positive) counts.
struct SweepPoint {
    size_t tp = 0;
    size_t pred_pos = 0;
};

std::vector<SweepPoint> threshold_sweep(std::vector<ScoredItem> items) {
    std::stable_sort(items.begin(), items.end(),
                     [](const ScoredItem& a, const ScoredItem& b) { return a.score > b.score; });
    std::vector<SweepPoint> points;
    size_t tp = 0, seen = 0;
    size_t i = 0;
    while (i < items.size()) {
        double s = items[i].score;
        while (i < items.size() && items[i].score == s) {
            tp += static_cast<size_t>(items[i].label == 1);
            ++seen;
            ++i;
        }
        points.push_back({tp, seen});
    }
    return points;
}

size_t count_positives(const std::vector<ScoredItem>& items) {
    size_t pos = 0;
    for (const auto& it : items) pos += static_cast<size_t>(it.label == 1);
    return pos;
}

}  // namespace

double average_precision(const std::vector<ScoredItem>& items) {
    size_t pos = count_positives(items);
    if (pos == 0) throw validation_error("average_precision: no positive labels");
    auto points = threshold_sweep(items);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (const auto& pt : points) {
        double recall = static_cast<double>(pt.tp) / static_cast<double>(pos);
        double precision = static_cast<double>(pt.tp) / static_cast<double>(pt.pred_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

double roc_auc(const std::vector<ScoredItem>& items) {
    size_t pos = count_positives(items);
    size_t neg = items.size() - pos;
    if (pos == 0 || neg == 0) throw validation_error("roc_auc: needs both labels present");
    auto points = threshold_sweep(items);
    double auc = 0.0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    for (const auto& pt : points) {
        double tpr = static_cast<double>(pt.tp) / static_cast<double>(pos);
        double fpr = static_cast<double>(pt.pred_pos - pt.tp) / static_cast<double>(neg);
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    return auc;
}

double ano_auc(const std::vector<ScoredItem>& items, const std::string& normal_class,
               bool restrict_population) {
    if (!restrict_population) return roc_auc(items);
    // Keep anomalous frames as positives and only normal-video (or untagged)
    // frames as negatives; normal frames inside anomalous videos are dropped.
    std::vector<ScoredItem> kept;
    kept.reserve(items.size());
    for (const auto& it : items) {
        if (it.label == 1) {
            kept.push_back(it);
        } else if (!it.video_class.has_value() || *it.video_class == normal_class) {
            kept.push_back(it);
        }
    }
    size_t pos = count_positives(kept);
    if (pos == 0 || pos == kept.size())
        throw validation_error("ano_auc: restricted set has a single class");
    return roc_auc(kept);
}

std::vector<TemporalSegment> segments_from_scores(const std::vector<double>& frame_scores,
                                                  const std::vector<std::string>& frame_classes,
                                                  double threshold) {
    if (frame_scores.size() != frame_classes.size())
        throw validation_error("segments_from_scores: scores/classes size mismatch");
    std::vector<TemporalSegment> segs;
    size_t n = frame_scores.size();
    size_t i = 0;
    while (i < n) {
        if (frame_scores[i] < threshold) {
            ++i;
            continue;
        }
        size_t start = i;
        double acc = 0.0;
        while (i < n && frame_scores[i] >= threshold && frame_classes[i] == frame_classes[start]) {
            acc += frame_scores[i];
            ++i;
        }
        segs.push_back({start, i, frame_classes[start], acc / static_cast<double>(i - start)});
    }
    return segs;
}

double segment_iou(const TemporalSegment& a, const TemporalSegment& b) {
    size_t lo = std::max(a.start, b.start);
    size_t hi = std::min(a.end, b.end);
    size_t inter = hi > lo ? hi - lo : 0;
    size_t uni = (a.end - a.start) + (b.end - b.start) - inter;
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double detection_ap(std::vector<TemporalSegment> preds, const std::vector<TemporalSegment>& gt,
                    double iou_threshold) {
    if (gt.empty()) return 0.0;
    std::stable_sort(preds.begin(), preds.end(), [](const TemporalSegment& a,
                                                    const TemporalSegment& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.start < b.start;
    });
    std::vector<bool> gt_used(gt.size(), false);
    std::vector<int> matched(preds.size(), 0);
    for (size_t p = 0; p < preds.size(); ++p) {
        double best_iou = 0.0;
        size_t best_g = gt.size();
        for (size_t g = 0; g < gt.size(); ++g) {
            if (gt_used[g]) continue;
            double iou = segment_iou(preds[p], gt[g]);
            // Inclusive threshold; IoU ties resolve to the earlier-starting gt.
            if (iou >= iou_threshold && iou > best_iou) {
                best_iou = iou;
                best_g = g;
            }
        }
        if (best_g < gt.size()) {
            gt_used[best_g] = true;
            matched[p] = 1;
        }
    }
    // Step-sum AP over descending score thresholds with recall against |gt|.
    double ap = 0.0;
    double prev_recall = 0.0;
    size_t tp = 0, seen = 0;
    size_t i = 0;
    while (i < preds.size()) {
        double s = preds[i].score;
        while (i < preds.size() && preds[i].score == s) {
            tp += static_cast<size_t>(matched[i]);
            ++seen;
            ++i;
        }
        double recall = static_cast<double>(tp) / static_cast<double>(gt.size());
        double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

std::map<double, double> map_at_iou(const std::vector<TemporalSegment>& preds,
                                    const std::vector<TemporalSegment>& gt,
                                    const std::vector<double>& iou_thresholds) {
    // Classes are those present in ground truth; stray predicted classes have
    // no ground truth to recall and are skipped.
    std::vector<std::string> classes;
    for (const auto& g : gt)
        if (std::find(classes.begin(), classes.end(), g.class_label) == classes.end())
            classes.push_back(g.class_label);
    std::sort(classes.begin(), classes.end());

    std::map<double, double> out;
    for (double thr : iou_thresholds) {
        if (classes.empty()) {
            out[thr] = 0.0;
            continue;
        }
        double acc = 0.0;
        for (const auto& cls : classes) {
            std::vector<TemporalSegment> p_cls, g_cls;
            for (const auto& p : preds)
                if (p.class_label == cls) p_cls.push_back(p);
            for (const auto& g : gt)
                if (g.class_label == cls) g_cls.push_back(g);
            acc += detection_ap(p_cls, g_cls, thr);
        }
        out[thr] = acc / static_cast<double>(classes.size());
    }
    return out;
}

}  // namespace tcvads
