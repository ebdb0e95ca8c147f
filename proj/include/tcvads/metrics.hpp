#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tcvads {

// One scored unit (video or frame). `video_class` tags which video population
// the item came from; `span` is an optional frame range for segment work.
struct ScoredItem {
    double score = 0.0;              // P in [0, 1]
    int label = 0;                   // delta in {0, 1}
    std::optional<std::string> video_class;
    std::optional<std::pair<size_t, size_t>> span;
};

struct ConfusionCounts {
    size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Inclusive threshold: score >= threshold predicts positive.
ConfusionCounts confusion_at(const std::vector<ScoredItem>& items, double threshold);

// Precision TP/(TP+FP) and recall TP/(TP+FN). A zero denominator yields
// precision 1 and recall 0.
std::pair<double, double> precision_recall(const ConfusionCounts& c);

// Step-sum average precision over descending distinct-score thresholds:
// sum of (R_j - R_{j-1}) * P_j. Tied scores share one threshold. Throws if
// no item is labeled positive.
double average_precision(const std::vector<ScoredItem>& items);

// Trapezoidal ROC AUC over the distinct-score operating points; equals the
// pairwise rank statistic with ties counted 1/2. Throws unless both labels
// are present.
double roc_auc(const std::vector<ScoredItem>& items);

// AUC with the comparison population restricted: positives are anomalous
// frames, negatives only frames whose video class is the normal class (items
// without a video class stay in). `restrict_population` false degrades to
// roc_auc over all items.
double ano_auc(const std::vector<ScoredItem>& items, const std::string& normal_class = "normal",
               bool restrict_population = true);

struct TemporalSegment {
    size_t start = 0;  // inclusive
    size_t end = 0;    // exclusive
    std::string class_label;
    double score = 0.0;
};

// Maximal runs of frames with score >= threshold and equal class label.
// Segment score is the mean frame score over the run.
std::vector<TemporalSegment> segments_from_scores(const std::vector<double>& frame_scores,
                                                  const std::vector<std::string>& frame_classes,
                                                  double threshold);

// Interval IoU on [start, end) spans.
double segment_iou(const TemporalSegment& a, const TemporalSegment& b);

// Detection AP at one IoU threshold for one class: predictions sorted by
// score (ties: earlier start first) are matched greedily, each to the
// unmatched ground-truth segment of highest IoU >= iou_threshold. Recall
// counts against the number of ground-truth segments.
double detection_ap(std::vector<TemporalSegment> preds, const std::vector<TemporalSegment>& gt,
                    double iou_threshold);

// Mean over classes (classes present in ground truth) of detection_ap, at
// each IoU threshold. Returns threshold -> mAP; key "avg" handled by caller.
std::map<double, double> map_at_iou(const std::vector<TemporalSegment>& preds,
                                    const std::vector<TemporalSegment>& gt,
                                    const std::vector<double>& iou_thresholds = {0.1, 0.2, 0.3,
                                                                                 0.4, 0.5});

}  // namespace tcvads
