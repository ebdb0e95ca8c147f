#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcvads/gp_bo.hpp"
#include "tcvads/matrix.hpp"
#include "tcvads/time_mixer.hpp"

namespace tcvads {

// Compact student scorer: three temporal convolutions over the frame axis
// (kernel width 3, same padding, ReLU after the first two), mean pooling,
// and a scalar head. The video logit equals the mean of the frame logits
// because pooling and the head are both linear.
struct QacmStudent {
    size_t dim = 0;      // input feature width
    size_t hidden = 0;   // conv channel count
    Matrix w1;           // hidden x (dim * 3), one row per filter
    Matrix w2;           // hidden x (hidden * 3)
    Matrix w3;           // hidden x (hidden * 3)
    std::vector<double> b1, b2, b3;
    std::vector<double> head_w;
    double head_b = 0.0;

    static QacmStudent make(size_t dim, size_t hidden);
    static QacmStudent seeded(size_t dim, size_t hidden, uint64_t seed, double scale = 0.3);

    size_t param_count() const;
    void validate() const;

    void save(const std::string& path) const;
    static QacmStudent load(const std::string& path);
};

struct StudentForward {
    double logit = 0.0;                 // video logit: mean of frame logits
    std::vector<double> frame_logits;
    // Caches for backward.
    Matrix pre1, act1, pre2, act2, feat;
};

// Requires at least 3 frames (the kernel width).
StudentForward student_forward(const QacmStudent& student, const Matrix& features);

struct StudentGrads {
    Matrix d_w1, d_w2, d_w3;
    std::vector<double> d_b1, d_b2, d_b3, d_head_w;
    double d_head_b = 0.0;

    static StudentGrads zeros(size_t dim, size_t hidden);
};

// Accumulates parameter gradients for dL/d(video logit) = d_logit.
void student_backward(const QacmStudent& student, const Matrix& features,
                      const StudentForward& fwd, double d_logit, StudentGrads& grads);

// BCE on video probabilities; same contract as bce_loss.
double hard_loss(const std::vector<double>& probs, const std::vector<double>& labels);

// hard + lambda * soft.
double total_distill_loss(double hard, double soft, double lambda);

struct DistillConfig {
    double lambda = 0.5;        // soft-loss weight; 0 disables distillation
    size_t epochs = 40;
    double learning_rate = 0.1;
    uint64_t seed = 7;
    size_t batch_size = 8;
    size_t hidden = 16;
    size_t probe_epochs = 5;    // training budget per temperature evaluation
    int partitions = 1;
    size_t chunk_length = 256;  // teacher inference window
    void validate() const;
};

struct StudentTrainResult {
    QacmStudent student;
    std::vector<double> loss_history;   // mean loss per epoch
};

// Plain supervised training on video-level BCE, no teacher involved.
StudentTrainResult train_student_bce(const std::vector<LabeledSequence>& dataset,
                                     const DistillConfig& cfg);

struct DistillResult {
    QacmStudent student;
    double t_opt = 1.0;
    std::vector<BoTraceRow> trace;      // empty when lambda = 0 skips the search
    std::vector<double> loss_history;   // mean total loss per epoch
};

// Scores every video with the frozen teacher, picks the distillation
// temperature by expected-improvement search over short training probes, then
// trains the student on BCE + lambda * KL at that temperature. Deterministic
// for a fixed config.
DistillResult distill(const EnhancedRwkv& teacher, const std::vector<LabeledSequence>& dataset,
                      const DistillConfig& cfg, const BoConfig& bo);

}  // namespace tcvads
