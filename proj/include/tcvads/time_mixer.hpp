#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tcvads/matrix.hpp"
#include "tcvads/numerics.hpp"
#include "tcvads/rng.hpp"

namespace tcvads {

// Recurrent temporal mixer over frame features. Each block projects frames to
// key/value streams, folds them through an exponentially decaying memory
// vector, and layer-normalizes the gated output. Cost is one pass over the
// sequence: O(n * d) for the recurrence itself.

struct TimeMixerParams {
    size_t dim = 0;
    Matrix w_k;                         // d x d key projection
    Matrix w_v;                         // d x d value projection
    std::vector<double> decay_logits;   // lambda = sigmoid(logit), per channel
    std::vector<double> gamma;          // layer norm scale
    std::vector<double> beta;           // layer norm shift
    double eps = 1e-5;

    // Zero projections, lambda = 0.5, gamma = 1, beta = 0.
    static TimeMixerParams make(size_t dim);
    // Gaussian projections of the given scale, small random decay logits.
    static TimeMixerParams seeded(size_t dim, Rng& rng, double scale);

    std::vector<double> lambda() const;
    size_t param_count() const;
    void validate() const;
};

struct KvPair {
    Matrix k;
    Matrix v;
};

// K = F * W_K^T, V = F * W_V^T. Row partitions only split work; the result is
// bit-identical for any partition count.
KvPair kv_project(const Matrix& features, const TimeMixerParams& params, int partitions = 1);

// Decaying memory carried between chunks of one sequence.
struct TimeMixState {
    std::vector<double> r;
};

struct TimeMixResult {
    Matrix t;               // sigmoid(k_t * v_t + R_t), n x d
    Matrix r;               // memory rows R_t as seen by step t, n x d
    TimeMixState final_state;
};

// R_1 = initial state (zero if null); R_t = lambda * R_{t-1} + k_{t-1} * v_{t-1};
// T_t = sigmoid(k_t * v_t + R_t). All products elementwise.
TimeMixResult time_mix(const Matrix& k, const Matrix& v, const TimeMixerParams& params,
                       const TimeMixState* initial = nullptr);

// Same arithmetic as time_mix, processed in windows of chunk_length rows with
// the memory state carried across windows. chunk_length 0 means one window.
TimeMixResult time_mix_chunked(const Matrix& k, const Matrix& v, const TimeMixerParams& params,
                               size_t chunk_length);

struct TimeMixGrads {
    Matrix dk;
    Matrix dv;
    std::vector<double> d_decay_logits;
};

// Reverse-time recurrence: rho_t = g_t + lambda * rho_{t+1} accumulates every
// path through the memory, from which the decay and per-step gradients follow.
TimeMixGrads time_mix_backward(const Matrix& k, const Matrix& v, const TimeMixerParams& params,
                               const TimeMixResult& fwd, const Matrix& grad_t);

struct BlockCache {
    KvPair kv;
    TimeMixResult mix;
    std::vector<LayerNormResult> ln;    // one per row
};

// y = x + LayerNorm(time_mix(kv_project(x))). Pass a cache to keep the
// intermediates needed by block_backward.
Matrix block_forward(const Matrix& x, const TimeMixerParams& params, int partitions = 1,
                     size_t chunk_length = 0, BlockCache* cache = nullptr);

struct BlockGrads {
    Matrix d_w_k;
    Matrix d_w_v;
    std::vector<double> d_decay_logits;
    std::vector<double> d_gamma;
    std::vector<double> d_beta;

    static BlockGrads zeros(size_t dim);
    void add_scaled(const BlockGrads& o, double s);
};

// Returns dL/dx and accumulates parameter gradients into grads.
Matrix block_backward(const Matrix& x, const TimeMixerParams& params, const BlockCache& cache,
                      const Matrix& grad_out, BlockGrads& grads, int partitions = 1);

// Two-block temporal model with a scalar scoring head and top-k MIL pooling.
struct EnhancedRwkv {
    size_t dim = 0;
    std::array<TimeMixerParams, 2> blocks;
    std::vector<double> head_w;
    double head_b = 0.0;
    double topk_fraction = 1.0 / 16.0;

    static EnhancedRwkv make(size_t dim);
    static EnhancedRwkv seeded(size_t dim, uint64_t seed, double scale = 0.2);

    size_t param_count() const;
    void validate() const;

    void save(const std::string& path) const;
    static EnhancedRwkv load(const std::string& path);
};

struct TopkMean {
    std::vector<size_t> selected;   // indices of the averaged scores
    double mean = 0.0;
};

// Mean of the top ceil(fraction * n) scores. Ties resolve to the smaller
// index, so the selection is deterministic; the mean itself is order-free.
TopkMean topk_mean(const std::vector<double>& scores, double fraction);

struct VideoScoreResult {
    std::vector<double> frame_scores;   // sigmoid head outputs, one per frame
    double video_scr = 0.0;             // top-k mean of frame scores
    std::vector<size_t> selected;
};

VideoScoreResult video_score(const EnhancedRwkv& model, const Matrix& features,
                             int partitions = 1, size_t chunk_length = 256);

struct AfedGrads {
    std::array<BlockGrads, 2> blocks;
    std::vector<double> d_head_w;
    double d_head_b = 0.0;

    static AfedGrads zeros(size_t dim);
    void add_scaled(const AfedGrads& o, double s);
};

// BCE(video score, label) for one sequence plus gradients for every
// parameter. The training loop averages these over a minibatch.
double afed_loss_and_grad(const EnhancedRwkv& model, const Matrix& features, int label,
                          AfedGrads& grads, int partitions = 1, size_t chunk_length = 256);

struct LabeledSequence {
    std::string id;
    Matrix features;
    int label = 0;      // 1 anomalous, 0 normal, video level
};

struct TrainConfig {
    double learning_rate = 0.05;
    size_t epochs = 30;
    size_t batch_size = 8;
    uint64_t seed = 7;
    size_t chunk_length = 256;
    double topk_fraction = 1.0 / 16.0;
    int partitions = 1;
};

struct AfedTrainResult {
    EnhancedRwkv model;
    std::vector<double> loss_history;   // mean BCE per epoch
};

// Minibatch SGD on video-level BCE. The dataset must contain both labels.
// Deterministic for a fixed seed.
AfedTrainResult train_afed(const std::vector<LabeledSequence>& dataset, const TrainConfig& cfg);

void write_loss_history_csv(const std::string& path, const std::vector<double>& history);

struct ComplexityPoint {
    size_t size = 0;        // sequence length or channel count, per probe
    double seconds = 0.0;   // median wall time over the repetitions
};

// Times the memory recurrence (the O(n * d) component) at the model's
// dimension for each sequence length.
std::vector<ComplexityPoint> complexity_probe(const EnhancedRwkv& model,
                                              const std::vector<size_t>& lengths,
                                              int repetitions = 7, uint64_t seed = 99);

// Same probe sweeping the channel count at a fixed sequence length.
std::vector<ComplexityPoint> complexity_probe_dims(const std::vector<size_t>& dims, size_t length,
                                                   int repetitions = 7, uint64_t seed = 99);

// Least-squares slope of log(seconds) against log(size).
double loglog_slope(const std::vector<ComplexityPoint>& points);

}  // namespace tcvads
