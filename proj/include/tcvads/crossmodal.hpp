#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tcvads/class_set.hpp"
#include "tcvads/matrix.hpp"
#include "tcvads/rng.hpp"
#include "tcvads/time_mixer.hpp"

namespace tcvads {

// Fine-grained stage: each class gets a token triplet [caption | label |
// learnable prompt]. A frozen embedding provider turns caption and label
// tokens into vectors, the learnable rows are model parameters, and two
// headless mixer stacks aggregate token and frame sequences into single
// features that meet in a cosine similarity matrix.

// Token triplet for one class. Learnable tokens are counted here; their
// vectors live in the model.
struct PromptTriplet {
    std::vector<uint32_t> clip_tokens;
    std::vector<uint32_t> label_tokens;
    size_t learnable_count = 40;
    size_t max_total = 77;

    size_t size() const { return clip_tokens.size() + label_tokens.size() + learnable_count; }
};

// Caps the triplet at max_total by truncating the caption from its tail.
// Label and learnable segments are never cut; if they alone exceed the cap
// the configuration is rejected.
PromptTriplet assemble_prompt(std::vector<uint32_t> clip_tokens,
                              std::vector<uint32_t> label_tokens, size_t learnable_count = 40,
                              size_t max_total = 77);

// Deterministic token ids: one id per whitespace-separated word (FNV-1a over
// the word's bytes). No vocabulary file is needed.
std::vector<uint32_t> whitespace_token_ids(const std::string& text);

// Tokens of the caption template "a video of <label>".
std::vector<uint32_t> caption_token_ids(const std::string& label);

// Frozen token-embedding source. Synthetic mode hashes (seed, token) into a
// Gaussian vector; file-backed mode looks a token id up as a row of a
// preloaded table.
struct EmbeddingProvider {
    size_t dim = 0;
    bool file_backed = false;
    uint64_t seed = 0;
    Matrix table;

    static EmbeddingProvider synthetic(size_t dim, uint64_t seed);
    static EmbeddingProvider from_table(Matrix table);
    // Reads the table from a feature container file.
    static EmbeddingProvider from_file(const std::string& path);

    std::vector<double> embed(uint32_t token) const;
};

// Rows: provider embeddings for caption and label tokens, then the learnable
// rows verbatim. learnable.rows must equal triplet.learnable_count.
Matrix encode_text(const EmbeddingProvider& provider, const PromptTriplet& triplet,
                   const Matrix& learnable);

// Two mixer blocks applied in sequence, no scoring head.
struct MixerStack {
    size_t dim = 0;
    std::array<TimeMixerParams, 2> blocks;

    static MixerStack make(size_t dim);
    static MixerStack seeded(size_t dim, Rng& rng, double scale = 0.2);

    size_t param_count() const;
    double sq_norm() const;
    void validate(const char* what) const;
};

struct StackCache {
    Matrix h1;  // input to the second block
    std::array<BlockCache, 2> blocks;
};

// Mean over rows of blocks[1](blocks[0](x)): one d-vector per sequence.
std::vector<double> mixer_feature(const MixerStack& mixer, const Matrix& x, int partitions = 1,
                                  size_t chunk_length = 0, StackCache* cache = nullptr);

struct StackGrads {
    std::array<BlockGrads, 2> blocks;

    static StackGrads zeros(size_t dim);
    void add_scaled(const StackGrads& o, double s);
};

// Backward through the mean pool and both blocks; returns dL/dx and
// accumulates parameter gradients into grads.
Matrix mixer_feature_backward(const MixerStack& mixer, const Matrix& x, const StackCache& cache,
                              const std::vector<double>& d_feat, StackGrads& grads,
                              int partitions = 1);

// M[i][j] = cosine(video_i, text_j). Zero-norm vectors are rejected.
Matrix similarity_matrix(const std::vector<std::vector<double>>& video_feats,
                         const std::vector<std::vector<double>>& text_feats);

// Class probabilities from one similarity row: softmax(row / tau).
std::vector<double> predict(const std::vector<double>& similarity_row, double tau);

// Cross entropy summed over samples plus lambda1 * theta_sq_norm. p_rows and
// labels_onehot are samples x classes.
double align_loss(const Matrix& p_rows, const Matrix& labels_onehot, double lambda1,
                  double theta_sq_norm);

// Hinge sum_j max(0, cos(t_normal, t_aj) - delta) plus lambda2 * theta_sq_norm.
double contrast_loss(const std::vector<double>& t_normal,
                     const std::vector<std::vector<double>>& t_anomaly, double delta,
                     double lambda2, double theta_sq_norm);

double total_fine_loss(double l_align, double l_contrast, double alpha, double beta_w);

struct FineGrainedModel {
    size_t dim = 0;
    ClassSet classes;
    std::vector<PromptTriplet> triplets;  // one per class
    std::vector<Matrix> prompts;          // learnable rows per class
    MixerStack text_mixer;
    MixerStack video_mixer;
    double tau = 0.07;
    double delta = 0.5;
    double lambda1 = 5e-4;
    double lambda2 = 6e-4;
    double alpha = 1.2;
    double beta_w = 0.8;

    // Triplets come from the caption template and the label words; prompts
    // and mixers start at zero.
    static FineGrainedModel make(size_t dim, const ClassSet& classes, size_t learnable_count = 40);
    // Gaussian mixers (scale 0.2) and near-zero prompts (scale 0.02).
    static FineGrainedModel seeded(size_t dim, const ClassSet& classes, uint64_t seed,
                                   size_t learnable_count = 40);

    size_t param_count() const;
    void validate() const;

    // Squared parameter norms of the two regularized sets: alignment covers
    // prompts plus both mixers, contrast covers prompts plus the text mixer.
    double theta_align_sq_norm() const;
    double theta_contrast_sq_norm() const;

    void save(const std::string& path) const;
    static FineGrainedModel load(const std::string& path);
};

// Provider rows for the class triplet with the class prompt rows appended.
Matrix fine_text_input(const FineGrainedModel& model, const EmbeddingProvider& provider,
                       size_t class_index);

// Text mixer over the class triplet, mean-pooled: one d-vector per class.
std::vector<double> class_text_feature(const FineGrainedModel& model,
                                       const EmbeddingProvider& provider, size_t class_index);

// Video mixer over frame features, mean-pooled over time.
std::vector<double> video_feature(const FineGrainedModel& model, const Matrix& features,
                                  int partitions = 1, size_t chunk_length = 0);

// Class probabilities for one video: softmax over cosine similarities to
// every class text feature.
std::vector<double> fine_predict(const FineGrainedModel& model, const EmbeddingProvider& provider,
                                 const Matrix& features, int partitions = 1,
                                 size_t chunk_length = 0);

struct FineSample {
    std::string id;
    Matrix features;
    size_t class_index = 0;
};

struct FineGrads {
    std::vector<Matrix> d_prompts;
    StackGrads text;
    StackGrads video;

    static FineGrads zeros(const FineGrainedModel& model);
    void add_scaled(const FineGrads& o, double s);
};

struct FineLossParts {
    double align = 0.0;
    double contrast = 0.0;
    double total = 0.0;
};

// Full objective over one batch: alpha * (CE sum + lambda1 |theta_align|^2)
// + beta * (hinge + lambda2 |theta_contrast|^2). The contrast term involves
// text features only and enters once per call. Provider embeddings are
// constants; gradients flow to prompts and mixer parameters alone. Pass null
// grads to evaluate the loss without the backward pass.
FineLossParts fine_loss_and_grad(const FineGrainedModel& model, const EmbeddingProvider& provider,
                                 const std::vector<FineSample>& batch, FineGrads* grads,
                                 int partitions = 1, size_t chunk_length = 0);

struct FineTrainConfig {
    double learning_rate = 0.05;
    size_t epochs = 40;
    size_t batch_size = 8;
    uint64_t seed = 7;
    int partitions = 1;
    size_t chunk_length = 0;

    void validate() const;
};

struct FineTrainResult {
    FineGrainedModel model;
    std::vector<double> loss_history;  // full-dataset objective after each epoch
};

// Minibatch SGD on the total objective. The class set must designate a
// normal class (the contrast hinge is anchored to it) and the dataset must
// cover at least two classes; normal-class videos are allowed but not
// required. Deterministic for a fixed seed.
FineTrainResult train_fine(const std::vector<FineSample>& dataset,
                           const EmbeddingProvider& provider, const FineGrainedModel& init,
                           const FineTrainConfig& cfg);

}  // namespace tcvads
