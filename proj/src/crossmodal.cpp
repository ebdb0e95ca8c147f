#include "tcvads/crossmodal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"
#include "tcvads/numerics.hpp"

namespace tcvads {

namespace {

uint32_t fnv1a32(const std::string& s) {
    uint32_t h = 2166136261u;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 16777619u;
    }
    return h;
}

double sq_sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double block_sq_norm(const TimeMixerParams& p) {
    return sq_sum(p.w_k.data) + sq_sum(p.w_v.data) + sq_sum(p.decay_logits) + sq_sum(p.gamma) +
           sq_sum(p.beta);
}

// grads += scale * params, over every trainable scalar of the stack.
void add_stack_reg(StackGrads& grads, const MixerStack& mixer, double scale) {
    for (size_t b = 0; b < 2; ++b) {
        const TimeMixerParams& p = mixer.blocks[b];
        BlockGrads& g = grads.blocks[b];
        for (size_t i = 0; i < p.w_k.data.size(); ++i) g.d_w_k.data[i] += scale * p.w_k.data[i];
        for (size_t i = 0; i < p.w_v.data.size(); ++i) g.d_w_v.data[i] += scale * p.w_v.data[i];
        for (size_t i = 0; i < p.decay_logits.size(); ++i)
            g.d_decay_logits[i] += scale * p.decay_logits[i];
        for (size_t i = 0; i < p.gamma.size(); ++i) g.d_gamma[i] += scale * p.gamma[i];
        for (size_t i = 0; i < p.beta.size(); ++i) g.d_beta[i] += scale * p.beta[i];
    }
}

void apply_stack_update(MixerStack& mixer, const StackGrads& grads, double scale) {
    for (size_t b = 0; b < 2; ++b) {
        TimeMixerParams& p = mixer.blocks[b];
        const BlockGrads& g = grads.blocks[b];
        for (size_t i = 0; i < p.w_k.data.size(); ++i) p.w_k.data[i] -= scale * g.d_w_k.data[i];
        for (size_t i = 0; i < p.w_v.data.size(); ++i) p.w_v.data[i] -= scale * g.d_w_v.data[i];
        for (size_t i = 0; i < p.decay_logits.size(); ++i)
            p.decay_logits[i] -= scale * g.d_decay_logits[i];
        for (size_t i = 0; i < p.gamma.size(); ++i) p.gamma[i] -= scale * g.d_gamma[i];
        for (size_t i = 0; i < p.beta.size(); ++i) p.beta[i] -= scale * g.d_beta[i];
    }
}

void write_stack(BinaryWriter& w, const MixerStack& mixer) {
    for (size_t b = 0; b < 2; ++b) {
        const TimeMixerParams& p = mixer.blocks[b];
        w.f64_vec(p.w_k.data);
        w.f64_vec(p.w_v.data);
        w.f64_vec(p.decay_logits);
        w.f64_vec(p.gamma);
        w.f64_vec(p.beta);
        w.f64(p.eps);
    }
}

MixerStack read_stack(BinaryReader& r, size_t dim) {
    MixerStack m = MixerStack::make(dim);
    for (size_t b = 0; b < 2; ++b) {
        TimeMixerParams& p = m.blocks[b];
        p.w_k.data = r.f64_vec();
        p.w_v.data = r.f64_vec();
        p.decay_logits = r.f64_vec();
        p.gamma = r.f64_vec();
        p.beta = r.f64_vec();
        p.eps = r.f64();
    }
    return m;
}

}  // namespace

PromptTriplet assemble_prompt(std::vector<uint32_t> clip_tokens,
                              std::vector<uint32_t> label_tokens, size_t learnable_count,
                              size_t max_total) {
    if (max_total == 0) throw validation_error("assemble_prompt: max_total must be >= 1");
    if (label_tokens.empty()) throw validation_error("assemble_prompt: label tokens are empty");
    size_t fixed = label_tokens.size() + learnable_count;
    if (fixed > max_total)
        throw validation_error("assemble_prompt: label tokens (" +
                               std::to_string(label_tokens.size()) + ") plus learnable tokens (" +
                               std::to_string(learnable_count) + ") exceed the cap of " +
                               std::to_string(max_total));
    size_t room = max_total - fixed;
    if (clip_tokens.size() > room) clip_tokens.resize(room);
    PromptTriplet t;
    t.clip_tokens = std::move(clip_tokens);
    t.label_tokens = std::move(label_tokens);
    t.learnable_count = learnable_count;
    t.max_total = max_total;
    return t;
}

std::vector<uint32_t> whitespace_token_ids(const std::string& text) {
    std::vector<uint32_t> ids;
    std::string word;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!word.empty()) ids.push_back(fnv1a32(word));
            word.clear();
        } else {
            word.push_back(c);
        }
    }
    if (!word.empty()) ids.push_back(fnv1a32(word));
    return ids;
}

std::vector<uint32_t> caption_token_ids(const std::string& label) {
    return whitespace_token_ids("a video of " + label);
}

EmbeddingProvider EmbeddingProvider::synthetic(size_t dim, uint64_t seed) {
    if (dim == 0) throw validation_error("embedding dim must be >= 1");
    EmbeddingProvider p;
    p.dim = dim;
    p.seed = seed;
    return p;
}

EmbeddingProvider EmbeddingProvider::from_table(Matrix table) {
    if (table.rows == 0 || table.cols == 0)
        throw validation_error("embedding table is empty: " + shape_str(table));
    EmbeddingProvider p;
    p.dim = table.cols;
    p.file_backed = true;
    p.table = std::move(table);
    return p;
}

EmbeddingProvider EmbeddingProvider::from_file(const std::string& path) {
    return from_table(read_feature_file(path));
}

std::vector<double> EmbeddingProvider::embed(uint32_t token) const {
    if (file_backed) {
        if (token >= table.rows)
            throw validation_error("no embedding for token id " + std::to_string(token) +
                                   "; the table holds " + std::to_string(table.rows) + " rows");
        const double* row = table.row_ptr(token);
        return std::vector<double>(row, row + dim);
    }
    Rng rng(splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (uint64_t(token) + 1))));
    std::vector<double> v(dim);
    double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& x : v) x = rng.normal(0.0, scale);
    return v;
}

Matrix encode_text(const EmbeddingProvider& provider, const PromptTriplet& triplet,
                   const Matrix& learnable) {
    if (learnable.rows != triplet.learnable_count)
        throw validation_error("encode_text: " + std::to_string(learnable.rows) +
                               " learnable rows for a triplet declaring " +
                               std::to_string(triplet.learnable_count));
    if (learnable.cols != provider.dim && triplet.learnable_count > 0)
        throw validation_error("encode_text: learnable width " + std::to_string(learnable.cols) +
                               " does not match provider dim " + std::to_string(provider.dim));
    Matrix out(triplet.size(), provider.dim);
    size_t r = 0;
    for (uint32_t tok : triplet.clip_tokens) {
        std::vector<double> e = provider.embed(tok);
        std::copy(e.begin(), e.end(), out.row_ptr(r++));
    }
    for (uint32_t tok : triplet.label_tokens) {
        std::vector<double> e = provider.embed(tok);
        std::copy(e.begin(), e.end(), out.row_ptr(r++));
    }
    for (size_t i = 0; i < triplet.learnable_count; ++i)
        std::copy(learnable.row_ptr(i), learnable.row_ptr(i) + learnable.cols, out.row_ptr(r++));
    return out;
}

MixerStack MixerStack::make(size_t dim) {
    MixerStack m;
    m.dim = dim;
    m.blocks = {TimeMixerParams::make(dim), TimeMixerParams::make(dim)};
    return m;
}

MixerStack MixerStack::seeded(size_t dim, Rng& rng, double scale) {
    MixerStack m;
    m.dim = dim;
    m.blocks = {TimeMixerParams::seeded(dim, rng, scale), TimeMixerParams::seeded(dim, rng, scale)};
    return m;
}

size_t MixerStack::param_count() const {
    return blocks[0].param_count() + blocks[1].param_count();
}

double MixerStack::sq_norm() const {
    return block_sq_norm(blocks[0]) + block_sq_norm(blocks[1]);
}

void MixerStack::validate(const char* what) const {
    if (dim == 0) throw validation_error(std::string(what) + ": dim must be >= 1");
    for (const TimeMixerParams& p : blocks) {
        if (p.dim != dim)
            throw validation_error(std::string(what) + ": block dim " + std::to_string(p.dim) +
                                   " does not match stack dim " + std::to_string(dim));
        p.validate();
    }
}

std::vector<double> mixer_feature(const MixerStack& mixer, const Matrix& x, int partitions,
                                  size_t chunk_length, StackCache* cache) {
    if (x.rows == 0) throw validation_error("mixer input has no rows");
    if (x.cols != mixer.dim)
        throw validation_error("mixer input width " + std::to_string(x.cols) +
                               " does not match dim " + std::to_string(mixer.dim));
    StackCache local;
    StackCache& c = cache ? *cache : local;
    c.h1 = block_forward(x, mixer.blocks[0], partitions, chunk_length, &c.blocks[0]);
    Matrix h2 = block_forward(c.h1, mixer.blocks[1], partitions, chunk_length, &c.blocks[1]);
    std::vector<double> feat(mixer.dim, 0.0);
    for (size_t t = 0; t < h2.rows; ++t) {
        const double* row = h2.row_ptr(t);
        for (size_t j = 0; j < mixer.dim; ++j) feat[j] += row[j];
    }
    double inv_n = 1.0 / static_cast<double>(h2.rows);
    for (double& v : feat) v *= inv_n;
    return feat;
}

StackGrads StackGrads::zeros(size_t dim) {
    StackGrads g;
    g.blocks = {BlockGrads::zeros(dim), BlockGrads::zeros(dim)};
    return g;
}

void StackGrads::add_scaled(const StackGrads& o, double s) {
    blocks[0].add_scaled(o.blocks[0], s);
    blocks[1].add_scaled(o.blocks[1], s);
}

Matrix mixer_feature_backward(const MixerStack& mixer, const Matrix& x, const StackCache& cache,
                              const std::vector<double>& d_feat, StackGrads& grads,
                              int partitions) {
    if (d_feat.size() != mixer.dim)
        throw validation_error("mixer gradient width " + std::to_string(d_feat.size()) +
                               " does not match dim " + std::to_string(mixer.dim));
    Matrix d_h2(x.rows, x.cols);
    double inv_n = 1.0 / static_cast<double>(x.rows);
    for (size_t t = 0; t < x.rows; ++t) {
        double* row = d_h2.row_ptr(t);
        for (size_t j = 0; j < x.cols; ++j) row[j] = d_feat[j] * inv_n;
    }
    Matrix d_h1 =
        block_backward(cache.h1, mixer.blocks[1], cache.blocks[1], d_h2, grads.blocks[1],
                       partitions);
    return block_backward(x, mixer.blocks[0], cache.blocks[0], d_h1, grads.blocks[0], partitions);
}

Matrix similarity_matrix(const std::vector<std::vector<double>>& video_feats,
                         const std::vector<std::vector<double>>& text_feats) {
    if (video_feats.empty() || text_feats.empty())
        throw validation_error("similarity_matrix: empty feature list");
    Matrix m(video_feats.size(), text_feats.size());
    for (size_t i = 0; i < video_feats.size(); ++i)
        for (size_t j = 0; j < text_feats.size(); ++j)
            m.at(i, j) = cosine_similarity(video_feats[i], text_feats[j]);
    return m;
}

std::vector<double> predict(const std::vector<double>& similarity_row, double tau) {
    return softmax_temp(similarity_row, tau);
}

double align_loss(const Matrix& p_rows, const Matrix& labels_onehot, double lambda1,
                  double theta_sq_norm) {
    if (!p_rows.same_shape(labels_onehot))
        throw validation_error("align_loss: probabilities " + shape_str(p_rows) +
                               " vs labels " + shape_str(labels_onehot));
    if (p_rows.rows == 0) throw validation_error("align_loss: no samples");
    double ce = 0.0;
    for (size_t i = 0; i < p_rows.data.size(); ++i) {
        if (labels_onehot.data[i] == 0.0) continue;
        ce -= labels_onehot.data[i] * std::log(std::max(p_rows.data[i], 1e-300));
    }
    return ce + lambda1 * theta_sq_norm;
}

double contrast_loss(const std::vector<double>& t_normal,
                     const std::vector<std::vector<double>>& t_anomaly, double delta,
                     double lambda2, double theta_sq_norm) {
    double hinge = 0.0;
    for (const std::vector<double>& t : t_anomaly) {
        double c = cosine_similarity(t_normal, t);
        if (c > delta) hinge += c - delta;
    }
    return hinge + lambda2 * theta_sq_norm;
}

double total_fine_loss(double l_align, double l_contrast, double alpha, double beta_w) {
    return alpha * l_align + beta_w * l_contrast;
}

FineGrainedModel FineGrainedModel::make(size_t dim, const ClassSet& classes,
                                        size_t learnable_count) {
    if (dim == 0) throw validation_error("fine model dim must be >= 1");
    classes.validate();
    FineGrainedModel m;
    m.dim = dim;
    m.classes = classes;
    for (const std::string& label : classes.labels) {
        m.triplets.push_back(assemble_prompt(caption_token_ids(label), whitespace_token_ids(label),
                                             learnable_count));
        m.prompts.emplace_back(learnable_count, dim);
    }
    m.text_mixer = MixerStack::make(dim);
    m.video_mixer = MixerStack::make(dim);
    return m;
}

FineGrainedModel FineGrainedModel::seeded(size_t dim, const ClassSet& classes, uint64_t seed,
                                          size_t learnable_count) {
    FineGrainedModel m = make(dim, classes, learnable_count);
    Rng rng(splitmix64(seed ^ 0xf19eULL));
    m.text_mixer = MixerStack::seeded(dim, rng, 0.2);
    m.video_mixer = MixerStack::seeded(dim, rng, 0.2);
    for (Matrix& p : m.prompts)
        for (double& v : p.data) v = rng.normal(0.0, 0.02);
    return m;
}

size_t FineGrainedModel::param_count() const {
    size_t n = text_mixer.param_count() + video_mixer.param_count();
    for (const Matrix& p : prompts) n += p.size();
    return n;
}

void FineGrainedModel::validate() const {
    if (dim == 0) throw validation_error("fine model dim must be >= 1");
    classes.validate();
    if (triplets.size() != classes.size() || prompts.size() != classes.size())
        throw validation_error("fine model needs one triplet and one prompt block per class");
    for (size_t c = 0; c < classes.size(); ++c) {
        const PromptTriplet& t = triplets[c];
        if (t.size() > t.max_total)
            throw validation_error("class \"" + classes.labels[c] + "\": triplet length " +
                                   std::to_string(t.size()) + " exceeds the cap of " +
                                   std::to_string(t.max_total));
        if (t.label_tokens.empty())
            throw validation_error("class \"" + classes.labels[c] + "\": no label tokens");
        if (prompts[c].rows != t.learnable_count || prompts[c].cols != dim)
            throw validation_error("class \"" + classes.labels[c] + "\": prompt block is " +
                                   shape_str(prompts[c]) + ", expected " +
                                   std::to_string(t.learnable_count) + "x" + std::to_string(dim));
        check_finite(prompts[c], "prompt block");
    }
    text_mixer.validate("text mixer");
    video_mixer.validate("video mixer");
    if (text_mixer.dim != dim || video_mixer.dim != dim)
        throw validation_error("mixer dim does not match model dim");
    if (!(tau > 0.0)) throw validation_error("tau must be > 0");
    if (!(delta >= 0.0 && delta <= 1.0)) throw validation_error("delta must be in [0, 1]");
    if (alpha < 0.0 || beta_w < 0.0) throw validation_error("loss weights must be >= 0");
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw validation_error("regularization weights must be >= 0");
}

double FineGrainedModel::theta_align_sq_norm() const {
    double s = text_mixer.sq_norm() + video_mixer.sq_norm();
    for (const Matrix& p : prompts) s += sq_sum(p.data);
    return s;
}

double FineGrainedModel::theta_contrast_sq_norm() const {
    double s = text_mixer.sq_norm();
    for (const Matrix& p : prompts) s += sq_sum(p.data);
    return s;
}

void FineGrainedModel::save(const std::string& path) const {
    validate();
    BinaryWriter w = checkpoint_writer(kSectionFine);
    w.u32(static_cast<uint32_t>(dim));
    w.u32(static_cast<uint32_t>(classes.size()));
    for (const std::string& label : classes.labels) w.str(label);
    w.u32(static_cast<uint32_t>(classes.normal_index));
    for (const PromptTriplet& t : triplets) {
        w.u32(static_cast<uint32_t>(t.clip_tokens.size()));
        for (uint32_t tok : t.clip_tokens) w.u32(tok);
        w.u32(static_cast<uint32_t>(t.label_tokens.size()));
        for (uint32_t tok : t.label_tokens) w.u32(tok);
        w.u32(static_cast<uint32_t>(t.learnable_count));
        w.u32(static_cast<uint32_t>(t.max_total));
    }
    for (const Matrix& p : prompts) w.f64_vec(p.data);
    write_stack(w, text_mixer);
    write_stack(w, video_mixer);
    w.f64(tau);
    w.f64(delta);
    w.f64(lambda1);
    w.f64(lambda2);
    w.f64(alpha);
    w.f64(beta_w);
    w.save(path);
}

FineGrainedModel FineGrainedModel::load(const std::string& path) {
    BinaryReader r = open_checkpoint(path, kSectionFine);
    FineGrainedModel m;
    m.dim = r.u32();
    size_t n_classes = r.u32();
    for (size_t c = 0; c < n_classes; ++c) m.classes.labels.push_back(r.str());
    m.classes.normal_index = r.u32();
    for (size_t c = 0; c < n_classes; ++c) {
        PromptTriplet t;
        size_t n_clip = r.u32();
        for (size_t i = 0; i < n_clip; ++i) t.clip_tokens.push_back(r.u32());
        size_t n_label = r.u32();
        for (size_t i = 0; i < n_label; ++i) t.label_tokens.push_back(r.u32());
        t.learnable_count = r.u32();
        t.max_total = r.u32();
        m.triplets.push_back(std::move(t));
    }
    for (size_t c = 0; c < n_classes; ++c) {
        Matrix p(m.triplets[c].learnable_count, m.dim);
        p.data = r.f64_vec();
        if (p.data.size() != p.rows * p.cols)
            throw validation_error("fine checkpoint: prompt block size mismatch");
        m.prompts.push_back(std::move(p));
    }
    m.text_mixer = read_stack(r, m.dim);
    m.video_mixer = read_stack(r, m.dim);
    m.tau = r.f64();
    m.delta = r.f64();
    m.lambda1 = r.f64();
    m.lambda2 = r.f64();
    m.alpha = r.f64();
    m.beta_w = r.f64();
    r.expect_end();
    m.validate();
    return m;
}

Matrix fine_text_input(const FineGrainedModel& model, const EmbeddingProvider& provider,
                       size_t class_index) {
    if (class_index >= model.classes.size())
        throw validation_error("class index " + std::to_string(class_index) +
                               " out of range for " + std::to_string(model.classes.size()) +
                               " classes");
    if (provider.dim != model.dim)
        throw validation_error("provider dim " + std::to_string(provider.dim) +
                               " does not match model dim " + std::to_string(model.dim));
    return encode_text(provider, model.triplets[class_index], model.prompts[class_index]);
}

std::vector<double> class_text_feature(const FineGrainedModel& model,
                                       const EmbeddingProvider& provider, size_t class_index) {
    return mixer_feature(model.text_mixer, fine_text_input(model, provider, class_index));
}

std::vector<double> video_feature(const FineGrainedModel& model, const Matrix& features,
                                  int partitions, size_t chunk_length) {
    return mixer_feature(model.video_mixer, features, partitions, chunk_length);
}

std::vector<double> fine_predict(const FineGrainedModel& model, const EmbeddingProvider& provider,
                                 const Matrix& features, int partitions, size_t chunk_length) {
    std::vector<double> v = video_feature(model, features, partitions, chunk_length);
    std::vector<double> sims(model.classes.size());
    for (size_t c = 0; c < model.classes.size(); ++c)
        sims[c] = cosine_similarity(v, class_text_feature(model, provider, c));
    return predict(sims, model.tau);
}

FineGrads FineGrads::zeros(const FineGrainedModel& model) {
    FineGrads g;
    for (const Matrix& p : model.prompts) g.d_prompts.emplace_back(p.rows, p.cols);
    g.text = StackGrads::zeros(model.dim);
    g.video = StackGrads::zeros(model.dim);
    return g;
}

void FineGrads::add_scaled(const FineGrads& o, double s) {
    for (size_t c = 0; c < d_prompts.size(); ++c)
        for (size_t i = 0; i < d_prompts[c].data.size(); ++i)
            d_prompts[c].data[i] += s * o.d_prompts[c].data[i];
    text.add_scaled(o.text, s);
    video.add_scaled(o.video, s);
}

FineLossParts fine_loss_and_grad(const FineGrainedModel& model, const EmbeddingProvider& provider,
                                 const std::vector<FineSample>& batch, FineGrads* grads,
                                 int partitions, size_t chunk_length) {
    if (batch.empty()) throw validation_error("fine loss needs at least one sample");
    size_t n_classes = model.classes.size();

    std::vector<Matrix> text_inputs(n_classes);
    std::vector<StackCache> text_caches(grads ? n_classes : 0);
    std::vector<std::vector<double>> text_feats(n_classes);
    for (size_t c = 0; c < n_classes; ++c) {
        text_inputs[c] = fine_text_input(model, provider, c);
        text_feats[c] = mixer_feature(model.text_mixer, text_inputs[c], partitions, 0,
                                      grads ? &text_caches[c] : nullptr);
    }
    std::vector<std::vector<double>> d_text(n_classes, std::vector<double>(model.dim, 0.0));

    double ce_sum = 0.0;
    for (const FineSample& s : batch) {
        if (s.class_index >= n_classes)
            throw validation_error("sample \"" + s.id + "\": class index " +
                                   std::to_string(s.class_index) + " out of range");
        StackCache video_cache;
        std::vector<double> v = mixer_feature(model.video_mixer, s.features, partitions,
                                              chunk_length, grads ? &video_cache : nullptr);
        std::vector<double> sims(n_classes);
        for (size_t c = 0; c < n_classes; ++c) sims[c] = cosine_similarity(v, text_feats[c]);
        std::vector<double> p = predict(sims, model.tau);
        ce_sum -= std::log(std::max(p[s.class_index], 1e-300));
        if (grads == nullptr) continue;
        std::vector<double> d_v(model.dim, 0.0);
        for (size_t c = 0; c < n_classes; ++c) {
            double y = c == s.class_index ? 1.0 : 0.0;
            double ds = model.alpha * (p[c] - y) / model.tau;
            if (ds == 0.0) continue;
            CosineGrads cg = cosine_similarity_backward(v, text_feats[c], ds);
            for (size_t j = 0; j < model.dim; ++j) {
                d_v[j] += cg.da[j];
                d_text[c][j] += cg.db[j];
            }
        }
        mixer_feature_backward(model.video_mixer, s.features, video_cache, d_v, grads->video,
                               partitions);
    }

    size_t normal = model.classes.normal_index;
    double hinge = 0.0;
    for (size_t c = 0; c < n_classes; ++c) {
        if (c == normal) continue;
        double cs = cosine_similarity(text_feats[normal], text_feats[c]);
        if (cs <= model.delta) continue;
        hinge += cs - model.delta;
        if (grads == nullptr) continue;
        CosineGrads cg = cosine_similarity_backward(text_feats[normal], text_feats[c],
                                                    model.beta_w);
        for (size_t j = 0; j < model.dim; ++j) {
            d_text[normal][j] += cg.da[j];
            d_text[c][j] += cg.db[j];
        }
    }

    if (grads != nullptr) {
        for (size_t c = 0; c < n_classes; ++c) {
            Matrix dx = mixer_feature_backward(model.text_mixer, text_inputs[c], text_caches[c],
                                               d_text[c], grads->text, partitions);
            // Provider rows are constants; only the learnable tail feeds back.
            const PromptTriplet& t = model.triplets[c];
            size_t first = t.clip_tokens.size() + t.label_tokens.size();
            for (size_t i = 0; i < t.learnable_count; ++i)
                for (size_t j = 0; j < model.dim; ++j)
                    grads->d_prompts[c].at(i, j) += dx.at(first + i, j);
        }
        double w_align = 2.0 * model.alpha * model.lambda1;
        double w_contrast = 2.0 * model.beta_w * model.lambda2;
        add_stack_reg(grads->text, model.text_mixer, w_align + w_contrast);
        add_stack_reg(grads->video, model.video_mixer, w_align);
        for (size_t c = 0; c < n_classes; ++c)
            for (size_t i = 0; i < model.prompts[c].data.size(); ++i)
                grads->d_prompts[c].data[i] += (w_align + w_contrast) * model.prompts[c].data[i];
    }

    FineLossParts parts;
    parts.align = ce_sum + model.lambda1 * model.theta_align_sq_norm();
    parts.contrast = hinge + model.lambda2 * model.theta_contrast_sq_norm();
    parts.total = total_fine_loss(parts.align, parts.contrast, model.alpha, model.beta_w);
    return parts;
}

void FineTrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw validation_error("learning rate must be > 0");
    if (epochs < 1) throw validation_error("epochs must be >= 1");
    if (batch_size < 1) throw validation_error("batch size must be >= 1");
    if (partitions < 1) throw validation_error("partitions must be >= 1");
}

FineTrainResult train_fine(const std::vector<FineSample>& dataset,
                           const EmbeddingProvider& provider, const FineGrainedModel& init,
                           const FineTrainConfig& cfg) {
    cfg.validate();
    init.validate();
    if (provider.dim != init.dim)
        throw validation_error("provider dim " + std::to_string(provider.dim) +
                               " does not match model dim " + std::to_string(init.dim));
    if (dataset.empty()) throw validation_error("training data is empty");
    std::set<size_t> seen;
    for (const FineSample& s : dataset) {
        if (s.class_index >= init.classes.size())
            throw validation_error("sample \"" + s.id + "\": class index " +
                                   std::to_string(s.class_index) + " out of range for " +
                                   std::to_string(init.classes.size()) + " classes");
        if (s.features.rows == 0)
            throw validation_error("sample \"" + s.id + "\": no frames");
        if (s.features.cols != init.dim)
            throw validation_error("sample \"" + s.id + "\": feature width " +
                                   std::to_string(s.features.cols) + " does not match model dim " +
                                   std::to_string(init.dim));
        seen.insert(s.class_index);
    }
    if (seen.size() < 2)
        throw validation_error("training data covers a single class; need at least two");

    FineTrainResult out{init, {}};
    Rng order_rng(splitmix64(cfg.seed ^ 0x6f2dc5b91a3e47ULL));
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.index(i)]);
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t stop = std::min(start + cfg.batch_size, order.size());
            std::vector<FineSample> batch;
            for (size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
            FineGrads grads = FineGrads::zeros(out.model);
            fine_loss_and_grad(out.model, provider, batch, &grads, cfg.partitions,
                               cfg.chunk_length);
            double scale = cfg.learning_rate / static_cast<double>(batch.size());
            apply_stack_update(out.model.text_mixer, grads.text, scale);
            apply_stack_update(out.model.video_mixer, grads.video, scale);
            for (size_t c = 0; c < out.model.prompts.size(); ++c)
                for (size_t i = 0; i < out.model.prompts[c].data.size(); ++i)
                    out.model.prompts[c].data[i] -= scale * grads.d_prompts[c].data[i];
        }
        out.loss_history.push_back(fine_loss_and_grad(out.model, provider, dataset, nullptr,
                                                      cfg.partitions, cfg.chunk_length)
                                       .total);
    }
    return out;
}

}  // namespace tcvads
