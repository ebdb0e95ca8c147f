#include "tcvads/time_mixer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"

namespace tcvads {

namespace {

void check_len(const std::vector<double>& v, size_t want, const char* what) {
    if (v.size() != want)
        throw validation_error(std::string(what) + ": expected " + std::to_string(want) +
                               " values, got " + std::to_string(v.size()));
}

}  // namespace

TimeMixerParams TimeMixerParams::make(size_t dim) {
    TimeMixerParams p;
    p.dim = dim;
    p.w_k = Matrix(dim, dim);
    p.w_v = Matrix(dim, dim);
    p.decay_logits.assign(dim, 0.0);
    p.gamma.assign(dim, 1.0);
    p.beta.assign(dim, 0.0);
    return p;
}

TimeMixerParams TimeMixerParams::seeded(size_t dim, Rng& rng, double scale) {
    TimeMixerParams p = make(dim);
    for (double& v : p.w_k.data) v = rng.normal(0.0, scale);
    for (double& v : p.w_v.data) v = rng.normal(0.0, scale);
    for (double& v : p.decay_logits) v = rng.normal(0.0, 0.5);
    return p;
}

std::vector<double> TimeMixerParams::lambda() const {
    std::vector<double> out(dim);
    for (size_t i = 0; i < dim; ++i) out[i] = sigmoid(decay_logits[i]);
    return out;
}

size_t TimeMixerParams::param_count() const { return 2 * dim * dim + 3 * dim; }

void TimeMixerParams::validate() const {
    if (dim == 0) throw validation_error("mixer dim must be >= 1");
    if (w_k.rows != dim || w_k.cols != dim || w_v.rows != dim || w_v.cols != dim)
        throw validation_error("mixer projections must be dim x dim");
    check_len(decay_logits, dim, "decay logits");
    check_len(gamma, dim, "gamma");
    check_len(beta, dim, "beta");
    if (!(eps > 0.0)) throw validation_error("layer norm eps must be > 0");
    check_finite(w_k, "mixer W_K");
    check_finite(w_v, "mixer W_V");
    check_finite(decay_logits, "mixer decay logits");
    check_finite(gamma, "mixer gamma");
    check_finite(beta, "mixer beta");
}

KvPair kv_project(const Matrix& features, const TimeMixerParams& params, int partitions) {
    if (features.cols != params.dim)
        throw validation_error("kv_project: feature width " + std::to_string(features.cols) +
                               " does not match mixer dim " + std::to_string(params.dim));
    KvPair out;
    out.k = matmul_nt(features, params.w_k, partitions);
    out.v = matmul_nt(features, params.w_v, partitions);
    return out;
}

TimeMixResult time_mix(const Matrix& k, const Matrix& v, const TimeMixerParams& params,
                       const TimeMixState* initial) {
    if (!k.same_shape(v))
        throw validation_error("time_mix: key shape " + shape_str(k) + " != value shape " +
                               shape_str(v));
    if (k.cols != params.dim)
        throw validation_error("time_mix: width " + std::to_string(k.cols) +
                               " does not match mixer dim " + std::to_string(params.dim));
    size_t n = k.rows, d = k.cols;
    std::vector<double> lam = params.lambda();
    std::vector<double> state(d, 0.0);
    if (initial != nullptr) {
        check_len(initial->r, d, "time mix state");
        state = initial->r;
    }

    TimeMixResult out;
    out.t = Matrix(n, d);
    out.r = Matrix(n, d);
    for (size_t t = 0; t < n; ++t) {
        const double* kt = k.row_ptr(t);
        const double* vt = v.row_ptr(t);
        double* rt = out.r.row_ptr(t);
        double* tt = out.t.row_ptr(t);
        for (size_t j = 0; j < d; ++j) {
            rt[j] = state[j];
            double a = kt[j] * vt[j];
            tt[j] = sigmoid(a + state[j]);
            state[j] = lam[j] * state[j] + a;
        }
    }
    out.final_state.r = std::move(state);
    return out;
}

TimeMixResult time_mix_chunked(const Matrix& k, const Matrix& v, const TimeMixerParams& params,
                               size_t chunk_length) {
    if (chunk_length == 0 || k.rows <= chunk_length) return time_mix(k, v, params);
    if (!k.same_shape(v))
        throw validation_error("time_mix: key shape " + shape_str(k) + " != value shape " +
                               shape_str(v));
    size_t n = k.rows, d = k.cols;
    TimeMixResult out;
    out.t = Matrix(n, d);
    out.r = Matrix(n, d);
    TimeMixState state;
    state.r.assign(d, 0.0);
    for (size_t start = 0; start < n; start += chunk_length) {
        size_t len = std::min(chunk_length, n - start);
        Matrix kc(len, d), vc(len, d);
        std::copy_n(k.row_ptr(start), len * d, kc.data.begin());
        std::copy_n(v.row_ptr(start), len * d, vc.data.begin());
        TimeMixResult part = time_mix(kc, vc, params, &state);
        std::copy_n(part.t.data.begin(), len * d, out.t.row_ptr(start));
        std::copy_n(part.r.data.begin(), len * d, out.r.row_ptr(start));
        state = part.final_state;
    }
    out.final_state = std::move(state);
    return out;
}

TimeMixGrads time_mix_backward(const Matrix& k, const Matrix& v, const TimeMixerParams& params,
                               const TimeMixResult& fwd, const Matrix& grad_t) {
    if (!grad_t.same_shape(fwd.t))
        throw validation_error("time_mix backward: gradient shape " + shape_str(grad_t) +
                               " != output shape " + shape_str(fwd.t));
    size_t n = k.rows, d = k.cols;
    std::vector<double> lam = params.lambda();

    TimeMixGrads g;
    g.dk = Matrix(n, d);
    g.dv = Matrix(n, d);
    g.d_decay_logits.assign(d, 0.0);

    std::vector<double> d_lambda(d, 0.0);
    std::vector<double> rho_next(d, 0.0);   // gradient into R_{t+1}
    for (size_t ti = n; ti-- > 0;) {
        const double* kt = k.row_ptr(ti);
        const double* vt = v.row_ptr(ti);
        const double* tt = fwd.t.row_ptr(ti);
        const double* gt = grad_t.row_ptr(ti);
        double* dkt = g.dk.row_ptr(ti);
        double* dvt = g.dv.row_ptr(ti);
        for (size_t j = 0; j < d; ++j) {
            double ds = gt[j] * sigmoid_grad_from_y(tt[j]);
            double rho = ds + lam[j] * rho_next[j];
            // R_t = lambda * R_{t-1} + a_{t-1}: the decay multiplies the
            // previous memory, which forward cached as fwd.r row t-1.
            if (ti > 0) d_lambda[j] += rho * fwd.r.at(ti - 1, j);
            double da = ds + rho_next[j];   // via s_t and via R_{t+1}
            dkt[j] = da * vt[j];
            dvt[j] = da * kt[j];
            rho_next[j] = rho;
        }
    }
    for (size_t j = 0; j < d; ++j) {
        double l = lam[j];
        g.d_decay_logits[j] = d_lambda[j] * l * (1.0 - l);
    }
    return g;
}

Matrix block_forward(const Matrix& x, const TimeMixerParams& params, int partitions,
                     size_t chunk_length, BlockCache* cache) {
    BlockCache local;
    BlockCache& c = cache != nullptr ? *cache : local;
    c.kv = kv_project(x, params, partitions);
    c.mix = time_mix_chunked(c.kv.k, c.kv.v, params, chunk_length);
    c.ln.clear();
    c.ln.reserve(x.rows);
    Matrix y(x.rows, x.cols);
    for (size_t t = 0; t < x.rows; ++t) {
        std::vector<double> row(c.mix.t.row_ptr(t), c.mix.t.row_ptr(t) + x.cols);
        LayerNormResult ln = layer_norm(row, params.gamma, params.beta, params.eps);
        const double* xt = x.row_ptr(t);
        double* yt = y.row_ptr(t);
        for (size_t j = 0; j < x.cols; ++j) yt[j] = xt[j] + ln.y[j];
        c.ln.push_back(std::move(ln));
    }
    return y;
}

BlockGrads BlockGrads::zeros(size_t dim) {
    BlockGrads g;
    g.d_w_k = Matrix(dim, dim);
    g.d_w_v = Matrix(dim, dim);
    g.d_decay_logits.assign(dim, 0.0);
    g.d_gamma.assign(dim, 0.0);
    g.d_beta.assign(dim, 0.0);
    return g;
}

void BlockGrads::add_scaled(const BlockGrads& o, double s) {
    for (size_t i = 0; i < d_w_k.data.size(); ++i) d_w_k.data[i] += s * o.d_w_k.data[i];
    for (size_t i = 0; i < d_w_v.data.size(); ++i) d_w_v.data[i] += s * o.d_w_v.data[i];
    for (size_t i = 0; i < d_decay_logits.size(); ++i)
        d_decay_logits[i] += s * o.d_decay_logits[i];
    for (size_t i = 0; i < d_gamma.size(); ++i) d_gamma[i] += s * o.d_gamma[i];
    for (size_t i = 0; i < d_beta.size(); ++i) d_beta[i] += s * o.d_beta[i];
}

Matrix block_backward(const Matrix& x, const TimeMixerParams& params, const BlockCache& cache,
                      const Matrix& grad_out, BlockGrads& grads, int partitions) {
    if (!grad_out.same_shape(x))
        throw validation_error("block backward: gradient shape " + shape_str(grad_out) +
                               " != input shape " + shape_str(x));
    size_t d = x.cols;
    Matrix grad_t(x.rows, d);
    for (size_t t = 0; t < x.rows; ++t) {
        std::vector<double> row(cache.mix.t.row_ptr(t), cache.mix.t.row_ptr(t) + d);
        std::vector<double> gy(grad_out.row_ptr(t), grad_out.row_ptr(t) + d);
        LayerNormGrads ln = layer_norm_backward(row, params.gamma, cache.ln[t], gy);
        for (size_t j = 0; j < d; ++j) {
            grad_t.at(t, j) = ln.dx[j];
            grads.d_gamma[j] += ln.dgamma[j];
            grads.d_beta[j] += ln.dbeta[j];
        }
    }

    TimeMixGrads mix = time_mix_backward(cache.kv.k, cache.kv.v, params, cache.mix, grad_t);
    for (size_t j = 0; j < d; ++j) grads.d_decay_logits[j] += mix.d_decay_logits[j];

    Matrix dwk = matmul(transpose(mix.dk), x, partitions);
    Matrix dwv = matmul(transpose(mix.dv), x, partitions);
    for (size_t i = 0; i < dwk.data.size(); ++i) grads.d_w_k.data[i] += dwk.data[i];
    for (size_t i = 0; i < dwv.data.size(); ++i) grads.d_w_v.data[i] += dwv.data[i];

    // dx = residual + dK W_K + dV W_V.
    Matrix dx = add(grad_out, add(matmul(mix.dk, params.w_k, partitions),
                                  matmul(mix.dv, params.w_v, partitions)));
    return dx;
}

EnhancedRwkv EnhancedRwkv::make(size_t dim) {
    EnhancedRwkv m;
    m.dim = dim;
    m.blocks = {TimeMixerParams::make(dim), TimeMixerParams::make(dim)};
    m.head_w.assign(dim, 0.0);
    return m;
}

EnhancedRwkv EnhancedRwkv::seeded(size_t dim, uint64_t seed, double scale) {
    EnhancedRwkv m = make(dim);
    Rng rng(splitmix64(seed));
    m.blocks[0] = TimeMixerParams::seeded(dim, rng, scale);
    m.blocks[1] = TimeMixerParams::seeded(dim, rng, scale);
    for (double& v : m.head_w) v = rng.normal(0.0, scale);
    m.head_b = 0.0;
    return m;
}

size_t EnhancedRwkv::param_count() const {
    return blocks[0].param_count() + blocks[1].param_count() + head_w.size() + 1;
}

void EnhancedRwkv::validate() const {
    if (dim == 0) throw validation_error("model dim must be >= 1");
    for (const TimeMixerParams& b : blocks) {
        if (b.dim != dim) throw validation_error("block dim does not match model dim");
        b.validate();
    }
    check_len(head_w, dim, "head weights");
    check_finite(head_w, "head weights");
    if (!std::isfinite(head_b)) throw numerical_error("non-finite value in head bias");
    if (!(topk_fraction > 0.0 && topk_fraction <= 1.0))
        throw validation_error("topk fraction must be in (0, 1]");
}

void EnhancedRwkv::save(const std::string& path) const {
    validate();
    BinaryWriter w = checkpoint_writer(kSectionTeacher);
    w.u32(static_cast<uint32_t>(dim));
    for (const TimeMixerParams& b : blocks) {
        w.f64_vec(b.w_k.data);
        w.f64_vec(b.w_v.data);
        w.f64_vec(b.decay_logits);
        w.f64_vec(b.gamma);
        w.f64_vec(b.beta);
        w.f64(b.eps);
    }
    w.f64_vec(head_w);
    w.f64(head_b);
    w.f64(topk_fraction);
    w.save(path);
}

EnhancedRwkv EnhancedRwkv::load(const std::string& path) {
    BinaryReader r = open_checkpoint(path, kSectionTeacher);
    size_t dim = r.u32();
    EnhancedRwkv m = make(dim);
    for (TimeMixerParams& b : m.blocks) {
        b.w_k.data = r.f64_vec();
        b.w_v.data = r.f64_vec();
        check_len(b.w_k.data, dim * dim, "checkpoint W_K");
        check_len(b.w_v.data, dim * dim, "checkpoint W_V");
        b.decay_logits = r.f64_vec();
        b.gamma = r.f64_vec();
        b.beta = r.f64_vec();
        b.eps = r.f64();
    }
    m.head_w = r.f64_vec();
    m.head_b = r.f64();
    m.topk_fraction = r.f64();
    r.expect_end();
    m.validate();
    return m;
}

TopkMean topk_mean(const std::vector<double>& scores, double fraction) {
    if (scores.empty()) throw validation_error("topk_mean: no scores");
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw validation_error("topk fraction must be in (0, 1]");
    size_t n = scores.size();
    size_t k = static_cast<size_t>(std::ceil(fraction * static_cast<double>(n)));
    k = std::min(std::max<size_t>(k, 1), n);

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    TopkMean out;
    out.selected.assign(order.begin(), order.begin() + static_cast<long>(k));
    double sum = 0.0;
    for (size_t idx : out.selected) sum += scores[idx];
    out.mean = sum / static_cast<double>(k);
    return out;
}

namespace {

struct ModelForward {
    BlockCache cache0, cache1;
    Matrix x1, x2;
    VideoScoreResult score;
    TopkMean pool;
};

ModelForward model_forward(const EnhancedRwkv& model, const Matrix& features, int partitions,
                           size_t chunk_length) {
    if (features.rows == 0) throw validation_error("video_score: empty feature sequence");
    ModelForward f;
    f.x1 = block_forward(features, model.blocks[0], partitions, chunk_length, &f.cache0);
    f.x2 = block_forward(f.x1, model.blocks[1], partitions, chunk_length, &f.cache1);
    f.score.frame_scores.resize(features.rows);
    for (size_t t = 0; t < features.rows; ++t) {
        double z = model.head_b;
        const double* xt = f.x2.row_ptr(t);
        for (size_t j = 0; j < model.dim; ++j) z += model.head_w[j] * xt[j];
        f.score.frame_scores[t] = sigmoid(z);
    }
    f.pool = topk_mean(f.score.frame_scores, model.topk_fraction);
    f.score.video_scr = f.pool.mean;
    f.score.selected = f.pool.selected;
    return f;
}

}  // namespace

VideoScoreResult video_score(const EnhancedRwkv& model, const Matrix& features, int partitions,
                             size_t chunk_length) {
    return model_forward(model, features, partitions, chunk_length).score;
}

AfedGrads AfedGrads::zeros(size_t dim) {
    AfedGrads g;
    g.blocks = {BlockGrads::zeros(dim), BlockGrads::zeros(dim)};
    g.d_head_w.assign(dim, 0.0);
    return g;
}

void AfedGrads::add_scaled(const AfedGrads& o, double s) {
    blocks[0].add_scaled(o.blocks[0], s);
    blocks[1].add_scaled(o.blocks[1], s);
    for (size_t i = 0; i < d_head_w.size(); ++i) d_head_w[i] += s * o.d_head_w[i];
    d_head_b += s * o.d_head_b;
}

double afed_loss_and_grad(const EnhancedRwkv& model, const Matrix& features, int label,
                          AfedGrads& grads, int partitions, size_t chunk_length) {
    if (label != 0 && label != 1)
        throw validation_error("video label must be 0 or 1, got " + std::to_string(label));
    ModelForward f = model_forward(model, features, partitions, chunk_length);

    std::vector<double> pred{f.score.video_scr};
    std::vector<double> want{static_cast<double>(label)};
    double loss = bce_loss(pred, want);
    double d_video = bce_loss_grad(pred, want)[0];

    // Top-k mean routes 1/k of the video gradient to each selected frame.
    double per_frame = d_video / static_cast<double>(f.pool.selected.size());
    Matrix dx2(features.rows, model.dim);
    for (size_t idx : f.pool.selected) {
        double p = f.score.frame_scores[idx];
        double dz = per_frame * sigmoid_grad_from_y(p);
        const double* xt = f.x2.row_ptr(idx);
        double* dxt = dx2.row_ptr(idx);
        for (size_t j = 0; j < model.dim; ++j) {
            dxt[j] += dz * model.head_w[j];
            grads.d_head_w[j] += dz * xt[j];
        }
        grads.d_head_b += dz;
    }

    Matrix dx1 = block_backward(f.x1, model.blocks[1], f.cache1, dx2, grads.blocks[1], partitions);
    block_backward(features, model.blocks[0], f.cache0, dx1, grads.blocks[0], partitions);
    return loss;
}

namespace {

void sgd_step(Matrix& w, const Matrix& g, double step) {
    for (size_t i = 0; i < w.data.size(); ++i) w.data[i] -= step * g.data[i];
}

void sgd_step(std::vector<double>& w, const std::vector<double>& g, double step) {
    for (size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
}

void apply_update(EnhancedRwkv& model, const AfedGrads& g, double step) {
    for (size_t b = 0; b < 2; ++b) {
        sgd_step(model.blocks[b].w_k, g.blocks[b].d_w_k, step);
        sgd_step(model.blocks[b].w_v, g.blocks[b].d_w_v, step);
        sgd_step(model.blocks[b].decay_logits, g.blocks[b].d_decay_logits, step);
        sgd_step(model.blocks[b].gamma, g.blocks[b].d_gamma, step);
        sgd_step(model.blocks[b].beta, g.blocks[b].d_beta, step);
    }
    sgd_step(model.head_w, g.d_head_w, step);
    model.head_b -= step * g.d_head_b;
}

}  // namespace

AfedTrainResult train_afed(const std::vector<LabeledSequence>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw validation_error("training data is empty");
    if (!(cfg.learning_rate > 0.0)) throw validation_error("learning rate must be > 0");
    if (cfg.epochs < 1) throw validation_error("epochs must be >= 1");
    if (cfg.batch_size < 1) throw validation_error("batch size must be >= 1");

    bool has_pos = false, has_neg = false;
    size_t dim = dataset.front().features.cols;
    for (const LabeledSequence& s : dataset) {
        if (s.label != 0 && s.label != 1)
            throw validation_error("sequence \"" + s.id + "\": video label must be 0 or 1");
        if (s.features.rows == 0)
            throw validation_error("sequence \"" + s.id + "\": empty feature sequence");
        if (s.features.cols != dim)
            throw validation_error("sequence \"" + s.id + "\": feature width " +
                                   std::to_string(s.features.cols) + " != " + std::to_string(dim));
        (s.label == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw validation_error(
            "training data has a single video class; need both anomalous and normal examples");

    AfedTrainResult out;
    out.model = EnhancedRwkv::seeded(dim, splitmix64(cfg.seed ^ 0xafedULL));
    out.model.topk_fraction = cfg.topk_fraction;
    out.model.validate();

    Rng order_rng(splitmix64(cfg.seed ^ 0x5d70c8a1b2e3f4ULL));
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    out.loss_history.reserve(cfg.epochs);
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t batch_n = std::min(cfg.batch_size, order.size() - start);
            AfedGrads grads = AfedGrads::zeros(dim);
            for (size_t i = 0; i < batch_n; ++i) {
                const LabeledSequence& s = dataset[order[start + i]];
                epoch_loss += afed_loss_and_grad(out.model, s.features, s.label, grads,
                                                 cfg.partitions, cfg.chunk_length);
            }
            apply_update(out.model, grads, cfg.learning_rate / static_cast<double>(batch_n));
        }
        out.loss_history.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return out;
}

void write_loss_history_csv(const std::string& path, const std::vector<double>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open " + path + " for writing");
    out << "epoch,loss\n";
    char buf[64];
    for (size_t i = 0; i < history.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", history[i]);
        out << i << ',' << buf << '\n';
    }
    if (!out) throw validation_error("failed writing " + path);
}

namespace {

double median_seconds(std::vector<double>& samples) {
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

double time_one_mix(const Matrix& k, const Matrix& v, const TimeMixerParams& params,
                    double& sink) {
    auto start = std::chrono::steady_clock::now();
    TimeMixResult r = time_mix(k, v, params);
    auto stop = std::chrono::steady_clock::now();
    sink += r.t.data[0] + r.final_state.r[0];
    return std::chrono::duration<double>(stop - start).count();
}

struct ProbeInstance {
    Matrix k;
    Matrix v;
    TimeMixerParams params;
};

std::vector<ComplexityPoint> probe(const std::vector<size_t>& sizes, int repetitions,
                                   const std::function<ProbeInstance(size_t)>& gen) {
    if (sizes.empty()) throw validation_error("complexity probe: no sizes");
    if (repetitions < 5) throw validation_error("complexity probe: need >= 5 repetitions");
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] == 0) throw validation_error("complexity probe: size must be >= 1");
        if (i > 0 && sizes[i] <= sizes[i - 1])
            throw validation_error("complexity probe: sizes must be increasing");
    }
    std::vector<ComplexityPoint> out;
    double sink = 0.0;
    for (size_t s : sizes) {
        ProbeInstance inst = gen(s);
        time_one_mix(inst.k, inst.v, inst.params, sink);   // warm-up, untimed
        std::vector<double> samples;
        samples.reserve(static_cast<size_t>(repetitions));
        for (int rep = 0; rep < repetitions; ++rep)
            samples.push_back(time_one_mix(inst.k, inst.v, inst.params, sink));
        out.push_back({s, median_seconds(samples)});
    }
    if (!std::isfinite(sink)) throw numerical_error("complexity probe produced non-finite output");
    return out;
}

ProbeInstance make_instance(size_t n, size_t d, const TimeMixerParams& params, uint64_t seed) {
    ProbeInstance inst;
    inst.params = params;
    Rng rng(splitmix64(seed));
    inst.k = Matrix(n, d);
    inst.v = Matrix(n, d);
    for (double& x : inst.k.data) x = rng.normal();
    for (double& x : inst.v.data) x = rng.normal();
    return inst;
}

}  // namespace

std::vector<ComplexityPoint> complexity_probe(const EnhancedRwkv& model,
                                              const std::vector<size_t>& lengths, int repetitions,
                                              uint64_t seed) {
    return probe(lengths, repetitions, [&](size_t n) {
        return make_instance(n, model.dim, model.blocks[0], seed ^ n);
    });
}

std::vector<ComplexityPoint> complexity_probe_dims(const std::vector<size_t>& dims, size_t length,
                                                   int repetitions, uint64_t seed) {
    if (length == 0) throw validation_error("complexity probe: sequence length must be >= 1");
    return probe(dims, repetitions, [&](size_t d) {
        return make_instance(length, d, TimeMixerParams::make(d), seed ^ (d << 20));
    });
}

double loglog_slope(const std::vector<ComplexityPoint>& points) {
    if (points.size() < 2) throw validation_error("loglog_slope: need >= 2 points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    double n = static_cast<double>(points.size());
    for (const ComplexityPoint& p : points) {
        double x = std::log(static_cast<double>(p.size));
        double y = std::log(std::max(p.seconds, 1e-9));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace tcvads
