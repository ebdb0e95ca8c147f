#include "tcvads/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tcvads/errors.hpp"
#include "tcvads/feature_io.hpp"
#include "tcvads/numerics.hpp"
#include "tcvads/rng.hpp"

namespace tcvads {

namespace {

constexpr size_t kKernel = 3;

void check_vec_len(const std::vector<double>& v, size_t want, const char* what) {
    if (v.size() != want)
        throw validation_error(std::string(what) + ": expected " + std::to_string(want) +
                               " values, got " + std::to_string(v.size()));
}

// pre[t][f] = b[f] + sum_c sum_tau w(f, c*3 + tau) * x[t + tau - 1][c], zero
// padded at both ends.
Matrix conv1d(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    size_t n = x.rows, in_ch = x.cols, out_ch = w.rows;
    Matrix pre(n, out_ch);
    for (size_t t = 0; t < n; ++t) {
        double* row = pre.row_ptr(t);
        for (size_t f = 0; f < out_ch; ++f) {
            double sum = b[f];
            const double* wf = w.row_ptr(f);
            for (size_t c = 0; c < in_ch; ++c) {
                for (size_t tau = 0; tau < kKernel; ++tau) {
                    size_t src = t + tau;
                    if (src < 1 || src > n) continue;   // zero padding
                    sum += wf[c * kKernel + tau] * x.at(src - 1, c);
                }
            }
            row[f] = sum;
        }
    }
    return pre;
}

// Scatters d_pre into the weight, bias, and (optionally) input gradients.
void conv1d_backward(const Matrix& x, const Matrix& w, const Matrix& d_pre, Matrix& d_w,
                     std::vector<double>& d_b, Matrix* d_x) {
    size_t n = x.rows, in_ch = x.cols, out_ch = w.rows;
    for (size_t t = 0; t < n; ++t) {
        const double* g = d_pre.row_ptr(t);
        for (size_t f = 0; f < out_ch; ++f) {
            if (g[f] == 0.0) continue;
            d_b[f] += g[f];
            const double* wf = w.row_ptr(f);
            double* dwf = d_w.row_ptr(f);
            for (size_t c = 0; c < in_ch; ++c) {
                for (size_t tau = 0; tau < kKernel; ++tau) {
                    size_t src = t + tau;
                    if (src < 1 || src > n) continue;
                    dwf[c * kKernel + tau] += g[f] * x.at(src - 1, c);
                    if (d_x != nullptr) d_x->at(src - 1, c) += g[f] * wf[c * kKernel + tau];
                }
            }
        }
    }
}

Matrix relu(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data) v = std::max(0.0, v);
    return out;
}

}  // namespace

QacmStudent QacmStudent::make(size_t dim, size_t hidden) {
    QacmStudent s;
    s.dim = dim;
    s.hidden = hidden;
    s.w1 = Matrix(hidden, dim * kKernel);
    s.w2 = Matrix(hidden, hidden * kKernel);
    s.w3 = Matrix(hidden, hidden * kKernel);
    s.b1.assign(hidden, 0.0);
    s.b2.assign(hidden, 0.0);
    s.b3.assign(hidden, 0.0);
    s.head_w.assign(hidden, 0.0);
    return s;
}

QacmStudent QacmStudent::seeded(size_t dim, size_t hidden, uint64_t seed, double scale) {
    QacmStudent s = make(dim, hidden);
    Rng rng(splitmix64(seed));
    for (double& v : s.w1.data) v = rng.normal(0.0, scale);
    for (double& v : s.w2.data) v = rng.normal(0.0, scale);
    for (double& v : s.w3.data) v = rng.normal(0.0, scale);
    for (double& v : s.head_w) v = rng.normal(0.0, scale);
    return s;
}

size_t QacmStudent::param_count() const {
    return w1.size() + w2.size() + w3.size() + b1.size() + b2.size() + b3.size() + head_w.size() +
           1;
}

void QacmStudent::validate() const {
    if (dim == 0 || hidden == 0) throw validation_error("student dims must be >= 1");
    if (w1.rows != hidden || w1.cols != dim * kKernel)
        throw validation_error("student conv1 weights have the wrong shape");
    if (w2.rows != hidden || w2.cols != hidden * kKernel)
        throw validation_error("student conv2 weights have the wrong shape");
    if (w3.rows != hidden || w3.cols != hidden * kKernel)
        throw validation_error("student conv3 weights have the wrong shape");
    check_vec_len(b1, hidden, "student conv1 bias");
    check_vec_len(b2, hidden, "student conv2 bias");
    check_vec_len(b3, hidden, "student conv3 bias");
    check_vec_len(head_w, hidden, "student head weights");
    check_finite(w1, "student conv1");
    check_finite(w2, "student conv2");
    check_finite(w3, "student conv3");
    check_finite(b1, "student conv1 bias");
    check_finite(b2, "student conv2 bias");
    check_finite(b3, "student conv3 bias");
    check_finite(head_w, "student head");
    if (!std::isfinite(head_b)) throw numerical_error("non-finite value in student head bias");
}

void QacmStudent::save(const std::string& path) const {
    validate();
    BinaryWriter w = checkpoint_writer(kSectionStudent);
    w.u32(static_cast<uint32_t>(dim));
    w.u32(static_cast<uint32_t>(hidden));
    w.f64_vec(w1.data);
    w.f64_vec(b1);
    w.f64_vec(w2.data);
    w.f64_vec(b2);
    w.f64_vec(w3.data);
    w.f64_vec(b3);
    w.f64_vec(head_w);
    w.f64(head_b);
    w.save(path);
}

QacmStudent QacmStudent::load(const std::string& path) {
    BinaryReader r = open_checkpoint(path, kSectionStudent);
    size_t dim = r.u32();
    size_t hidden = r.u32();
    QacmStudent s = make(dim, hidden);
    s.w1.data = r.f64_vec();
    s.b1 = r.f64_vec();
    s.w2.data = r.f64_vec();
    s.b2 = r.f64_vec();
    s.w3.data = r.f64_vec();
    s.b3 = r.f64_vec();
    check_vec_len(s.w1.data, hidden * dim * kKernel, "checkpoint conv1");
    check_vec_len(s.w2.data, hidden * hidden * kKernel, "checkpoint conv2");
    check_vec_len(s.w3.data, hidden * hidden * kKernel, "checkpoint conv3");
    s.head_w = r.f64_vec();
    s.head_b = r.f64();
    r.expect_end();
    s.validate();
    return s;
}

StudentForward student_forward(const QacmStudent& student, const Matrix& features) {
    if (features.rows < kKernel)
        throw validation_error("student needs at least 3 frames, got " +
                               std::to_string(features.rows));
    if (features.cols != student.dim)
        throw validation_error("student feature width " + std::to_string(features.cols) +
                               " does not match model dim " + std::to_string(student.dim));
    StudentForward f;
    f.pre1 = conv1d(features, student.w1, student.b1);
    f.act1 = relu(f.pre1);
    f.pre2 = conv1d(f.act1, student.w2, student.b2);
    f.act2 = relu(f.pre2);
    f.feat = conv1d(f.act2, student.w3, student.b3);

    size_t n = features.rows;
    f.frame_logits.resize(n);
    double sum = 0.0;
    for (size_t t = 0; t < n; ++t) {
        double z = student.head_b;
        const double* row = f.feat.row_ptr(t);
        for (size_t j = 0; j < student.hidden; ++j) z += student.head_w[j] * row[j];
        f.frame_logits[t] = z;
        sum += z;
    }
    f.logit = sum / static_cast<double>(n);
    return f;
}

StudentGrads StudentGrads::zeros(size_t dim, size_t hidden) {
    StudentGrads g;
    g.d_w1 = Matrix(hidden, dim * kKernel);
    g.d_w2 = Matrix(hidden, hidden * kKernel);
    g.d_w3 = Matrix(hidden, hidden * kKernel);
    g.d_b1.assign(hidden, 0.0);
    g.d_b2.assign(hidden, 0.0);
    g.d_b3.assign(hidden, 0.0);
    g.d_head_w.assign(hidden, 0.0);
    return g;
}

void student_backward(const QacmStudent& student, const Matrix& features,
                      const StudentForward& fwd, double d_logit, StudentGrads& grads) {
    size_t n = features.rows, h = student.hidden;
    double per_frame = d_logit / static_cast<double>(n);

    Matrix d_feat(n, h);
    for (size_t t = 0; t < n; ++t) {
        const double* row = fwd.feat.row_ptr(t);
        double* d_row = d_feat.row_ptr(t);
        for (size_t j = 0; j < h; ++j) {
            grads.d_head_w[j] += per_frame * row[j];
            d_row[j] = per_frame * student.head_w[j];
        }
        grads.d_head_b += per_frame;
    }

    Matrix d_act2(n, h);
    conv1d_backward(fwd.act2, student.w3, d_feat, grads.d_w3, grads.d_b3, &d_act2);
    for (size_t i = 0; i < d_act2.data.size(); ++i)
        if (fwd.pre2.data[i] <= 0.0) d_act2.data[i] = 0.0;

    Matrix d_act1(n, h);
    conv1d_backward(fwd.act1, student.w2, d_act2, grads.d_w2, grads.d_b2, &d_act1);
    for (size_t i = 0; i < d_act1.data.size(); ++i)
        if (fwd.pre1.data[i] <= 0.0) d_act1.data[i] = 0.0;

    conv1d_backward(features, student.w1, d_act1, grads.d_w1, grads.d_b1, nullptr);
}

double hard_loss(const std::vector<double>& probs, const std::vector<double>& labels) {
    return bce_loss(probs, labels);
}

double total_distill_loss(double hard, double soft, double lambda) {
    return hard + lambda * soft;
}

void DistillConfig::validate() const {
    if (lambda < 0.0) throw validation_error("soft-loss weight must be >= 0");
    if (epochs < 1) throw validation_error("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw validation_error("learning rate must be > 0");
    if (batch_size < 1) throw validation_error("batch size must be >= 1");
    if (hidden < 1) throw validation_error("student width must be >= 1");
    if (probe_epochs < 1) throw validation_error("probe epochs must be >= 1");
}

namespace {

void check_dataset(const std::vector<LabeledSequence>& dataset) {
    if (dataset.empty()) throw validation_error("training data is empty");
    size_t dim = dataset.front().features.cols;
    for (const LabeledSequence& s : dataset) {
        if (s.label != 0 && s.label != 1)
            throw validation_error("sequence \"" + s.id + "\": video label must be 0 or 1");
        if (s.features.rows < kKernel)
            throw validation_error("sequence \"" + s.id + "\": student needs at least 3 frames");
        if (s.features.cols != dim)
            throw validation_error("sequence \"" + s.id + "\": feature width " +
                                   std::to_string(s.features.cols) + " != " + std::to_string(dim));
    }
}

void sgd_step(Matrix& w, const Matrix& g, double step) {
    for (size_t i = 0; i < w.data.size(); ++i) w.data[i] -= step * g.data[i];
}

void sgd_step(std::vector<double>& w, const std::vector<double>& g, double step) {
    for (size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
}

void apply_update(QacmStudent& s, const StudentGrads& g, double step) {
    sgd_step(s.w1, g.d_w1, step);
    sgd_step(s.w2, g.d_w2, step);
    sgd_step(s.w3, g.d_w3, step);
    sgd_step(s.b1, g.d_b1, step);
    sgd_step(s.b2, g.d_b2, step);
    sgd_step(s.b3, g.d_b3, step);
    sgd_step(s.head_w, g.d_head_w, step);
    s.head_b -= step * g.d_head_b;
}

double video_soft_loss(double teacher_logit, double student_logit, double temp,
                       double* d_student_logit) {
    Matrix t_row(1, 2);
    t_row.at(0, 0) = teacher_logit;
    Matrix s_row(1, 2);
    s_row.at(0, 0) = student_logit;
    double loss = kl_soft_loss(t_row, s_row, temp);
    if (d_student_logit != nullptr) {
        // The second column is a structural constant zero, so only the first
        // column's gradient flows to the student.
        *d_student_logit = kl_soft_loss_grad(t_row, s_row, temp).at(0, 0);
    }
    return loss;
}

// Shared minibatch loop. teacher_logits empty means plain BCE; lambda 0 skips
// the soft term entirely, so the arithmetic is identical to a BCE-only run.
StudentTrainResult train_loop(const std::vector<LabeledSequence>& dataset,
                              const std::vector<double>& teacher_logits, double temp,
                              double lambda, size_t epochs, const DistillConfig& cfg) {
    size_t dim = dataset.front().features.cols;
    StudentTrainResult out;
    out.student = QacmStudent::seeded(dim, cfg.hidden, splitmix64(cfg.seed ^ 0x57d43a7bULL));

    Rng order_rng(splitmix64(cfg.seed ^ 0xd15721f0c4b3a2ULL));
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    out.loss_history.reserve(epochs);
    for (size_t epoch = 0; epoch < epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t batch_n = std::min(cfg.batch_size, order.size() - start);
            StudentGrads grads = StudentGrads::zeros(dim, cfg.hidden);
            for (size_t i = 0; i < batch_n; ++i) {
                size_t idx = order[start + i];
                const LabeledSequence& s = dataset[idx];
                StudentForward fwd = student_forward(out.student, s.features);

                double p = sigmoid(fwd.logit);
                std::vector<double> pred{p}, want{static_cast<double>(s.label)};
                double hard = bce_loss(pred, want);
                double dz = bce_loss_grad(pred, want)[0] * sigmoid_grad_from_y(p);

                double total = hard;
                if (lambda > 0.0) {
                    double dz_soft = 0.0;
                    double soft =
                        video_soft_loss(teacher_logits[idx], fwd.logit, temp, &dz_soft);
                    total = total_distill_loss(hard, soft, lambda);
                    dz += lambda * dz_soft;
                }
                student_backward(out.student, s.features, fwd, dz, grads);
                epoch_loss += total;
            }
            apply_update(out.student, grads, cfg.learning_rate / static_cast<double>(batch_n));
        }
        out.loss_history.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return out;
}

double mean_soft_loss(const QacmStudent& student, const std::vector<LabeledSequence>& dataset,
                      const std::vector<double>& teacher_logits, double temp) {
    double sum = 0.0;
    for (size_t i = 0; i < dataset.size(); ++i) {
        StudentForward fwd = student_forward(student, dataset[i].features);
        sum += video_soft_loss(teacher_logits[i], fwd.logit, temp, nullptr);
    }
    return sum / static_cast<double>(dataset.size());
}

}  // namespace

StudentTrainResult train_student_bce(const std::vector<LabeledSequence>& dataset,
                                     const DistillConfig& cfg) {
    cfg.validate();
    check_dataset(dataset);
    return train_loop(dataset, {}, 1.0, 0.0, cfg.epochs, cfg);
}

DistillResult distill(const EnhancedRwkv& teacher, const std::vector<LabeledSequence>& dataset,
                      const DistillConfig& cfg, const BoConfig& bo) {
    cfg.validate();
    bo.validate();
    teacher.validate();
    check_dataset(dataset);
    if (dataset.front().features.cols != teacher.dim)
        throw validation_error("dataset feature width does not match the teacher dim");

    DistillResult out;
    if (cfg.lambda == 0.0) {
        StudentTrainResult plain = train_loop(dataset, {}, 1.0, 0.0, cfg.epochs, cfg);
        out.student = std::move(plain.student);
        out.loss_history = std::move(plain.loss_history);
        out.t_opt = 1.0;
        return out;
    }

    // The teacher is frozen: score every video once up front.
    std::vector<double> teacher_logits(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
        double vs = video_score(teacher, dataset[i].features, cfg.partitions, cfg.chunk_length)
                        .video_scr;
        teacher_logits[i] = std::log(vs) - std::log1p(-vs);
    }

    auto probe = [&](double temp) {
        StudentTrainResult run =
            train_loop(dataset, teacher_logits, temp, cfg.lambda, cfg.probe_epochs, cfg);
        return mean_soft_loss(run.student, dataset, teacher_logits, temp);
    };
    BoResult search = optimize_temperature(probe, bo);

    StudentTrainResult full =
        train_loop(dataset, teacher_logits, search.t_opt, cfg.lambda, cfg.epochs, cfg);
    out.student = std::move(full.student);
    out.loss_history = std::move(full.loss_history);
    out.t_opt = search.t_opt;
    out.trace = std::move(search.trace);
    return out;
}

}  // namespace tcvads
