#include "tcvads/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcvads/errors.hpp"

namespace tcvads {

namespace {

constexpr double kSigmoidClamp = 36.0;
constexpr double kBceClamp = 1e-7;
// Below this biased variance a row is treated as constant.
constexpr double kConstantRowVar = 1e-30;

void check_same_size(const std::vector<double>& a, const std::vector<double>& b, const char* op) {
    if (a.size() != b.size())
        throw validation_error(std::string(op) + ": size mismatch " + std::to_string(a.size()) +
                               " vs " + std::to_string(b.size()));
}

}  // namespace

double sigmoid(double x) {
    double z = std::clamp(x, -kSigmoidClamp, kSigmoidClamp);
    if (z >= 0.0) {
        double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& m) {
    Matrix out = m;
    for (double& x : out.data) x = sigmoid(x);
    return out;
}

LayerNormResult layer_norm(const std::vector<double>& x, const std::vector<double>& gamma,
                           const std::vector<double>& beta, double eps) {
    if (x.empty()) throw validation_error("layer_norm: empty input");
    check_same_size(x, gamma, "layer_norm gamma");
    check_same_size(x, beta, "layer_norm beta");
    if (!(eps > 0.0)) throw validation_error("layer_norm: eps must be > 0");

    size_t d = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);

    LayerNormResult res;
    res.mean = mean;
    if (var <= kConstantRowVar) {
        res.constant_row = true;
        res.inv_std = 0.0;
        res.y = beta;
        return res;
    }
    res.inv_std = 1.0 / std::sqrt(var + eps);
    res.y.resize(d);
    for (size_t i = 0; i < d; ++i) res.y[i] = gamma[i] * (x[i] - mean) * res.inv_std + beta[i];
    return res;
}

LayerNormGrads layer_norm_backward(const std::vector<double>& x, const std::vector<double>& gamma,
                                   const LayerNormResult& fwd, const std::vector<double>& grad_y) {
    size_t d = x.size();
    LayerNormGrads g;
    g.dx.assign(d, 0.0);
    g.dgamma.assign(d, 0.0);
    g.dbeta = grad_y;
    if (fwd.constant_row) return g;

    // xhat_i = (x_i - mean) * inv_std; dxhat_i = grad_y_i * gamma_i;
    // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat . xhat))
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    std::vector<double> xhat(d), dxhat(d);
    for (size_t i = 0; i < d; ++i) {
        xhat[i] = (x[i] - fwd.mean) * fwd.inv_std;
        dxhat[i] = grad_y[i] * gamma[i];
        g.dgamma[i] = grad_y[i] * xhat[i];
        mean_dxhat += dxhat[i];
        mean_dxhat_xhat += dxhat[i] * xhat[i];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (size_t i = 0; i < d; ++i)
        g.dx[i] = fwd.inv_std * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    return g;
}

std::vector<double> softmax_temp(const std::vector<double>& s, double tau) {
    if (s.empty()) throw validation_error("softmax_temp: empty input");
    if (!(tau > 0.0)) throw validation_error("softmax_temp: tau must be > 0");
    double mx = *std::max_element(s.begin(), s.end());
    std::vector<double> p(s.size());
    double sum = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
        p[i] = std::exp((s[i] - mx) / tau);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    check_same_size(a, b, "cosine_similarity");
    if (a.empty()) throw validation_error("cosine_similarity: empty input");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw numerical_error("cosine_similarity: zero-norm vector");
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

CosineGrads cosine_similarity_backward(const std::vector<double>& a, const std::vector<double>& b,
                                       double grad_out) {
    check_same_size(a, b, "cosine_similarity_backward");
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    if (na2 == 0.0 || nb2 == 0.0)
        throw numerical_error("cosine_similarity_backward: zero-norm vector");
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    double c = dot / (na * nb);
    CosineGrads g;
    g.da.resize(a.size());
    g.db.resize(a.size());
    // d cos / d a_i = b_i / (|a||b|) - cos * a_i / |a|^2
    for (size_t i = 0; i < a.size(); ++i) {
        g.da[i] = grad_out * (b[i] / (na * nb) - c * a[i] / na2);
        g.db[i] = grad_out * (a[i] / (na * nb) - c * b[i] / nb2);
    }
    return g;
}

double bce_loss(const std::vector<double>& pred, const std::vector<double>& label) {
    check_same_size(pred, label, "bce_loss");
    if (pred.empty()) throw validation_error("bce_loss: empty input");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double p = std::clamp(pred[i], kBceClamp, 1.0 - kBceClamp);
        acc += -(label[i] * std::log(p) + (1.0 - label[i]) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(pred.size());
}

std::vector<double> bce_loss_grad(const std::vector<double>& pred,
                                  const std::vector<double>& label) {
    check_same_size(pred, label, "bce_loss_grad");
    if (pred.empty()) throw validation_error("bce_loss_grad: empty input");
    double n = static_cast<double>(pred.size());
    std::vector<double> g(pred.size(), 0.0);
    for (size_t i = 0; i < pred.size(); ++i) {
        // The clamp is flat outside (1e-7, 1 - 1e-7), so the gradient there is 0.
        if (pred[i] <= kBceClamp || pred[i] >= 1.0 - kBceClamp) continue;
        g[i] = -(label[i] / pred[i] - (1.0 - label[i]) / (1.0 - pred[i])) / n;
    }
    return g;
}

namespace {

void check_logits(const Matrix& teacher, const Matrix& student, double temp, const char* op) {
    if (!teacher.same_shape(student))
        throw validation_error(std::string(op) + ": shape mismatch " + shape_str(teacher) +
                               " vs " + shape_str(student));
    if (teacher.cols < 2) throw validation_error(std::string(op) + ": needs >= 2 classes");
    if (!(temp > 0.0)) throw validation_error(std::string(op) + ": temperature must be > 0");
}

// log softmax of row / temp, stable via max subtraction.
std::vector<double> log_softmax_row(const double* row, size_t n, double temp) {
    double mx = row[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    std::vector<double> z(n);
    for (size_t i = 0; i < n; ++i) {
        z[i] = (row[i] - mx) / temp;
        sum += std::exp(z[i]);
    }
    double lse = std::log(sum);
    for (double& v : z) v -= lse;
    return z;
}

}  // namespace

double kl_soft_loss(const Matrix& teacher_logits, const Matrix& student_logits, double temp) {
    check_logits(teacher_logits, student_logits, temp, "kl_soft_loss");
    double acc = 0.0;
    for (size_t r = 0; r < teacher_logits.rows; ++r) {
        auto logp = log_softmax_row(teacher_logits.row_ptr(r), teacher_logits.cols, temp);
        auto logq = log_softmax_row(student_logits.row_ptr(r), student_logits.cols, temp);
        for (size_t c = 0; c < teacher_logits.cols; ++c)
            acc += std::exp(logp[c]) * (logp[c] - logq[c]);
    }
    return acc;
}

Matrix kl_soft_loss_grad(const Matrix& teacher_logits, const Matrix& student_logits, double temp) {
    check_logits(teacher_logits, student_logits, temp, "kl_soft_loss_grad");
    Matrix g(student_logits.rows, student_logits.cols);
    for (size_t r = 0; r < teacher_logits.rows; ++r) {
        auto logp = log_softmax_row(teacher_logits.row_ptr(r), teacher_logits.cols, temp);
        auto logq = log_softmax_row(student_logits.row_ptr(r), student_logits.cols, temp);
        for (size_t c = 0; c < teacher_logits.cols; ++c)
            g.at(r, c) = (std::exp(logq[c]) - std::exp(logp[c])) / temp;
    }
    return g;
}

GradCheckReport finite_diff_check(const std::function<double(const std::vector<double>&)>& fn,
                                  std::vector<double> x, const std::vector<double>& analytic_grad,
                                  double h) {
    check_same_size(x, analytic_grad, "finite_diff_check");
    if (!(h > 0.0)) throw validation_error("finite_diff_check: h must be > 0");
    GradCheckReport rep;
    for (size_t i = 0; i < x.size(); ++i) {
        double orig = x[i];
        x[i] = orig + h;
        double fp = fn(x);
        x[i] = orig - h;
        double fm = fn(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw numerical_error("finite_diff_check: fn returned non-finite value");
        double numeric = (fp - fm) / (2.0 * h);
        double analytic = analytic_grad[i];
        double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        double rel = std::fabs(analytic - numeric) / denom;
        if (rel >= rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = i;
            rep.analytic_at_worst = analytic;
            rep.numeric_at_worst = numeric;
        }
    }
    return rep;
}

}  // namespace tcvads
