#pragma once

#include <functional>
#include <vector>

#include "tcvads/matrix.hpp"

namespace tcvads {

// Logistic sigmoid with the pre-activation clamped to +/-36 so the result
// stays strictly inside (0, 1) in double precision and exp never overflows.
double sigmoid(double x);
Matrix sigmoid(const Matrix& m);

// d(sigmoid)/dx expressed through the output y: y * (1 - y).
inline double sigmoid_grad_from_y(double y) { return y * (1.0 - y); }

struct LayerNormResult {
    std::vector<double> y;
    // Cached per-row statistics for backward.
    double mean = 0.0;
    double inv_std = 0.0;   // 1 / sqrt(var + eps)
    bool constant_row = false;
};

// Row layer norm: y_i = gamma_i * (x_i - mean) / sqrt(var + eps) + beta_i,
// with biased variance. A zero-variance row returns beta outright instead of
// amplifying rounding noise at eps scale.
LayerNormResult layer_norm(const std::vector<double>& x, const std::vector<double>& gamma,
                           const std::vector<double>& beta, double eps);

struct LayerNormGrads {
    std::vector<double> dx;
    std::vector<double> dgamma;
    std::vector<double> dbeta;
};

LayerNormGrads layer_norm_backward(const std::vector<double>& x, const std::vector<double>& gamma,
                                   const LayerNormResult& fwd, const std::vector<double>& grad_y);

// Temperature softmax with max subtraction. tau must be > 0.
std::vector<double> softmax_temp(const std::vector<double>& s, double tau);

// cos(a, b) = a.b / (|a| |b|), clamped to [-1, 1]. Zero-norm input throws.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct CosineGrads {
    std::vector<double> da;
    std::vector<double> db;
};

CosineGrads cosine_similarity_backward(const std::vector<double>& a, const std::vector<double>& b,
                                       double grad_out);

// Binary cross entropy, mean over elements. Predictions are clamped to
// [1e-7, 1 - 1e-7] before the logs.
double bce_loss(const std::vector<double>& pred, const std::vector<double>& label);

// Gradient w.r.t. pred. Zero where the clamp is active, matching finite
// differences of the clamped loss.
std::vector<double> bce_loss_grad(const std::vector<double>& pred,
                                  const std::vector<double>& label);

// Sum over rows of KL(softmax(teacher_row / temp) || softmax(student_row / temp)).
// Rows are samples, columns are classes (>= 2). Computed in log space.
double kl_soft_loss(const Matrix& teacher_logits, const Matrix& student_logits, double temp);

// Gradient w.r.t. student logits: (q - p) / temp per entry; the teacher is a
// constant.
Matrix kl_soft_loss_grad(const Matrix& teacher_logits, const Matrix& student_logits, double temp);

struct GradCheckReport {
    double max_rel_error = 0.0;
    size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Central-difference check of an analytic gradient. Relative error uses
// |a - n| / max(|a|, |n|, 1e-8) per coordinate. Throws numerical_error if fn
// returns a non-finite value.
GradCheckReport finite_diff_check(const std::function<double(const std::vector<double>&)>& fn,
                                  std::vector<double> x, const std::vector<double>& analytic_grad,
                                  double h = 1e-5);

}  // namespace tcvads
