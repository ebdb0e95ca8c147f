#include "tcvads/gp_bo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "tcvads/errors.hpp"

namespace tcvads {

namespace {

constexpr double kMaxJitter = 1e-3;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double sq_exp_kernel(double a, double b, double sigma_f_sq, double length_scale) {
    double d = a - b;
    return sigma_f_sq * std::exp(-d * d / (2.0 * length_scale * length_scale));
}

// Plain Cholesky; returns false on a non-positive pivot.
bool cholesky(std::vector<double>& a, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double sum = a[i * n + j];
            for (size_t k = 0; k < j; ++k) sum -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (!(sum > 0.0)) return false;
                a[i * n + i] = std::sqrt(sum);
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for (size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
    }
    return true;
}

std::vector<double> chol_solve(const std::vector<double>& l, size_t n, std::vector<double> b) {
    for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < i; ++k) b[i] -= l[i * n + k] * b[k];
        b[i] /= l[i * n + i];
    }
    for (size_t i = n; i-- > 0;) {
        for (size_t k = i + 1; k < n; ++k) b[i] -= l[k * n + i] * b[k];
        b[i] /= l[i * n + i];
    }
    return b;
}

}  // namespace

GpModel gp_fit(const std::vector<GpObservation>& obs, double sigma_f_sq, double length_scale,
               double noise_sq) {
    if (obs.empty()) throw validation_error("gp_fit: no observations");
    if (!(sigma_f_sq > 0.0)) throw validation_error("gp_fit: signal variance must be > 0");
    if (!(length_scale > 0.0)) throw validation_error("gp_fit: length scale must be > 0");
    if (noise_sq < 0.0) throw validation_error("gp_fit: noise variance must be >= 0");
    for (const GpObservation& o : obs)
        if (!std::isfinite(o.t) || !std::isfinite(o.y))
            throw validation_error("gp_fit: non-finite observation");
    if (noise_sq == 0.0) {
        for (size_t i = 0; i < obs.size(); ++i)
            for (size_t j = i + 1; j < obs.size(); ++j)
                if (obs[i].t == obs[j].t)
                    throw validation_error("gp_fit: duplicate inputs need noise variance > 0");
    }

    GpModel m;
    m.obs = obs;
    m.sigma_f_sq = sigma_f_sq;
    m.length_scale = length_scale;
    m.noise_sq = noise_sq;
    double sum = 0.0;
    for (const GpObservation& o : obs) sum += o.y;
    m.y_mean = sum / static_cast<double>(obs.size());

    size_t n = obs.size();
    std::vector<double> gram(n * n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            gram[i * n + j] = sq_exp_kernel(obs[i].t, obs[j].t, sigma_f_sq, length_scale);

    double jitter = noise_sq;
    for (;;) {
        std::vector<double> a = gram;
        for (size_t i = 0; i < n; ++i) a[i * n + i] += jitter;
        if (cholesky(a, n)) {
            m.chol = std::move(a);
            m.jitter = jitter;
            break;
        }
        jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
        if (jitter > kMaxJitter)
            throw numerical_error("gp_fit: Gram matrix not positive definite at jitter 1e-3");
    }

    std::vector<double> centered(n);
    for (size_t i = 0; i < n; ++i) centered[i] = obs[i].y - m.y_mean;
    m.alpha = chol_solve(m.chol, n, std::move(centered));
    return m;
}

GpPosterior gp_posterior(const GpModel& model, double t_star) {
    size_t n = model.obs.size();
    if (n == 0 || model.chol.empty()) throw validation_error("gp_posterior: model is not fitted");
    std::vector<double> k_star(n);
    for (size_t i = 0; i < n; ++i)
        k_star[i] = sq_exp_kernel(model.obs[i].t, t_star, model.sigma_f_sq, model.length_scale);

    GpPosterior out;
    out.mu = model.y_mean;
    for (size_t i = 0; i < n; ++i) out.mu += k_star[i] * model.alpha[i];

    // v = L^-1 k*; var = k(t*, t*) - v.v, clamped against rounding.
    std::vector<double> v = k_star;
    for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < i; ++k) v[i] -= model.chol[i * n + k] * v[k];
        v[i] /= model.chol[i * n + i];
    }
    double vv = 0.0;
    for (double x : v) vv += x * x;
    out.var = std::max(0.0, model.sigma_f_sq - vv);
    return out;
}

double gp_log_marginal_likelihood(const GpModel& model) {
    size_t n = model.obs.size();
    if (n == 0 || model.chol.empty())
        throw validation_error("gp_log_marginal_likelihood: model is not fitted");
    double fit = 0.0;
    for (size_t i = 0; i < n; ++i) fit += (model.obs[i].y - model.y_mean) * model.alpha[i];
    double log_det_half = 0.0;
    for (size_t i = 0; i < n; ++i) log_det_half += std::log(model.chol[i * n + i]);
    return -0.5 * fit - log_det_half -
           0.5 * static_cast<double>(n) * std::log(2.0 * 3.14159265358979323846);
}

std::pair<double, double> gp_select_hyperparams(const std::vector<GpObservation>& obs,
                                                double noise_sq) {
    const double grid[] = {0.25, 0.5, 1.0, 2.0};
    double best_lml = -std::numeric_limits<double>::infinity();
    std::pair<double, double> best{1.0, 1.0};
    for (double sf : grid) {
        for (double l : grid) {
            double lml = gp_log_marginal_likelihood(gp_fit(obs, sf, l, noise_sq));
            if (lml > best_lml) {
                best_lml = lml;
                best = {sf, l};
            }
        }
    }
    return best;
}

double ei_value(double mu, double sigma, double f_best) {
    if (sigma < 0.0) throw validation_error("ei_value: sigma must be >= 0");
    double gap = f_best - mu;
    if (sigma == 0.0) return std::max(0.0, gap);
    double z = gap / sigma;
    double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
    return std::max(0.0, gap * cdf + sigma * pdf);
}

double expected_improvement(const GpModel& model, double t, double f_best) {
    GpPosterior p = gp_posterior(model, t);
    return ei_value(p.mu, std::sqrt(p.var), f_best);
}

void BoConfig::validate() const {
    if (!(t_min > 0.0)) throw validation_error("search range lower bound must be > 0");
    if (!(t_max > t_min)) throw validation_error("search range upper bound must exceed the lower");
    if (n_init < 2) throw validation_error("need at least 2 initial samples");
    if (grid_resolution < 2) throw validation_error("candidate grid needs at least 2 points");
}

namespace {

double grid_point(const BoConfig& bo, size_t i) {
    double step = (bo.t_max - bo.t_min) / static_cast<double>(bo.grid_resolution - 1);
    return bo.t_min + static_cast<double>(i) * step;
}

double midpoint_grid_point(const BoConfig& bo) {
    double mid = 0.5 * (bo.t_min + bo.t_max);
    size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < bo.grid_resolution; ++i) {
        double d = std::fabs(grid_point(bo, i) - mid);
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return grid_point(bo, best);
}

}  // namespace

double propose_next(const GpModel& model, const BoConfig& bo, double f_best) {
    bo.validate();
    double best_t = 0.0;
    double best_ei = 0.0;
    for (size_t i = 0; i < bo.grid_resolution; ++i) {
        double t = grid_point(bo, i);
        double ei = expected_improvement(model, t, f_best);
        // Strict improvement keeps the smallest t among ties.
        if (ei > best_ei) {
            best_ei = ei;
            best_t = t;
        }
    }
    if (best_ei == 0.0) return midpoint_grid_point(bo);
    return best_t;
}

BoResult optimize_temperature(const std::function<double(double)>& loss_fn, const BoConfig& bo) {
    bo.validate();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    BoResult out;
    std::vector<GpObservation> obs;
    bool have_opt = false;
    double best_loss = 0.0;

    auto evaluate = [&](size_t iteration, double t, double ei) {
        double loss = loss_fn(t);
        bool ok = std::isfinite(loss);
        out.trace.push_back({iteration, t, ok ? loss : nan, ei});
        if (!ok) return;
        obs.push_back({t, loss});
        if (!have_opt || loss < best_loss) {
            have_opt = true;
            best_loss = loss;
            out.t_opt = t;
        }
    };

    double init_step = (bo.t_max - bo.t_min) / static_cast<double>(bo.n_init - 1);
    for (size_t i = 0; i < bo.n_init; ++i)
        evaluate(i, bo.t_min + static_cast<double>(i) * init_step, nan);

    for (size_t it = 0; it < bo.n_iter; ++it) {
        double t_next, ei;
        if (obs.empty()) {
            // Nothing finite yet; keep probing the middle of the range.
            t_next = midpoint_grid_point(bo);
            ei = nan;
        } else {
            GpModel gp = gp_fit(obs);
            t_next = propose_next(gp, bo, best_loss);
            ei = expected_improvement(gp, t_next, best_loss);
        }
        evaluate(bo.n_init + it, t_next, ei);
    }

    if (!have_opt)
        throw numerical_error("temperature search: every evaluation returned a non-finite loss");
    return out;
}

void write_bo_trace_csv(const std::string& path, const std::vector<BoTraceRow>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot open " + path + " for writing");
    out << "iteration,T,loss,EI_at_proposal\n";
    char t[64], loss[64], ei[64];
    for (const BoTraceRow& row : trace) {
        std::snprintf(t, sizeof t, "%.17g", row.t);
        std::snprintf(loss, sizeof loss, "%.17g", row.loss);
        std::snprintf(ei, sizeof ei, "%.17g", row.ei);
        out << row.iteration << ',' << t << ',' << loss << ',' << ei << '\n';
    }
    if (!out) throw validation_error("failed writing " + path);
}

}  // namespace tcvads
