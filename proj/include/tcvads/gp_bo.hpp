#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace tcvads {

// Gaussian-process regression over a scalar input (the distillation
// temperature) with a squared-exponential kernel, plus the expected-
// improvement search loop that picks the temperature.

struct GpObservation {
    double t = 0.0;     // input location
    double y = 0.0;     // observed loss
};

struct GpModel {
    std::vector<GpObservation> obs;
    double sigma_f_sq = 1.0;
    double length_scale = 0.75;
    double noise_sq = 1e-6;
    double y_mean = 0.0;    // prior mean: observations are centered by this
    double jitter = 0.0;    // diagonal actually used by the factorization
    std::vector<double> chol;    // lower-triangular Cholesky factor, row-major
    std::vector<double> alpha;   // (K + jitter I)^-1 (y - y_mean)
};

// Fits K + noise^2 I by Cholesky. A non-positive-definite Gram matrix retries
// with the diagonal escalated tenfold per attempt up to 1e-3, then throws.
GpModel gp_fit(const std::vector<GpObservation>& obs, double sigma_f_sq = 1.0,
               double length_scale = 0.75, double noise_sq = 1e-6);

struct GpPosterior {
    double mu = 0.0;
    double var = 0.0;   // clamped at zero
};

GpPosterior gp_posterior(const GpModel& model, double t_star);

double gp_log_marginal_likelihood(const GpModel& model);

// Best (sigma_f^2, length scale) over {0.25, 0.5, 1, 2}^2 by log marginal
// likelihood; earlier grid entries win ties.
std::pair<double, double> gp_select_hyperparams(const std::vector<GpObservation>& obs,
                                                double noise_sq = 1e-6);

// Expected improvement for minimization: with z = (f_best - mu) / sigma,
// EI = (f_best - mu) Phi(z) + sigma phi(z); max(0, f_best - mu) when sigma
// is zero. Never negative.
double ei_value(double mu, double sigma, double f_best);

double expected_improvement(const GpModel& model, double t, double f_best);

struct BoConfig {
    double t_min = 0.5;
    double t_max = 5.0;
    size_t n_init = 5;              // uniform grid of first evaluations
    size_t n_iter = 30;             // EI-proposed evaluations after the grid
    size_t grid_resolution = 256;   // candidate points per proposal
    void validate() const;
};

// Argmax of EI over the candidate grid. Ties break toward smaller t; if EI is
// zero everywhere the proposal falls back to the grid point nearest the
// middle of the range.
double propose_next(const GpModel& model, const BoConfig& bo, double f_best);

struct BoTraceRow {
    size_t iteration = 0;
    double t = 0.0;
    double loss = 0.0;   // NaN when the evaluation returned a non-finite value
    double ei = 0.0;     // NaN for the initial grid rows (no proposal yet)
};

struct BoResult {
    double t_opt = 0.0;
    std::vector<BoTraceRow> trace;
};

// Evaluates loss_fn on the n_init grid, then runs n_iter EI proposals. Every
// evaluation lands in the trace; non-finite losses are recorded as NaN and
// excluded from the surrogate. t_opt is the earliest finite minimum. Throws
// if every evaluation came back non-finite.
BoResult optimize_temperature(const std::function<double(double)>& loss_fn, const BoConfig& bo);

// CSV with header iteration,T,loss,EI_at_proposal.
void write_bo_trace_csv(const std::string& path, const std::vector<BoTraceRow>& trace);

}  // namespace tcvads
