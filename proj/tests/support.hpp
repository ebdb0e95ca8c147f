#pragma once

#include <vector>

#include "tcvads/matrix.hpp"
#include "tcvads/rng.hpp"

namespace testsup {

inline std::vector<double> random_vec(tcvads::Rng& rng, size_t n, double lo = -2.0,
                                      double hi = 2.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline tcvads::Matrix random_matrix(tcvads::Rng& rng, size_t rows, size_t cols, double lo = -2.0,
                                    double hi = 2.0) {
    tcvads::Matrix m(rows, cols);
    for (double& x : m.data) x = rng.uniform(lo, hi);
    return m;
}

inline tcvads::Matrix random_gaussian_matrix(tcvads::Rng& rng, size_t rows, size_t cols,
                                             double stddev = 1.0) {
    tcvads::Matrix m(rows, cols);
    for (double& x : m.data) x = rng.normal(0.0, stddev);
    return m;
}

}  // namespace testsup
