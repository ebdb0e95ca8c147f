#include "tcvads/matrix.hpp"

#include <cmath>
#include <thread>

#include "tcvads/errors.hpp"

namespace tcvads {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows = init.size();
    cols = rows ? init.begin()->size() : 0;
    data.reserve(rows * cols);
    for (const auto& r : init) {
        if (r.size() != cols) throw validation_error("matrix literal: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

namespace {

void check_partitions(int partitions) {
    if (partitions < 1) throw validation_error("matmul: partitions must be >= 1");
}

// Runs fn(r) for each row r in [0, rows), split into `partitions` contiguous
// chunks. Each row is computed independently, so the split cannot change bits.
template <typename Fn>
void for_rows_partitioned(size_t rows, int partitions, Fn fn) {
    size_t p = static_cast<size_t>(partitions);
    if (p <= 1 || rows <= 1) {
        for (size_t r = 0; r < rows; ++r) fn(r);
        return;
    }
    if (p > rows) p = rows;
    std::vector<std::thread> workers;
    workers.reserve(p);
    size_t chunk = (rows + p - 1) / p;
    for (size_t start = 0; start < rows; start += chunk) {
        size_t end = std::min(rows, start + chunk);
        workers.emplace_back([start, end, &fn] {
            for (size_t r = start; r < end; ++r) fn(r);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b, int partitions) {
    if (a.cols != b.rows)
        throw validation_error("matmul: shape mismatch " + shape_str(a) + " * " + shape_str(b));
    check_partitions(partitions);
    Matrix out(a.rows, b.cols);
    for_rows_partitioned(a.rows, partitions, [&](size_t r) {
        const double* arow = a.row_ptr(r);
        double* orow = out.row_ptr(r);
        for (size_t c = 0; c < b.cols; ++c) {
            double acc = 0.0;
            for (size_t k = 0; k < a.cols; ++k) acc += arow[k] * b.at(k, c);
            orow[c] = acc;
        }
    });
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b, int partitions) {
    if (a.cols != b.cols)
        throw validation_error("matmul_nt: shape mismatch " + shape_str(a) + " * " + shape_str(b) +
                               "^T");
    check_partitions(partitions);
    Matrix out(a.rows, b.rows);
    for_rows_partitioned(a.rows, partitions, [&](size_t r) {
        const double* arow = a.row_ptr(r);
        double* orow = out.row_ptr(r);
        for (size_t c = 0; c < b.rows; ++c) {
            const double* brow = b.row_ptr(c);
            double acc = 0.0;
            for (size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            orow[c] = acc;
        }
    });
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (size_t r = 0; r < m.rows; ++r)
        for (size_t c = 0; c < m.cols; ++c) out.at(c, r) = m.at(r, c);
    return out;
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw validation_error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                               shape_str(b));
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& x : out.data) x *= s;
    return out;
}

void check_finite(const Matrix& m, const std::string& where) {
    for (double x : m.data)
        if (!std::isfinite(x)) throw numerical_error(where + ": non-finite value");
}

void check_finite(const std::vector<double>& v, const std::string& where) {
    for (double x : v)
        if (!std::isfinite(x)) throw numerical_error(where + ": non-finite value");
}

}  // namespace tcvads
