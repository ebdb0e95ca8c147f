#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace tcvads {

// Dense row-major matrix of doubles. Internal math is 64-bit throughout;
// 32-bit narrowing happens only at the file boundary.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init);

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    const double& at(size_t r, size_t c) const { return data[r * cols + c]; }

    double* row_ptr(size_t r) { return data.data() + r * cols; }
    const double* row_ptr(size_t r) const { return data.data() + r * cols; }

    size_t size() const { return rows * cols; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

std::string shape_str(const Matrix& m);

// a (m x k) times b (k x n). The k-summation order per output element is
// fixed, so the result is bit-identical for any partition count; partitions
// split output rows across threads.
Matrix matmul(const Matrix& a, const Matrix& b, int partitions = 1);

// a (m x k) times b^T where b is (n x k). Same determinism contract.
Matrix matmul_nt(const Matrix& a, const Matrix& b, int partitions = 1);

Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// Throws numerical_error naming `where` if any entry is non-finite.
void check_finite(const Matrix& m, const std::string& where);
void check_finite(const std::vector<double>& v, const std::string& where);

}  // namespace tcvads
