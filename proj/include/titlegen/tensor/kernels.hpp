#pragma once

#include <cstddef>

// Dense numeric kernels underneath the tensor ops. Each kernel exists twice:
// a plain serial reference in kernels::serial and an OpenMP version in
// kernels::par. Both compute every output element with the same fixed
// accumulation order, so their results are bit-identical; the tests assert
// exact equality and the bench tool compares throughput.

namespace titlegen::tensor::kernels {

enum class ExecMode { kSerial, kParallel };

ExecMode exec_mode();
void set_exec_mode(ExecMode mode);
int max_threads();

namespace serial {

// c[p x r] = op_a(a) * op_b(b) with logical dims op_a(a)[p x q], op_b(b)[q x r].
// Stored layouts: a is p x q (or q x p when trans_a), b is q x r (or r x q
// when trans_b). trans_a && trans_b is unsupported. When accumulate, adds
// into c instead of overwriting.
void matmul(const double* a, const double* b, double* c, std::size_t p,
            std::size_t q, std::size_t r, bool trans_a, bool trans_b,
            bool accumulate);

void tanh_vec(const double* x, double* y, std::size_t n);
void sigmoid_vec(const double* x, double* y, std::size_t n);

// Row-wise stable softmax of x[m x n] into y.
void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n);

}  // namespace serial

namespace par {

void matmul(const double* a, const double* b, double* c, std::size_t p,
            std::size_t q, std::size_t r, bool trans_a, bool trans_b,
            bool accumulate);
void tanh_vec(const double* x, double* y, std::size_t n);
void sigmoid_vec(const double* x, double* y, std::size_t n);
void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n);

}  // namespace par

// Dispatchers: route to par when the process-wide mode allows it and the
// problem is large enough to amortize the fork/join.
void matmul(const double* a, const double* b, double* c, std::size_t p,
            std::size_t q, std::size_t r, bool trans_a = false,
            bool trans_b = false, bool accumulate = false);
void tanh_vec(const double* x, double* y, std::size_t n);
void sigmoid_vec(const double* x, double* y, std::size_t n);
void softmax_rows(const double* x, double* y, std::size_t m, std::size_t n);

}  // namespace titlegen::tensor::kernels
