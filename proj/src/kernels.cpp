#include "facediff/kernels.hpp"

#include <cmath>

namespace facediff::kern {

namespace {

void check_nn(const Mat& A, const Mat& B, Mat& C) {
  require(A.cols == B.rows, "matmul_nn: inner dimension mismatch");
  if (C.rows != A.rows || C.cols != B.cols) C = Mat(A.rows, B.cols);
}

void check_nt(const Mat& A, const Mat& B, Mat& C) {
  require(A.cols == B.cols, "matmul_nt: inner dimension mismatch");
  if (C.rows != A.rows || C.cols != B.rows) C = Mat(A.rows, B.rows);
}

void check_tn(const Mat& A, const Mat& B, Mat& C) {
  require(A.rows == B.rows, "matmul_tn: inner dimension mismatch");
  if (C.rows != A.cols || C.cols != B.cols) C = Mat(A.cols, B.cols);
}

inline void nn_row(const Mat& A, const Mat& B, Mat& C, int i) {
  const double* ai = A.row(i);
  double* ci = C.row(i);
  for (int j = 0; j < C.cols; ++j) ci[j] = 0.0;
  for (int k = 0; k < A.cols; ++k) {
    const double aik = ai[k];
    const double* bk = B.row(k);
    for (int j = 0; j < C.cols; ++j) ci[j] += aik * bk[j];
  }
}

inline void nt_row(const Mat& A, const Mat& B, Mat& C, int i) {
  const double* ai = A.row(i);
  double* ci = C.row(i);
  for (int j = 0; j < C.cols; ++j) {
    const double* bj = B.row(j);
    double acc = 0.0;
    for (int k = 0; k < A.cols; ++k) acc += ai[k] * bj[k];
    ci[j] = acc;
  }
}

inline void tn_row(const Mat& A, const Mat& B, Mat& C, int i) {
  // C[i][j] = sum_k A[k][i] * B[k][j], k ascending in both paths.
  double* ci = C.row(i);
  for (int j = 0; j < C.cols; ++j) ci[j] = 0.0;
  for (int k = 0; k < A.rows; ++k) {
    const double aki = A.at(k, i);
    const double* bk = B.row(k);
    for (int j = 0; j < C.cols; ++j) ci[j] += aki * bk[j];
  }
}

inline void softmax_row(Mat& m, int i) {
  double* r = m.row(i);
  double mx = r[0];
  for (int j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
  double sum = 0.0;
  for (int j = 0; j < m.cols; ++j) {
    r[j] = std::exp(r[j] - mx);
    sum += r[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < m.cols; ++j) r[j] *= inv;
}

}  // namespace

namespace ref {

void matmul_nn(const Mat& A, const Mat& B, Mat& C) {
  check_nn(A, B, C);
  for (int i = 0; i < C.rows; ++i) nn_row(A, B, C, i);
}

void matmul_nt(const Mat& A, const Mat& B, Mat& C) {
  check_nt(A, B, C);
  for (int i = 0; i < C.rows; ++i) nt_row(A, B, C, i);
}

void matmul_tn(const Mat& A, const Mat& B, Mat& C) {
  check_tn(A, B, C);
  for (int i = 0; i < C.rows; ++i) tn_row(A, B, C, i);
}

void softmax_rows(Mat& m) {
  for (int i = 0; i < m.rows; ++i) softmax_row(m, i);
}

}  // namespace ref

// Parallelizing below a few hundred kFLOP loses more to fork/join than the
// threads win back.
static constexpr long kParallelFlops = 64 * 1024;

void matmul_nn(const Mat& A, const Mat& B, Mat& C) {
  check_nn(A, B, C);
  const long work = static_cast<long>(A.rows) * A.cols * B.cols;
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
  for (int i = 0; i < C.rows; ++i) nn_row(A, B, C, i);
}

void matmul_nt(const Mat& A, const Mat& B, Mat& C) {
  check_nt(A, B, C);
  const long work = static_cast<long>(A.rows) * A.cols * B.rows;
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
  for (int i = 0; i < C.rows; ++i) nt_row(A, B, C, i);
}

void matmul_tn(const Mat& A, const Mat& B, Mat& C) {
  check_tn(A, B, C);
  const long work = static_cast<long>(A.rows) * A.cols * B.cols;
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
  for (int i = 0; i < C.rows; ++i) tn_row(A, B, C, i);
}

void softmax_rows(Mat& m) {
  const long work = static_cast<long>(m.rows) * m.cols;
#pragma omp parallel for schedule(static) if (work > kParallelFlops)
  for (int i = 0; i < m.rows; ++i) softmax_row(m, i);
}

void add_row_bias(Mat& y, const Mat& b) {
  require(static_cast<int>(b.size()) == y.cols, "add_row_bias: bias length mismatch");
  for (int i = 0; i < y.rows; ++i) {
    double* r = y.row(i);
    for (int j = 0; j < y.cols; ++j) r[j] += b.a[j];
  }
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace facediff::kern
