#pragma once

#include <cstddef>
#include <vector>

#include "facediff/common.hpp"

namespace facediff {

// Dense row-major matrix. The whole pipeline stays in double; file formats
// quantize to binary32 at the I/O boundary only.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
  double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Hot dense kernels. The omp variants distribute output rows across threads;
// every output element is accumulated in the same order as the serial
// reference, so kern::ref and the parallel path agree bitwise. kern::ref is
// the oracle for the kernel tests and one side of the benchmark.
namespace kern {

namespace ref {
void matmul_nn(const Mat& A, const Mat& B, Mat& C);  // C = A * B
void matmul_nt(const Mat& A, const Mat& B, Mat& C);  // C = A * B^T
void matmul_tn(const Mat& A, const Mat& B, Mat& C);  // C = A^T * B
void softmax_rows(Mat& m);
}  // namespace ref

void matmul_nn(const Mat& A, const Mat& B, Mat& C);
void matmul_nt(const Mat& A, const Mat& B, Mat& C);
void matmul_tn(const Mat& A, const Mat& B, Mat& C);
void softmax_rows(Mat& m);

// y[i][:] += b (b is len-cols vector stored as Mat cols x 1)
void add_row_bias(Mat& y, const Mat& b);

double gelu(double x);
double gelu_grad(double x);

}  // namespace kern
}  // namespace facediff
