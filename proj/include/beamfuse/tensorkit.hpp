// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices and vectors backed by Eigen storage, with
// hand-rolled products whose summation order is fixed. Results are bitwise
// reproducible for any worker count. An emulated half-precision mode rounds
// every input entry to the nearest binary16 value before multiplying and
// keeps 32-bit accumulation.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "beamfuse/error.hpp"

namespace beamfuse {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using VectorF = Vector<float>;

enum class PrecisionMode { full32, emulated16 };

const char* to_string(PrecisionMode mode);
PrecisionMode parse_precision(const std::string& name);

/// Nearest IEEE binary16 value (ties to even), widened back to binary32.
/// Overflow yields a signed infinity, NaN stays NaN.
float round_to_half(float x);
inline double round_to_half(double x) {
  return static_cast<double>(round_to_half(static_cast<float>(x)));
}

/// Counts logical sweeps over a score vector for one labelled kernel run.
/// Kernels bump it once per loop over the vector, never per element.
class PassCounter {
 public:
  PassCounter() = default;
  explicit PassCounter(std::string label) : label_(std::move(label)) {}

  void sweep() { ++sweeps_; }
  std::size_t sweeps() const { return sweeps_; }
  void reset() { sweeps_ = 0; }
  const std::string& label() const { return label_; }

 private:
  std::string label_;
  std::size_t sweeps_ = 0;
};

/// Worker count for the internal row-parallel loops. Results never depend on it.
void set_num_threads(int n);
int num_threads();

namespace detail {

// Work below this many multiply-adds stays on the calling thread.
inline constexpr Index kParallelWork = Index{1} << 16;

// Inner product with a fixed association: eight interleaved lanes over the
// leading multiple of 8, a serial tail, then a fixed pairwise lane combine.
template <typename Scalar>
inline Scalar dot_fixed(const Scalar* a, const Scalar* b, Index n) {
  Scalar lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  Index k = 0;
  for (; k + 8 <= n; k += 8) {
    for (int j = 0; j < 8; ++j) lane[j] += a[k + j] * b[k + j];
  }
  Scalar tail = 0;
  for (; k < n; ++k) tail += a[k] * b[k];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
         ((lane[4] + lane[5]) + (lane[6] + lane[7])) + tail;
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw ValueError(std::string(what) + ": non-finite entry");
}

template <typename Scalar>
Matrix<Scalar> rounded_to_half(const Matrix<Scalar>& m) {
  return m.unaryExpr([](Scalar v) { return static_cast<Scalar>(round_to_half(v)); });
}

}  // namespace detail

/// a * b. full32 accumulates each output entry serially in k order.
template <typename Scalar>
Matrix<Scalar> matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b,
                      PrecisionMode mode = PrecisionMode::full32) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " differ");
  }
  detail::require_finite(a, "matmul");
  detail::require_finite(b, "matmul");

  if (mode == PrecisionMode::emulated16) {
    return matmul(detail::rounded_to_half(a), detail::rounded_to_half(b),
                  PrecisionMode::full32);
  }

  const Index rows = a.rows(), inner = a.cols(), cols = b.cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(rows, cols);
  const bool par = rows * inner * cols >= detail::kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index i = 0; i < rows; ++i) {
    Scalar* dst = out.data() + i * cols;
    for (Index k = 0; k < inner; ++k) {
      const Scalar aik = a(i, k);
      const Scalar* src = b.data() + k * cols;
      for (Index j = 0; j < cols; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

/// x * w^T for a batch of row inputs x (batch x in) and weights w (out x in).
/// Each output entry is dot_fixed over a row of x and a row of w, so a row's
/// result does not depend on which other rows share the batch. No input
/// validation; callers own the shapes.
template <typename Scalar>
Matrix<Scalar> linear_rows(const Matrix<Scalar>& x, const Matrix<Scalar>& w,
                           PrecisionMode mode = PrecisionMode::full32,
                           bool weights_prerounded = false) {
  if (mode == PrecisionMode::emulated16) {
    const Matrix<Scalar> xr = detail::rounded_to_half(x);
    if (weights_prerounded) return linear_rows(xr, w, PrecisionMode::full32);
    return linear_rows(xr, detail::rounded_to_half(w), PrecisionMode::full32);
  }
  const Index batch = x.rows(), in = x.cols(), out_dim = w.rows();
  Matrix<Scalar> out(batch, out_dim);
  const bool par = batch * in * out_dim >= detail::kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index o = 0; o < out_dim; ++o) {
    const Scalar* wrow = w.data() + o * in;
    for (Index r = 0; r < batch; ++r) {
      out(r, o) = detail::dot_fixed(x.data() + r * in, wrow, in);
    }
  }
  return out;
}

/// w * x + b. The bias is always added in full precision.
template <typename Scalar>
Vector<Scalar> affine(const Matrix<Scalar>& w, const Vector<Scalar>& x, const Vector<Scalar>& b,
                      PrecisionMode mode = PrecisionMode::full32) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw ShapeError("affine: weight " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + ", input " + std::to_string(x.size()) +
                     ", bias " + std::to_string(b.size()));
  }
  detail::require_finite(w, "affine");
  detail::require_finite(x, "affine");
  detail::require_finite(b, "affine");
  const Matrix<Scalar> xrow = x.transpose();
  const Matrix<Scalar> prod = linear_rows(xrow, w, mode);
  Vector<Scalar> y = prod.row(0).transpose();
  for (Index i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

}  // namespace beamfuse
