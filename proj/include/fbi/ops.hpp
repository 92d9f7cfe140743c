#pragma once

#include "fbi/tensor.hpp"

#include <utility>
#include <vector>

namespace fbi {

// Binary elementwise ops accept equal shapes or a scalar (numel 1) on either
// side; the scalar side receives the summed gradient.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);

Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// Clamp against constant bounds.  Clamped entries get zero subgradient.
Tensor clamp(const Tensor& x, Scalar lo, Scalar hi);
Tensor clamp_min(const Tensor& x, Scalar lo);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
/// x of shape (N,C,H,W); slope of shape (C) or (1).
Tensor prelu(const Tensor& x, const Tensor& slope);
/// Elementwise pick: mask entry 1 takes a, 0 takes b.  The mask is constant.
Tensor select_mask(const ArrayX& mask, const Tensor& a, const Tensor& b);

Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
/// Min/max route their gradient to the first extreme element.
Tensor reduce_min(const Tensor& x);
Tensor reduce_max(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

struct ConvSpec {
  Index stride = 1;
  Index padding = 0;
  Index dilation = 1;
};

/// Dense 2-d convolution (cross-correlation): x (N,Cin,H,W), kernel
/// (Cout,Cin,kh,kw), optional bias (Cout) passed as a default-constructed
/// tensor when absent.  `tap_mask`, when given, has kh*kw entries in {0,1};
/// zero entries are structurally excluded, so their weight values never touch
/// the output and their gradient is exactly zero.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, ConvSpec spec,
              const std::vector<int>& tap_mask = {});

struct TapOffset {
  int dy = 0;
  int dx = 0;
  friend bool operator==(const TapOffset&, const TapOffset&) = default;
};

/// Sparse-tap convolution at stride 1 with same-size zero-padded output:
/// out(n,co,y,x) = bias(co) + sum over ci,t of w(co,ci,t) * x(n,ci,y+dy_t,x+dx_t).
/// Weight shape (Cout,Cin,T) for T taps.  Cost scales with T, not with the
/// bounding box of the offsets.
Tensor conv2d_taps(const Tensor& x, const Tensor& weight, const Tensor& bias,
                   const std::vector<TapOffset>& taps);

/// Non-overlapping k*k mean pooling; H and W must be divisible by k.
Tensor avg_pool2d(const Tensor& x, Index k);
Tensor nearest_upsample2x(const Tensor& x);
/// (N,C,H,W) -> (N,C,1,1) spatial mean.
Tensor global_avg_pool(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [c0, c1) of x.
Tensor slice_channels(const Tensor& x, Index c0, Index c1);
/// Sample n of the batch, keeping ndim: (1,C,H,W).
Tensor select_batch(const Tensor& x, Index n);
Tensor reshape(const Tensor& x, Shape shape);
/// Single element by flat row-major index, as a scalar tensor.
Tensor element(const Tensor& x, Index flat);
/// Sum of flat elements in [i0, i1), as a scalar tensor.
Tensor sum_range(const Tensor& x, Index i0, Index i1);

/// All d*d patches of a 2-d image at the given stride, flattened row-major
/// into rows of the (M, d*d) result.
Tensor gather_patches(const Tensor& img2d, Index d, Index stride);
/// Subtract each column's mean: rows are samples, columns are coordinates.
Tensor center_columns(const Tensor& X);

struct EigResult {
  Tensor eigenvalues;   // ascending; differentiable w.r.t. the input matrix
  Tensor eigenvectors;  // column k pairs with eigenvalue k; not differentiable
};

/// Symmetric eigendecomposition via cyclic Jacobi rotations.  The input is
/// symmetrized, a 1e-12 diagonal jitter is added, and sweeps run until the
/// off-diagonal Frobenius mass falls below 1e-12 of the matrix norm.
/// Gradient flows through eigenvalues only: dL/dS = V diag(g) V^T.
EigResult symmetric_eig(const Tensor& S);

/// Raw solver used by symmetric_eig; exposed for direct numeric use.
/// Returns ascending eigenvalues and matching eigenvector columns.
std::pair<VectorX, MatrixX> jacobi_eigh(MatrixX S, Scalar tol_rel = 1e-12, int max_sweeps = 64);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, Scalar b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(Scalar a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, Scalar b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(Scalar a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, Scalar b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(Scalar a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, Scalar b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator/(Scalar a, const Tensor& b) { return div(Tensor::scalar(a), b); }

}  // namespace fbi
