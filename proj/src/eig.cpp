#include "fbi/ops.hpp"

#include <cmath>
#include <numeric>

namespace fbi {

using detail::accum_grad;
using detail::make_op;

std::pair<VectorX, MatrixX> jacobi_eigh(MatrixX S, Scalar tol_rel, int max_sweeps) {
  const Index n = S.rows();
  if (S.cols() != n) throw ShapeError("jacobi_eigh: matrix must be square");
  MatrixX V = MatrixX::Identity(n, n);
  const Scalar fro = S.norm();  // rotation-invariant, so the initial norm serves throughout
  const Scalar tol = tol_rel * fro;

  auto offdiag = [&]() {
    Scalar s = 0;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) s += S(p, q) * S(p, q);
    }
    return std::sqrt(2.0 * s);
  };

  bool converged = n < 2 || offdiag() <= tol;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = S(p, q);
        if (apq == 0.0) continue;
        const Scalar theta = (S(q, q) - S(p, p)) / (2.0 * apq);
        const Scalar t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const Scalar c = 1.0 / std::sqrt(t * t + 1.0);
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar skp = S(k, p), skq = S(k, q);
          S(k, p) = c * skp - s * skq;
          S(k, q) = s * skp + c * skq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar spk = S(p, k), sqk = S(q, k);
          S(p, k) = c * spk - s * sqk;
          S(q, k) = s * spk + c * sqk;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = offdiag() <= tol;
  }
  if (!converged) throw NumericError("jacobi_eigh: no convergence within sweep limit");

  VectorX w = S.diagonal();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&](Index a, Index b) { return w[a] < w[b]; });
  VectorX ws(n);
  MatrixX Vs(n, n);
  for (Index i = 0; i < n; ++i) {
    ws[i] = w[perm[static_cast<std::size_t>(i)]];
    Vs.col(i) = V.col(perm[static_cast<std::size_t>(i)]);
  }
  return {std::move(ws), std::move(Vs)};
}

EigResult symmetric_eig(const Tensor& S) {
  if (S.ndim() != 2 || S.dim(0) != S.dim(1)) {
    throw ShapeError("symmetric_eig: expected square matrix, got " + shape_str(S.shape()));
  }
  const Index n = S.dim(0);
  if (n > 256) throw ShapeError("symmetric_eig: dimension above 256 not supported");

  Eigen::Map<const MatrixRM> A(S.array().data(), n, n);
  MatrixX sym = 0.5 * (MatrixX(A) + MatrixX(A.transpose()));
  sym.diagonal().array() += 1e-12;  // jitter guards repeated-eigenvalue stalls
  auto [w, V] = jacobi_eigh(std::move(sym));

  ArrayX wflat = w.array();
  auto* ns = S.node().get();
  Tensor eigenvalues =
      make_op("symmetric_eig", {n}, std::move(wflat), {S}, [ns, V, n](const ArrayX& g) {
        // dL/dS = V diag(g) V^T; selection of eigenvalues is piecewise smooth.
        MatrixX M = V * g.matrix().asDiagonal() * V.transpose();
        MatrixRM Mr = M;
        accum_grad(*ns, Eigen::Map<ArrayX>(Mr.data(), n * n));
      });

  MatrixRM Vr = V;
  Tensor eigenvectors = Tensor::from_array({n, n}, Eigen::Map<ArrayX>(Vr.data(), n * n));
  return {eigenvalues, eigenvectors};
}

}  // namespace fbi
