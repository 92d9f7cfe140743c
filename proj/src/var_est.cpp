#include "fbi/var_est.hpp"

#include <cmath>

namespace fbi {

namespace {

Scalar median_prefix(const ArrayX& ascending, Index count) {
  return count % 2 == 1 ? ascending[(count - 1) / 2]
                        : 0.5 * (ascending[count / 2 - 1] + ascending[count / 2]);
}

Index select_noise_cluster(const ArrayX& w, Scalar tol_rel) {
  const Index r = w.size();
  Scalar running = w.segment(0, r).sum();
  for (Index i = r; i >= 1; --i) {
    Scalar mean = running / static_cast<Scalar>(i);
    Scalar med = median_prefix(w, i);
    if (mean <= med * (1.0 + tol_rel)) return i;
    running -= w[i - 1];
  }
  return 1;
}

}  // namespace

Tensor eta(const Tensor& z, const EstimatorConfig& cfg, EtaDetails* details) {
  if (z.ndim() != 2) throw ShapeError("eta: expected 2-d single-channel image");
  if (cfg.patch_size < 3 || cfg.stride < 1) throw Error("eta: patch_size >= 3, stride >= 1");
  const Index d = cfg.patch_size, r = d * d;
  if (z.dim(0) < d || z.dim(1) < d) throw ShapeError("eta: image smaller than patch");

  Tensor X = gather_patches(z, d, cfg.stride);
  const Index M = X.dim(0);
  if (M < r + 1) throw Error("eta: too few patches (need at least d*d+1)");

  Tensor Xc = center_columns(X);
  Tensor S = matmul(transpose(Xc), Xc) * (1.0 / static_cast<Scalar>(M - 1));
  EigResult eig = symmetric_eig(S);

  const ArrayX& w = eig.eigenvalues.array();
  const Index selected = select_noise_cluster(w, cfg.tol_rel);
  if (details) {
    details->selected = selected;
    details->patches = M;
    details->eigenvalues = w.matrix();
  }
  return clamp_min(sum_range(eig.eigenvalues, 0, selected) / static_cast<Scalar>(selected), 0.0);
}

EtaGradcheckReport eta_gradcheck(const Tensor& z, const EstimatorConfig& cfg, Scalar h) {
  EtaGradcheckReport report;
  Tensor leaf = Tensor::leaf(z.shape(), z.array(), true);
  EtaDetails base;
  Tensor e = eta(leaf, cfg, &base);
  backward(e);
  const ArrayX analytic = leaf.grad();

  ArrayX fd(z.numel());
  bool tie = false;
  {
    NoGradGuard off;
    for (Index i = 0; i < z.numel(); ++i) {
      ArrayX vp = z.array();
      vp[i] += h;
      EtaDetails dp, dm;
      Scalar up = eta(Tensor::from_array(z.shape(), vp), cfg, &dp).value();
      vp[i] -= 2 * h;
      Scalar um = eta(Tensor::from_array(z.shape(), vp), cfg, &dm).value();
      fd[i] = (up - um) / (2 * h);
      tie = tie || dp.selected != base.selected || dm.selected != base.selected;
    }
  }
  report.boundary_tie = tie;
  Scalar scale = std::max({fd.abs().maxCoeff(), analytic.abs().maxCoeff(), Scalar(1e-12)});
  report.max_rel_err = (analytic - fd).abs().maxCoeff() / scale;
  report.pass = report.max_rel_err <= 1e-3;
  return report;
}

}  // namespace fbi
