#include "fbi/ops.hpp"

#include <algorithm>
#include <memory>
#include <set>
#include <string>

namespace fbi {

using detail::accum_grad;
using detail::make_op;

namespace {

// Shared tap-list convolution core.  Geometry is expressed as input-space
// offsets per output step, so dense kernels, masked kernels and sparse tap
// sets all reduce to one im2col + GEMM path with cost proportional to the
// number of live taps.  `wmap` maps (co, ci*T+t) to the flat index of the
// corresponding weight inside `w`, which lets the backward pass scatter
// gradients into the caller's weight layout; unmapped weights (masked-out
// kernel entries) keep an exactly zero gradient.

void im2col(const ArrayX& xflat, Index N, Index Cin, Index H, Index W,
            const std::vector<TapOffset>& offs, Index stride, Index Hout, Index Wout,
            MatrixRM& cols) {
  const Index T = static_cast<Index>(offs.size());
  const Index HoWo = Hout * Wout;
  for (Index ci = 0; ci < Cin; ++ci) {
    for (Index t = 0; t < T; ++t) {
      const int dy = offs[static_cast<std::size_t>(t)].dy;
      const int dx = offs[static_cast<std::size_t>(t)].dx;
      Scalar* row = cols.data() + (ci * T + t) * (N * HoWo);
      for (Index n = 0; n < N; ++n) {
        const Scalar* xc = xflat.data() + (n * Cin + ci) * H * W;
        Scalar* dst = row + n * HoWo;
        for (Index oy = 0; oy < Hout; ++oy, dst += Wout) {
          const Index iy = oy * stride + dy;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wout, 0.0);
            continue;
          }
          const Scalar* src = xc + iy * W;
          if (stride == 1) {
            const Index lo = std::max<Index>(0, -dx);
            const Index hi = std::min<Index>(Wout, W - dx);
            std::fill(dst, dst + std::min<Index>(lo, Wout), 0.0);
            if (lo < hi) std::copy(src + lo + dx, src + hi + dx, dst + lo);
            std::fill(dst + std::max<Index>(lo, hi), dst + Wout, 0.0);
          } else {
            for (Index ox = 0; ox < Wout; ++ox) {
              const Index ix = ox * stride + dx;
              dst[ox] = (ix < 0 || ix >= W) ? 0.0 : src[ix];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const MatrixRM& gcols, Index N, Index Cin, Index H, Index W,
                const std::vector<TapOffset>& offs, Index stride, Index Hout, Index Wout,
                ArrayX& gx) {
  const Index T = static_cast<Index>(offs.size());
  const Index HoWo = Hout * Wout;
  for (Index ci = 0; ci < Cin; ++ci) {
    for (Index t = 0; t < T; ++t) {
      const int dy = offs[static_cast<std::size_t>(t)].dy;
      const int dx = offs[static_cast<std::size_t>(t)].dx;
      const Scalar* row = gcols.data() + (ci * T + t) * (N * HoWo);
      for (Index n = 0; n < N; ++n) {
        Scalar* xc = gx.data() + (n * Cin + ci) * H * W;
        const Scalar* src = row + n * HoWo;
        for (Index oy = 0; oy < Hout; ++oy, src += Wout) {
          const Index iy = oy * stride + dy;
          if (iy < 0 || iy >= H) continue;
          Scalar* dst = xc + iy * W;
          if (stride == 1) {
            const Index lo = std::max<Index>(0, -dx);
            const Index hi = std::min<Index>(Wout, W - dx);
            for (Index ox = lo; ox < hi; ++ox) dst[ox + dx] += src[ox];
          } else {
            for (Index ox = 0; ox < Wout; ++ox) {
              const Index ix = ox * stride + dx;
              if (ix >= 0 && ix < W) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

Tensor conv_core(const char* op, const Tensor& x, const Tensor& w, const Tensor& bias,
                 std::vector<TapOffset> offs, Index stride, Index Cout, Index Hout, Index Wout,
                 std::vector<Index> wmap) {
  const Index N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index T = static_cast<Index>(offs.size());
  const Index K = Cin * T;
  const Index P = N * Hout * Wout;
  const Index HoWo = Hout * Wout;
  const bool with_bias = bias.defined();
  if (Hout < 1 || Wout < 1) throw ShapeError(std::string(op) + ": empty output");
  if (with_bias && (bias.ndim() != 1 || bias.dim(0) != Cout)) {
    throw ShapeError(std::string(op) + ": bias must have shape (Cout)");
  }

  auto cols = std::make_shared<MatrixRM>(K, P);
  im2col(x.array(), N, Cin, H, W, offs, stride, Hout, Wout, *cols);

  MatrixRM wmat(Cout, K);
  {
    const ArrayX& wflat = w.array();
    Scalar* dst = wmat.data();
    for (std::size_t i = 0; i < wmap.size(); ++i) dst[i] = wflat[wmap[i]];
  }

  MatrixRM y = wmat * (*cols);
  ArrayX v(N * Cout * HoWo);
  for (Index n = 0; n < N; ++n) {
    for (Index co = 0; co < Cout; ++co) {
      auto seg = v.segment((n * Cout + co) * HoWo, HoWo);
      seg = Eigen::Map<const ArrayX>(y.data() + co * P + n * HoWo, HoWo);
      if (with_bias) seg += bias.array()[co];
    }
  }

  std::vector<Tensor> parents = {x, w};
  if (with_bias) parents.push_back(bias);
  auto* nx = x.node().get();
  auto* nw = w.node().get();
  auto* nb = with_bias ? bias.node().get() : nullptr;
  const Index wsize = w.numel();

  return make_op(
      op, {N, Cout, Hout, Wout}, std::move(v), std::move(parents),
      [nx, nw, nb, cols, offs = std::move(offs), wmap = std::move(wmap), N, Cin, H, W, Cout, Hout,
       Wout, HoWo, K, P, T, stride, wsize](const ArrayX& g) {
        MatrixRM gy(Cout, P);
        for (Index n = 0; n < N; ++n) {
          for (Index co = 0; co < Cout; ++co) {
            Eigen::Map<ArrayX>(gy.data() + co * P + n * HoWo, HoWo) =
                g.segment((n * Cout + co) * HoWo, HoWo);
          }
        }
        if (nb && nb->tracked) {
          ArrayX gb(Cout);
          for (Index co = 0; co < Cout; ++co) gb[co] = gy.row(co).sum();
          accum_grad(*nb, gb);
        }
        if (nw->tracked) {
          MatrixRM gwmat = gy * cols->transpose();
          ArrayX gw = ArrayX::Zero(wsize);
          const Scalar* src = gwmat.data();
          for (std::size_t i = 0; i < wmap.size(); ++i) gw[wmap[i]] += src[i];
          accum_grad(*nw, gw);
        }
        if (nx->tracked) {
          MatrixRM wmat2(Cout, K);
          {
            Scalar* dst = wmat2.data();
            for (std::size_t i = 0; i < wmap.size(); ++i) dst[i] = nw->value[wmap[i]];
          }
          MatrixRM gcols = wmat2.transpose() * gy;
          ArrayX gx = ArrayX::Zero(N * Cin * H * W);
          col2im_add(gcols, N, Cin, H, W, offs, stride, Hout, Wout, gx);
          accum_grad(*nx, gx);
        }
      });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, ConvSpec spec,
              const std::vector<int>& tap_mask) {
  if (x.ndim() != 4) throw ShapeError("conv2d: input must be (N,Cin,H,W)");
  if (kernel.ndim() != 4) throw ShapeError("conv2d: kernel must be (Cout,Cin,kh,kw)");
  const Index Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != Cin) throw ShapeError("conv2d: channel mismatch");
  if (spec.stride < 1 || spec.dilation < 1 || spec.padding < 0) {
    throw ShapeError("conv2d: bad stride/padding/dilation");
  }
  if (!tap_mask.empty() && static_cast<Index>(tap_mask.size()) != kh * kw) {
    throw ShapeError("conv2d: tap mask must have kh*kw entries");
  }
  for (int m : tap_mask) {
    if (m != 0 && m != 1) throw Error("conv2d: tap mask entries must be 0 or 1");
  }
  const Index Hout = (H + 2 * spec.padding - spec.dilation * (kh - 1) - 1) / spec.stride + 1;
  const Index Wout = (W + 2 * spec.padding - spec.dilation * (kw - 1) - 1) / spec.stride + 1;

  std::vector<TapOffset> offs;
  std::vector<Index> live;  // flat (ky*kw + kx) of live taps
  for (Index ky = 0; ky < kh; ++ky) {
    for (Index kx = 0; kx < kw; ++kx) {
      if (!tap_mask.empty() && tap_mask[static_cast<std::size_t>(ky * kw + kx)] == 0) continue;
      offs.push_back({static_cast<int>(ky * spec.dilation - spec.padding),
                      static_cast<int>(kx * spec.dilation - spec.padding)});
      live.push_back(ky * kw + kx);
    }
  }
  if (offs.empty()) throw Error("conv2d: tap mask excludes every kernel entry");

  const Index T = static_cast<Index>(offs.size());
  std::vector<Index> wmap(static_cast<std::size_t>(Cout * Cin * T));
  for (Index co = 0; co < Cout; ++co) {
    for (Index ci = 0; ci < Cin; ++ci) {
      for (Index t = 0; t < T; ++t) {
        wmap[static_cast<std::size_t>((co * Cin + ci) * T + t)] =
            ((co * Cin + ci) * kh) * kw + live[static_cast<std::size_t>(t)];
      }
    }
  }
  return conv_core("conv2d", x, kernel, bias, std::move(offs), spec.stride, Cout, Hout, Wout,
                   std::move(wmap));
}

Tensor conv2d_taps(const Tensor& x, const Tensor& weight, const Tensor& bias,
                   const std::vector<TapOffset>& taps) {
  if (x.ndim() != 4) throw ShapeError("conv2d_taps: input must be (N,Cin,H,W)");
  if (weight.ndim() != 3) throw ShapeError("conv2d_taps: weight must be (Cout,Cin,T)");
  const Index Cin = x.dim(1);
  const Index Cout = weight.dim(0), T = weight.dim(2);
  if (weight.dim(1) != Cin) throw ShapeError("conv2d_taps: channel mismatch");
  if (static_cast<Index>(taps.size()) != T) throw ShapeError("conv2d_taps: tap count mismatch");
  if (taps.empty()) throw Error("conv2d_taps: empty tap set");
  {
    std::set<std::pair<int, int>> seen;
    for (const TapOffset& t : taps) {
      if (!seen.insert({t.dy, t.dx}).second) throw Error("conv2d_taps: duplicate tap offset");
    }
  }
  std::vector<Index> wmap(static_cast<std::size_t>(Cout * Cin * T));
  for (std::size_t i = 0; i < wmap.size(); ++i) wmap[i] = static_cast<Index>(i);
  return conv_core("conv2d_taps", x, weight, bias, taps, 1, Cout, x.dim(2), x.dim(3),
                   std::move(wmap));
}

}  // namespace fbi
