#include "fbi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fbi {

using detail::accum_grad;
using detail::make_op;

namespace {

enum class Bc { same, a_scalar, b_scalar };

Bc bc_of(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bc::same;
  if (a.numel() == 1) return Bc::a_scalar;
  if (b.numel() == 1) return Bc::b_scalar;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " do not conform");
}

ArrayX one(Scalar v) { return ArrayX::Constant(1, v); }

void require_nchw(const Tensor& x, const char* op) {
  if (x.ndim() != 4) {
    throw ShapeError(std::string(op) + ": expected 4-d (N,C,H,W), got " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Bc bc = bc_of(a, b, "add");
  ArrayX v;
  Shape shp;
  switch (bc) {
    case Bc::same: v = a.array() + b.array(); shp = a.shape(); break;
    case Bc::a_scalar: v = a.array()[0] + b.array(); shp = b.shape(); break;
    case Bc::b_scalar: v = a.array() + b.array()[0]; shp = a.shape(); break;
  }
  auto* na = a.node().get();
  auto* nb = b.node().get();
  return make_op("add", std::move(shp), std::move(v), {a, b}, [na, nb, bc](const ArrayX& g) {
    accum_grad(*na, bc == Bc::a_scalar ? one(g.sum()) : g);
    accum_grad(*nb, bc == Bc::b_scalar ? one(g.sum()) : g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Bc bc = bc_of(a, b, "sub");
  ArrayX v;
  Shape shp;
  switch (bc) {
    case Bc::same: v = a.array() - b.array(); shp = a.shape(); break;
    case Bc::a_scalar: v = a.array()[0] - b.array(); shp = b.shape(); break;
    case Bc::b_scalar: v = a.array() - b.array()[0]; shp = a.shape(); break;
  }
  auto* na = a.node().get();
  auto* nb = b.node().get();
  return make_op("sub", std::move(shp), std::move(v), {a, b}, [na, nb, bc](const ArrayX& g) {
    accum_grad(*na, bc == Bc::a_scalar ? one(g.sum()) : g);
    accum_grad(*nb, bc == Bc::b_scalar ? one(-g.sum()) : ArrayX(-g));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Bc bc = bc_of(a, b, "mul");
  ArrayX v;
  Shape shp;
  switch (bc) {
    case Bc::same: v = a.array() * b.array(); shp = a.shape(); break;
    case Bc::a_scalar: v = a.array()[0] * b.array(); shp = b.shape(); break;
    case Bc::b_scalar: v = a.array() * b.array()[0]; shp = a.shape(); break;
  }
  auto* na = a.node().get();
  auto* nb = b.node().get();
  return make_op("mul", std::move(shp), std::move(v), {a, b}, [na, nb, bc](const ArrayX& g) {
    switch (bc) {
      case Bc::same:
        accum_grad(*na, g * nb->value);
        accum_grad(*nb, g * na->value);
        break;
      case Bc::a_scalar:
        accum_grad(*na, one((g * nb->value).sum()));
        accum_grad(*nb, g * na->value[0]);
        break;
      case Bc::b_scalar:
        accum_grad(*na, g * nb->value[0]);
        accum_grad(*nb, one((g * na->value).sum()));
        break;
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Bc bc = bc_of(a, b, "div");
  ArrayX v;
  Shape shp;
  switch (bc) {
    case Bc::same: v = a.array() / b.array(); shp = a.shape(); break;
    case Bc::a_scalar: v = a.array()[0] / b.array(); shp = b.shape(); break;
    case Bc::b_scalar: v = a.array() / b.array()[0]; shp = a.shape(); break;
  }
  auto* na = a.node().get();
  auto* nb = b.node().get();
  return make_op("div", std::move(shp), std::move(v), {a, b}, [na, nb, bc](const ArrayX& g) {
    switch (bc) {
      case Bc::same:
        accum_grad(*na, g / nb->value);
        accum_grad(*nb, -g * na->value / nb->value.square());
        break;
      case Bc::a_scalar:
        accum_grad(*na, one((g / nb->value).sum()));
        accum_grad(*nb, -g * na->value[0] / nb->value.square());
        break;
      case Bc::b_scalar:
        accum_grad(*na, g / nb->value[0]);
        accum_grad(*nb, one(-(g * na->value).sum() / (nb->value[0] * nb->value[0])));
        break;
    }
  });
}

Tensor neg(const Tensor& a) {
  auto* na = a.node().get();
  return make_op("neg", a.shape(), -a.array(), {a},
                 [na](const ArrayX& g) { accum_grad(*na, -g); });
}

Tensor sqrt(const Tensor& x) {
  auto* nx = x.node().get();
  return make_op("sqrt", x.shape(), x.array().sqrt(), {x}, [nx](const ArrayX& g) {
    accum_grad(*nx, g * 0.5 / nx->value.sqrt());
  });
}

Tensor square(const Tensor& x) {
  auto* nx = x.node().get();
  return make_op("square", x.shape(), x.array().square(), {x},
                 [nx](const ArrayX& g) { accum_grad(*nx, 2.0 * g * nx->value); });
}

Tensor reciprocal(const Tensor& x) {
  auto* nx = x.node().get();
  return make_op("reciprocal", x.shape(), x.array().inverse(), {x},
                 [nx](const ArrayX& g) { accum_grad(*nx, -g / nx->value.square()); });
}

Tensor exp(const Tensor& x) {
  auto* nx = x.node().get();
  return make_op("exp", x.shape(), x.array().exp(), {x},
                 [nx](const ArrayX& g) { accum_grad(*nx, g * nx->value.exp()); });
}

Tensor log(const Tensor& x) {
  auto* nx = x.node().get();
  return make_op("log", x.shape(), x.array().log(), {x},
                 [nx](const ArrayX& g) { accum_grad(*nx, g / nx->value); });
}

Tensor clamp(const Tensor& x, Scalar lo, Scalar hi) {
  if (!(lo <= hi)) throw Error("clamp: lo > hi");
  auto* nx = x.node().get();
  return make_op("clamp", x.shape(), x.array().max(lo).min(hi), {x},
                 [nx, lo, hi](const ArrayX& g) {
                   accum_grad(*nx, g * (nx->value > lo && nx->value < hi).cast<Scalar>());
                 });
}

Tensor clamp_min(const Tensor& x, Scalar lo) {
  auto* nx = x.node().get();
  return make_op("clamp_min", x.shape(), x.array().max(lo), {x}, [nx, lo](const ArrayX& g) {
    accum_grad(*nx, g * (nx->value > lo).cast<Scalar>());
  });
}

namespace {

ArrayX sigmoid_val(const ArrayX& x) {
  // Branch on sign for overflow safety.
  ArrayX out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Scalar v = x[i];
    if (v >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      Scalar e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

ArrayX softplus_val(const ArrayX& x) {
  ArrayX out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Scalar v = x[i];
    if (v > 30.0) {
      out[i] = v;
    } else if (v < -30.0) {
      out[i] = std::exp(v);
    } else {
      out[i] = std::log1p(std::exp(v));
    }
  }
  return out;
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  auto* nx = x.node().get();
  return make_op("sigmoid", x.shape(), sigmoid_val(x.array()), {x}, [nx](const ArrayX& g) {
    ArrayX s = sigmoid_val(nx->value);
    accum_grad(*nx, g * s * (1.0 - s));
  });
}

Tensor softplus(const Tensor& x) {
  auto* nx = x.node().get();
  return make_op("softplus", x.shape(), softplus_val(x.array()), {x}, [nx](const ArrayX& g) {
    accum_grad(*nx, g * sigmoid_val(nx->value));
  });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  require_nchw(x, "prelu");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const bool shared = slope.numel() == 1;
  if (!shared && (slope.ndim() != 1 || slope.dim(0) != C)) {
    throw ShapeError("prelu: slope must have shape (C) or (1)");
  }
  const ArrayX& xv = x.array();
  const ArrayX& sv = slope.array();
  ArrayX v(xv.size());
  for (Index n = 0; n < N; ++n) {
    for (Index c = 0; c < C; ++c) {
      Scalar s = shared ? sv[0] : sv[c];
      auto xb = xv.segment((n * C + c) * HW, HW);
      v.segment((n * C + c) * HW, HW) = (xb > 0).select(xb, s * xb);
    }
  }
  auto* nx = x.node().get();
  auto* ns = slope.node().get();
  return make_op("prelu", x.shape(), std::move(v), {x, slope},
                 [nx, ns, N, C, HW, shared](const ArrayX& g) {
                   ArrayX gx(g.size());
                   ArrayX gs = ArrayX::Zero(shared ? 1 : C);
                   for (Index n = 0; n < N; ++n) {
                     for (Index c = 0; c < C; ++c) {
                       Scalar s = shared ? ns->value[0] : ns->value[c];
                       auto xb = nx->value.segment((n * C + c) * HW, HW);
                       auto gb = g.segment((n * C + c) * HW, HW);
                       gx.segment((n * C + c) * HW, HW) =
                           (xb > 0).select(gb, s * gb);
                       gs[shared ? 0 : c] += ((xb > 0).select(ArrayX::Zero(HW), xb) * gb).sum();
                     }
                   }
                   accum_grad(*nx, gx);
                   accum_grad(*ns, gs);
                 });
}

Tensor select_mask(const ArrayX& mask, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("select_mask: branch shapes differ");
  if (mask.size() != a.numel()) throw ShapeError("select_mask: mask size mismatch");
  for (Index i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) throw Error("select_mask: mask entries must be 0 or 1");
  }
  ArrayX v = mask * a.array() + (1.0 - mask) * b.array();
  auto* na = a.node().get();
  auto* nb = b.node().get();
  return make_op("select_mask", a.shape(), std::move(v), {a, b}, [na, nb, mask](const ArrayX& g) {
    accum_grad(*na, g * mask);
    accum_grad(*nb, g * (1.0 - mask));
  });
}

Tensor reduce_sum(const Tensor& x) {
  auto* nx = x.node().get();
  Index n = x.numel();
  return make_op("reduce_sum", {1}, one(x.array().sum()), {x}, [nx, n](const ArrayX& g) {
    accum_grad(*nx, ArrayX::Constant(n, g[0]));
  });
}

Tensor reduce_mean(const Tensor& x) {
  auto* nx = x.node().get();
  Index n = x.numel();
  return make_op("reduce_mean", {1}, one(x.array().mean()), {x}, [nx, n](const ArrayX& g) {
    accum_grad(*nx, ArrayX::Constant(n, g[0] / static_cast<Scalar>(n)));
  });
}

namespace {

Tensor reduce_extreme(const Tensor& x, bool take_max) {
  const ArrayX& v = x.array();
  Index idx = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (take_max ? v[i] > v[idx] : v[i] < v[idx]) idx = i;
  }
  auto* nx = x.node().get();
  Index n = x.numel();
  return make_op(take_max ? "reduce_max" : "reduce_min", {1}, one(v[idx]), {x},
                 [nx, n, idx](const ArrayX& g) {
                   ArrayX gx = ArrayX::Zero(n);
                   gx[idx] = g[0];
                   accum_grad(*nx, gx);
                 });
}

}  // namespace

Tensor reduce_min(const Tensor& x) { return reduce_extreme(x, false); }
Tensor reduce_max(const Tensor& x) { return reduce_extreme(x, true); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: need (m,k)x(k,n), got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Eigen::Map<const MatrixRM> A(a.array().data(), m, k);
  Eigen::Map<const MatrixRM> B(b.array().data(), k, n);
  MatrixRM Y = A * B;
  ArrayX v = Eigen::Map<ArrayX>(Y.data(), m * n);
  auto* na = a.node().get();
  auto* nb = b.node().get();
  return make_op("matmul", {m, n}, std::move(v), {a, b}, [na, nb, m, k, n](const ArrayX& g) {
    Eigen::Map<const MatrixRM> G(g.data(), m, n);
    Eigen::Map<const MatrixRM> A2(na->value.data(), m, k);
    Eigen::Map<const MatrixRM> B2(nb->value.data(), k, n);
    MatrixRM GA = G * B2.transpose();
    MatrixRM GB = A2.transpose() * G;
    accum_grad(*na, Eigen::Map<ArrayX>(GA.data(), m * k));
    accum_grad(*nb, Eigen::Map<ArrayX>(GB.data(), k * n));
  });
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError("transpose: need 2-d, got " + shape_str(a.shape()));
  const Index m = a.dim(0), n = a.dim(1);
  Eigen::Map<const MatrixRM> A(a.array().data(), m, n);
  MatrixRM T = A.transpose();
  ArrayX v = Eigen::Map<ArrayX>(T.data(), m * n);
  auto* na = a.node().get();
  return make_op("transpose", {n, m}, std::move(v), {a}, [na, m, n](const ArrayX& g) {
    Eigen::Map<const MatrixRM> G(g.data(), n, m);
    MatrixRM GT = G.transpose();
    accum_grad(*na, Eigen::Map<ArrayX>(GT.data(), m * n));
  });
}

Tensor avg_pool2d(const Tensor& x, Index k) {
  require_nchw(x, "avg_pool2d");
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (k < 1 || H % k != 0 || W % k != 0) {
    throw ShapeError("avg_pool2d: H and W must be divisible by k");
  }
  const Index Ho = H / k, Wo = W / k;
  const ArrayX& xv = x.array();
  ArrayX v(N * C * Ho * Wo);
  const Scalar inv = 1.0 / static_cast<Scalar>(k * k);
  for (Index nc = 0; nc < N * C; ++nc) {
    const Scalar* src = xv.data() + nc * H * W;
    Scalar* dst = v.data() + nc * Ho * Wo;
    for (Index oy = 0; oy < Ho; ++oy) {
      for (Index ox = 0; ox < Wo; ++ox) {
        Scalar s = 0;
        for (Index dy = 0; dy < k; ++dy) {
          for (Index dx = 0; dx < k; ++dx) s += src[(oy * k + dy) * W + ox * k + dx];
        }
        dst[oy * Wo + ox] = s * inv;
      }
    }
  }
  auto* nx = x.node().get();
  return make_op("avg_pool2d", {N, C, Ho, Wo}, std::move(v), {x},
                 [nx, N, C, H, W, Ho, Wo, k, inv](const ArrayX& g) {
                   ArrayX gx = ArrayX::Zero(N * C * H * W);
                   for (Index nc = 0; nc < N * C; ++nc) {
                     const Scalar* gs = g.data() + nc * Ho * Wo;
                     Scalar* gd = gx.data() + nc * H * W;
                     for (Index oy = 0; oy < Ho; ++oy) {
                       for (Index ox = 0; ox < Wo; ++ox) {
                         Scalar gv = gs[oy * Wo + ox] * inv;
                         for (Index dy = 0; dy < k; ++dy) {
                           for (Index dx = 0; dx < k; ++dx) {
                             gd[(oy * k + dy) * W + ox * k + dx] += gv;
                           }
                         }
                       }
                     }
                   }
                   accum_grad(*nx, gx);
                 });
}

Tensor nearest_upsample2x(const Tensor& x) {
  require_nchw(x, "nearest_upsample2x");
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Ho = 2 * H, Wo = 2 * W;
  const ArrayX& xv = x.array();
  ArrayX v(N * C * Ho * Wo);
  for (Index nc = 0; nc < N * C; ++nc) {
    const Scalar* src = xv.data() + nc * H * W;
    Scalar* dst = v.data() + nc * Ho * Wo;
    for (Index y = 0; y < H; ++y) {
      for (Index x2 = 0; x2 < W; ++x2) {
        Scalar s = src[y * W + x2];
        dst[(2 * y) * Wo + 2 * x2] = s;
        dst[(2 * y) * Wo + 2 * x2 + 1] = s;
        dst[(2 * y + 1) * Wo + 2 * x2] = s;
        dst[(2 * y + 1) * Wo + 2 * x2 + 1] = s;
      }
    }
  }
  auto* nx = x.node().get();
  return make_op("nearest_upsample2x", {N, C, Ho, Wo}, std::move(v), {x},
                 [nx, N, C, H, W, Ho, Wo](const ArrayX& g) {
                   ArrayX gx(N * C * H * W);
                   for (Index nc = 0; nc < N * C; ++nc) {
                     const Scalar* gs = g.data() + nc * Ho * Wo;
                     Scalar* gd = gx.data() + nc * H * W;
                     for (Index y = 0; y < H; ++y) {
                       for (Index x2 = 0; x2 < W; ++x2) {
                         gd[y * W + x2] = gs[(2 * y) * Wo + 2 * x2] + gs[(2 * y) * Wo + 2 * x2 + 1] +
                                          gs[(2 * y + 1) * Wo + 2 * x2] +
                                          gs[(2 * y + 1) * Wo + 2 * x2 + 1];
                       }
                     }
                   }
                   accum_grad(*nx, gx);
                 });
}

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "global_avg_pool");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  ArrayX v(N * C);
  for (Index nc = 0; nc < N * C; ++nc) v[nc] = x.array().segment(nc * HW, HW).mean();
  auto* nx = x.node().get();
  return make_op("global_avg_pool", {N, C, 1, 1}, std::move(v), {x},
                 [nx, N, C, HW](const ArrayX& g) {
                   ArrayX gx(N * C * HW);
                   const Scalar inv = 1.0 / static_cast<Scalar>(HW);
                   for (Index nc = 0; nc < N * C; ++nc) {
                     gx.segment(nc * HW, HW).setConstant(g[nc] * inv);
                   }
                   accum_grad(*nx, gx);
                 });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_nchw(a, "concat_channels");
  require_nchw(b, "concat_channels");
  const Index N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W) {
    throw ShapeError("concat_channels: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not conform");
  }
  const Index HW = H * W, C = Ca + Cb;
  ArrayX v(N * C * HW);
  for (Index n = 0; n < N; ++n) {
    v.segment(n * C * HW, Ca * HW) = a.array().segment(n * Ca * HW, Ca * HW);
    v.segment(n * C * HW + Ca * HW, Cb * HW) = b.array().segment(n * Cb * HW, Cb * HW);
  }
  auto* na = a.node().get();
  auto* nb = b.node().get();
  return make_op("concat_channels", {N, C, H, W}, std::move(v), {a, b},
                 [na, nb, N, Ca, Cb, HW, C](const ArrayX& g) {
                   ArrayX ga(N * Ca * HW), gb(N * Cb * HW);
                   for (Index n = 0; n < N; ++n) {
                     ga.segment(n * Ca * HW, Ca * HW) = g.segment(n * C * HW, Ca * HW);
                     gb.segment(n * Cb * HW, Cb * HW) = g.segment(n * C * HW + Ca * HW, Cb * HW);
                   }
                   accum_grad(*na, ga);
                   accum_grad(*nb, gb);
                 });
}

Tensor slice_channels(const Tensor& x, Index c0, Index c1) {
  require_nchw(x, "slice_channels");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (c0 < 0 || c1 > C || c0 >= c1) throw ShapeError("slice_channels: bad channel range");
  const Index Cs = c1 - c0;
  ArrayX v(N * Cs * HW);
  for (Index n = 0; n < N; ++n) {
    v.segment(n * Cs * HW, Cs * HW) = x.array().segment((n * C + c0) * HW, Cs * HW);
  }
  auto* nx = x.node().get();
  return make_op("slice_channels", {N, Cs, x.dim(2), x.dim(3)}, std::move(v), {x},
                 [nx, N, C, Cs, c0, HW](const ArrayX& g) {
                   ArrayX gx = ArrayX::Zero(N * C * HW);
                   for (Index n = 0; n < N; ++n) {
                     gx.segment((n * C + c0) * HW, Cs * HW) = g.segment(n * Cs * HW, Cs * HW);
                   }
                   accum_grad(*nx, gx);
                 });
}

Tensor select_batch(const Tensor& x, Index n) {
  require_nchw(x, "select_batch");
  const Index N = x.dim(0), CHW = x.numel() / N;
  if (n < 0 || n >= N) throw ShapeError("select_batch: index out of range");
  ArrayX v = x.array().segment(n * CHW, CHW);
  auto* nx = x.node().get();
  return make_op("select_batch", {1, x.dim(1), x.dim(2), x.dim(3)}, std::move(v), {x},
                 [nx, n, N, CHW](const ArrayX& g) {
                   ArrayX gx = ArrayX::Zero(N * CHW);
                   gx.segment(n * CHW, CHW) = g;
                   accum_grad(*nx, gx);
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  }
  auto* nx = x.node().get();
  return make_op("reshape", std::move(shape), x.array(), {x},
                 [nx](const ArrayX& g) { accum_grad(*nx, g); });
}

Tensor element(const Tensor& x, Index flat) {
  if (flat < 0 || flat >= x.numel()) throw ShapeError("element: index out of range");
  auto* nx = x.node().get();
  Index n = x.numel();
  return make_op("element", {1}, one(x.array()[flat]), {x}, [nx, n, flat](const ArrayX& g) {
    ArrayX gx = ArrayX::Zero(n);
    gx[flat] = g[0];
    accum_grad(*nx, gx);
  });
}

Tensor sum_range(const Tensor& x, Index i0, Index i1) {
  if (i0 < 0 || i1 > x.numel() || i0 >= i1) throw ShapeError("sum_range: bad range");
  auto* nx = x.node().get();
  Index n = x.numel();
  return make_op("sum_range", {1}, one(x.array().segment(i0, i1 - i0).sum()), {x},
                 [nx, n, i0, i1](const ArrayX& g) {
                   ArrayX gx = ArrayX::Zero(n);
                   gx.segment(i0, i1 - i0).setConstant(g[0]);
                   accum_grad(*nx, gx);
                 });
}

Tensor gather_patches(const Tensor& img2d, Index d, Index stride) {
  if (img2d.ndim() != 2) {
    throw ShapeError("gather_patches: expected 2-d image, got " + shape_str(img2d.shape()));
  }
  const Index H = img2d.dim(0), W = img2d.dim(1);
  if (d < 1 || stride < 1 || d > H || d > W) throw ShapeError("gather_patches: bad d or stride");
  const Index ny = (H - d) / stride + 1, nx_ = (W - d) / stride + 1;
  const Index M = ny * nx_, r = d * d;
  const ArrayX& xv = img2d.array();
  ArrayX v(M * r);
  for (Index py = 0; py < ny; ++py) {
    for (Index px = 0; px < nx_; ++px) {
      Scalar* row = v.data() + (py * nx_ + px) * r;
      for (Index dy = 0; dy < d; ++dy) {
        const Scalar* src = xv.data() + (py * stride + dy) * W + px * stride;
        std::copy(src, src + d, row + dy * d);
      }
    }
  }
  auto* nimg = img2d.node().get();
  return make_op("gather_patches", {M, r}, std::move(v), {img2d},
                 [nimg, H, W, d, stride, ny, nx_, r](const ArrayX& g) {
                   ArrayX gx = ArrayX::Zero(H * W);
                   for (Index py = 0; py < ny; ++py) {
                     for (Index px = 0; px < nx_; ++px) {
                       const Scalar* row = g.data() + (py * nx_ + px) * r;
                       for (Index dy = 0; dy < d; ++dy) {
                         Scalar* dst = gx.data() + (py * stride + dy) * W + px * stride;
                         for (Index dx = 0; dx < d; ++dx) dst[dx] += row[dy * d + dx];
                       }
                     }
                   }
                   accum_grad(*nimg, gx);
                 });
}

Tensor center_columns(const Tensor& X) {
  if (X.ndim() != 2) throw ShapeError("center_columns: expected 2-d, got " + shape_str(X.shape()));
  const Index M = X.dim(0), r = X.dim(1);
  Eigen::Map<const MatrixRM> A(X.array().data(), M, r);
  Eigen::RowVectorXd mean = A.colwise().mean();
  MatrixRM Cn = A.rowwise() - mean;
  ArrayX v = Eigen::Map<ArrayX>(Cn.data(), M * r);
  auto* nx = X.node().get();
  return make_op("center_columns", {M, r}, std::move(v), {X}, [nx, M, r](const ArrayX& g) {
    Eigen::Map<const MatrixRM> G(g.data(), M, r);
    MatrixRM GC = G.rowwise() - G.colwise().mean().eval();
    accum_grad(*nx, Eigen::Map<ArrayX>(GC.data(), M * r));
  });
}

}  // namespace fbi
