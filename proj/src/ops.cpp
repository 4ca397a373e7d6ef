// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/ops.hpp"

#include <cmath>
#include <sstream>

namespace cfedit {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

namespace {

template <typename Scalar>
using ColMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using MatMap = Eigen::Map<ColMajor<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const ColMajor<Scalar>>;
template <typename Scalar>
using RowVecMap = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;

struct ConvGeometry {
  int n, c, h, w;
  int o, k, stride, pad;
  int ho, wo;

  int patch() const { return c * k * k; }
  int out_pixels() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// Unfolds one CHW image into a (C*k*k) x (Ho*Wo) row-major matrix.
template <typename Scalar>
void im2col(const Scalar* img, const ConvGeometry& g, Scalar* cols) {
  const int hw_out = g.out_pixels();
  for (int c = 0; c < g.c; ++c) {
    const Scalar* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        Scalar* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * hw_out;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          Scalar* out = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix >= 0 && ix < g.w) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into a CHW image.
template <typename Scalar>
void col2im(const Scalar* cols, const ConvGeometry& g, Scalar* img) {
  const int hw_out = g.out_pixels();
  for (int c = 0; c < g.c; ++c) {
    Scalar* plane = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const Scalar* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * hw_out;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const Scalar* in = row + oy * g.wo;
          Scalar* dst = plane + iy * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
ConvGeometry conv_geometry(const Shape& in, const Shape& ker, int stride, int pad) {
  if (in.size() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_str(in));
  if (ker.size() != 4) throw ShapeError("conv2d: kernel must be OIkk, got " + shape_str(ker));
  if (ker[2] != ker[3]) throw ShapeError("conv2d: kernel must be square, got " + shape_str(ker));
  if (ker[2] % 2 == 0) throw ShapeError("conv2d: kernel spatial size must be odd, got " + std::to_string(ker[2]));
  if (in[1] != ker[1]) {
    throw ShapeError("conv2d: input channels " + std::to_string(in[1]) + " != kernel input channels " +
                     std::to_string(ker[1]) + " (input " + shape_str(in) + ", kernel " + shape_str(ker) + ")");
  }
  if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
  if (pad < 0) throw ArgumentError("conv2d: pad must be >= 0");
  ConvGeometry g{in[0], in[1], in[2], in[3], ker[0], ker[2], stride, pad, 0, 0};
  g.ho = conv_out_size(g.h, g.k, stride, pad);
  g.wo = conv_out_size(g.w, g.k, stride, pad);
  if (g.ho < 1 || g.wo < 1) throw ShapeError("conv2d: empty output for input " + shape_str(in));
  return g;
}

template <typename Scalar>
Tape<Scalar>& tape_of(Var<Scalar> v) {
  if (!v.valid()) throw ArgumentError("op applied to an invalid Var");
  return *v.tape;
}

template <typename Scalar>
void same_tape(Var<Scalar> a, Var<Scalar> b) {
  if (a.tape != b.tape) throw ArgumentError("ops: operands recorded on different tapes");
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, std::optional<Var<std::type_identity_t<Scalar>>> bias, int stride, int pad) {
  Tape<Scalar>& tape = tape_of(input);
  same_tape(input, kernel);
  const ConvGeometry g = conv_geometry<Scalar>(input.shape(), kernel.shape(), stride, pad);
  if (bias) {
    same_tape(input, *bias);
    if (bias->value().size() != static_cast<std::size_t>(g.o)) {
      throw ShapeError("conv2d: bias of shape " + shape_str(bias->shape()) + " for " + std::to_string(g.o) +
                       " output channels");
    }
  }

  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& w = kernel.value();
  Tensor<Scalar> out({g.n, g.o, g.ho, g.wo});

  const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.o) * g.out_pixels();
  std::vector<Scalar> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.patch()) * g.out_pixels());
  ConstMatMap<Scalar> w_t(w.data(), g.patch(), g.o);

  for (int n = 0; n < g.n; ++n) {
    const Scalar* img = x.data() + n * in_stride;
    const Scalar* col_data = img;
    if (!g.pointwise()) {
      im2col(img, g, cols.data());
      col_data = cols.data();
    }
    ConstMatMap<Scalar> cols_t(col_data, g.out_pixels(), g.patch());
    MatMap<Scalar> out_t(out.data() + n * out_stride, g.out_pixels(), g.o);
    out_t.noalias() = cols_t * w_t;
    if (bias) out_t.rowwise() += RowVecMap<Scalar>(bias->value().data(), g.o);
  }

  std::vector<int> inputs{input.id, kernel.id};
  if (bias) inputs.push_back(bias->id);
  const int bias_id = bias ? bias->id : -1;
  return tape.record(std::move(out), std::move(inputs), [g, in_id = input.id, k_id = kernel.id, bias_id](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& dout = t.grad(self);
    const Tensor<Scalar>& x = t.value(in_id);
    const Tensor<Scalar>& w = t.value(k_id);
    const bool need_dx = t.requires_grad(in_id);
    const bool need_dw = t.requires_grad(k_id);
    const bool need_db = bias_id >= 0 && t.requires_grad(bias_id);

    const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
    const std::size_t out_stride = static_cast<std::size_t>(g.o) * g.out_pixels();
    std::vector<Scalar> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.patch()) * g.out_pixels());
    std::vector<Scalar> dcols(static_cast<std::size_t>(g.patch()) * g.out_pixels());
    ConstMatMap<Scalar> w_t(w.data(), g.patch(), g.o);
    ColMajor<Scalar> dw_t = ColMajor<Scalar>::Zero(g.patch(), g.o);
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> db = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(g.o);
    Scalar* dx = need_dx ? t.grad(in_id).data() : nullptr;

    for (int n = 0; n < g.n; ++n) {
      ConstMatMap<Scalar> dout_t(dout.data() + n * out_stride, g.out_pixels(), g.o);
      if (need_dw) {
        const Scalar* img = x.data() + n * in_stride;
        const Scalar* col_data = img;
        if (!g.pointwise()) {
          im2col(img, g, cols.data());
          col_data = cols.data();
        }
        ConstMatMap<Scalar> cols_t(col_data, g.out_pixels(), g.patch());
        dw_t.noalias() += cols_t.transpose() * dout_t;
      }
      if (need_db) db += dout_t.colwise().sum();
      if (need_dx) {
        if (g.pointwise()) {
          MatMap<Scalar> dx_t(dx + n * in_stride, g.out_pixels(), g.patch());
          dx_t.noalias() += dout_t * w_t.transpose();
        } else {
          MatMap<Scalar> dcols_t(dcols.data(), g.out_pixels(), g.patch());
          dcols_t.noalias() = dout_t * w_t.transpose();
          col2im(dcols.data(), g, dx + n * in_stride);
        }
      }
    }
    if (need_dw) {
      MatMap<Scalar>(t.grad(k_id).data(), g.patch(), g.o) += dw_t;
    }
    if (need_db) {
      Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(t.grad(bias_id).data(), g.o) += db;
    }
  });
}

template <typename Scalar>
Tensor<Scalar> conv2d_reference(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>* bias,
                                int stride, int pad) {
  const ConvGeometry g = conv_geometry<Scalar>(input.shape(), kernel.shape(), stride, pad);
  Tensor<Scalar> out({g.n, g.o, g.ho, g.wo});
  for (int n = 0; n < g.n; ++n) {
    for (int o = 0; o < g.o; ++o) {
      for (int oy = 0; oy < g.ho; ++oy) {
        for (int ox = 0; ox < g.wo; ++ox) {
          Scalar acc = bias ? (*bias)[static_cast<std::size_t>(o)] : Scalar(0);
          for (int c = 0; c < g.c; ++c) {
            for (int ky = 0; ky < g.k; ++ky) {
              for (int kx = 0; kx < g.k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                acc += input.at(n, c, iy, ix) * kernel.at(o, c, ky, kx);
              }
            }
          }
          out.at(n, o, oy, ox) = acc;
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Var<Scalar> group_norm(Var<Scalar> input, int groups, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps) {
  Tape<Scalar>& tape = tape_of(input);
  same_tape(input, gamma);
  same_tape(input, beta);
  const Shape& s = input.shape();
  if (s.size() < 2) throw ShapeError("group_norm: input needs (N, C, ...) layout, got " + shape_str(s));
  const int n = s[0];
  const int c = s[1];
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) +
                     " groups");
  }
  if (gamma.value().size() != static_cast<std::size_t>(c) || beta.value().size() != static_cast<std::size_t>(c)) {
    throw ShapeError("group_norm: affine parameters must have " + std::to_string(c) + " elements");
  }
  const std::size_t spatial = input.value().size() / (static_cast<std::size_t>(n) * c);
  const int per_group = c / groups;
  const std::size_t group_len = spatial * per_group;

  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& gm = gamma.value();
  const Tensor<Scalar>& bt = beta.value();
  Tensor<Scalar> out(s);
  std::vector<Scalar> mean(static_cast<std::size_t>(n) * groups);
  std::vector<Scalar> rstd(mean.size());

  for (int i = 0; i < n; ++i) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + gi * per_group) * spatial;
      auto seg = x.array().segment(static_cast<Eigen::Index>(base), static_cast<Eigen::Index>(group_len));
      const Scalar mu = seg.mean();
      const Scalar var = (seg - mu).square().mean();
      const Scalar r = Scalar(1) / std::sqrt(var + eps);
      mean[static_cast<std::size_t>(i) * groups + gi] = mu;
      rstd[static_cast<std::size_t>(i) * groups + gi] = r;
      for (int cc = 0; cc < per_group; ++cc) {
        const int ch = gi * per_group + cc;
        const auto off = static_cast<Eigen::Index>(base + cc * spatial);
        out.array().segment(off, static_cast<Eigen::Index>(spatial)) =
            (x.array().segment(off, static_cast<Eigen::Index>(spatial)) - mu) * (r * gm[ch]) + bt[ch];
      }
    }
  }

  return tape.record(std::move(out), {input.id, gamma.id, beta.id},
                     [n, c, groups, per_group, spatial, mean = std::move(mean), rstd = std::move(rstd), in_id = input.id,
                      g_id = gamma.id, b_id = beta.id](Tape<Scalar>& t, int self) {
                       const Tensor<Scalar>& dy = t.grad(self);
                       const Tensor<Scalar>& x = t.value(in_id);
                       const Tensor<Scalar>& gm = t.value(g_id);
                       const bool need_dx = t.requires_grad(in_id);
                       const bool need_dg = t.requires_grad(g_id);
                       const bool need_db = t.requires_grad(b_id);
                       Eigen::Array<Scalar, Eigen::Dynamic, 1> dg = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(c);
                       Eigen::Array<Scalar, Eigen::Dynamic, 1> db = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(c);
                       Eigen::Array<Scalar, Eigen::Dynamic, 1> xhat(static_cast<Eigen::Index>(spatial));
                       Eigen::Array<Scalar, Eigen::Dynamic, 1> dxhat(static_cast<Eigen::Index>(spatial * per_group));
                       Eigen::Array<Scalar, Eigen::Dynamic, 1> xh_group(static_cast<Eigen::Index>(spatial * per_group));
                       const auto sp = static_cast<Eigen::Index>(spatial);
                       for (int i = 0; i < n; ++i) {
                         for (int gi = 0; gi < groups; ++gi) {
                           const Scalar mu = mean[static_cast<std::size_t>(i) * groups + gi];
                           const Scalar r = rstd[static_cast<std::size_t>(i) * groups + gi];
                           const std::size_t base = (static_cast<std::size_t>(i) * c + gi * per_group) * spatial;
                           for (int cc = 0; cc < per_group; ++cc) {
                             const int ch = gi * per_group + cc;
                             const auto off = static_cast<Eigen::Index>(base + cc * spatial);
                             xhat = (x.array().segment(off, sp) - mu) * r;
                             auto dys = dy.array().segment(off, sp);
                             dg[ch] += (dys * xhat).sum();
                             db[ch] += dys.sum();
                             xh_group.segment(cc * sp, sp) = xhat;
                             dxhat.segment(cc * sp, sp) = dys * gm[ch];
                           }
                           if (need_dx) {
                             const Scalar m1 = dxhat.mean();
                             const Scalar m2 = (dxhat * xh_group).mean();
                             t.grad(in_id).array().segment(static_cast<Eigen::Index>(base), sp * per_group) +=
                                 (dxhat - m1 - xh_group * m2) * r;
                           }
                         }
                       }
                       if (need_dg) t.grad(g_id).array() += dg;
                       if (need_db) t.grad(b_id).array() += db;
                     });
}

template <typename Scalar>
Var<Scalar> silu(Var<Scalar> x) {
  Tape<Scalar>& tape = tape_of(x);
  const auto& a = x.value().array();
  Tensor<Scalar> out(x.shape(), (a / (Scalar(1) + (-a).exp())).eval());
  return tape.record(std::move(out), {x.id}, [in_id = x.id](Tape<Scalar>& t, int self) {
    const auto& a = t.value(in_id).array();
    const auto sig = (Scalar(1) / (Scalar(1) + (-a).exp())).eval();
    t.grad(in_id).array() += t.grad(self).array() * sig * (Scalar(1) + a * (Scalar(1) - sig));
  });
}

template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, std::optional<Var<std::type_identity_t<Scalar>>> bias) {
  Tape<Scalar>& tape = tape_of(x);
  same_tape(x, weight);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1]) {
    throw ShapeError("linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  }
  const int n = xs[0];
  const int in = xs[1];
  const int out_dim = ws[0];
  if (bias && bias->value().size() != static_cast<std::size_t>(out_dim)) {
    throw ShapeError("linear: bias " + shape_str(bias->shape()) + " for " + std::to_string(out_dim) + " outputs");
  }
  Tensor<Scalar> out({n, out_dim});
  ConstMatMap<Scalar> x_t(x.value().data(), in, n);
  ConstMatMap<Scalar> w_t(weight.value().data(), in, out_dim);
  MatMap<Scalar> y_t(out.data(), out_dim, n);
  // Column by column so a sample's output does not depend on the batch size
  // (Eigen switches kernels between GEMV and GEMM).
  for (int i = 0; i < n; ++i) y_t.col(i).noalias() = w_t.transpose() * x_t.col(i);
  if (bias) {
    y_t.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias->value().data(), out_dim);
  }
  std::vector<int> inputs{x.id, weight.id};
  if (bias) inputs.push_back(bias->id);
  return tape.record(std::move(out), std::move(inputs),
                     [n, in, out_dim, x_id = x.id, w_id = weight.id, b_id = bias ? bias->id : -1](Tape<Scalar>& t, int self) {
                       ConstMatMap<Scalar> dy_t(t.grad(self).data(), out_dim, n);
                       if (t.requires_grad(x_id)) {
                         ConstMatMap<Scalar> w_t(t.value(w_id).data(), in, out_dim);
                         MatMap<Scalar>(t.grad(x_id).data(), in, n).noalias() += w_t * dy_t;
                       }
                       if (t.requires_grad(w_id)) {
                         ConstMatMap<Scalar> x_t(t.value(x_id).data(), in, n);
                         MatMap<Scalar>(t.grad(w_id).data(), in, out_dim).noalias() += x_t * dy_t.transpose();
                       }
                       if (b_id >= 0 && t.requires_grad(b_id)) {
                         Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(t.grad(b_id).data(), out_dim) +=
                             dy_t.rowwise().sum();
                       }
                     });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), (a.value().array() + b.value().array()).eval());
  return tape_of(a).record(std::move(out), {a.id, b.id}, [a_id = a.id, b_id = b.id](Tape<Scalar>& t, int self) {
    if (t.requires_grad(a_id)) t.grad(a_id).array() += t.grad(self).array();
    if (t.requires_grad(b_id)) t.grad(b_id).array() += t.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape(), (a.value().array() - b.value().array()).eval());
  return tape_of(a).record(std::move(out), {a.id, b.id}, [a_id = a.id, b_id = b.id](Tape<Scalar>& t, int self) {
    if (t.requires_grad(a_id)) t.grad(a_id).array() += t.grad(self).array();
    if (t.requires_grad(b_id)) t.grad(b_id).array() -= t.grad(self).array();
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), (a.value().array() * b.value().array()).eval());
  return tape_of(a).record(std::move(out), {a.id, b.id}, [a_id = a.id, b_id = b.id](Tape<Scalar>& t, int self) {
    if (t.requires_grad(a_id)) t.grad(a_id).array() += t.grad(self).array() * t.value(b_id).array();
    if (t.requires_grad(b_id)) t.grad(b_id).array() += t.grad(self).array() * t.value(a_id).array();
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor) {
  Tensor<Scalar> out(x.shape(), (x.value().array() * factor).eval());
  return tape_of(x).record(std::move(out), {x.id}, [factor, in_id = x.id](Tape<Scalar>& t, int self) {
    t.grad(in_id).array() += t.grad(self).array() * factor;
  });
}

template <typename Scalar>
Var<Scalar> add_channelwise(Var<Scalar> x, Var<Scalar> per_channel) {
  same_tape(x, per_channel);
  const Shape& s = x.shape();
  const Shape& v = per_channel.shape();
  if (s.size() < 2 || v.size() != 2 || v[0] != s[0] || v[1] != s[1]) {
    throw ShapeError("add_channelwise: " + shape_str(v) + " does not broadcast over " + shape_str(s));
  }
  const std::size_t planes = static_cast<std::size_t>(s[0]) * s[1];
  const auto spatial = static_cast<Eigen::Index>(x.value().size() / planes);
  Tensor<Scalar> out = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    out.array().segment(static_cast<Eigen::Index>(p) * spatial, spatial) += per_channel.value()[p];
  }
  return tape_of(x).record(std::move(out), {x.id, per_channel.id},
                           [planes, spatial, x_id = x.id, v_id = per_channel.id](Tape<Scalar>& t, int self) {
                             const Tensor<Scalar>& dy = t.grad(self);
                             if (t.requires_grad(x_id)) t.grad(x_id).array() += dy.array();
                             if (t.requires_grad(v_id)) {
                               Tensor<Scalar>& dv = t.grad(v_id);
                               for (std::size_t p = 0; p < planes; ++p) {
                                 dv[p] += dy.array().segment(static_cast<Eigen::Index>(p) * spatial, spatial).sum();
                               }
                             }
                           });
}

template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b) {
  same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw ShapeError("concat_channels: " + shape_str(sa) + " and " + shape_str(sb) + " differ outside the channel dim");
  }
  const int n = sa[0];
  const auto la = static_cast<Eigen::Index>(a.value().size() / n);
  const auto lb = static_cast<Eigen::Index>(b.value().size() / n);
  Tensor<Scalar> out({n, sa[1] + sb[1], sa[2], sa[3]});
  for (int i = 0; i < n; ++i) {
    out.array().segment(i * (la + lb), la) = a.value().array().segment(i * la, la);
    out.array().segment(i * (la + lb) + la, lb) = b.value().array().segment(i * lb, lb);
  }
  return tape_of(a).record(std::move(out), {a.id, b.id}, [n, la, lb, a_id = a.id, b_id = b.id](Tape<Scalar>& t, int self) {
    const Tensor<Scalar>& dy = t.grad(self);
    const bool ga = t.requires_grad(a_id);
    const bool gb = t.requires_grad(b_id);
    for (int i = 0; i < n; ++i) {
      if (ga) t.grad(a_id).array().segment(i * la, la) += dy.array().segment(i * (la + lb), la);
      if (gb) t.grad(b_id).array().segment(i * lb, lb) += dy.array().segment(i * (la + lb) + la, lb);
    }
  });
}

template <typename Scalar>
Var<Scalar> upsample2x(Var<Scalar> x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("upsample2x: expected NCHW, got " + shape_str(s));
  const int planes = s[0] * s[1];
  const int h = s[2];
  const int w = s[3];
  Tensor<Scalar> out({s[0], s[1], 2 * h, 2 * w});
  const Scalar* src = x.value().data();
  Scalar* dst = out.data();
  for (int p = 0; p < planes; ++p) {
    for (int y = 0; y < 2 * h; ++y) {
      const Scalar* row = src + (static_cast<std::size_t>(p) * h + y / 2) * w;
      Scalar* orow = dst + (static_cast<std::size_t>(p) * 2 * h + y) * 2 * w;
      for (int xx = 0; xx < 2 * w; ++xx) orow[xx] = row[xx / 2];
    }
  }
  return tape_of(x).record(std::move(out), {x.id}, [planes, h, w, in_id = x.id](Tape<Scalar>& t, int self) {
    const Scalar* dy = t.grad(self).data();
    Scalar* dx = t.grad(in_id).data();
    for (int p = 0; p < planes; ++p) {
      for (int y = 0; y < 2 * h; ++y) {
        const Scalar* row = dy + (static_cast<std::size_t>(p) * 2 * h + y) * 2 * w;
        Scalar* orow = dx + (static_cast<std::size_t>(p) * h + y / 2) * w;
        for (int xx = 0; xx < 2 * w; ++xx) orow[xx / 2] += row[xx];
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  Tensor<Scalar> out({1}, x.value().array().sum());
  return tape_of(x).record(std::move(out), {x.id}, [in_id = x.id](Tape<Scalar>& t, int self) {
    t.grad(in_id).array() += t.grad(self)[0];
  });
}

template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, Var<Scalar> b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "mse");
  const auto count = static_cast<Scalar>(a.value().size());
  Tensor<Scalar> out({1}, (a.value().array() - b.value().array()).square().sum() / count);
  return tape_of(a).record(std::move(out), {a.id, b.id}, [count, a_id = a.id, b_id = b.id](Tape<Scalar>& t, int self) {
    const Scalar g = t.grad(self)[0] * Scalar(2) / count;
    const auto diff = (t.value(a_id).array() - t.value(b_id).array()).eval();
    if (t.requires_grad(a_id)) t.grad(a_id).array() += g * diff;
    if (t.requires_grad(b_id)) t.grad(b_id).array() -= g * diff;
  });
}

#define CFEDIT_INSTANTIATE_OPS(S)                                                                \
  template Var<S> conv2d(Var<S>, Var<S>, std::optional<Var<std::type_identity_t<S>>>, int, int);                       \
  template Var<S> group_norm(Var<S>, int, Var<S>, Var<S>, S);                                    \
  template Var<S> silu(Var<S>);                                                                  \
  template Var<S> linear(Var<S>, Var<S>, std::optional<Var<std::type_identity_t<S>>>);                                 \
  template Var<S> add(Var<S>, Var<S>);                                                           \
  template Var<S> sub(Var<S>, Var<S>);                                                           \
  template Var<S> mul(Var<S>, Var<S>);                                                           \
  template Var<S> scale(Var<S>, S);                                                              \
  template Var<S> add_channelwise(Var<S>, Var<S>);                                               \
  template Var<S> concat_channels(Var<S>, Var<S>);                                               \
  template Var<S> upsample2x(Var<S>);                                                            \
  template Var<S> sum(Var<S>);                                                                   \
  template Var<S> mse(Var<S>, Var<S>);                                                           \
  template Tensor<S> conv2d_reference(const Tensor<S>&, const Tensor<S>&, const Tensor<S>*, int, int);

CFEDIT_INSTANTIATE_OPS(float)
CFEDIT_INSTANTIATE_OPS(double)

}  // namespace cfedit
