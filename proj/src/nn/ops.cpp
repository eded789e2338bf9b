#include "qmri/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "qmri/simd/kernels.hpp"

namespace qmri::nn {

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::shape,
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void need_scalar(const Tensor& s, const char* op) {
  require(s.size() == 1, ErrorKind::shape, std::string(op) + ": expected a one-element tensor");
}

void need_4d(const Tensor& x, const char* op) {
  require(x.shape().size() == 4, ErrorKind::shape,
          std::string(op) + ": expected (B,C,H,W), got " + shape_string(x.shape()));
}

Node& in(Node& n, std::size_t i) { return *n.inputs[i]; }

// col[(ci*9 + ky*3 + kx), y*W + x] = img[ci, y+ky-1, x+kx-1] (zero outside)
void im2col(const double* img, std::size_t ci, std::size_t h, std::size_t w, double* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* row = col + ((c * 3 + ky) * 3 + kx) * hw;
        const double* src = img + c * hw;
        for (std::size_t y = 0; y < h; ++y) {
          double* dst = row + y * w;
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill_n(dst, w, 0.0);
            continue;
          }
          const double* s = src + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            dst[0] = 0.0;
            std::copy_n(s, w - 1, dst + 1);
          } else if (kx == 1) {
            std::copy_n(s, w, dst);
          } else {
            std::copy_n(s + 1, w - 1, dst);
            dst[w - 1] = 0.0;
          }
        }
      }
}

// Adjoint of im2col: accumulate into img.
void col2im(const double* col, std::size_t ci, std::size_t h, std::size_t w, double* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* row = col + ((c * 3 + ky) * 3 + kx) * hw;
        double* dst = img + c * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          double* d = dst + static_cast<std::size_t>(sy) * w;
          const double* s = row + y * w;
          if (kx == 0) {
            for (std::size_t x = 1; x < w; ++x) d[x - 1] += s[x];
          } else if (kx == 1) {
            for (std::size_t x = 0; x < w; ++x) d[x] += s[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) d[x + 1] += s[x];
          }
        }
      }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  std::vector<double> v(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.values()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& x = in(n, k);
      if (!x.requires_grad) continue;
      auto& g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "sub");
  std::vector<double> v(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b.values()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    if (in(n, 0).requires_grad) {
      auto& g = in(n, 0).ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (in(n, 1).requires_grad) {
      auto& g = in(n, 1).ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    Node& x = in(n, 0);
    Node& y = in(n, 1);
    if (x.requires_grad) {
      auto& g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * x.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.values().begin(), a.values().end());
  for (auto& x : v) x *= s;
  return make_result(a.shape(), std::move(v), {a}, [s](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    simd::active().axpy(g.size(), s, n.grad.data(), g.data());
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.values().begin(), a.values().end());
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
  return make_result(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (n.value[i] > 0.0) g[i] += n.grad[i];
  });
}

Tensor softplus(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = a.values()[i];
    v[i] = x > 30.0 ? x : std::log1p(std::exp(x));
  }
  return make_result(a.shape(), std::move(v), {a}, [](Node& n) {
    Node& x = in(n, 0);
    auto& g = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / (1.0 + std::exp(-x.value[i]));
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  need_scalar(s, "mul_scalar");
  const double sv = s.item();
  std::vector<double> v(a.values().begin(), a.values().end());
  for (auto& x : v) x *= sv;
  return make_result(a.shape(), std::move(v), {a, s}, [](Node& n) {
    Node& x = in(n, 0);
    Node& sc = in(n, 1);
    if (x.requires_grad) {
      auto& g = x.ensure_grad();
      simd::active().axpy(g.size(), sc.value[0], n.grad.data(), g.data());
    }
    if (sc.requires_grad) sc.ensure_grad()[0] += simd::active().dot(n.grad.size(), n.grad.data(), x.value.data());
  });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  need_scalar(s, "div_scalar");
  const double sv = s.item();
  require(sv != 0.0, ErrorKind::numeric, "div_scalar: division by zero");
  std::vector<double> v(a.values().begin(), a.values().end());
  for (auto& x : v) x /= sv;
  return make_result(a.shape(), std::move(v), {a, s}, [](Node& n) {
    Node& x = in(n, 0);
    Node& sc = in(n, 1);
    const double d = sc.value[0];
    if (x.requires_grad) {
      auto& g = x.ensure_grad();
      simd::active().axpy(g.size(), 1.0 / d, n.grad.data(), g.data());
    }
    if (sc.requires_grad)
      sc.ensure_grad()[0] -= simd::active().dot(n.grad.size(), n.grad.data(), x.value.data()) / (d * d);
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_result({1}, {s}, {a}, [](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    for (auto& x : g) x += n.grad[0];
  });
}

Tensor sum_squares(const Tensor& a) {
  const double s = simd::active().dot(a.size(), a.values().data(), a.values().data());
  return make_result({1}, {s}, {a}, [](Node& n) {
    Node& x = in(n, 0);
    auto& g = x.ensure_grad();
    simd::active().axpy(g.size(), 2.0 * n.grad[0], x.value.data(), g.data());
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Activation act) {
  need_4d(x, "conv2d");
  require(w.shape().size() == 4 && w.dim(2) == 3 && w.dim(3) == 3, ErrorKind::shape,
          "conv2d: weights must be (Co,Ci,3,3), got " + shape_string(w.shape()));
  const std::size_t nb = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3), co = w.dim(0);
  require(w.dim(1) == ci, ErrorKind::shape,
          "conv2d: channel mismatch, input has " + std::to_string(ci) + ", weights expect " + std::to_string(w.dim(1)));
  require(b.size() == co, ErrorKind::shape, "conv2d: bias length != output channels");
  const std::size_t hw = h * wd, kk = ci * 9;
  const auto& kern = simd::active();

  std::vector<double> out(nb * co * hw);
  std::vector<double> col(kk * hw);
  for (std::size_t n = 0; n < nb; ++n) {
    im2col(x.values().data() + n * ci * hw, ci, h, wd, col.data());
    double* o = out.data() + n * co * hw;
    for (std::size_t c = 0; c < co; ++c) std::fill_n(o + c * hw, hw, b.values()[c]);
    kern.gemm_nn(co, hw, kk, w.values().data(), kk, col.data(), hw, o, hw);
  }
  if (act == Activation::relu)
    for (auto& v : out) v = v > 0.0 ? v : 0.0;

  return make_result({nb, co, h, wd}, std::move(out), {x, w, b}, [=](Node& node) {
    Node& xn = in(node, 0);
    Node& wn = in(node, 1);
    Node& bn = in(node, 2);
    const auto& k = simd::active();
    std::vector<double> g(node.grad);
    if (act == Activation::relu)
      for (std::size_t i = 0; i < g.size(); ++i)
        if (node.value[i] <= 0.0) g[i] = 0.0;

    std::vector<double> wt;
    if (xn.requires_grad) {
      wt.resize(kk * co);
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t p = 0; p < kk; ++p) wt[p * co + c] = wn.value[c * kk + p];
    }
    std::vector<double> colb(kk * hw);
    for (std::size_t n = 0; n < nb; ++n) {
      const double* gn = g.data() + n * co * hw;
      if (bn.requires_grad) {
        auto& gb = bn.ensure_grad();
        for (std::size_t c = 0; c < co; ++c)
          for (std::size_t i = 0; i < hw; ++i) gb[c] += gn[c * hw + i];
      }
      if (wn.requires_grad) {
        im2col(xn.value.data() + n * ci * hw, ci, h, wd, colb.data());
        k.gemm_nt(co, kk, hw, gn, hw, colb.data(), hw, wn.ensure_grad().data(), kk);
      }
      if (xn.requires_grad) {
        std::fill(colb.begin(), colb.end(), 0.0);
        k.gemm_nn(kk, hw, co, wt.data(), co, gn, hw, colb.data(), hw);
        col2im(colb.data(), ci, h, wd, xn.ensure_grad().data() + n * ci * hw);
      }
    }
  });
}

Tensor maxpool2(const Tensor& x) {
  need_4d(x, "maxpool2");
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::shape, "maxpool2: spatial dims must be even");
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<double> out(nb * c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto xv = x.values();
  for (std::size_t p = 0; p < nb * c; ++p)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t q = 0; q < wo; ++q) {
        const std::size_t base = p * h * w + 2 * r * w + 2 * q;
        std::size_t best = base;
        for (std::size_t idx : {base + 1, base + w, base + w + 1})
          if (xv[idx] > xv[best]) best = idx;
        const std::size_t o = (p * ho + r) * wo + q;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
  return make_result({nb, c, ho, wo}, std::move(out), {x}, [argmax](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[(*argmax)[i]] += n.grad[i];
  });
}

Tensor upsample2(const Tensor& x) {
  need_4d(x, "upsample2");
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  std::vector<double> out(nb * c * ho * wo);
  const auto xv = x.values();
  for (std::size_t p = 0; p < nb * c; ++p)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t q = 0; q < wo; ++q) out[(p * ho + r) * wo + q] = xv[(p * h + r / 2) * w + q / 2];
  return make_result({nb, c, ho, wo}, std::move(out), {x}, [=](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    for (std::size_t p = 0; p < nb * c; ++p)
      for (std::size_t r = 0; r < ho; ++r)
        for (std::size_t q = 0; q < wo; ++q) g[(p * h + r / 2) * w + q / 2] += n.grad[(p * ho + r) * wo + q];
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  need_4d(a, "concat_channels");
  need_4d(b, "concat_channels");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3), ErrorKind::shape,
          "concat_channels: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const std::size_t nb = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<double> out(nb * (ca + cb) * hw);
  for (std::size_t n = 0; n < nb; ++n) {
    std::copy_n(a.values().data() + n * ca * hw, ca * hw, out.data() + n * (ca + cb) * hw);
    std::copy_n(b.values().data() + n * cb * hw, cb * hw, out.data() + n * (ca + cb) * hw + ca * hw);
  }
  return make_result({nb, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b}, [=](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& src = in(n, k);
      if (!src.requires_grad) continue;
      auto& g = src.ensure_grad();
      const std::size_t cc = k == 0 ? ca : cb, off = k == 0 ? 0 : ca * hw;
      for (std::size_t s = 0; s < nb; ++s)
        for (std::size_t i = 0; i < cc * hw; ++i) g[s * cc * hw + i] += n.grad[s * (ca + cb) * hw + off + i];
    }
  });
}

Tensor pad_to(const Tensor& x, std::size_t h2, std::size_t w2) {
  need_4d(x, "pad_to");
  const std::size_t p = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h2 >= h && w2 >= w, ErrorKind::shape, "pad_to: target smaller than input");
  if (h2 == h && w2 == w) return x;
  std::vector<double> out(p * h2 * w2, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(x.values().data() + (i * h + r) * w, w, out.data() + (i * h2 + r) * w2);
  return make_result({x.dim(0), x.dim(1), h2, w2}, std::move(out), {x}, [=](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) g[(i * h + r) * w + c] += n.grad[(i * h2 + r) * w2 + c];
  });
}

Tensor crop_to(const Tensor& x, std::size_t h2, std::size_t w2) {
  need_4d(x, "crop_to");
  const std::size_t p = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h2 <= h && w2 <= w, ErrorKind::shape, "crop_to: target larger than input");
  if (h2 == h && w2 == w) return x;
  std::vector<double> out(p * h2 * w2);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t r = 0; r < h2; ++r)
      std::copy_n(x.values().data() + (i * h + r) * w, w2, out.data() + (i * h2 + r) * w2);
  return make_result({x.dim(0), x.dim(1), h2, w2}, std::move(out), {x}, [=](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t r = 0; r < h2; ++r)
        for (std::size_t c = 0; c < w2; ++c) g[(i * h + r) * w + c] += n.grad[(i * h2 + r) * w2 + c];
  });
}

Tensor select_channel(const Tensor& x, std::size_t ch) {
  need_4d(x, "select_channel");
  const std::size_t nb = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(ch < c, ErrorKind::shape, "select_channel: channel out of range");
  std::vector<double> out(nb * hw);
  for (std::size_t n = 0; n < nb; ++n) std::copy_n(x.values().data() + (n * c + ch) * hw, hw, out.data() + n * hw);
  return make_result({nb, 1, x.dim(2), x.dim(3)}, std::move(out), {x}, [=](Node& node) {
    auto& g = in(node, 0).ensure_grad();
    for (std::size_t n = 0; n < nb; ++n)
      for (std::size_t i = 0; i < hw; ++i) g[(n * c + ch) * hw + i] += node.grad[n * hw + i];
  });
}

Tensor channel_mean(const Tensor& x, std::size_t ch) {
  need_4d(x, "channel_mean");
  const std::size_t nb = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  require(ch < c, ErrorKind::shape, "channel_mean: channel out of range");
  double s = 0.0;
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t i = 0; i < hw; ++i) s += x.values()[(n * c + ch) * hw + i];
  const double inv = 1.0 / static_cast<double>(nb * hw);
  return make_result({1}, {s * inv}, {x}, [=](Node& node) {
    auto& g = in(node, 0).ensure_grad();
    for (std::size_t n = 0; n < nb; ++n)
      for (std::size_t i = 0; i < hw; ++i) g[(n * c + ch) * hw + i] += node.grad[0] * inv;
  });
}

Tensor complex_magnitude(const Tensor& x) {
  need_4d(x, "complex_magnitude");
  require(x.dim(1) == 2, ErrorKind::shape, "complex_magnitude: expected 2 channels (re, im)");
  const std::size_t ne = x.dim(0), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(ne * hw);
  const auto xv = x.values();
  for (std::size_t e = 0; e < ne; ++e)
    for (std::size_t i = 0; i < hw; ++i) out[e * hw + i] = std::hypot(xv[(2 * e) * hw + i], xv[(2 * e + 1) * hw + i]);
  return make_result({1, ne, x.dim(2), x.dim(3)}, std::move(out), {x}, [=](Node& n) {
    Node& src = in(n, 0);
    auto& g = src.ensure_grad();
    for (std::size_t e = 0; e < ne; ++e)
      for (std::size_t i = 0; i < hw; ++i) {
        const double m = n.value[e * hw + i];
        if (m == 0.0) continue;
        const double gi = n.grad[e * hw + i] / m;
        g[(2 * e) * hw + i] += gi * src.value[(2 * e) * hw + i];
        g[(2 * e + 1) * hw + i] += gi * src.value[(2 * e + 1) * hw + i];
      }
  });
}

Tensor linear_map(const Tensor& x, Shape out_shape, LinearFn forward, LinearFn adjoint) {
  std::vector<double> out(shape_size(out_shape), 0.0);
  forward(x.values(), out);
  return make_result(std::move(out_shape), std::move(out), {x}, [adjoint = std::move(adjoint)](Node& n) {
    auto& g = in(n, 0).ensure_grad();
    std::vector<double> tmp(g.size(), 0.0);
    adjoint(n.grad, tmp);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += tmp[i];
  });
}

}  // namespace qmri::nn
