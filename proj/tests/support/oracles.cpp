#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

namespace {

struct View {
  std::vector<double> v;
  Shape s;
  explicit View(const Tensor& t) : v(t.to_vector()), s(t.shape()) {}
};

// Bias values, zeros when the bias is undefined.
std::vector<double> bias_values(const Tensor& b, std::int64_t n) {
  return b.defined() ? b.to_vector() : std::vector<double>(static_cast<std::size_t>(n), 0.0);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride, std::int64_t pad) {
  const bool batched = x.dim() == 4;
  const Tensor xb = batched ? x : Tensor::from_values({1, x.size(0), x.size(1), x.size(2)}, x.to_vector());
  const View X(xb), W(w);
  const std::vector<double> bias = bias_values(b, w.size(0));
  const std::int64_t n = X.s[0], ci = X.s[1], h = X.s[2], wd = X.s[3];
  const std::int64_t co = W.s[0], kh = W.s[2], kw = W.s[3];
  const std::int64_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n * co * oh * ow));
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t o = 0; o < co; ++o)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          double acc = bias[static_cast<std::size_t>(o)];
          for (std::int64_t c = 0; c < ci; ++c)
            for (std::int64_t dy = 0; dy < kh; ++dy)
              for (std::int64_t dx = 0; dx < kw; ++dx) {
                const std::int64_t iy = y * stride + dy - pad, ix = xx * stride + dx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += W.v[((o * ci + c) * kh + dy) * kw + dx] * X.v[((s * ci + c) * h + iy) * wd + ix];
              }
          out[((s * co + o) * oh + y) * ow + xx] = acc;
        }
  if (batched) return Tensor::from_values({n, co, oh, ow}, out);
  return Tensor::from_values({co, oh, ow}, out);
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t pad) {
  const bool batched = x.dim() == 5;
  const Tensor xb = batched ? x : Tensor::from_values({1, x.size(0), x.size(1), x.size(2), x.size(3)}, x.to_vector());
  const View X(xb), W(w);
  const std::vector<double> bias = bias_values(b, w.size(0));
  const std::int64_t n = X.s[0], ci = X.s[1], d = X.s[2], h = X.s[3], wd = X.s[4];
  const std::int64_t co = W.s[0], kd = W.s[2], kh = W.s[3], kw = W.s[4];
  const std::int64_t od = d - kd + 1, oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
  std::vector<double> out(static_cast<std::size_t>(n * co * od * oh * ow));
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t o = 0; o < co; ++o)
      for (std::int64_t z = 0; z < od; ++z)
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t xx = 0; xx < ow; ++xx) {
            double acc = bias[static_cast<std::size_t>(o)];
            for (std::int64_t c = 0; c < ci; ++c)
              for (std::int64_t dz = 0; dz < kd; ++dz)
                for (std::int64_t dy = 0; dy < kh; ++dy)
                  for (std::int64_t dx = 0; dx < kw; ++dx) {
                    const std::int64_t iy = y + dy - pad, ix = xx + dx - pad;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                    acc += W.v[(((o * ci + c) * kd + dz) * kh + dy) * kw + dx] *
                           X.v[(((s * ci + c) * d + z + dz) * h + iy) * wd + ix];
                  }
            out[(((s * co + o) * od + z) * oh + y) * ow + xx] = acc;
          }
  if (batched) return Tensor::from_values({n, co, od, oh, ow}, out);
  return Tensor::from_values({co, od, oh, ow}, out);
}

Tensor max_pool2d(const Tensor& x, std::int64_t window, std::int64_t stride) {
  const View X(x);
  const std::int64_t h = X.s[X.s.size() - 2], w = X.s.back();
  const std::int64_t planes = x.numel() / (h * w);
  const std::int64_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  std::vector<double> out;
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        double m = -INFINITY;
        for (std::int64_t dy = 0; dy < window; ++dy)
          for (std::int64_t dx = 0; dx < window; ++dx) m = std::max(m, X.v[(p * h + y * stride + dy) * w + xx * stride + dx]);
        out.push_back(m);
      }
  Shape s = X.s;
  s[s.size() - 2] = oh;
  s.back() = ow;
  return Tensor::from_values(s, out);
}

Tensor lrn(const Tensor& x, std::int64_t n, double k, double alpha, double beta) {
  const View X(x);
  const std::int64_t c = X.s[X.s.size() - 3], h = X.s[X.s.size() - 2], w = X.s.back();
  const std::int64_t batches = x.numel() / (c * h * w);
  const std::int64_t lo = (n - 1) / 2, hi = n - 1 - lo;
  std::vector<double> out(X.v.size());
  for (std::int64_t s = 0; s < batches; ++s)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) {
          double sq = 0;
          for (std::int64_t j = std::max<std::int64_t>(0, ch - lo); j <= std::min(c - 1, ch + hi); ++j) {
            const double v = X.v[((s * c + j) * h + y) * w + xx];
            sq += v * v;
          }
          const std::int64_t idx = ((s * c + ch) * h + y) * w + xx;
          out[idx] = X.v[idx] / std::pow(k + alpha / static_cast<double>(n) * sq, beta);
        }
  return Tensor::from_values(X.s, out);
}

egolstm::ConvLSTMState convlstm_step(const egolstm::ConvLSTMCell& cell, const Tensor& x, const egolstm::ConvLSTMState& s) {
  const View X(x), H(s.h), C(s.c);
  const std::int64_t ci = cell.in_channels, ch = cell.hidden_channels, k = cell.kernel, pad = (k - 1) / 2;
  const std::int64_t h = X.s[1], w = X.s[2];
  const egolstm::GateParams* g[4] = {&cell.input_gate, &cell.forget_gate, &cell.candidate, &cell.output_gate};
  std::vector<View> wx, wh, bb;
  for (auto* p : g) {
    wx.emplace_back(p->wx);
    wh.emplace_back(p->wh);
    bb.emplace_back(p->bias);
  }
  std::vector<double> hn(static_cast<std::size_t>(ch * h * w)), cn(hn.size());
  for (std::int64_t o = 0; o < ch; ++o)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) {
        double pre[4];
        for (int gi = 0; gi < 4; ++gi) {
          double acc = bb[gi].v[o];
          for (std::int64_t dy = 0; dy < k; ++dy)
            for (std::int64_t dx = 0; dx < k; ++dx) {
              const std::int64_t iy = y + dy - pad, ix = xx + dx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              for (std::int64_t c = 0; c < ci; ++c) acc += wx[gi].v[((o * ci + c) * k + dy) * k + dx] * X.v[(c * h + iy) * w + ix];
              for (std::int64_t c = 0; c < ch; ++c) acc += wh[gi].v[((o * ch + c) * k + dy) * k + dx] * H.v[(c * h + iy) * w + ix];
            }
          pre[gi] = acc;
        }
        const double i = sigmoid(pre[0]), f = sigmoid(pre[1]), gc = std::tanh(pre[2]), og = sigmoid(pre[3]);
        const std::int64_t idx = (o * h + y) * w + xx;
        cn[idx] = gc * i + C.v[idx] * f;
        hn[idx] = og * std::tanh(cn[idx]);
      }
  return {Tensor::from_values({ch, h, w}, hn), Tensor::from_values({ch, h, w}, cn)};
}

double bilinear(const Tensor& frame, std::int64_t c, std::int64_t out_h, std::int64_t out_w, std::int64_t i, std::int64_t j) {
  const View F(frame);
  const std::int64_t h = F.s[1], w = F.s[2];
  auto coord = [](std::int64_t o, std::int64_t in, std::int64_t out) {
    const double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(src, 0.0, static_cast<double>(in - 1));
  };
  const double sy = coord(i, h, out_h), sx = coord(j, w, out_w);
  const auto y0 = static_cast<std::int64_t>(std::floor(sy)), x0 = static_cast<std::int64_t>(std::floor(sx));
  const std::int64_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double ty = sy - static_cast<double>(y0), tx = sx - static_cast<double>(x0);
  auto at = [&](std::int64_t y, std::int64_t x) { return F.v[(c * h + y) * w + x]; };
  return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) + ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("max_abs_diff: shape mismatch");
  const auto x = a.to_vector(), y = b.to_vector();
  double m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

Tensor random(egolstm::Rng& rng, const Shape& shape, double lo, double hi) {
  std::vector<double> v(static_cast<std::size_t>(egolstm::shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(shape, v);
}

}  // namespace oracle
