#ifndef JAT_OPS_NN_HPP_
#define JAT_OPS_NN_HPP_

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "jat/graph.hpp"
#include "jat/ops.hpp"
#include "jat/tensor.hpp"
#include "jat/util.hpp"

// Convolution and attention kernels. These keep no quadratic or im2col
// intermediates on the tape; backward recomputes them from the saved inputs.
namespace jat::ops {

namespace detail {

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
    const int span = in + 2 * pad - kernel;
    if (span < 0 || stride < 1) throw std::invalid_argument("conv: kernel larger than padded input");
    return span / stride + 1;
}

// col[(ic*KH+ky)*KW+kx][oy*OW+ox] = x[ic][oy*s-p+ky][ox*s-p+kx] (0 outside)
template <typename T>
void im2col(const T* x, int ic, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow, T* col) {
    const int64_t patch = static_cast<int64_t>(oh) * ow;
    for (int c = 0; c < ic; ++c) {
        const T* xc = x + static_cast<int64_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* dst = col + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * patch;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* drow = dst + static_cast<int64_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::memset(drow, 0, sizeof(T) * static_cast<size_t>(ow));
                        continue;
                    }
                    const T* xrow = xc + static_cast<int64_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        drow[ox] = (ix >= 0 && ix < w) ? xrow[ix] : T(0);
                    }
                }
            }
        }
    }
}

}  // namespace detail

// x: [N, IC, H, W], w: [OC, IC, KH, KW], bias: [OC]
template <typename T>
Var<T> conv2d(Graph<T>& g, Var<T> x, Var<T> w, Var<T> bias, int stride, int pad) {
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    const auto& bv = g.value(bias);
    if (xv.rank() != 4 || wv.rank() != 4 || xv.size(1) != wv.size(1)) {
        throw std::invalid_argument("conv2d: shape mismatch " + shape_str(xv.shape) + " vs " + shape_str(wv.shape));
    }
    const int n = xv.size(0), ic = xv.size(1), h = xv.size(2), wd = xv.size(3);
    const int oc = wv.size(0), kh = wv.size(2), kw = wv.size(3);
    if (bv.rank() != 1 || bv.size(0) != oc) throw std::invalid_argument("conv2d: bias shape mismatch");
    const int oh = detail::conv_out_extent(h, kh, stride, pad);
    const int ow = detail::conv_out_extent(wd, kw, stride, pad);
    const int64_t patch = static_cast<int64_t>(oh) * ow;
    const int64_t ck = static_cast<int64_t>(ic) * kh * kw;

    Tensor<T> out({n, oc, oh, ow});
    parallel_for(n, [&](int64_t n0, int64_t n1) {
        std::vector<T> col(static_cast<size_t>(ck * patch));
        for (int64_t i = n0; i < n1; ++i) {
            detail::im2col(xv.data.data() + i * ic * h * wd, ic, h, wd, kh, kw, stride, pad, oh, ow, col.data());
            for (int o = 0; o < oc; ++o) {
                T* dst = out.data.data() + (i * oc + o) * patch;
                for (int64_t p = 0; p < patch; ++p) dst[p] = bv[o];
                const T* wrow = wv.data.data() + static_cast<int64_t>(o) * ck;
                for (int64_t k = 0; k < ck; ++k) {
                    const T wk = wrow[k];
                    const T* crow = col.data() + k * patch;
                    for (int64_t p = 0; p < patch; ++p) dst[p] += wk * crow[p];
                }
            }
        }
    });

    return g.emit(std::move(out), {x, w, bias},
                  [x, w, bias, n, ic, h, wd, oc, kh, kw, stride, pad, oh, ow, patch, ck](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      const auto& xv = gr.value(x);
                      const auto& wv = gr.value(w);
                      if (gr.requires_grad(x)) {
                          auto& dx = gr.grad(x);
                          parallel_for(n, [&](int64_t n0, int64_t n1) {
                              for (int64_t i = n0; i < n1; ++i) {
                                  const T* gn = go.data.data() + i * oc * patch;
                                  T* dxn = dx.data.data() + i * ic * h * wd;
                                  for (int c = 0; c < ic; ++c) {
                                      for (int iy = 0; iy < h; ++iy) {
                                          for (int ix = 0; ix < wd; ++ix) {
                                              T acc = T(0);
                                              for (int ky = 0; ky < kh; ++ky) {
                                                  const int ty = iy + pad - ky;
                                                  if (ty < 0 || ty % stride) continue;
                                                  const int oy = ty / stride;
                                                  if (oy >= oh) continue;
                                                  for (int kx = 0; kx < kw; ++kx) {
                                                      const int tx = ix + pad - kx;
                                                      if (tx < 0 || tx % stride) continue;
                                                      const int ox = tx / stride;
                                                      if (ox >= ow) continue;
                                                      for (int o = 0; o < oc; ++o) {
                                                          acc += gn[(static_cast<int64_t>(o) * oh + oy) * ow + ox] *
                                                                 wv.data.data()[((static_cast<int64_t>(o) * ic + c) * kh + ky) * kw + kx];
                                                      }
                                                  }
                                              }
                                              dxn[(static_cast<int64_t>(c) * h + iy) * wd + ix] += acc;
                                          }
                                      }
                                  }
                              }
                          });
                      }
                      if (gr.requires_grad(w)) {
                          auto& dw = gr.grad(w);
                          const int workers = ThreadPool::instance().size();
                          const int64_t chunk = (n + workers - 1) / workers;
                          std::vector<std::vector<T>> partial(static_cast<size_t>(workers));
                          parallel_for(workers, [&](int64_t w0, int64_t w1) {
                              std::vector<T> col(static_cast<size_t>(ck * patch));
                              std::vector<T> colt(static_cast<size_t>(ck * patch));
                              for (int64_t wi = w0; wi < w1; ++wi) {
                                  auto& local = partial[static_cast<size_t>(wi)];
                                  local.assign(static_cast<size_t>(oc) * ck, T(0));
                                  const int64_t lo = wi * chunk, hi = std::min<int64_t>(lo + chunk, n);
                                  for (int64_t i = lo; i < hi; ++i) {
                                      detail::im2col(xv.data.data() + i * ic * h * wd, ic, h, wd, kh, kw, stride, pad,
                                                     oh, ow, col.data());
                                      for (int64_t k = 0; k < ck; ++k) {
                                          for (int64_t p = 0; p < patch; ++p) colt[static_cast<size_t>(p * ck + k)] = col[static_cast<size_t>(k * patch + p)];
                                      }
                                      const T* gn = go.data.data() + i * oc * patch;
                                      for (int o = 0; o < oc; ++o) {
                                          const T* grow = gn + static_cast<int64_t>(o) * patch;
                                          T* drow = local.data() + static_cast<int64_t>(o) * ck;
                                          for (int64_t p = 0; p < patch; ++p) {
                                              const T gp = grow[p];
                                              if (gp == T(0)) continue;
                                              const T* crow = colt.data() + p * ck;
                                              for (int64_t k = 0; k < ck; ++k) drow[k] += gp * crow[k];
                                          }
                                      }
                                  }
                              }
                          });
                          for (const auto& local : partial) {
                              for (size_t k = 0; k < local.size(); ++k) dw[static_cast<int64_t>(k)] += local[k];
                          }
                      }
                      if (gr.requires_grad(bias)) {
                          auto& db = gr.grad(bias);
                          for (int64_t i = 0; i < n; ++i) {
                              for (int o = 0; o < oc; ++o) {
                                  const T* grow = go.data.data() + (i * oc + o) * patch;
                                  T acc = T(0);
                                  for (int64_t p = 0; p < patch; ++p) acc += grow[p];
                                  db[o] += acc;
                              }
                          }
                      }
                  },
                  "conv2d");
}

// x: [N, IC, H, W], w: [IC, OC, KH, KW]; OH = (H-1)*stride - 2*pad + KH + out_pad
template <typename T>
Var<T> conv2d_transposed(Graph<T>& g, Var<T> x, Var<T> w, Var<T> bias, int stride, int pad, int out_pad = 0) {
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    const auto& bv = g.value(bias);
    if (xv.rank() != 4 || wv.rank() != 4 || xv.size(1) != wv.size(0)) {
        throw std::invalid_argument("conv2d_transposed: shape mismatch " + shape_str(xv.shape) + " vs " +
                                    shape_str(wv.shape));
    }
    const int n = xv.size(0), ic = xv.size(1), h = xv.size(2), wd = xv.size(3);
    const int oc = wv.size(1), kh = wv.size(2), kw = wv.size(3);
    if (bv.rank() != 1 || bv.size(0) != oc) throw std::invalid_argument("conv2d_transposed: bias shape mismatch");
    if (out_pad < 0 || out_pad >= stride) throw std::invalid_argument("conv2d_transposed: bad output padding");
    const int oh = (h - 1) * stride - 2 * pad + kh + out_pad;
    const int ow = (wd - 1) * stride - 2 * pad + kw + out_pad;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d_transposed: empty output");

    Tensor<T> out({n, oc, oh, ow});
    parallel_for(n, [&](int64_t n0, int64_t n1) {
        for (int64_t i = n0; i < n1; ++i) {
            const T* xn = xv.data.data() + i * ic * h * wd;
            T* on = out.data.data() + i * oc * oh * ow;
            for (int o = 0; o < oc; ++o) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        T acc = bv[o];
                        for (int ky = 0; ky < kh; ++ky) {
                            const int ty = oy + pad - ky;
                            if (ty < 0 || ty % stride) continue;
                            const int iy = ty / stride;
                            if (iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int tx = ox + pad - kx;
                                if (tx < 0 || tx % stride) continue;
                                const int ix = tx / stride;
                                if (ix >= wd) continue;
                                for (int c = 0; c < ic; ++c) {
                                    acc += xn[(static_cast<int64_t>(c) * h + iy) * wd + ix] *
                                           wv.data.data()[((static_cast<int64_t>(c) * oc + o) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        on[(static_cast<int64_t>(o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
    });

    return g.emit(std::move(out), {x, w, bias},
                  [x, w, bias, n, ic, h, wd, oc, kh, kw, stride, pad, oh, ow](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      const auto& xv = gr.value(x);
                      const auto& wv = gr.value(w);
                      const int64_t opatch = static_cast<int64_t>(oh) * ow;
                      if (gr.requires_grad(x)) {
                          auto& dx = gr.grad(x);
                          parallel_for(n, [&](int64_t n0, int64_t n1) {
                              for (int64_t i = n0; i < n1; ++i) {
                                  const T* gn = go.data.data() + i * oc * opatch;
                                  T* dxn = dx.data.data() + i * ic * h * wd;
                                  for (int c = 0; c < ic; ++c) {
                                      for (int iy = 0; iy < h; ++iy) {
                                          for (int ix = 0; ix < wd; ++ix) {
                                              T acc = T(0);
                                              for (int ky = 0; ky < kh; ++ky) {
                                                  const int oy = iy * stride - pad + ky;
                                                  if (oy < 0 || oy >= oh) continue;
                                                  for (int kx = 0; kx < kw; ++kx) {
                                                      const int ox = ix * stride - pad + kx;
                                                      if (ox < 0 || ox >= ow) continue;
                                                      for (int o = 0; o < oc; ++o) {
                                                          acc += gn[(static_cast<int64_t>(o) * oh + oy) * ow + ox] *
                                                                 wv.data.data()[((static_cast<int64_t>(c) * oc + o) * kh + ky) * kw + kx];
                                                      }
                                                  }
                                              }
                                              dxn[(static_cast<int64_t>(c) * h + iy) * wd + ix] += acc;
                                          }
                                      }
                                  }
                              }
                          });
                      }
                      if (gr.requires_grad(w)) {
                          auto& dw = gr.grad(w);
                          const int workers = ThreadPool::instance().size();
                          const int64_t chunk = (n + workers - 1) / workers;
                          std::vector<std::vector<T>> partial(static_cast<size_t>(workers));
                          parallel_for(workers, [&](int64_t w0, int64_t w1) {
                              for (int64_t wi = w0; wi < w1; ++wi) {
                                  auto& local = partial[static_cast<size_t>(wi)];
                                  local.assign(wv.data.size(), T(0));
                                  const int64_t lo = wi * chunk, hi = std::min<int64_t>(lo + chunk, n);
                                  for (int64_t i = lo; i < hi; ++i) {
                                      const T* xn = xv.data.data() + i * ic * h * wd;
                                      const T* gn = go.data.data() + i * oc * opatch;
                                      for (int c = 0; c < ic; ++c) {
                                          for (int o = 0; o < oc; ++o) {
                                              for (int ky = 0; ky < kh; ++ky) {
                                                  for (int kx = 0; kx < kw; ++kx) {
                                                      T acc = T(0);
                                                      for (int iy = 0; iy < h; ++iy) {
                                                          const int oy = iy * stride - pad + ky;
                                                          if (oy < 0 || oy >= oh) continue;
                                                          for (int ix = 0; ix < wd; ++ix) {
                                                              const int ox = ix * stride - pad + kx;
                                                              if (ox < 0 || ox >= ow) continue;
                                                              acc += xn[(static_cast<int64_t>(c) * h + iy) * wd + ix] *
                                                                     gn[(static_cast<int64_t>(o) * oh + oy) * ow + ox];
                                                          }
                                                      }
                                                      local[((static_cast<int64_t>(c) * oc + o) * kh + ky) * kw + kx] += acc;
                                                  }
                                              }
                                          }
                                      }
                                  }
                              }
                          });
                          for (const auto& local : partial) {
                              for (size_t k = 0; k < local.size(); ++k) dw[static_cast<int64_t>(k)] += local[k];
                          }
                      }
                      if (gr.requires_grad(bias)) {
                          auto& db = gr.grad(bias);
                          for (int64_t i = 0; i < n; ++i) {
                              for (int o = 0; o < oc; ++o) {
                                  const T* grow = go.data.data() + (i * oc + o) * opatch;
                                  T acc = T(0);
                                  for (int64_t p = 0; p < opatch; ++p) acc += grow[p];
                                  db[o] += acc;
                              }
                          }
                      }
                  },
                  "conv2d_transposed");
}

namespace detail {

// contiguous per-(batch, head) views of q, k, v with k and v also kept
// transposed so score and gradient rows are stride-1 saxpy loops
template <typename T>
struct AttentionScratch {
    std::vector<T> q, k, v;      // [L, dh]
    std::vector<T> kt, vt;       // [dh, L]
    std::vector<T> probs, dscore;

    void load(const T* base, int l, int hid, int dh, int hio, int64_t row_stride) {
        q.resize(static_cast<size_t>(l) * dh);
        k.resize(static_cast<size_t>(l) * dh);
        v.resize(static_cast<size_t>(l) * dh);
        kt.resize(static_cast<size_t>(l) * dh);
        vt.resize(static_cast<size_t>(l) * dh);
        probs.resize(static_cast<size_t>(l));
        dscore.resize(static_cast<size_t>(l));
        for (int j = 0; j < l; ++j) {
            const T* row = base + j * row_stride + hio;
            for (int d = 0; d < dh; ++d) {
                q[static_cast<size_t>(j) * dh + d] = row[d];
                k[static_cast<size_t>(j) * dh + d] = row[hid + d];
                v[static_cast<size_t>(j) * dh + d] = row[2 * hid + d];
                kt[static_cast<size_t>(d) * l + j] = row[hid + d];
                vt[static_cast<size_t>(d) * l + j] = row[2 * hid + d];
            }
        }
    }

    // probs[s..e] = softmax of scaled q_i . k_j; lane-array reductions keep
    // the loops vectorizable without float reassociation
    void softmax_row(int i, int s, int e, int dh, int l, T att_scale) {
        constexpr int W = 16;
        T* __restrict p = probs.data();
        const T* __restrict qi = q.data() + static_cast<size_t>(i) * dh;
        {
            const T q0 = qi[0] * att_scale;
            const T* __restrict krow = kt.data();
            for (int j = s; j <= e; ++j) p[j] = q0 * krow[j];
        }
        for (int d = 1; d < dh; ++d) {
            const T qd = qi[d] * att_scale;
            const T* __restrict krow = kt.data() + static_cast<size_t>(d) * l;
            for (int j = s; j <= e; ++j) p[j] += qd * krow[j];
        }
        T lanes[W];
        for (int t = 0; t < W; ++t) lanes[t] = p[s];
        int j = s;
        for (; j + W <= e + 1; j += W) {
            for (int t = 0; t < W; ++t) lanes[t] = std::max(lanes[t], p[j + t]);
        }
        T m = lanes[0];
        for (int t = 1; t < W; ++t) m = std::max(m, lanes[t]);
        for (; j <= e; ++j) m = std::max(m, p[j]);

        T acc[W] = {};
        j = s;
        for (; j + W <= e + 1; j += W) {
            for (int t = 0; t < W; ++t) {
                const T ex = fast_exp(p[j + t] - m);
                p[j + t] = ex;
                acc[t] += ex;
            }
        }
        T z = T(0);
        for (; j <= e; ++j) {
            const T ex = fast_exp(p[j] - m);
            p[j] = ex;
            z += ex;
        }
        for (int t = 0; t < W; ++t) z += acc[t];
        const T invz = T(1) / z;
        for (int jj = s; jj <= e; ++jj) p[jj] *= invz;
    }

    // sum over j of p[j] * row[j], lane-array form
    static T dot_span(const T* __restrict a, const T* __restrict b, int s, int e) {
        constexpr int W = 16;
        T acc[W] = {};
        int j = s;
        for (; j + W <= e + 1; j += W) {
            for (int t = 0; t < W; ++t) acc[t] += a[j + t] * b[j + t];
        }
        T total = T(0);
        for (; j <= e; ++j) total += a[j] * b[j];
        for (int t = 0; t < W; ++t) total += acc[t];
        return total;
    }
};

}  // namespace detail

// Scaled dot-product attention over packed qkv rows: qkv is [B, L, 3*H],
// laid out [q | k | v] per position. Causal restricts keys to j <= i;
// window > 0 further restricts to j > i - window. Softmax rows are
// recomputed in backward rather than stored.
template <typename T>
Var<T> attention_core(Graph<T>& g, Var<T> qkv, int n_heads, bool causal, int window) {
    const auto& qv = g.value(qkv);
    if (qv.rank() != 3 || qv.size(2) % 3 != 0) {
        throw std::invalid_argument("attention_core: expected [B, L, 3H], got " + shape_str(qv.shape));
    }
    const int b = qv.size(0), l = qv.size(1), hid = qv.size(2) / 3;
    if (n_heads < 1 || hid % n_heads != 0) {
        throw std::invalid_argument("attention_core: hidden " + std::to_string(hid) + " not divisible by " +
                                    std::to_string(n_heads) + " heads");
    }
    if (window < 0) throw std::invalid_argument("attention_core: negative window");
    const int dh = hid / n_heads;
    const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const int64_t row_stride = 3ll * hid;

    auto span = [causal, window, l](int i, int& s, int& e) {
        e = causal ? i : l - 1;
        s = 0;
        if (causal && window > 0) s = std::max(0, i - window + 1);
    };

    Tensor<T> out({b, l, hid});
    parallel_for(static_cast<int64_t>(b) * n_heads, [&](int64_t t0, int64_t t1) {
        detail::AttentionScratch<T> sc;
        for (int64_t t = t0; t < t1; ++t) {
            const int bi = static_cast<int>(t / n_heads);
            const int hio = static_cast<int>(t % n_heads) * dh;
            sc.load(qv.data.data() + static_cast<int64_t>(bi) * l * row_stride, l, hid, dh, hio, row_stride);
            T* obase = out.data.data() + (static_cast<int64_t>(bi) * l) * hid;
            for (int i = 0; i < l; ++i) {
                int s, e;
                span(i, s, e);
                sc.softmax_row(i, s, e, dh, l, att_scale);
                T* oi = obase + static_cast<int64_t>(i) * hid + hio;
                for (int d = 0; d < dh; ++d) {
                    oi[d] = detail::AttentionScratch<T>::dot_span(sc.probs.data(),
                                                                  sc.vt.data() + static_cast<size_t>(d) * l, s, e);
                }
            }
        }
    });

    return g.emit(std::move(out), {qkv},
                  [qkv, b, l, hid, n_heads, dh, att_scale, row_stride, span](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(qkv)) return;
                      const auto& go = gr.grad(self);
                      const auto& qv = gr.value(qkv);
                      auto& dq = gr.grad(qkv);
                      parallel_for(static_cast<int64_t>(b) * n_heads, [&](int64_t t0, int64_t t1) {
                          detail::AttentionScratch<T> sc;
                          std::vector<T> dkt_local, dvt_local;  // [dh, L], transposed accumulators
                          for (int64_t t = t0; t < t1; ++t) {
                              const int bi = static_cast<int>(t / n_heads);
                              const int hio = static_cast<int>(t % n_heads) * dh;
                              const T* base = qv.data.data() + static_cast<int64_t>(bi) * l * row_stride;
                              sc.load(base, l, hid, dh, hio, row_stride);
                              dkt_local.assign(static_cast<size_t>(l) * dh, T(0));
                              dvt_local.assign(static_cast<size_t>(l) * dh, T(0));
                              T* dbase = dq.data.data() + static_cast<int64_t>(bi) * l * row_stride;
                              const T* gbase = go.data.data() + (static_cast<int64_t>(bi) * l) * hid;
                              for (int i = 0; i < l; ++i) {
                                  int s, e;
                                  span(i, s, e);
                                  sc.softmax_row(i, s, e, dh, l, att_scale);
                                  const T* gi = gbase + static_cast<int64_t>(i) * hid + hio;
                                  // dscore[j] = g_i . v_j via the transposed values
                                  T* __restrict dsc = sc.dscore.data();
                                  const T* __restrict p = sc.probs.data();
                                  {
                                      const T g0 = gi[0];
                                      const T* __restrict vrow = sc.vt.data();
                                      for (int j = s; j <= e; ++j) dsc[j] = g0 * vrow[j];
                                  }
                                  for (int d = 1; d < dh; ++d) {
                                      const T gd = gi[d];
                                      const T* __restrict vrow = sc.vt.data() + static_cast<size_t>(d) * l;
                                      for (int j = s; j <= e; ++j) dsc[j] += gd * vrow[j];
                                  }
                                  const T dot_sum = detail::AttentionScratch<T>::dot_span(p, dsc, s, e);
                                  // dsc becomes the score gradient in place
                                  for (int j = s; j <= e; ++j) dsc[j] = p[j] * (dsc[j] - dot_sum) * att_scale;
                                  T* dqi = dbase + i * row_stride + hio;
                                  for (int d = 0; d < dh; ++d) {
                                      dqi[d] += detail::AttentionScratch<T>::dot_span(
                                          dsc, sc.kt.data() + static_cast<size_t>(d) * l, s, e);
                                      const T qd = sc.q[static_cast<size_t>(i) * dh + d];
                                      const T gd = gi[d];
                                      T* __restrict dkrow = dkt_local.data() + static_cast<size_t>(d) * l;
                                      T* __restrict dvrow = dvt_local.data() + static_cast<size_t>(d) * l;
                                      for (int j = s; j <= e; ++j) {
                                          dkrow[j] += qd * dsc[j];
                                          dvrow[j] += gd * p[j];
                                      }
                                  }
                              }
                              for (int j = 0; j < l; ++j) {
                                  T* drow = dbase + j * row_stride + hio;
                                  for (int d = 0; d < dh; ++d) {
                                      drow[hid + d] += dkt_local[static_cast<size_t>(d) * l + j];
                                      drow[2 * hid + d] += dvt_local[static_cast<size_t>(d) * l + j];
                                  }
                              }
                          }
                      });
                  },
                  "attention_core");
}

// x: [N, C, S, S] with S divisible by patch; rows ordered image-major,
// patch row-major; each row is the (c, py, px) flattening of one patch
template <typename T>
Var<T> image_to_patches(Graph<T>& g, Var<T> x, int patch) {
    const auto& xv = g.value(x);
    if (xv.rank() != 4) throw std::invalid_argument("image_to_patches: expected NCHW");
    const int n = xv.size(0), c = xv.size(1), h = xv.size(2), w = xv.size(3);
    if (patch <= 0 || h % patch != 0 || w % patch != 0) {
        throw std::invalid_argument("image_to_patches: extent " + shape_str(xv.shape) + " not divisible by patch " +
                                    std::to_string(patch));
    }
    const int py = h / patch, px = w / patch;
    const int rows = n * py * px;
    const int cols = c * patch * patch;
    Tensor<T> out({rows, cols});
    for (int i = 0; i < n; ++i) {
        for (int gy = 0; gy < py; ++gy) {
            for (int gx = 0; gx < px; ++gx) {
                T* dst = out.data.data() + (static_cast<int64_t>(i) * py * px + gy * px + gx) * cols;
                for (int ch = 0; ch < c; ++ch) {
                    for (int yy = 0; yy < patch; ++yy) {
                        const T* src = xv.data.data() +
                                       ((static_cast<int64_t>(i) * c + ch) * h + gy * patch + yy) * w + gx * patch;
                        std::memcpy(dst + (static_cast<int64_t>(ch) * patch + yy) * patch, src,
                                    sizeof(T) * static_cast<size_t>(patch));
                    }
                }
            }
        }
    }
    return g.emit(std::move(out), {x},
                  [x, n, c, h, w, patch, py, px, cols](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(x)) return;
                      const auto& go = gr.grad(self);
                      auto& dx = gr.grad(x);
                      for (int i = 0; i < n; ++i) {
                          for (int gy = 0; gy < py; ++gy) {
                              for (int gx = 0; gx < px; ++gx) {
                                  const T* src = go.data.data() + (static_cast<int64_t>(i) * py * px + gy * px + gx) * cols;
                                  for (int ch = 0; ch < c; ++ch) {
                                      for (int yy = 0; yy < patch; ++yy) {
                                          T* dst = dx.data.data() +
                                                   ((static_cast<int64_t>(i) * c + ch) * h + gy * patch + yy) * w + gx * patch;
                                          const T* s = src + (static_cast<int64_t>(ch) * patch + yy) * patch;
                                          for (int xx = 0; xx < patch; ++xx) dst[xx] += s[xx];
                                      }
                                  }
                              }
                          }
                      }
                  },
                  "image_to_patches");
}

}  // namespace jat::ops

#endif  // JAT_OPS_NN_HPP_
