#ifndef JAT_OPS_HPP_
#define JAT_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "jat/graph.hpp"
#include "jat/tensor.hpp"
#include "jat/util.hpp"

// Dense-algebra forward suite with reverse-mode gradients. Shapes are checked
// up front and mismatches reported with both shapes. Forward passes partition
// work so that each output element is produced by exactly one worker in a
// fixed order; results are bit-identical across worker counts.
namespace jat::ops {

template <typename T>
using Var = typename Graph<T>::Var;

namespace detail {

// rows = product of all dims except the last
inline int64_t row_count(const Shape& s) {
    if (s.empty()) throw std::invalid_argument("expected rank >= 1");
    int64_t r = 1;
    for (size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
    return r;
}

inline void accumulate(std::vector<char>&) {}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    check_same_shape(av.shape, bv.shape, "add");
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    return g.emit(std::move(out), {a, b},
                  [a, b](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      if (gr.requires_grad(a)) {
                          auto& da = gr.grad(a);
                          for (int64_t i = 0; i < go.numel(); ++i) da[i] += go[i];
                      }
                      if (gr.requires_grad(b)) {
                          auto& db = gr.grad(b);
                          for (int64_t i = 0; i < go.numel(); ++i) db[i] += go[i];
                      }
                  },
                  "add");
}

// a: [..., D], bias: [D], broadcast over leading dims
template <typename T>
Var<T> add_bias(Graph<T>& g, Var<T> a, Var<T> bias) {
    const auto& av = g.value(a);
    const auto& bv = g.value(bias);
    if (bv.rank() != 1 || av.rank() < 1 || av.size(-1) != bv.size(0)) {
        throw std::invalid_argument("add_bias: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    }
    const int64_t rows = detail::row_count(av.shape);
    const int d = av.size(-1);
    Tensor<T> out(av.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const T* src = av.data.data() + r * d;
        T* dst = out.data.data() + r * d;
        for (int j = 0; j < d; ++j) dst[j] = src[j] + bv[j];
    }
    return g.emit(std::move(out), {a, bias},
                  [a, bias, rows, d](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      if (gr.requires_grad(a)) {
                          auto& da = gr.grad(a);
                          for (int64_t i = 0; i < go.numel(); ++i) da[i] += go[i];
                      }
                      if (gr.requires_grad(bias)) {
                          auto& db = gr.grad(bias);
                          for (int64_t r = 0; r < rows; ++r) {
                              const T* src = go.data.data() + r * d;
                              for (int j = 0; j < d; ++j) db[j] += src[j];
                          }
                      }
                  },
                  "add_bias");
}

template <typename T>
Var<T> scale(Graph<T>& g, Var<T> a, double c) {
    const auto& av = g.value(a);
    Tensor<T> out(av.shape);
    const T cc = static_cast<T>(c);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * cc;
    return g.emit(std::move(out), {a},
                  [a, cc](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      auto& da = gr.grad(a);
                      for (int64_t i = 0; i < go.numel(); ++i) da[i] += cc * go[i];
                  },
                  "scale");
}

// elementwise product
template <typename T>
Var<T> mul(Graph<T>& g, Var<T> a, Var<T> b) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    check_same_shape(av.shape, bv.shape, "mul");
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    return g.emit(std::move(out), {a, b},
                  [a, b](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      const auto& av = gr.value(a);
                      const auto& bv = gr.value(b);
                      if (gr.requires_grad(a)) {
                          auto& da = gr.grad(a);
                          for (int64_t i = 0; i < go.numel(); ++i) da[i] += go[i] * bv[i];
                      }
                      if (gr.requires_grad(b)) {
                          auto& db = gr.grad(b);
                          for (int64_t i = 0; i < go.numel(); ++i) db[i] += go[i] * av[i];
                      }
                  },
                  "mul");
}

template <typename T>
Var<T> gelu(Graph<T>& g, Var<T> a) {
    const auto& av = g.value(a);
    Tensor<T> out(av.shape);
    const double inv_sqrt2 = 0.7071067811865475244;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double x = static_cast<double>(av[i]);
        out[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * inv_sqrt2)));
    }
    return g.emit(std::move(out), {a},
                  [a](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      const auto& av = gr.value(a);
                      auto& da = gr.grad(a);
                      const double inv_sqrt2 = 0.7071067811865475244;
                      const double inv_sqrt2pi = 0.3989422804014326779;
                      for (int64_t i = 0; i < go.numel(); ++i) {
                          const double x = static_cast<double>(av[i]);
                          const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                          const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                          da[i] += go[i] * static_cast<T>(cdf + x * pdf);
                      }
                  },
                  "gelu");
}

// out = mask ? fill : a, with a constant 0/1 mask
template <typename T>
Var<T> masked_fill(Graph<T>& g, Var<T> a, const Tensor<uint8_t>& mask, T fill) {
    const auto& av = g.value(a);
    check_same_shape(av.shape, mask.shape, "masked_fill");
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = mask[i] ? fill : av[i];
    auto mask_copy = mask;
    return g.emit(std::move(out), {a},
                  [a, mask_copy](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      auto& da = gr.grad(a);
                      for (int64_t i = 0; i < go.numel(); ++i) {
                          if (!mask_copy[i]) da[i] += go[i];
                      }
                  },
                  "masked_fill");
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(Graph<T>& g, Var<T> a, Shape new_shape) {
    const auto& av = g.value(a);
    if (shape_numel(new_shape) != av.numel()) {
        throw std::invalid_argument("reshape: numel mismatch " + shape_str(av.shape) + " -> " + shape_str(new_shape));
    }
    Tensor<T> out(std::move(new_shape), av.data);
    return g.emit(std::move(out), {a},
                  [a](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      auto& da = gr.grad(a);
                      for (int64_t i = 0; i < go.numel(); ++i) da[i] += go[i];
                  },
                  "reshape");
}

template <typename T>
Var<T> concat(Graph<T>& g, int axis, const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const auto& first = g.value(parts[0]);
    const int rank = first.rank();
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: bad axis");
    Shape out_shape = first.shape;
    int64_t axis_total = 0;
    for (auto p : parts) {
        const auto& v = g.value(p);
        if (v.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
        for (int d = 0; d < rank; ++d) {
            if (d != axis && v.shape[d] != first.shape[d]) {
                throw std::invalid_argument("concat: shape mismatch " + shape_str(v.shape) + " vs " +
                                            shape_str(first.shape));
            }
        }
        axis_total += v.shape[axis];
    }
    out_shape[axis] = static_cast<int>(axis_total);

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= first.shape[d];
    for (int d = axis + 1; d < rank; ++d) inner *= first.shape[d];

    Tensor<T> out(out_shape);
    std::vector<int64_t> spans;  // per-part axis extent * inner
    int64_t offset = 0;
    for (auto p : parts) {
        const auto& v = g.value(p);
        const int64_t span = static_cast<int64_t>(v.shape[axis]) * inner;
        for (int64_t o = 0; o < outer; ++o) {
            std::memcpy(out.data.data() + o * axis_total * inner + offset,
                        v.data.data() + o * span, sizeof(T) * span);
        }
        spans.push_back(span);
        offset += span;
    }
    auto parts_copy = parts;
    return g.emit(std::move(out), parts_copy,
                  [parts_copy, spans, outer, axis_total, inner](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      int64_t offset = 0;
                      for (size_t k = 0; k < parts_copy.size(); ++k) {
                          const int64_t span = spans[k];
                          if (gr.requires_grad(parts_copy[k])) {
                              auto& dp = gr.grad(parts_copy[k]);
                              for (int64_t o = 0; o < outer; ++o) {
                                  const T* src = go.data.data() + o * axis_total * inner + offset;
                                  T* dst = dp.data.data() + o * span;
                                  for (int64_t i = 0; i < span; ++i) dst[i] += src[i];
                              }
                          }
                          offset += span;
                      }
                  },
                  "concat");
}

// zero-pad, per-axis (before, after)
template <typename T>
Var<T> pad(Graph<T>& g, Var<T> a, const std::vector<std::pair<int, int>>& pads) {
    const auto& av = g.value(a);
    if (static_cast<int>(pads.size()) != av.rank()) throw std::invalid_argument("pad: pads rank mismatch");
    Shape out_shape = av.shape;
    for (int d = 0; d < av.rank(); ++d) {
        if (pads[d].first < 0 || pads[d].second < 0) throw std::invalid_argument("pad: negative padding");
        out_shape[d] += pads[d].first + pads[d].second;
    }
    Tensor<T> out(out_shape);
    const int rank = av.rank();
    std::vector<int64_t> in_stride(rank, 1), out_stride(rank, 1);
    for (int d = rank - 2; d >= 0; --d) {
        in_stride[d] = in_stride[d + 1] * av.shape[d + 1];
        out_stride[d] = out_stride[d + 1] * out_shape[d + 1];
    }
    std::vector<int> idx(rank, 0);
    for (int64_t i = 0; i < av.numel(); ++i) {
        int64_t oi = 0;
        for (int d = 0; d < rank; ++d) oi += (idx[d] + pads[d].first) * out_stride[d];
        out[oi] = av[i];
        for (int d = rank - 1; d >= 0; --d) {
            if (++idx[d] < av.shape[d]) break;
            idx[d] = 0;
        }
    }
    auto in_shape = av.shape;
    return g.emit(std::move(out), {a},
                  [a, pads, in_shape, in_stride, out_stride](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      auto& da = gr.grad(a);
                      const int rank = static_cast<int>(in_shape.size());
                      std::vector<int> idx(rank, 0);
                      for (int64_t i = 0; i < da.numel(); ++i) {
                          int64_t oi = 0;
                          for (int d = 0; d < rank; ++d) oi += (idx[d] + pads[d].first) * out_stride[d];
                          da[i] += go[oi];
                          for (int d = rank - 1; d >= 0; --d) {
                              if (++idx[d] < in_shape[d]) break;
                              idx[d] = 0;
                          }
                      }
                  },
                  "pad");
}

template <typename T>
Var<T> slice(Graph<T>& g, Var<T> a, const std::vector<int>& offsets, const std::vector<int>& extents) {
    const auto& av = g.value(a);
    const int rank = av.rank();
    if (static_cast<int>(offsets.size()) != rank || static_cast<int>(extents.size()) != rank) {
        throw std::invalid_argument("slice: offsets/extents rank mismatch");
    }
    for (int d = 0; d < rank; ++d) {
        if (offsets[d] < 0 || extents[d] < 0 || offsets[d] + extents[d] > av.shape[d]) {
            throw std::invalid_argument("slice: out of range on axis " + std::to_string(d) + " for shape " +
                                        shape_str(av.shape));
        }
    }
    Shape out_shape(extents.begin(), extents.end());
    Tensor<T> out(out_shape);
    std::vector<int64_t> in_stride(rank, 1);
    for (int d = rank - 2; d >= 0; --d) in_stride[d] = in_stride[d + 1] * av.shape[d + 1];
    std::vector<int> idx(rank, 0);
    for (int64_t i = 0; i < out.numel(); ++i) {
        int64_t src = 0;
        for (int d = 0; d < rank; ++d) src += (offsets[d] + idx[d]) * in_stride[d];
        out[i] = av[src];
        for (int d = rank - 1; d >= 0; --d) {
            if (++idx[d] < extents[d]) break;
            idx[d] = 0;
        }
    }
    return g.emit(std::move(out), {a},
                  [a, offsets, extents, in_stride](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      auto& da = gr.grad(a);
                      const int rank = static_cast<int>(offsets.size());
                      std::vector<int> idx(rank, 0);
                      for (int64_t i = 0; i < go.numel(); ++i) {
                          int64_t src = 0;
                          for (int d = 0; d < rank; ++d) src += (offsets[d] + idx[d]) * in_stride[d];
                          da[src] += go[i];
                          for (int d = rank - 1; d >= 0; --d) {
                              if (++idx[d] < extents[d]) break;
                              idx[d] = 0;
                          }
                      }
                  },
                  "slice");
}

// [N, A, B] -> [N, B, A]
template <typename T>
Var<T> transpose_last2(Graph<T>& g, Var<T> x) {
    const auto& xv = g.value(x);
    if (xv.rank() != 3) throw std::invalid_argument("transpose_last2: expected rank 3, got " + shape_str(xv.shape));
    const int n = xv.size(0), a = xv.size(1), b = xv.size(2);
    Tensor<T> out({n, b, a});
    for (int i = 0; i < n; ++i) {
        const T* src = xv.data.data() + static_cast<int64_t>(i) * a * b;
        T* dst = out.data.data() + static_cast<int64_t>(i) * a * b;
        for (int r = 0; r < a; ++r) {
            for (int c = 0; c < b; ++c) dst[static_cast<int64_t>(c) * a + r] = src[static_cast<int64_t>(r) * b + c];
        }
    }
    return g.emit(std::move(out), {x},
                  [x, n, a, b](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(x)) return;
                      const auto& go = gr.grad(self);
                      auto& dx = gr.grad(x);
                      for (int i = 0; i < n; ++i) {
                          const T* src = go.data.data() + static_cast<int64_t>(i) * a * b;
                          T* dst = dx.data.data() + static_cast<int64_t>(i) * a * b;
                          for (int r = 0; r < a; ++r) {
                              for (int c = 0; c < b; ++c) {
                                  dst[static_cast<int64_t>(r) * b + c] += src[static_cast<int64_t>(c) * a + r];
                              }
                          }
                      }
                  },
                  "transpose_last2");
}

// out[n, :] = a[indices[n], :]
template <typename T>
Var<T> gather_rows(Graph<T>& g, Var<T> a, const std::vector<int>& indices) {
    const auto& av = g.value(a);
    if (av.rank() != 2) throw std::invalid_argument("gather_rows: expected rank-2 input, got " + shape_str(av.shape));
    const int d = av.size(1);
    for (int idx : indices) {
        if (idx < 0 || idx >= av.size(0)) throw std::invalid_argument("gather_rows: index out of range");
    }
    Tensor<T> out({static_cast<int>(indices.size()), d});
    for (size_t n = 0; n < indices.size(); ++n) {
        std::memcpy(out.data.data() + n * d, av.data.data() + static_cast<int64_t>(indices[n]) * d, sizeof(T) * d);
    }
    return g.emit(std::move(out), {a},
                  [a, indices, d](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      auto& da = gr.grad(a);
                      for (size_t n = 0; n < indices.size(); ++n) {
                          const T* src = go.data.data() + n * d;
                          T* dst = da.data.data() + static_cast<int64_t>(indices[n]) * d;
                          for (int j = 0; j < d; ++j) dst[j] += src[j];
                      }
                  },
                  "gather_rows");
}

// inverse of gather_rows with unique indices: out[indices[n], :] = rows[n, :]
template <typename T>
Var<T> scatter_rows(Graph<T>& g, Var<T> rows, const std::vector<int>& indices, int out_rows) {
    const auto& rv = g.value(rows);
    if (rv.rank() != 2 || rv.size(0) != static_cast<int>(indices.size())) {
        throw std::invalid_argument("scatter_rows: rows shape " + shape_str(rv.shape) + " vs " +
                                    std::to_string(indices.size()) + " indices");
    }
    std::vector<uint8_t> seen(static_cast<size_t>(out_rows), 0);
    for (int idx : indices) {
        if (idx < 0 || idx >= out_rows) throw std::invalid_argument("scatter_rows: index out of range");
        if (seen[static_cast<size_t>(idx)]++) throw std::invalid_argument("scatter_rows: duplicate index");
    }
    const int d = rv.size(1);
    Tensor<T> out({out_rows, d});
    for (size_t n = 0; n < indices.size(); ++n) {
        std::memcpy(out.data.data() + static_cast<int64_t>(indices[n]) * d, rv.data.data() + n * d, sizeof(T) * d);
    }
    return g.emit(std::move(out), {rows},
                  [rows, indices, d](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(rows)) return;
                      const auto& go = gr.grad(self);
                      auto& dr = gr.grad(rows);
                      for (size_t n = 0; n < indices.size(); ++n) {
                          const T* src = go.data.data() + static_cast<int64_t>(indices[n]) * d;
                          T* dst = dr.data.data() + n * d;
                          for (int j = 0; j < d; ++j) dst[j] += src[j];
                      }
                  },
                  "scatter_rows");
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(Graph<T>& g, Var<T> a, Var<T> b) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.size(1) != bv.size(0)) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    }
    const int m = av.size(0), k = av.size(1), n = bv.size(1);
    Tensor<T> out({m, n});
    parallel_for(m, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const T* arow = av.data.data() + i * k;
            T* crow = out.data.data() + i * n;
            for (int kk = 0; kk < k; ++kk) {
                const T aik = arow[kk];
                const T* brow = bv.data.data() + static_cast<int64_t>(kk) * n;
                for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
        }
    });
    return g.emit(std::move(out), {a, b},
                  [a, b, m, k, n](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      const auto& av = gr.value(a);
                      const auto& bv = gr.value(b);
                      if (gr.requires_grad(a)) {
                          // transpose b once so the inner loop is stride-1
                          std::vector<T> bt(static_cast<size_t>(k) * n);
                          for (int kk = 0; kk < k; ++kk) {
                              for (int j = 0; j < n; ++j) {
                                  bt[static_cast<size_t>(j) * k + kk] = bv.data.data()[static_cast<int64_t>(kk) * n + j];
                              }
                          }
                          auto& da = gr.grad(a);
                          parallel_for(m, [&](int64_t r0, int64_t r1) {
                              for (int64_t i = r0; i < r1; ++i) {
                                  const T* grow = go.data.data() + i * n;
                                  T* darow = da.data.data() + i * k;
                                  for (int j = 0; j < n; ++j) {
                                      const T gij = grow[j];
                                      if (gij == T(0)) continue;
                                      const T* btrow = bt.data() + static_cast<size_t>(j) * k;
                                      for (int kk = 0; kk < k; ++kk) darow[kk] += gij * btrow[kk];
                                  }
                              }
                          });
                      }
                      if (gr.requires_grad(b)) {
                          auto& db = gr.grad(b);
                          parallel_for(k, [&](int64_t k0, int64_t k1) {
                              for (int64_t kk = k0; kk < k1; ++kk) {
                                  T* dbrow = db.data.data() + kk * n;
                                  for (int i = 0; i < m; ++i) {
                                      const T aik = av.data.data()[static_cast<int64_t>(i) * k + kk];
                                      if (aik == T(0)) continue;
                                      const T* grow = go.data.data() + static_cast<int64_t>(i) * n;
                                      for (int j = 0; j < n; ++j) dbrow[j] += aik * grow[j];
                                  }
                              }
                          });
                      }
                  },
                  "matmul");
}

// ---------------------------------------------------------------------------
// normalization and softmax
// ---------------------------------------------------------------------------

template <typename T>
Var<T> softmax_lastdim(Graph<T>& g, Var<T> a) {
    const auto& av = g.value(a);
    const int64_t rows = detail::row_count(av.shape);
    const int d = av.size(-1);
    Tensor<T> out(av.shape);
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* x = av.data.data() + r * d;
            T* y = out.data.data() + r * d;
            T m = x[0];
            for (int j = 1; j < d; ++j) m = std::max(m, x[j]);
            T z = T(0);
            for (int j = 0; j < d; ++j) {
                y[j] = std::exp(x[j] - m);
                z += y[j];
            }
            const T inv = T(1) / z;
            for (int j = 0; j < d; ++j) y[j] *= inv;
        }
    });
    return g.emit(std::move(out), {a},
                  [a, rows, d](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const auto& go = gr.grad(self);
                      const auto& y = gr.value(self);
                      auto& da = gr.grad(a);
                      parallel_for(rows, [&](int64_t r0, int64_t r1) {
                          for (int64_t r = r0; r < r1; ++r) {
                              const T* yr = y.data.data() + r * d;
                              const T* gr_ = go.data.data() + r * d;
                              T* dar = da.data.data() + r * d;
                              T dot = T(0);
                              for (int j = 0; j < d; ++j) dot += yr[j] * gr_[j];
                              for (int j = 0; j < d; ++j) dar[j] += yr[j] * (gr_[j] - dot);
                          }
                      });
                  },
                  "softmax");
}

// normalize over the last dim; gamma/beta have that dim
template <typename T>
Var<T> layer_norm(Graph<T>& g, Var<T> a, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
    const auto& av = g.value(a);
    const auto& gv = g.value(gamma);
    const auto& bv = g.value(beta);
    const int d = av.size(-1);
    if (gv.rank() != 1 || bv.rank() != 1 || gv.size(0) != d || bv.size(0) != d) {
        throw std::invalid_argument("layer_norm: affine shape mismatch for " + shape_str(av.shape));
    }
    const int64_t rows = detail::row_count(av.shape);
    Tensor<T> out(av.shape);
    Tensor<T> inv_std({static_cast<int>(rows)});
    Tensor<T> mean({static_cast<int>(rows)});
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* x = av.data.data() + r * d;
            T* y = out.data.data() + r * d;
            T mu = T(0);
            for (int j = 0; j < d; ++j) mu += x[j];
            mu /= static_cast<T>(d);
            T var = T(0);
            for (int j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
            var /= static_cast<T>(d);
            const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
            mean[r] = mu;
            inv_std[r] = is;
            for (int j = 0; j < d; ++j) y[j] = (x[j] - mu) * is * gv[j] + bv[j];
        }
    });
    auto mean_saved = std::make_shared<Tensor<T>>(std::move(mean));
    auto inv_saved = std::make_shared<Tensor<T>>(std::move(inv_std));
    return g.emit(std::move(out), {a, gamma, beta},
                  [a, gamma, beta, rows, d, mean_saved, inv_saved](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      const auto& av = gr.value(a);
                      const auto& gv = gr.value(gamma);
                      if (gr.requires_grad(a)) {
                          auto& da = gr.grad(a);
                          parallel_for(rows, [&](int64_t r0, int64_t r1) {
                              for (int64_t r = r0; r < r1; ++r) {
                                  const T* x = av.data.data() + r * d;
                                  const T* gor = go.data.data() + r * d;
                                  T* dar = da.data.data() + r * d;
                                  const T mu = (*mean_saved)[r];
                                  const T is = (*inv_saved)[r];
                                  T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                                  for (int j = 0; j < d; ++j) {
                                      const T xhat = (x[j] - mu) * is;
                                      const T dxhat = gor[j] * gv[j];
                                      sum_dxhat += dxhat;
                                      sum_dxhat_xhat += dxhat * xhat;
                                  }
                                  const T invd = T(1) / static_cast<T>(d);
                                  for (int j = 0; j < d; ++j) {
                                      const T xhat = (x[j] - mu) * is;
                                      const T dxhat = gor[j] * gv[j];
                                      dar[j] += is * (dxhat - invd * sum_dxhat - invd * xhat * sum_dxhat_xhat);
                                  }
                              }
                          });
                      }
                      if (gr.requires_grad(gamma)) {
                          auto& dg = gr.grad(gamma);
                          for (int64_t r = 0; r < rows; ++r) {
                              const T* x = av.data.data() + r * d;
                              const T* gor = go.data.data() + r * d;
                              const T mu = (*mean_saved)[r];
                              const T is = (*inv_saved)[r];
                              for (int j = 0; j < d; ++j) dg[j] += gor[j] * (x[j] - mu) * is;
                          }
                      }
                      if (gr.requires_grad(beta)) {
                          auto& db = gr.grad(beta);
                          for (int64_t r = 0; r < rows; ++r) {
                              const T* gor = go.data.data() + r * d;
                              for (int j = 0; j < d; ++j) db[j] += gor[j];
                          }
                      }
                  },
                  "layer_norm");
}

// x: [N, C, H, W]; per-(n, c) normalization over the spatial extent
template <typename T>
Var<T> instance_norm(Graph<T>& g, Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
    const auto& xv = g.value(x);
    if (xv.rank() != 4) throw std::invalid_argument("instance_norm: expected NCHW, got " + shape_str(xv.shape));
    const int n = xv.size(0), c = xv.size(1);
    const int64_t hw = static_cast<int64_t>(xv.size(2)) * xv.size(3);
    const auto& gv = g.value(gamma);
    const auto& bv = g.value(beta);
    if (gv.rank() != 1 || gv.size(0) != c || bv.rank() != 1 || bv.size(0) != c) {
        throw std::invalid_argument("instance_norm: affine shape mismatch for " + shape_str(xv.shape));
    }
    Tensor<T> out(xv.shape);
    Tensor<T> mean({n, c});
    Tensor<T> inv_std({n, c});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const T* src = xv.data.data() + i * hw;
            T* dst = out.data.data() + i * hw;
            T mu = T(0);
            for (int64_t j = 0; j < hw; ++j) mu += src[j];
            mu /= static_cast<T>(hw);
            T var = T(0);
            for (int64_t j = 0; j < hw; ++j) var += (src[j] - mu) * (src[j] - mu);
            var /= static_cast<T>(hw);
            const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
            const int ch = static_cast<int>(i % c);
            mean[i] = mu;
            inv_std[i] = is;
            for (int64_t j = 0; j < hw; ++j) dst[j] = (src[j] - mu) * is * gv[ch] + bv[ch];
        }
    });
    auto mean_saved = std::make_shared<Tensor<T>>(std::move(mean));
    auto inv_saved = std::make_shared<Tensor<T>>(std::move(inv_std));
    return g.emit(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, n, c, hw, mean_saved, inv_saved](Graph<T>& gr, Var<T> self) {
                      const auto& go = gr.grad(self);
                      const auto& xv = gr.value(x);
                      const auto& gv = gr.value(gamma);
                      if (gr.requires_grad(x)) {
                          auto& dx = gr.grad(x);
                          parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i0, int64_t i1) {
                              for (int64_t i = i0; i < i1; ++i) {
                                  const T* src = xv.data.data() + i * hw;
                                  const T* gor = go.data.data() + i * hw;
                                  T* dxr = dx.data.data() + i * hw;
                                  const int ch = static_cast<int>(i % c);
                                  const T mu = (*mean_saved)[i];
                                  const T is = (*inv_saved)[i];
                                  T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                                  for (int64_t j = 0; j < hw; ++j) {
                                      const T xhat = (src[j] - mu) * is;
                                      const T dxhat = gor[j] * gv[ch];
                                      sum_dxhat += dxhat;
                                      sum_dxhat_xhat += dxhat * xhat;
                                  }
                                  const T invhw = T(1) / static_cast<T>(hw);
                                  for (int64_t j = 0; j < hw; ++j) {
                                      const T xhat = (src[j] - mu) * is;
                                      const T dxhat = gor[j] * gv[ch];
                                      dxr[j] += is * (dxhat - invhw * sum_dxhat - invhw * xhat * sum_dxhat_xhat);
                                  }
                              }
                          });
                      }
                      if (gr.requires_grad(gamma)) {
                          auto& dg = gr.grad(gamma);
                          for (int64_t i = 0; i < static_cast<int64_t>(n) * c; ++i) {
                              const T* src = xv.data.data() + i * hw;
                              const T* gor = go.data.data() + i * hw;
                              const int ch = static_cast<int>(i % c);
                              const T mu = (*mean_saved)[i];
                              const T is = (*inv_saved)[i];
                              for (int64_t j = 0; j < hw; ++j) dg[ch] += gor[j] * (src[j] - mu) * is;
                          }
                      }
                      if (gr.requires_grad(beta)) {
                          auto& db = gr.grad(beta);
                          for (int64_t i = 0; i < static_cast<int64_t>(n) * c; ++i) {
                              const T* gor = go.data.data() + i * hw;
                              const int ch = static_cast<int>(i % c);
                              for (int64_t j = 0; j < hw; ++j) db[ch] += gor[j];
                          }
                      }
                  },
                  "instance_norm");
}

// ---------------------------------------------------------------------------
// embedding lookup
// ---------------------------------------------------------------------------

template <typename T>
Var<T> embedding_lookup(Graph<T>& g, Var<T> table, const std::vector<int>& ids) {
    const auto& tv = g.value(table);
    if (tv.rank() != 2) throw std::invalid_argument("embedding_lookup: table must be rank 2");
    const int v = tv.size(0), h = tv.size(1);
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) + " outside table of " +
                                        std::to_string(v) + " rows");
        }
    }
    Tensor<T> out({static_cast<int>(ids.size()), h});
    for (size_t r = 0; r < ids.size(); ++r) {
        std::memcpy(out.data.data() + r * h, tv.data.data() + static_cast<int64_t>(ids[r]) * h, sizeof(T) * h);
    }
    return g.emit(std::move(out), {table},
                  [table, ids, h](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(table)) return;
                      const auto& go = gr.grad(self);
                      auto& dt = gr.grad(table);
                      for (size_t r = 0; r < ids.size(); ++r) {
                          const T* src = go.data.data() + r * h;
                          T* dst = dt.data.data() + static_cast<int64_t>(ids[r]) * h;
                          for (int j = 0; j < h; ++j) dst[j] += src[j];
                      }
                  },
                  "embedding_lookup");
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(Graph<T>& g, Var<T> a) {
    const auto& av = g.value(a);
    T acc = T(0);
    for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
    return g.emit(Tensor<T>::scalar(acc), {a},
                  [a](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const T go = gr.grad(self)[0];
                      auto& da = gr.grad(a);
                      for (int64_t i = 0; i < da.numel(); ++i) da[i] += go;
                  },
                  "sum_all");
}

template <typename T>
Var<T> mean_all(Graph<T>& g, Var<T> a) {
    const auto& av = g.value(a);
    if (av.numel() == 0) throw std::invalid_argument("mean_all: empty input");
    T acc = T(0);
    for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
    const T inv = T(1) / static_cast<T>(av.numel());
    return g.emit(Tensor<T>::scalar(acc * inv), {a},
                  [a, inv](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(a)) return;
                      const T go = gr.grad(self)[0] * inv;
                      auto& da = gr.grad(a);
                      for (int64_t i = 0; i < da.numel(); ++i) da[i] += go;
                  },
                  "mean_all");
}

// per-row negative log-likelihood with a stable log-sum-exp
template <typename T>
Var<T> cross_entropy_rows(Graph<T>& g, Var<T> logits, const std::vector<int>& targets) {
    const auto& lv = g.value(logits);
    if (lv.rank() != 2 || lv.size(0) != static_cast<int>(targets.size())) {
        throw std::invalid_argument("cross_entropy_rows: logits " + shape_str(lv.shape) + " vs " +
                                    std::to_string(targets.size()) + " targets");
    }
    const int rows = lv.size(0), v = lv.size(1);
    for (int t : targets) {
        if (t < 0 || t >= v) throw std::invalid_argument("cross_entropy_rows: target id out of range");
    }
    Tensor<T> out({rows});
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* x = lv.data.data() + r * v;
            T m = x[0];
            for (int j = 1; j < v; ++j) m = std::max(m, x[j]);
            T z = T(0);
            for (int j = 0; j < v; ++j) z += std::exp(x[j] - m);
            out[r] = m + std::log(z) - x[targets[static_cast<size_t>(r)]];
        }
    });
    return g.emit(std::move(out), {logits},
                  [logits, targets, rows, v](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(logits)) return;
                      const auto& go = gr.grad(self);
                      const auto& lv = gr.value(logits);
                      auto& dl = gr.grad(logits);
                      parallel_for(rows, [&](int64_t r0, int64_t r1) {
                          for (int64_t r = r0; r < r1; ++r) {
                              const T* x = lv.data.data() + r * v;
                              T* d = dl.data.data() + r * v;
                              const T gor = go[r];
                              T m = x[0];
                              for (int j = 1; j < v; ++j) m = std::max(m, x[j]);
                              T z = T(0);
                              for (int j = 0; j < v; ++j) z += std::exp(x[j] - m);
                              const T invz = T(1) / z;
                              for (int j = 0; j < v; ++j) d[j] += gor * std::exp(x[j] - m) * invz;
                              d[targets[static_cast<size_t>(r)]] -= gor;
                          }
                      });
                  },
                  "cross_entropy_rows");
}

// per-row mean squared error against a constant target
template <typename T>
Var<T> mse_rows(Graph<T>& g, Var<T> pred, const Tensor<T>& target) {
    const auto& pv = g.value(pred);
    check_same_shape(pv.shape, target.shape, "mse_rows");
    if (pv.rank() != 2) throw std::invalid_argument("mse_rows: expected rank-2 input");
    const int rows = pv.size(0), d = pv.size(1);
    Tensor<T> out({rows});
    for (int r = 0; r < rows; ++r) {
        const T* p = pv.data.data() + static_cast<int64_t>(r) * d;
        const T* t = target.data.data() + static_cast<int64_t>(r) * d;
        T acc = T(0);
        for (int j = 0; j < d; ++j) acc += (p[j] - t[j]) * (p[j] - t[j]);
        out[r] = acc / static_cast<T>(d);
    }
    auto target_saved = std::make_shared<Tensor<T>>(target);
    return g.emit(std::move(out), {pred},
                  [pred, target_saved, rows, d](Graph<T>& gr, Var<T> self) {
                      if (!gr.requires_grad(pred)) return;
                      const auto& go = gr.grad(self);
                      const auto& pv = gr.value(pred);
                      auto& dp = gr.grad(pred);
                      const T c = T(2) / static_cast<T>(d);
                      for (int r = 0; r < rows; ++r) {
                          const T* p = pv.data.data() + static_cast<int64_t>(r) * d;
                          const T* t = target_saved->data.data() + static_cast<int64_t>(r) * d;
                          T* dr = dp.data.data() + static_cast<int64_t>(r) * d;
                          const T gor = go[r];
                          for (int j = 0; j < d; ++j) dr[j] += gor * c * (p[j] - t[j]);
                      }
                  },
                  "mse_rows");
}

}  // namespace jat::ops

#endif  // JAT_OPS_HPP_
