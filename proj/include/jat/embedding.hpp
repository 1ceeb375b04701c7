#ifndef JAT_EMBEDDING_HPP_
#define JAT_EMBEDDING_HPP_

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "jat/graph.hpp"
#include "jat/ops.hpp"
#include "jat/ops_nn.hpp"
#include "jat/tensor.hpp"
#include "jat/trajectory.hpp"

namespace jat {

// ---------------------------------------------------------------------------
// model configuration
// ---------------------------------------------------------------------------
struct ModelConfig {
    int hidden = 768;
    int layers = 12;
    int heads = 12;
    int intermediate = 8192;
    int global_window = 512;
    int local_window = 256;
    int text_vocab = 50257;
    int env_region = 64;       // rows after the text region in the shared table
    int max_discrete_obs = 64; // discrete observations are padded to this many symbols
    std::array<int, 3> conv_channels = {32, 64, 128};
    double norm_eps = 1e-5;
    double init_std = 0.02;

    static constexpr int kImageSide = 84;
    static constexpr int kImageChannels = 4;
    static constexpr int kPatchSide = 224;
    static constexpr int kPatch = 16;

    int reduced_width() const { return hidden / 50; }  // per-symbol width in the discrete path
    int table_rows() const { return text_vocab + env_region; }
    int conv_out_side() const { return 11; }  // 84 -> 42 -> 21 -> 11 at stride 2
    int conv_flat() const { return conv_channels[2] * conv_out_side() * conv_out_side(); }
    int patch_dim() const { return 3 * kPatch * kPatch; }

    void validate() const {
        if (hidden < 50) throw std::invalid_argument("config: hidden size must be at least 50");
        if (heads < 1 || hidden % heads != 0) {
            throw std::invalid_argument("config: hidden " + std::to_string(hidden) + " not divisible by " +
                                        std::to_string(heads) + " heads");
        }
        if (local_window > global_window) throw std::invalid_argument("config: local window exceeds global window");
        if (global_window < 2 || global_window % 2 != 0) {
            throw std::invalid_argument("config: global window must be even and >= 2");
        }
        if (layers < 1 || intermediate < 1 || text_vocab < 1 || env_region < 0) {
            throw std::invalid_argument("config: sizes must be positive");
        }
        if (max_discrete_obs < 1) throw std::invalid_argument("config: max_discrete_obs must be positive");
    }

    // values from the reference description
    static ModelConfig paper_default() { return ModelConfig{}; }

    // small preset that trains in minutes on a CPU
    static ModelConfig desk() {
        ModelConfig c;
        c.hidden = 64;
        c.layers = 4;
        c.heads = 4;
        c.intermediate = 256;
        c.global_window = 128;
        c.local_window = 64;
        c.text_vocab = 512;
        c.env_region = 64;
        c.max_discrete_obs = 64;
        c.conv_channels = {4, 8, 16};
        return c;
    }
};

// ---------------------------------------------------------------------------
// image preprocessing (outside the autodiff graph)
// ---------------------------------------------------------------------------
namespace imageops {

// Catmull-Rom cubic (a = -0.5)
inline double cubic_weight(double t) {
    t = std::abs(t);
    if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

// separable bicubic resize with half-pixel centers and clamped edges
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, int out_h, int out_w) {
    if (img.rank() != 3) throw std::invalid_argument("bicubic_resize: expected CHW, got " + shape_str(img.shape));
    const int c = img.size(0), in_h = img.size(1), in_w = img.size(2);

    auto resize_axis = [](const Tensor<T>& src, int axis_len, int out_len, bool horizontal) {
        // horizontal: resize last dim; vertical: resize middle dim
        const int c = src.size(0), h = src.size(1), w = src.size(2);
        Shape out_shape = horizontal ? Shape{c, h, out_len} : Shape{c, out_len, w};
        Tensor<T> dst(out_shape);
        const double ratio = static_cast<double>(axis_len) / out_len;
        std::vector<std::array<int, 4>> taps(static_cast<size_t>(out_len));
        std::vector<std::array<double, 4>> weights(static_cast<size_t>(out_len));
        for (int o = 0; o < out_len; ++o) {
            const double src_x = (o + 0.5) * ratio - 0.5;
            const int base = static_cast<int>(std::floor(src_x));
            const double frac = src_x - base;
            for (int k = 0; k < 4; ++k) {
                taps[static_cast<size_t>(o)][static_cast<size_t>(k)] =
                    std::clamp(base - 1 + k, 0, axis_len - 1);
                weights[static_cast<size_t>(o)][static_cast<size_t>(k)] = cubic_weight(frac + 1.0 - k);
            }
        }
        if (horizontal) {
            for (int ch = 0; ch < c; ++ch) {
                for (int y = 0; y < h; ++y) {
                    const T* row = src.data.data() + (static_cast<int64_t>(ch) * h + y) * w;
                    T* orow = dst.data.data() + (static_cast<int64_t>(ch) * h + y) * out_len;
                    for (int o = 0; o < out_len; ++o) {
                        double acc = 0.0;
                        for (int k = 0; k < 4; ++k) {
                            acc += weights[static_cast<size_t>(o)][static_cast<size_t>(k)] *
                                   static_cast<double>(row[taps[static_cast<size_t>(o)][static_cast<size_t>(k)]]);
                        }
                        orow[o] = static_cast<T>(acc);
                    }
                }
            }
        } else {
            for (int ch = 0; ch < c; ++ch) {
                for (int o = 0; o < out_len; ++o) {
                    T* orow = dst.data.data() + (static_cast<int64_t>(ch) * out_len + o) * w;
                    const auto& tp = taps[static_cast<size_t>(o)];
                    const auto& wt = weights[static_cast<size_t>(o)];
                    for (int x = 0; x < w; ++x) {
                        double acc = 0.0;
                        for (int k = 0; k < 4; ++k) {
                            acc += wt[static_cast<size_t>(k)] *
                                   static_cast<double>(
                                       src.data.data()[(static_cast<int64_t>(ch) * h + tp[static_cast<size_t>(k)]) * w + x]);
                        }
                        orow[x] = static_cast<T>(acc);
                    }
                }
            }
        }
        return dst;
    };

    Tensor<T> tmp = resize_axis(img, in_w, out_w, true);
    return resize_axis(tmp, in_h, out_h, false);
}

// observation path: resize to 84x84, map [0,1] to [-1,1], zero-pad to 4 channels
template <typename T>
Tensor<T> preprocess_observation_image(const Tensor<T>& img) {
    if (img.rank() != 3 || (img.size(0) != 1 && img.size(0) != 3 && img.size(0) != 4)) {
        throw std::invalid_argument("image observation must be CHW with 1, 3 or 4 channels, got " +
                                    shape_str(img.shape));
    }
    constexpr int side = ModelConfig::kImageSide;
    Tensor<T> resized = bicubic_resize(img, side, side);
    Tensor<T> out({ModelConfig::kImageChannels, side, side});
    const int64_t plane = static_cast<int64_t>(side) * side;
    for (int c = 0; c < resized.size(0); ++c) {
        for (int64_t i = 0; i < plane; ++i) {
            out[c * plane + i] = static_cast<T>(2) * resized[c * plane + i] - static_cast<T>(1);
        }
    }
    return out;
}

// text-centric path: central-square crop, resize to 224, [-1,1], 3 channels
template <typename T>
Tensor<T> preprocess_patch_image(const Tensor<T>& img) {
    if (img.rank() != 3 || (img.size(0) != 1 && img.size(0) != 3)) {
        throw std::invalid_argument("patch image must be CHW with 1 or 3 channels, got " + shape_str(img.shape));
    }
    const int c = img.size(0), h = img.size(1), w = img.size(2);
    if (h < ModelConfig::kPatch || w < ModelConfig::kPatch) {
        throw std::invalid_argument("patch image too small: " + shape_str(img.shape));
    }
    const int side = std::min(h, w);
    const int y0 = (h - side) / 2, x0 = (w - side) / 2;
    Tensor<T> cropped({c, side, side});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < side; ++y) {
            std::memcpy(cropped.data.data() + (static_cast<int64_t>(ch) * side + y) * side,
                        img.data.data() + ((static_cast<int64_t>(ch) * h) + y0 + y) * w + x0,
                        sizeof(T) * static_cast<size_t>(side));
        }
    }
    Tensor<T> resized = bicubic_resize(cropped, ModelConfig::kPatchSide, ModelConfig::kPatchSide);
    Tensor<T> out({3, ModelConfig::kPatchSide, ModelConfig::kPatchSide});
    const int64_t plane = static_cast<int64_t>(ModelConfig::kPatchSide) * ModelConfig::kPatchSide;
    for (int ch = 0; ch < 3; ++ch) {
        const int src_ch = c == 1 ? 0 : ch;  // grayscale replicates
        for (int64_t i = 0; i < plane; ++i) {
            out[ch * plane + i] = static_cast<T>(2) * resized[src_ch * plane + i] - static_cast<T>(1);
        }
    }
    return out;
}

}  // namespace imageops

// ---------------------------------------------------------------------------
// parameter registration. One token table serves text, discrete observation
// symbols and discrete actions; one 377-row linear map serves continuous
// observations and continuous actions. Sharing is by parameter name, which
// the graph resolves to a single node.
// ---------------------------------------------------------------------------
namespace param_names {
inline constexpr const char* kTokenTable = "shared.token_table";
inline constexpr const char* kContinuousW = "shared.continuous_in.weight";
inline constexpr const char* kContinuousB = "shared.continuous_in.bias";
}  // namespace param_names

template <typename T>
void init_linear(ParamStore<T>& params, Rng& rng, const std::string& prefix, int in, int out, double std_dev) {
    Tensor<T> w({in, out});
    for (auto& v : w.data) v = static_cast<T>(rng.gauss() * std_dev);
    params.add(prefix + ".weight", std::move(w));
    params.add(prefix + ".bias", Tensor<T>({out}));
}

// fan-in scaling where the incoming activations are themselves at embedding
// scale; a flat 0.02 there shrinks the discrete path to numerical silence
template <typename T>
void init_linear_fan_in(ParamStore<T>& params, Rng& rng, const std::string& prefix, int in, int out) {
    init_linear(params, rng, prefix, in, out, 1.0 / std::sqrt(static_cast<double>(in)));
}

template <typename T>
void init_norm(ParamStore<T>& params, const std::string& prefix, int width) {
    params.add(prefix + ".gamma", Tensor<T>::full({width}, T(1)));
    params.add(prefix + ".beta", Tensor<T>({width}));
}

template <typename T>
void register_encoder_params(ParamStore<T>& params, const ModelConfig& cfg, Rng& rng) {
    // shared token lookup table and shared continuous map
    {
        Tensor<T> table({cfg.table_rows(), cfg.hidden});
        for (auto& v : table.data) v = static_cast<T>(rng.gauss() * cfg.init_std);
        params.add(param_names::kTokenTable, std::move(table));
    }
    init_linear(params, rng, "shared.continuous_in", kMaxContinuous, cfg.hidden, cfg.init_std);
    params.at("shared.continuous_in.bias").value = Tensor<T>({cfg.hidden});

    // discrete-observation path: per-symbol reduction then flatten to H-1
    init_linear_fan_in(params, rng, "enc.discrete.reduce", cfg.hidden, cfg.reduced_width());
    init_linear_fan_in(params, rng, "enc.discrete.flat", cfg.max_discrete_obs * cfg.reduced_width(), cfg.hidden - 1);

    // image-observation encoder: three conv blocks then a linear to H
    int in_ch = ModelConfig::kImageChannels;
    for (int b = 0; b < 3; ++b) {
        const int out_ch = cfg.conv_channels[static_cast<size_t>(b)];
        const std::string p = "enc.image.block" + std::to_string(b);
        Tensor<T> w({out_ch, in_ch, 3, 3});
        const double fan_in_std = 1.0 / std::sqrt(static_cast<double>(in_ch) * 9.0);
        for (auto& v : w.data) v = static_cast<T>(rng.gauss() * fan_in_std);
        params.add(p + ".conv.weight", std::move(w));
        params.add(p + ".conv.bias", Tensor<T>({out_ch}));
        init_norm(params, p + ".norm", out_ch);
        init_linear(params, rng, p + ".attn.qkv", out_ch, 3 * out_ch, cfg.init_std);
        init_linear(params, rng, p + ".attn.out", out_ch, out_ch, cfg.init_std);
        in_ch = out_ch;
    }
    init_linear(params, rng, "enc.image.flat", cfg.conv_flat(), cfg.hidden, cfg.init_std);

    // ViT patch projection (independent parameters)
    init_linear(params, rng, "enc.patch", cfg.patch_dim(), cfg.hidden, cfg.init_std);
}

// ---------------------------------------------------------------------------
// batched encoders (graph functions)
// ---------------------------------------------------------------------------
namespace encode {

using ops::Var;

// rows of [value .. || reward || zero pad] ready for the shared linear map
template <typename T>
Tensor<T> augment_continuous(const std::vector<float>& values, float reward, bool append_reward) {
    if (static_cast<int>(values.size()) > (append_reward ? kMaxContinuousObs : kMaxContinuous)) {
        throw std::invalid_argument("continuous input of length " + std::to_string(values.size()) +
                                    " exceeds the padded bound");
    }
    Tensor<T> row({1, kMaxContinuous});
    for (size_t i = 0; i < values.size(); ++i) row[static_cast<int64_t>(i)] = static_cast<T>(values[i]);
    if (append_reward) row[static_cast<int64_t>(values.size())] = static_cast<T>(reward);
    return row;
}

// [N, 377] -> [N, H] through the shared map
template <typename T>
Var<T> continuous_rows(Graph<T>& g, Var<T> rows) {
    return ops::add_bias(g, ops::matmul(g, rows, g.param(param_names::kContinuousW)),
                         g.param(param_names::kContinuousB));
}

// Discrete observations: ids are already global (mission tokens in the text
// region, symbols offset into the task region), padded with -1 to n_max per
// row. Lookup, reduce to floor(H/50), flatten, project to H-1, then append
// each row's reward as the final coordinate.
template <typename T>
Var<T> discrete_observation_rows(Graph<T>& g, const ModelConfig& cfg, const std::vector<std::vector<int>>& ids,
                                 const std::vector<float>& rewards) {
    const int n = static_cast<int>(ids.size());
    const int n_max = cfg.max_discrete_obs;
    const int rw = cfg.reduced_width();
    if (rewards.size() != ids.size()) throw std::invalid_argument("discrete rows: rewards/ids length mismatch");

    std::vector<int> flat_ids;
    std::vector<int> scatter_to;  // destination row in the [n * n_max] grid
    for (int r = 0; r < n; ++r) {
        if (static_cast<int>(ids[static_cast<size_t>(r)].size()) > n_max) {
            throw std::invalid_argument("discrete observation of " +
                                        std::to_string(ids[static_cast<size_t>(r)].size()) +
                                        " symbols exceeds max_discrete_obs " + std::to_string(n_max));
        }
        for (size_t s = 0; s < ids[static_cast<size_t>(r)].size(); ++s) {
            const int id = ids[static_cast<size_t>(r)][s];
            if (id < 0) continue;  // padding
            flat_ids.push_back(id);
            scatter_to.push_back(r * n_max + static_cast<int>(s));
        }
    }
    auto looked = ops::embedding_lookup(g, g.param(param_names::kTokenTable), flat_ids);  // [R, H]
    auto reduced = ops::add_bias(g, ops::matmul(g, looked, g.param("enc.discrete.reduce.weight")),
                                 g.param("enc.discrete.reduce.bias"));  // [R, rw]
    auto grid = ops::scatter_rows(g, reduced, scatter_to, n * n_max);   // [n*n_max, rw]
    auto flat = ops::reshape(g, grid, {n, n_max * rw});
    auto body = ops::add_bias(g, ops::matmul(g, flat, g.param("enc.discrete.flat.weight")),
                              g.param("enc.discrete.flat.bias"));  // [n, H-1]
    Tensor<T> reward_col({n, 1});
    for (int r = 0; r < n; ++r) reward_col[r] = static_cast<T>(rewards[static_cast<size_t>(r)]);
    return ops::concat(g, 1, {body, g.constant(std::move(reward_col))});  // [n, H]
}

// preprocessed images [N, 4, 84, 84] -> [N, H]
template <typename T>
Var<T> image_observation_rows(Graph<T>& g, const ModelConfig& cfg, Var<T> images) {
    auto x = images;
    const auto& in_shape = g.value(x).shape;
    if (in_shape.size() != 4 || in_shape[1] != ModelConfig::kImageChannels ||
        in_shape[2] != ModelConfig::kImageSide || in_shape[3] != ModelConfig::kImageSide) {
        throw std::invalid_argument("image encoder expects [N,4,84,84], got " + shape_str(in_shape));
    }
    const int n = in_shape[0];
    for (int b = 0; b < 3; ++b) {
        const std::string p = "enc.image.block" + std::to_string(b);
        const int ch = cfg.conv_channels[static_cast<size_t>(b)];
        x = ops::conv2d(g, x, g.param(p + ".conv.weight"), g.param(p + ".conv.bias"), 2, 1);
        x = ops::instance_norm(g, x, g.param(p + ".norm.gamma"), g.param(p + ".norm.beta"), cfg.norm_eps);
        // single-head self-attention over spatial positions with residual
        const auto& xs = g.value(x).shape;
        const int side = xs[2];
        auto tokens = ops::reshape(g, x, {n, ch, side * side});
        // [N, C, P] -> [N, P, C] via per-image slices is wasteful; transpose
        // through patches: treat each spatial position as a row
        auto flat = ops::transpose_last2(g, tokens);  // [N, P, C]
        auto rows = ops::reshape(g, flat, {n * side * side, ch});
        auto qkv = ops::add_bias(g, ops::matmul(g, rows, g.param(p + ".attn.qkv.weight")),
                                 g.param(p + ".attn.qkv.bias"));
        auto att = ops::attention_core(g, ops::reshape(g, qkv, {n, side * side, 3 * ch}), 1, false, 0);
        auto proj = ops::add_bias(g, ops::matmul(g, ops::reshape(g, att, {n * side * side, ch}),
                                                 g.param(p + ".attn.out.weight")),
                                  g.param(p + ".attn.out.bias"));
        auto resid = ops::add(g, rows, proj);
        x = ops::transpose_last2(g, ops::reshape(g, resid, {n, side * side, ch}));  // [N, C, P]
        x = ops::reshape(g, x, {n, ch, side, side});
    }
    auto flat = ops::reshape(g, x, {n, cfg.conv_flat()});
    return ops::add_bias(g, ops::matmul(g, flat, g.param("enc.image.flat.weight")), g.param("enc.image.flat.bias"));
}

// token/action lookups: [N] global ids -> [N, H]
template <typename T>
Var<T> table_rows(Graph<T>& g, const std::vector<int>& global_ids) {
    return ops::embedding_lookup(g, g.param(param_names::kTokenTable), global_ids);
}

// preprocessed patch images [N, 3, 224, 224] -> [N*196, H], image-major
template <typename T>
Var<T> patch_rows(Graph<T>& g, const ModelConfig& cfg, Var<T> images) {
    auto patches = ops::image_to_patches(g, images, ModelConfig::kPatch);  // [N*196, 768]
    (void)cfg;
    return ops::add_bias(g, ops::matmul(g, patches, g.param("enc.patch.weight")), g.param("enc.patch.bias"));
}

}  // namespace encode

}  // namespace jat

#endif  // JAT_EMBEDDING_HPP_
