#ifndef JAT_TRANSFORMER_HPP_
#define JAT_TRANSFORMER_HPP_

#include <string>

#include "jat/embedding.hpp"
#include "jat/graph.hpp"
#include "jat/ops.hpp"
#include "jat/ops_nn.hpp"

namespace jat {

// Causal transformer with attention windows alternating per layer parity:
// even layers attend to the full causal prefix (up to the global window,
// which packing enforces as the maximum sequence length), odd layers to a
// trailing local window. Pre-norm residual blocks, learned absolute
// position embeddings added at the input.
namespace core {

template <typename T>
void register_params(ParamStore<T>& params, const ModelConfig& cfg, Rng& rng) {
    {
        Tensor<T> pos({cfg.global_window, cfg.hidden});
        for (auto& v : pos.data) v = static_cast<T>(rng.gauss() * cfg.init_std);
        params.add("core.pos_table", std::move(pos));
    }
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "core.layer" + std::to_string(l);
        init_norm(params, p + ".ln1", cfg.hidden);
        init_linear(params, rng, p + ".attn.qkv", cfg.hidden, 3 * cfg.hidden, cfg.init_std);
        init_linear(params, rng, p + ".attn.out", cfg.hidden, cfg.hidden, cfg.init_std);
        init_norm(params, p + ".ln2", cfg.hidden);
        init_linear(params, rng, p + ".ffn.in", cfg.hidden, cfg.intermediate, cfg.init_std);
        init_linear(params, rng, p + ".ffn.out", cfg.intermediate, cfg.hidden, cfg.init_std);
    }
    init_norm(params, "core.ln_f", cfg.hidden);
}

// analytic parameter count for the core (position table plus layers plus
// the final norm), used to cross-check registration
inline int64_t parameter_count(const ModelConfig& cfg) {
    const int64_t h = cfg.hidden, inter = cfg.intermediate;
    const int64_t per_layer = (2 * h) +                  // ln1
                              (h * 3 * h + 3 * h) +      // qkv
                              (h * h + h) +              // attention out
                              (2 * h) +                  // ln2
                              (h * inter + inter) +      // ffn in
                              (inter * h + h);           // ffn out
    return static_cast<int64_t>(cfg.global_window) * h + cfg.layers * per_layer + 2 * h;
}

inline int layer_window(const ModelConfig& cfg, int layer) {
    // parity starts global: window 0 means the full causal prefix
    return layer % 2 == 0 ? 0 : cfg.local_window;
}

// x: [B, L, H] -> [B, L, H]
template <typename T>
ops::Var<T> forward(Graph<T>& g, const ModelConfig& cfg, ops::Var<T> x) {
    const auto& shape = g.value(x).shape;
    if (shape.size() != 3 || shape[2] != cfg.hidden) {
        throw std::invalid_argument("core: expected [B, L, H], got " + shape_str(shape));
    }
    const int b = shape[0], l = shape[1], h = cfg.hidden;
    if (l > cfg.global_window) {
        throw std::invalid_argument("core: sequence length " + std::to_string(l) + " exceeds the global window " +
                                    std::to_string(cfg.global_window) + "; packing must prevent this");
    }

    // learned absolute positions, repeated across the batch
    std::vector<int> pos_ids(static_cast<size_t>(b) * l);
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < l; ++j) pos_ids[static_cast<size_t>(i) * l + j] = j;
    }
    auto pos = ops::embedding_lookup(g, g.param("core.pos_table"), pos_ids);  // [B*L, H]
    auto flat = ops::add(g, ops::reshape(g, x, {b * l, h}), pos);

    for (int layer = 0; layer < cfg.layers; ++layer) {
        const std::string p = "core.layer" + std::to_string(layer);
        auto normed = ops::layer_norm(g, flat, g.param(p + ".ln1.gamma"), g.param(p + ".ln1.beta"), cfg.norm_eps);
        auto qkv = ops::add_bias(g, ops::matmul(g, normed, g.param(p + ".attn.qkv.weight")),
                                 g.param(p + ".attn.qkv.bias"));
        auto att = ops::attention_core(g, ops::reshape(g, qkv, {b, l, 3 * h}), cfg.heads, true,
                                       layer_window(cfg, layer));
        auto proj = ops::add_bias(g, ops::matmul(g, ops::reshape(g, att, {b * l, h}), g.param(p + ".attn.out.weight")),
                                  g.param(p + ".attn.out.bias"));
        flat = ops::add(g, flat, proj);

        auto normed2 = ops::layer_norm(g, flat, g.param(p + ".ln2.gamma"), g.param(p + ".ln2.beta"), cfg.norm_eps);
        auto inner = ops::gelu(
            g, ops::add_bias(g, ops::matmul(g, normed2, g.param(p + ".ffn.in.weight")), g.param(p + ".ffn.in.bias")));
        auto outer = ops::add_bias(g, ops::matmul(g, inner, g.param(p + ".ffn.out.weight")),
                                   g.param(p + ".ffn.out.bias"));
        flat = ops::add(g, flat, outer);
    }
    auto final_norm = ops::layer_norm(g, flat, g.param("core.ln_f.gamma"), g.param("core.ln_f.beta"), cfg.norm_eps);
    return ops::reshape(g, final_norm, {b, l, h});
}

}  // namespace core

}  // namespace jat

#endif  // JAT_TRANSFORMER_HPP_
