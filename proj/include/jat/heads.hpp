#ifndef JAT_HEADS_HPP_
#define JAT_HEADS_HPP_

#include <optional>
#include <string>

#include "jat/embedding.hpp"
#include "jat/graph.hpp"
#include "jat/ops.hpp"
#include "jat/ops_nn.hpp"

namespace jat {

// mixing weight between observation and action prediction, plus the
// per-task loss weight applied to the whole decision-task loss
struct LossSpec {
    double kappa = 0.0;
    double loss_weight = 1.0;

    void validate() const {
        if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("loss: kappa must lie in [0,1]");
        if (!(loss_weight > 0.0) || !std::isfinite(loss_weight)) {
            throw std::invalid_argument("loss: loss_weight must be finite and positive");
        }
    }
};

namespace heads {

template <typename T>
void register_params(ParamStore<T>& params, const ModelConfig& cfg, Rng& rng) {
    // continuous prediction: one linear to the padded length
    init_linear(params, rng, "head.continuous", cfg.hidden, kMaxContinuous, cfg.init_std);
    // one projection for text tokens and environment-discrete values alike
    init_linear(params, rng, "head.discrete", cfg.hidden, cfg.table_rows(), cfg.init_std);
    // image reconstruction: linear to the conv grid, then transposed convs
    // mirroring the encoder shapes back to 4x84x84
    init_linear(params, rng, "head.image.in", cfg.hidden, cfg.conv_flat(), cfg.init_std);
    const int chans[4] = {cfg.conv_channels[2], cfg.conv_channels[1], cfg.conv_channels[0],
                          ModelConfig::kImageChannels};
    for (int b = 0; b < 3; ++b) {
        const std::string p = "head.image.block" + std::to_string(b);
        const int ic = chans[b], oc = chans[b + 1];
        Tensor<T> w({ic, oc, 3, 3});
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(ic) * 9.0);
        for (auto& v : w.data) v = static_cast<T>(rng.gauss() * std_dev);
        params.add(p + ".tconv.weight", std::move(w));
        params.add(p + ".tconv.bias", Tensor<T>({oc}));
        if (b < 2) init_norm(params, p + ".norm", oc);
    }
    // discrete-observation prediction: expand to per-symbol slots, lift each
    // back to H, then score through the shared discrete projection
    init_linear_fan_in(params, rng, "head.obs_expand", cfg.hidden, cfg.max_discrete_obs * cfg.reduced_width());
    init_linear_fan_in(params, rng, "head.obs_lift", cfg.reduced_width(), cfg.hidden);
}

// [N, H] -> [N, 377]
template <typename T>
ops::Var<T> decode_continuous(Graph<T>& g, ops::Var<T> rows) {
    return ops::add_bias(g, ops::matmul(g, rows, g.param("head.continuous.weight")),
                         g.param("head.continuous.bias"));
}

// [N, H] -> full-vocabulary logits [N, text_vocab + K]
template <typename T>
ops::Var<T> decode_discrete(Graph<T>& g, ops::Var<T> rows) {
    return ops::add_bias(g, ops::matmul(g, rows, g.param("head.discrete.weight")), g.param("head.discrete.bias"));
}

// [N, H] -> [N, 4, 84, 84]
template <typename T>
ops::Var<T> decode_image(Graph<T>& g, const ModelConfig& cfg, ops::Var<T> rows) {
    const int n = g.value(rows).size(0);
    auto x = ops::add_bias(g, ops::matmul(g, rows, g.param("head.image.in.weight")), g.param("head.image.in.bias"));
    auto grid = ops::reshape(g, x, {n, cfg.conv_channels[2], cfg.conv_out_side(), cfg.conv_out_side()});
    // 11 -> 21 -> 42 -> 84
    const int out_pads[3] = {0, 1, 1};
    for (int b = 0; b < 3; ++b) {
        const std::string p = "head.image.block" + std::to_string(b);
        grid = ops::conv2d_transposed(g, grid, g.param(p + ".tconv.weight"), g.param(p + ".tconv.bias"), 2, 1,
                                      out_pads[b]);
        if (b < 2) {
            grid = ops::instance_norm(g, grid, g.param(p + ".norm.gamma"), g.param(p + ".norm.beta"), cfg.norm_eps);
            grid = ops::gelu(g, grid);
        }
    }
    return grid;
}

// [N, H] -> per-symbol H rows [N * n_symbols, H], ready for decode_discrete
template <typename T>
ops::Var<T> decode_symbol_rows(Graph<T>& g, const ModelConfig& cfg, ops::Var<T> rows, int n_symbols) {
    if (n_symbols < 1 || n_symbols > cfg.max_discrete_obs) {
        throw std::invalid_argument("decode_symbol_rows: symbol count " + std::to_string(n_symbols) +
                                    " outside [1, " + std::to_string(cfg.max_discrete_obs) + "]");
    }
    const int n = g.value(rows).size(0);
    const int rw = cfg.reduced_width();
    auto expanded = ops::add_bias(g, ops::matmul(g, rows, g.param("head.obs_expand.weight")),
                                  g.param("head.obs_expand.bias"));  // [N, n_max*rw]
    auto grid = ops::reshape(g, expanded, {n * cfg.max_discrete_obs, rw});
    std::vector<int> keep;
    keep.reserve(static_cast<size_t>(n) * n_symbols);
    for (int r = 0; r < n; ++r) {
        for (int s = 0; s < n_symbols; ++s) keep.push_back(r * cfg.max_discrete_obs + s);
    }
    auto used = ops::gather_rows(g, grid, keep);  // [N*n_symbols, rw]
    return ops::add_bias(g, ops::matmul(g, used, g.param("head.obs_lift.weight")), g.param("head.obs_lift.bias"));
}

// loss_weight * (kappa * L_obs + (1 - kappa) * L_act); pass a null obs loss
// when kappa is 0 and no observation decoding was done
template <typename T>
ops::Var<T> kappa_mix(Graph<T>& g, std::optional<ops::Var<T>> l_obs, ops::Var<T> l_act, const LossSpec& spec) {
    spec.validate();
    auto act_part = ops::scale(g, l_act, (1.0 - spec.kappa) * spec.loss_weight);
    if (!l_obs.has_value()) {
        if (spec.kappa != 0.0) throw std::invalid_argument("loss: kappa > 0 requires an observation loss");
        return act_part;
    }
    return ops::add(g, ops::scale(g, *l_obs, spec.kappa * spec.loss_weight), act_part);
}

// greedy pick restricted to [lo, hi); ties resolve to the lowest id
template <typename T>
int restricted_argmax(const Tensor<T>& logits_row, int lo, int hi) {
    if (logits_row.rank() != 1 || lo < 0 || hi > logits_row.size(0) || lo >= hi) {
        throw std::invalid_argument("restricted_argmax: bad range");
    }
    int best = lo;
    for (int j = lo + 1; j < hi; ++j) {
        if (logits_row[j] > logits_row[best]) best = j;
    }
    return best;
}

}  // namespace heads

}  // namespace jat

#endif  // JAT_HEADS_HPP_
