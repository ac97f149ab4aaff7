#include "mmf/layers.hpp"

#include <cmath>

#include "mmf/error.hpp"

namespace mmf {

namespace {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out,
                      std::vector<std::size_t> shape, RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

grad::Value apply_activation(const grad::Value& x, Activation act) {
    return act == Activation::relu ? grad::relu(x) : x;
}

// Channel mixing z[N,M,Cin] x w[Cin,Cout] done as a flat matmul.
grad::Value channel_mix(const grad::Value& z, const grad::Value& w, std::size_t n,
                        std::size_t m) {
    auto flat = grad::reshape(z, {n * m, w->value.dim(0)});
    return grad::reshape(grad::matmul(flat, w), {n, m, w->value.dim(1)});
}

grad::Value exml_forward_as(const ExchangeableLayer& layer, const grad::Value& z,
                            const Tensor& mask, Activation act) {
    require(z->value.rank() == 3, ErrorCode::dimension,
            "exml_forward: z must be rank 3, got " + shape_string(z->value));
    require(z->value.dim(2) == layer.c_in(), ErrorCode::dimension,
            "exml_forward: channel count " + std::to_string(z->value.dim(2)) +
                " does not match layer input " + std::to_string(layer.c_in()));
    const std::size_t n = z->value.dim(0), m = z->value.dim(1);

    auto elem = grad::matmul(grad::reshape(grad::mask_mul(z, mask), {n * m, layer.c_in()}),
                             layer.w[0]);
    auto t1 = grad::reshape(elem, {n, m, layer.c_out()});
    auto col_avg = grad::masked_reduce(z, mask, grad::ReduceAxis::rows);
    auto t2 = grad::broadcast(grad::matmul(col_avg, layer.w[1]), grad::ReduceAxis::rows, n, m);
    auto row_avg = grad::masked_reduce(z, mask, grad::ReduceAxis::cols);
    auto t3 = grad::broadcast(grad::matmul(row_avg, layer.w[2]), grad::ReduceAxis::cols, n, m);
    auto all_avg = grad::reshape(grad::masked_reduce(z, mask, grad::ReduceAxis::all),
                                 {std::size_t{1}, layer.c_in()});
    auto t4 = grad::broadcast(grad::reshape(grad::matmul(all_avg, layer.w[3]),
                                            {layer.c_out()}),
                              grad::ReduceAxis::all, n, m);
    auto bias = grad::broadcast(layer.bias, grad::ReduceAxis::all, n, m);
    auto pre = grad::add(grad::add(grad::add(t1, t2), grad::add(t3, t4)), bias);
    return apply_activation(pre, act);
}

}  // namespace

ExchangeableLayer make_exml_layer(std::size_t c_in, std::size_t c_out, Activation activation,
                                  RngStream& rng) {
    require(c_in > 0 && c_out > 0, ErrorCode::config, "exml layer: channel counts must be positive");
    ExchangeableLayer layer;
    for (auto& w : layer.w) {
        w = grad::parameter(glorot_uniform(c_in, c_out, {c_in, c_out}, rng));
    }
    layer.bias = grad::parameter(Tensor({c_out}));
    layer.activation = activation;
    return layer;
}

std::vector<ExchangeableLayer> make_exml_stack(std::size_t layers, std::size_t channels,
                                               RngStream& rng) {
    require(layers >= 1, ErrorCode::config, "exml stack: need at least one layer");
    std::vector<ExchangeableLayer> stack;
    stack.reserve(layers);
    for (std::size_t i = 0; i < layers; ++i) {
        const std::size_t c_in = i == 0 ? 1 : channels;
        const Activation act = i + 1 == layers ? Activation::identity : Activation::relu;
        stack.push_back(make_exml_layer(c_in, channels, act, rng));
    }
    return stack;
}

FeedForward make_feed_forward(std::size_t input, std::size_t hidden, std::size_t output,
                              std::size_t weight_layers, RngStream& rng) {
    require(weight_layers >= 1, ErrorCode::config, "feed forward: need at least one layer");
    FeedForward ff;
    for (std::size_t i = 0; i < weight_layers; ++i) {
        const std::size_t in = i == 0 ? input : hidden;
        const std::size_t out = i + 1 == weight_layers ? output : hidden;
        FeedForwardLayer layer;
        layer.weight = grad::parameter(glorot_uniform(in, out, {in, out}, rng));
        layer.bias = grad::parameter(Tensor({std::size_t{1}, out}));
        ff.layers.push_back(std::move(layer));
    }
    return ff;
}

grad::Value exml_forward(const ExchangeableLayer& layer, const grad::Value& z,
                         const Tensor& mask) {
    return exml_forward_as(layer, z, mask, layer.activation);
}

grad::Value exml_stack_forward(const std::vector<ExchangeableLayer>& layers,
                               const Tensor& input, const Tensor& mask,
                               const ForwardContext& ctx) {
    require(!layers.empty(), ErrorCode::config, "exml stack: empty layer list");
    require(layers.front().c_in() == 1, ErrorCode::config,
            "exml stack: first layer must take one input channel");
    for (std::size_t i = 1; i < layers.size(); ++i) {
        require(layers[i].c_in() == layers[i - 1].c_out(), ErrorCode::config,
                "exml stack: channel chain mismatch at layer " + std::to_string(i));
    }
    require(input.rank() == 2, ErrorCode::dimension,
            "exml stack: input must be rank 2, got " + shape_string(input));
    const std::size_t n = input.dim(0), m = input.dim(1);
    auto z = grad::reshape(grad::constant(input), {n, m, std::size_t{1}});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const bool last = i + 1 == layers.size();
        z = exml_forward_as(layers[i], z, mask, last ? Activation::identity
                                                     : layers[i].activation);
        if (!last && ctx.training && ctx.dropout.enabled && ctx.dropout.rate > 0.0) {
            require(ctx.rng != nullptr, ErrorCode::contract,
                    "exml stack: dropout requires an rng");
            z = dropout_apply(z, ctx.dropout, *ctx.rng);
        }
    }
    return z;
}

grad::Value feed_forward_apply(const FeedForward& ff, const grad::Value& x,
                               const ForwardContext& ctx) {
    require(!ff.layers.empty(), ErrorCode::config, "feed forward: empty layer list");
    require(x->value.rank() == 2, ErrorCode::dimension,
            "feed forward: input must be rank 2, got " + shape_string(x->value));
    require(x->value.dim(1) == ff.input_width(), ErrorCode::dimension,
            "feed forward: input width " + std::to_string(x->value.dim(1)) +
                " does not match network " + std::to_string(ff.input_width()));
    const std::size_t rows = x->value.dim(0);
    auto ones = grad::constant(Tensor({rows, std::size_t{1}}, 1.0));
    grad::Value h = x;
    for (std::size_t i = 0; i < ff.layers.size(); ++i) {
        const auto& layer = ff.layers[i];
        auto lin = grad::add(grad::matmul(h, layer.weight), grad::matmul(ones, layer.bias));
        const bool last = i + 1 == ff.layers.size();
        if (last) {
            h = lin;
        } else {
            h = grad::relu(lin);
            if (ctx.training && ctx.dropout.enabled && ctx.dropout.rate > 0.0) {
                require(ctx.rng != nullptr, ErrorCode::contract,
                        "feed forward: dropout requires an rng");
                h = dropout_apply(h, ctx.dropout, *ctx.rng);
            }
        }
    }
    return h;
}

std::pair<grad::Value, grad::Value> prior_means(const grad::Value& z, const FeedForward& f_u,
                                                const FeedForward& f_v,
                                                const ForwardContext& ctx) {
    require(z->value.rank() == 3, ErrorCode::dimension,
            "prior_means: z must be rank 3, got " + shape_string(z->value));
    const std::size_t n = z->value.dim(0), m = z->value.dim(1);
    Tensor ones({n, m}, 1.0);
    auto row_pool = grad::masked_reduce(z, ones, grad::ReduceAxis::cols);
    auto col_pool = grad::masked_reduce(z, ones, grad::ReduceAxis::rows);
    auto u0 = feed_forward_apply(f_u, row_pool, ctx);
    auto v0 = feed_forward_apply(f_v, col_pool, ctx);
    return {u0, v0};
}

grad::Value dropout_apply(const grad::Value& x, const DropoutSpec& spec, RngStream& rng) {
    require(spec.rate >= 0.0 && spec.rate < 1.0, ErrorCode::invalid_argument,
            "dropout: rate must lie in [0, 1)");
    if (!spec.enabled || spec.rate == 0.0) return x;
    const double keep = 1.0 - spec.rate;
    Tensor gate(x->value.shape());
    for (std::size_t i = 0; i < gate.numel(); ++i) {
        gate[i] = rng.uniform() < spec.rate ? 0.0 : 1.0 / keep;
    }
    return grad::mul(x, grad::constant(std::move(gate)));
}

}  // namespace mmf
