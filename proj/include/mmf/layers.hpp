#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "mmf/autodiff.hpp"
#include "mmf/rng.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

enum class Activation { relu, identity };

// One exchangeable matrix layer. Four weight matrices [C_in x C_out] couple
// the element term, the per-column average, the per-row average, and the
// whole-matrix average; the bias [C_out] is added outside the channel sum. The
// parameter count never depends on the matrix size.
struct ExchangeableLayer {
    std::array<grad::Value, 4> w;
    grad::Value bias;
    Activation activation = Activation::relu;

    std::size_t c_in() const { return w[0]->value.dim(0); }
    std::size_t c_out() const { return w[0]->value.dim(1); }
};

// Dense layer chain; hidden layers use relu, the last layer is linear.
// Biases are stored [1 x width] so they broadcast over batch rows.
struct FeedForwardLayer {
    grad::Value weight;
    grad::Value bias;
};

struct FeedForward {
    std::vector<FeedForwardLayer> layers;

    std::size_t input_width() const { return layers.front().weight->value.dim(0); }
    std::size_t output_width() const { return layers.back().weight->value.dim(1); }
};

struct DropoutSpec {
    double rate = 0.0;
    bool enabled = false;
};

// Shared knobs for a forward pass. rng must outlive the pass and is only
// touched when dropout is active.
struct ForwardContext {
    bool training = false;
    DropoutSpec dropout;
    RngStream* rng = nullptr;
};

ExchangeableLayer make_exml_layer(std::size_t c_in, std::size_t c_out, Activation activation,
                                  RngStream& rng);
std::vector<ExchangeableLayer> make_exml_stack(std::size_t layers, std::size_t channels,
                                               RngStream& rng);
FeedForward make_feed_forward(std::size_t input, std::size_t hidden, std::size_t output,
                              std::size_t weight_layers, RngStream& rng);

grad::Value exml_forward(const ExchangeableLayer& layer, const grad::Value& z,
                         const Tensor& mask);

// Full stack on a raw matrix: the input enters as a single channel, every
// layer but the last applies its activation (dropout after it when training),
// and the last layer is linear.
grad::Value exml_stack_forward(const std::vector<ExchangeableLayer>& layers,
                               const Tensor& input, const Tensor& mask,
                               const ForwardContext& ctx);

grad::Value feed_forward_apply(const FeedForward& ff, const grad::Value& x,
                               const ForwardContext& ctx);

// Deep-sets pooling into the prior networks: rows of z are averaged over all
// columns (plain mean, full M in the denominator) and fed to f_u, columns
// symmetrically to f_v.
std::pair<grad::Value, grad::Value> prior_means(const grad::Value& z, const FeedForward& f_u,
                                                const FeedForward& f_v,
                                                const ForwardContext& ctx);

grad::Value dropout_apply(const grad::Value& x, const DropoutSpec& spec, RngStream& rng);

}  // namespace mmf
