#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mmf/autodiff.hpp"
#include "mmf/layers.hpp"
#include "mmf/rng.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

// Row and column factors together with the prior means they started from.
// Before any adaptation step U equals U0 and V equals V0.
struct FactorPair {
    grad::Value U;
    grad::Value V;
    grad::Value U0;
    grad::Value V0;
};

struct AdaptConfig {
    double eta = 1e-2;
    std::size_t steps = 10;
};

struct ModelDims {
    std::size_t exml_layers = 3;
    std::size_t channels = 32;
    std::size_t ff_hidden = 32;
    std::size_t ff_weight_layers = 4;
    std::size_t factors = 32;
};

// Everything the meta-optimizer trains: the exchangeable stack, both prior
// networks, and the regularization strength. lambda_raw maps to
// lambda = softplus(lambda_raw) so the precision stays nonnegative.
struct ModelParams {
    ModelDims dims;
    std::vector<ExchangeableLayer> exml;
    FeedForward f_u;
    FeedForward f_v;
    grad::Value lambda_raw;

    std::vector<std::pair<std::string, grad::Value>> named_parameters() const;
    ModelParams clone() const;
    double lambda_value() const;
};

ModelParams make_model_params(const ModelDims& dims, RngStream& rng);

// Negated log posterior up to constants: squared error on observed entries
// plus lambda times the squared distances of both factors from their priors.
grad::Value map_objective(const Tensor& x, const Tensor& mask, const FactorPair& fp,
                          const grad::Value& lambda);

// One simultaneous gradient step on the MAP objective. Both factor updates
// read the time-t values; the step stays inside the autodiff graph.
FactorPair adapt_step(const Tensor& x, const Tensor& mask, const FactorPair& fp,
                      const grad::Value& lambda, double eta);

// Full forward pass: representation stack, prior means, then cfg.steps
// adaptation updates. The returned factors keep the graph alive for backward.
FactorPair model_forward(const Tensor& x, const Tensor& mask, const ModelParams& params,
                         const AdaptConfig& cfg, const ForwardContext& ctx);

// Dense reconstruction u_n . v_m for every cell, detached from the graph.
Tensor predict(const FactorPair& fp);

// Mean squared error over the observed entries of the held-out block,
// differentiable through the factors.
grad::Value episode_loss(const Tensor& x_test, const Tensor& mask_test, const FactorPair& fp);

}  // namespace mmf
