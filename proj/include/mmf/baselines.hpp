#pragma once

#include <cstdint>
#include <vector>

#include "mmf/imputer.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

// Per-matrix factorization baseline. Hyperparameters are picked by grid
// search scored on a held-out fifth of the observed entries, then the model
// is refit on everything observed.
struct MFConfig {
    std::size_t k = 32;
    std::vector<double> weight_decay_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    std::vector<double> lr_grid = {1e-3, 1e-2, 1e-1};
    std::size_t max_iters = 500;
    double init_scale = 0.1;
    double rel_tol = 1e-8;
    double holdout = 0.2;
    std::uint64_t seed = 0;
};

struct MFFactors {
    Tensor u;  // [N, K]
    Tensor v;  // [M, K]
    double weight_decay = 0.0;
    double lr = 0.0;
};

// Minimizes sum_b (u.v - x)^2 + wd (|U|^2 + |V|^2) by gradient descent with
// step halving whenever a step would increase the objective. `valid_mask`
// overrides the validation subset used for the grid search; pass an empty
// tensor to sample it from the observed entries.
MFFactors mf_fit(const Tensor& x, const Tensor& b, const MFConfig& cfg,
                 const Tensor& valid_mask = Tensor());

Tensor mf_predict(const MFFactors& factors);

// Constant predictor: every entry is the mean of the observed ones.
Tensor mean_predict(const Tensor& x, const Tensor& b);

// Prior product ablation: the generated prior means multiplied together,
// with no adaptation steps.
Tensor prior_product_predict(const Tensor& x, const Tensor& b, const ModelParams& params);

}  // namespace mmf
