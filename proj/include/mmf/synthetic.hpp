#pragma once

#include <cstdint>

#include "mmf/episodes.hpp"

namespace mmf {

// Low-rank task family: every task shares anchor factors drawn once, each
// task perturbs them, and entries are observed independently at the given
// density with additive Gaussian noise.
struct SyntheticConfig {
    std::size_t train_tasks = 200;
    std::size_t valid_tasks = 20;
    std::size_t test_tasks = 10;
    std::size_t rows = 30;
    std::size_t cols = 30;
    std::size_t rank = 3;
    double density = 0.3;
    double noise_std = 0.1;
    double factor_spread = 0.7;
    std::uint64_t seed = 0;
};

MetaDataset make_synthetic_family(const SyntheticConfig& cfg);

}  // namespace mmf
