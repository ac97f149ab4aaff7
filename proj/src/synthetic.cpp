#include "mmf/synthetic.hpp"

#include <cmath>
#include <vector>

#include "mmf/error.hpp"

namespace mmf {

namespace {

RatingMatrix sample_task(const SyntheticConfig& cfg, const std::vector<double>& mu_u,
                         const std::vector<double>& mu_v, RngStream& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<double> u(cfg.rows * cfg.rank), v(cfg.cols * cfg.rank);
        for (std::size_t i = 0; i < cfg.rows; ++i)
            for (std::size_t k = 0; k < cfg.rank; ++k)
                u[i * cfg.rank + k] = mu_u[k] + cfg.factor_spread * rng.normal();
        for (std::size_t j = 0; j < cfg.cols; ++j)
            for (std::size_t k = 0; k < cfg.rank; ++k)
                v[j * cfg.rank + k] = mu_v[k] + cfg.factor_spread * rng.normal();

        RatingMatrix task;
        task.values = Tensor({cfg.rows, cfg.cols});
        task.mask = Tensor({cfg.rows, cfg.cols});
        task.row_ids.resize(cfg.rows);
        task.col_ids.resize(cfg.cols);
        for (std::size_t i = 0; i < cfg.rows; ++i) task.row_ids[i] = static_cast<std::int64_t>(i);
        for (std::size_t j = 0; j < cfg.cols; ++j) task.col_ids[j] = static_cast<std::int64_t>(j);

        std::size_t observed = 0;
        for (std::size_t i = 0; i < cfg.rows; ++i) {
            for (std::size_t j = 0; j < cfg.cols; ++j) {
                double x = 0.0;
                for (std::size_t k = 0; k < cfg.rank; ++k) {
                    x += u[i * cfg.rank + k] * v[j * cfg.rank + k];
                }
                x += cfg.noise_std * rng.normal();
                if (rng.uniform() < cfg.density) {
                    task.values.at2(i, j) = x;
                    task.mask.at2(i, j) = 1.0;
                    ++observed;
                }
            }
        }
        if (observed > 0) return task;
    }
    fail(ErrorCode::sampling, "synthetic task generation kept producing empty masks");
}

}  // namespace

MetaDataset make_synthetic_family(const SyntheticConfig& cfg) {
    require(cfg.train_tasks >= 1 && cfg.valid_tasks >= 1 && cfg.test_tasks >= 1,
            ErrorCode::config, "synthetic family needs train, valid, and test tasks");
    require(cfg.rows >= 1 && cfg.cols >= 1 && cfg.rank >= 1, ErrorCode::config,
            "synthetic task dimensions must be positive");
    require(cfg.density > 0.0 && cfg.density <= 1.0, ErrorCode::config,
            "synthetic density must lie in (0, 1]");
    require(cfg.noise_std >= 0.0 && cfg.factor_spread >= 0.0, ErrorCode::config,
            "synthetic noise and spread must be nonnegative");

    RngStream rng(cfg.seed);
    std::vector<double> mu_u(cfg.rank), mu_v(cfg.rank);
    for (auto& m : mu_u) m = rng.normal();
    for (auto& m : mu_v) m = rng.normal();

    MetaDataset ds;
    for (std::size_t i = 0; i < cfg.train_tasks; ++i) {
        ds.train_blocks.push_back(sample_task(cfg, mu_u, mu_v, rng));
    }
    for (std::size_t i = 0; i < cfg.valid_tasks; ++i) {
        ds.valid_blocks.push_back(sample_task(cfg, mu_u, mu_v, rng));
    }
    for (std::size_t i = 0; i < cfg.test_tasks; ++i) {
        ds.test_blocks.push_back(sample_task(cfg, mu_u, mu_v, rng));
    }

    double sum = 0.0, sumsq = 0.0, count = 0.0;
    for (const auto& block : ds.train_blocks) {
        for (std::size_t i = 0; i < block.values.numel(); ++i) {
            if (block.mask[i] == 0.0) continue;
            sum += block.values[i];
            sumsq += block.values[i] * block.values[i];
            count += 1.0;
        }
    }
    const double mean = sum / count;
    const double var = sumsq / count - mean * mean;
    require(var > 0.0, ErrorCode::numeric, "synthetic training ratings have zero variance");
    ds.norm_mean = mean;
    ds.norm_std = std::sqrt(var);

    auto normalize_block = [&](RatingMatrix& block) {
        for (std::size_t i = 0; i < block.values.numel(); ++i) {
            if (block.mask[i] == 0.0) continue;
            block.values[i] = normalize_value(block.values[i], ds.norm_mean, ds.norm_std);
        }
    };
    for (auto& b : ds.train_blocks) normalize_block(b);
    for (auto& b : ds.valid_blocks) normalize_block(b);
    for (auto& b : ds.test_blocks) normalize_block(b);
    return ds;
}

}  // namespace mmf
