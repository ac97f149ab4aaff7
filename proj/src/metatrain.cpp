#include "mmf/metatrain.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "mmf/error.hpp"
#include "mmf/parallel.hpp"
#include "mmf/textfmt.hpp"

namespace mmf {

namespace {

// Stream ids 0 and 1 seed initialization and the validation suite; episode
// streams start here, keyed by the global episode index so results do not
// depend on the worker count.
constexpr std::uint64_t kEpisodeStreamBase = 16;

void check_config(const MetaDataset& data, const TrainConfig& cfg) {
    require(!data.train_blocks.empty(), ErrorCode::config, "no training blocks");
    require(!data.valid_blocks.empty(), ErrorCode::config, "no validation blocks");
    require(cfg.batch_size >= 1, ErrorCode::config, "batch_size must be at least 1");
    require(cfg.batches_per_epoch >= 1, ErrorCode::config,
            "batches_per_epoch must be at least 1");
    require(cfg.outer_lr > 0.0, ErrorCode::config, "outer_lr must be positive");
    require(cfg.ratio > 0.0 && cfg.ratio < 1.0, ErrorCode::config,
            "ratio must lie strictly between 0 and 1");
    require(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0, ErrorCode::config,
            "dropout_rate must lie in [0, 1)");
    require(cfg.valid_episodes >= 1, ErrorCode::config, "valid_episodes must be at least 1");
    require(cfg.inner.steps == 0 || cfg.inner.eta > 0.0, ErrorCode::config,
            "inner eta must be positive when inner steps > 0");
}

struct EpisodeOutcome {
    double loss = 0.0;
    std::vector<Tensor> grads;
};

EpisodeOutcome run_training_episode(const MetaDataset& data, const TrainConfig& cfg,
                                    const ModelParams& params, const RngStream& root,
                                    std::uint64_t episode_index) {
    RngStream rng = root.child(kEpisodeStreamBase + episode_index);
    const std::size_t block_index =
        data.train_blocks.size() == 1 ? 0 : rng.below(data.train_blocks.size());
    Episode ep = sample_episode(data.train_blocks[block_index], cfg.rows, cfg.cols,
                                cfg.ratio, rng);

    ModelParams local = params.clone();
    ForwardContext ctx;
    ctx.training = true;
    ctx.dropout = DropoutSpec{cfg.dropout_rate, cfg.dropout_rate > 0.0};
    ctx.rng = &rng;
    FactorPair fp = model_forward(ep.x, ep.b, local, cfg.inner, ctx);
    auto loss = episode_loss(ep.xp, ep.bp, fp);
    grad::backward(loss);

    EpisodeOutcome out;
    out.loss = loss->value[0];
    for (auto& [name, value] : local.named_parameters()) {
        out.grads.push_back(value->grad_buffer());
    }
    return out;
}

Checkpoint build_checkpoint(const ModelParams& params, const MetaDataset& data,
                            const TrainConfig& cfg, const TrainResult& result) {
    Checkpoint ckpt = checkpoint_from_params(params, data.norm_mean, data.norm_std);
    ckpt.set_u64("train.epochs", cfg.epochs);
    ckpt.set_u64("train.batches_per_epoch", cfg.batches_per_epoch);
    ckpt.set_u64("train.batch_size", cfg.batch_size);
    ckpt.set_f64("train.outer_lr", cfg.outer_lr);
    ckpt.set_u64("train.rows", cfg.rows);
    ckpt.set_u64("train.cols", cfg.cols);
    ckpt.set_f64("train.ratio", cfg.ratio);
    ckpt.set_f64("train.inner_eta", cfg.inner.eta);
    ckpt.set_u64("train.inner_steps", cfg.inner.steps);
    ckpt.set_f64("train.dropout_rate", cfg.dropout_rate);
    ckpt.set_u64("train.seed", cfg.seed);
    ckpt.set_u64("train.patience", cfg.patience);
    ckpt.set_u64("train.valid_episodes", cfg.valid_episodes);
    ckpt.set_f64("train.best_valid_loss", result.best_valid_loss);
    ckpt.set_u64("train.best_epoch", result.best_epoch);
    ckpt.set_u64("train.epochs_run", result.epochs_run);
    ckpt.set_u64("train.diverged", result.diverged ? 1 : 0);
    return ckpt;
}

}  // namespace

AdamState make_adam_state(const ModelParams& params) {
    AdamState state;
    for (const auto& [name, value] : params.named_parameters()) {
        state.m.emplace_back(value->value.shape());
        state.v.emplace_back(value->value.shape());
    }
    return state;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
    auto named = params.named_parameters();
    require(grads.size() == named.size(), ErrorCode::contract,
            "adam_step: gradient slot count mismatch");
    require(state.m.size() == named.size(), ErrorCode::contract,
            "adam_step: state slot count mismatch");
    for (std::size_t i = 0; i < named.size(); ++i) {
        const Tensor& g = grads[i];
        require(g.same_shape(named[i].second->value), ErrorCode::contract,
                "adam_step: gradient shape mismatch for " + named[i].first);
        if (!g.all_finite()) {
            fail(ErrorCode::numeric,
                 "adam_step: non-finite gradient for parameter " + named[i].first);
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < named.size(); ++i) {
        Tensor& p = named[i].second->value;
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double validation_loss(const ModelParams& params, const std::vector<Episode>& suite,
                       const AdaptConfig& inner, std::size_t workers) {
    require(!suite.empty(), ErrorCode::invalid_argument, "validation suite is empty");
    std::vector<double> losses(suite.size(), 0.0);
    parallel_for(suite.size(), workers, [&](std::size_t i) {
        ForwardContext ctx;
        FactorPair fp = model_forward(suite[i].x, suite[i].b, params, inner, ctx);
        losses[i] = episode_loss(suite[i].xp, suite[i].bp, fp)->value[0];
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return total / double(suite.size());
}

TrainResult meta_train(const MetaDataset& data, const TrainConfig& cfg) {
    check_config(data, cfg);
    RngStream root(cfg.seed);
    RngStream init_rng = root.child(0);
    ModelParams params = make_model_params(cfg.dims, init_rng);

    RngStream valid_rng = root.child(1);
    auto valid_suite = make_meta_test_suite(data.valid_blocks, cfg.valid_episodes, cfg.rows,
                                            cfg.cols, 1.0 - cfg.ratio, valid_rng);

    TrainResult result;
    const double valid0 = validation_loss(params, valid_suite, cfg.inner, cfg.workers);
    result.log.push_back({0, std::numeric_limits<double>::quiet_NaN(), valid0});

    ModelParams best = params.clone();
    result.best_valid_loss = valid0;
    result.best_epoch = 0;
    if (!std::isfinite(valid0)) {
        result.diverged = true;
        result.divergence_reason = "validation loss non-finite at initialization";
        result.checkpoint = build_checkpoint(best, data, cfg, result);
        return result;
    }

    AdamState adam = make_adam_state(params);
    std::uint64_t episode_counter = 0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        try {
            for (std::size_t batch = 0; batch < cfg.batches_per_epoch; ++batch) {
                std::vector<EpisodeOutcome> outcomes(cfg.batch_size);
                parallel_for(cfg.batch_size, cfg.workers, [&](std::size_t e) {
                    outcomes[e] = run_training_episode(data, cfg, params, root,
                                                       episode_counter + e);
                });
                episode_counter += cfg.batch_size;

                std::vector<Tensor> grads = std::move(outcomes[0].grads);
                double batch_loss = outcomes[0].loss;
                for (std::size_t e = 1; e < outcomes.size(); ++e) {
                    batch_loss += outcomes[e].loss;
                    for (std::size_t i = 0; i < grads.size(); ++i) {
                        Tensor& acc = grads[i];
                        const Tensor& g = outcomes[e].grads[i];
                        for (std::size_t j = 0; j < acc.numel(); ++j) acc[j] += g[j];
                    }
                }
                const double inv = 1.0 / double(cfg.batch_size);
                batch_loss *= inv;
                for (auto& g : grads) {
                    for (std::size_t j = 0; j < g.numel(); ++j) g[j] *= inv;
                }
                adam_step(params, grads, adam, cfg.outer_lr);
                epoch_loss += batch_loss;
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::numeric) throw;
            result.diverged = true;
            result.divergence_reason = e.what();
            result.epochs_run = epoch;
            break;
        }
        epoch_loss /= double(cfg.batches_per_epoch);

        const double valid = validation_loss(params, valid_suite, cfg.inner, cfg.workers);
        result.log.push_back({epoch, epoch_loss, valid});
        result.epochs_run = epoch;
        if (!std::isfinite(valid)) {
            result.diverged = true;
            result.divergence_reason = "validation loss non-finite at epoch " +
                                       std::to_string(epoch);
            break;
        }
        if (valid < result.best_valid_loss) {
            result.best_valid_loss = valid;
            result.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    result.checkpoint = build_checkpoint(best, data, cfg, result);
    return result;
}

void save_epoch_log(const std::string& path, const std::vector<EpochStat>& log) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    out << "epoch\ttrain_loss\tvalid_loss\n";
    for (const auto& row : log) {
        out << row.epoch << "\t" << format_double(row.train_loss) << "\t"
            << format_double(row.valid_loss) << "\n";
    }
    require(out.good(), ErrorCode::io, "write failed for " + path);
}

}  // namespace mmf
