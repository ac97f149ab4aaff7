#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmf/checkpoint.hpp"
#include "mmf/episodes.hpp"
#include "mmf/imputer.hpp"

namespace mmf {

struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t batches_per_epoch = 50;
    std::size_t batch_size = 16;
    double outer_lr = 1e-4;
    std::size_t rows = 30;
    std::size_t cols = 30;
    double ratio = 0.5;
    AdaptConfig inner{1e-2, 10};
    double dropout_rate = 0.1;
    std::uint64_t seed = 0;
    std::size_t patience = 100;
    std::size_t valid_episodes = 10;
    ModelDims dims;
    std::size_t workers = 1;
};

// Adam with bias correction; moment slots align with the canonical
// named_parameters order.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

AdamState make_adam_state(const ModelParams& params);

// In-place update of every parameter from the matching gradient slot. A
// non-finite gradient aborts with an error naming the parameter.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr);

struct EpochStat {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStat> log;
    double best_valid_loss = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    bool diverged = false;
    std::string divergence_reason;
};

// Episodic meta-training. Samples batches of episodes from the training
// blocks, averages their losses, and takes one Adam step per batch. After
// every epoch a fixed validation suite is scored; the best parameters are
// returned, training stops early after `patience` epochs without improvement.
// Divergence (non-finite validation or gradients) ends training with the last
// finite best checkpoint and sets the diverged flag.
TrainResult meta_train(const MetaDataset& data, const TrainConfig& cfg);

// Mean episode loss of the given parameters on a fixed suite, dropout off.
double validation_loss(const ModelParams& params, const std::vector<Episode>& suite,
                       const AdaptConfig& inner, std::size_t workers);

void save_epoch_log(const std::string& path, const std::vector<EpochStat>& log);

}  // namespace mmf
