#include "mmf/mmf.h"

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "mmf/baselines.hpp"
#include "mmf/checkpoint.hpp"
#include "mmf/episodes.hpp"
#include "mmf/error.hpp"
#include "mmf/imputer.hpp"
#include "mmf/metatrain.hpp"
#include "mmf/report.hpp"
#include "mmf/rng.hpp"
#include "mmf/synthetic.hpp"

struct mmf_dataset {
    mmf::MetaDataset data;
};

struct mmf_suite {
    std::vector<mmf::Episode> episodes;
    double norm_mean = 0.0;
    double norm_std = 1.0;
};

struct mmf_model {
    mmf::Checkpoint ckpt;
    mmf::ModelParams params;
    double norm_mean = 0.0;
    double norm_std = 1.0;
    mmf::AdaptConfig inner{1e-2, 10};
};

struct mmf_report {
    mmf::Report report;
};

namespace {

thread_local std::string g_last_error;

mmf_status status_from(mmf::ErrorCode code) {
    switch (code) {
        case mmf::ErrorCode::invalid_argument: return MMF_ERR_INVALID_ARGUMENT;
        case mmf::ErrorCode::dimension: return MMF_ERR_DIMENSION;
        case mmf::ErrorCode::numeric: return MMF_ERR_NUMERIC;
        case mmf::ErrorCode::contract: return MMF_ERR_CONTRACT;
        case mmf::ErrorCode::parse: return MMF_ERR_PARSE;
        case mmf::ErrorCode::io: return MMF_ERR_IO;
        case mmf::ErrorCode::config: return MMF_ERR_CONFIG;
        case mmf::ErrorCode::sampling: return MMF_ERR_SAMPLING;
        case mmf::ErrorCode::format: return MMF_ERR_FORMAT;
        case mmf::ErrorCode::diverged: return MMF_ERR_DIVERGED;
    }
    return MMF_ERR_UNKNOWN;
}

mmf_status set_error(mmf_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

template <typename Fn>
mmf_status guard(Fn&& fn) {
    try {
        return fn();
    } catch (const mmf::Error& e) {
        return set_error(status_from(e.code()), e.what());
    } catch (const std::exception& e) {
        return set_error(MMF_ERR_UNKNOWN, e.what());
    } catch (...) {
        return set_error(MMF_ERR_UNKNOWN, "unknown failure");
    }
}

bool given(const char* path) { return path != nullptr && path[0] != '\0'; }

const std::vector<mmf::RatingMatrix>* split_blocks(const mmf_dataset* ds, mmf_split split) {
    switch (split) {
        case MMF_SPLIT_TRAIN: return &ds->data.train_blocks;
        case MMF_SPLIT_VALID: return &ds->data.valid_blocks;
        case MMF_SPLIT_TEST: return &ds->data.test_blocks;
    }
    return nullptr;
}

mmf_status require_arg(bool ok, const char* message) {
    if (ok) return MMF_OK;
    return set_error(MMF_ERR_INVALID_ARGUMENT, message);
}

mmf::MFConfig mf_config_from(const mmf_mf_config* mf) {
    mmf::MFConfig cfg;
    if (mf == nullptr) return cfg;
    cfg.k = mf->k;
    if (mf->weight_decay_grid != nullptr && mf->weight_decay_count > 0) {
        cfg.weight_decay_grid.assign(mf->weight_decay_grid,
                                     mf->weight_decay_grid + mf->weight_decay_count);
    }
    if (mf->lr_grid != nullptr && mf->lr_count > 0) {
        cfg.lr_grid.assign(mf->lr_grid, mf->lr_grid + mf->lr_count);
    }
    cfg.max_iters = mf->max_iters;
    cfg.init_scale = mf->init_scale;
    cfg.rel_tol = mf->rel_tol;
    cfg.holdout = mf->holdout;
    cfg.seed = mf->seed;
    return cfg;
}

}  // namespace

extern "C" {

const char* mmf_status_name(mmf_status status) {
    switch (status) {
        case MMF_OK: return "ok";
        case MMF_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case MMF_ERR_DIMENSION: return "dimension";
        case MMF_ERR_NUMERIC: return "numeric";
        case MMF_ERR_CONTRACT: return "contract";
        case MMF_ERR_PARSE: return "parse";
        case MMF_ERR_IO: return "io";
        case MMF_ERR_CONFIG: return "config";
        case MMF_ERR_SAMPLING: return "sampling";
        case MMF_ERR_FORMAT: return "format";
        case MMF_ERR_DIVERGED: return "diverged";
        case MMF_ERR_UNKNOWN: break;
    }
    return "unknown";
}

const char* mmf_last_error(void) { return g_last_error.c_str(); }

mmf_status mmf_dataset_from_file(const char* path, const char* format, double train_fraction,
                                 double valid_fraction, double test_fraction, uint64_t seed,
                                 mmf_dataset** out) {
    if (require_arg(out != nullptr, "mmf_dataset_from_file: out is null") != MMF_OK ||
        require_arg(given(path), "mmf_dataset_from_file: path is null") != MMF_OK ||
        require_arg(format != nullptr, "mmf_dataset_from_file: format is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        auto triplets = mmf::load_triplets(path, mmf::triplet_format_from_name(format));
        auto split = mmf::partition_and_normalize(
            triplets, {train_fraction, valid_fraction, test_fraction}, seed);
        auto* ds = new mmf_dataset{mmf::dataset_from_split(split)};
        *out = ds;
        return MMF_OK;
    });
}

void mmf_synthetic_config_default(mmf_synthetic_config* cfg) {
    if (cfg == nullptr) return;
    mmf::SyntheticConfig ref;
    cfg->train_tasks = ref.train_tasks;
    cfg->valid_tasks = ref.valid_tasks;
    cfg->test_tasks = ref.test_tasks;
    cfg->rows = ref.rows;
    cfg->cols = ref.cols;
    cfg->rank = ref.rank;
    cfg->density = ref.density;
    cfg->noise_std = ref.noise_std;
    cfg->factor_spread = ref.factor_spread;
    cfg->seed = ref.seed;
}

mmf_status mmf_dataset_synthetic(const mmf_synthetic_config* cfg, mmf_dataset** out) {
    if (require_arg(cfg != nullptr, "mmf_dataset_synthetic: cfg is null") != MMF_OK ||
        require_arg(out != nullptr, "mmf_dataset_synthetic: out is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::SyntheticConfig sc;
        sc.train_tasks = cfg->train_tasks;
        sc.valid_tasks = cfg->valid_tasks;
        sc.test_tasks = cfg->test_tasks;
        sc.rows = cfg->rows;
        sc.cols = cfg->cols;
        sc.rank = cfg->rank;
        sc.density = cfg->density;
        sc.noise_std = cfg->noise_std;
        sc.factor_spread = cfg->factor_spread;
        sc.seed = cfg->seed;
        *out = new mmf_dataset{mmf::make_synthetic_family(sc)};
        return MMF_OK;
    });
}

mmf_status mmf_dataset_save(const mmf_dataset* ds, const char* train_path,
                            const char* valid_path, const char* test_path) {
    if (require_arg(ds != nullptr, "mmf_dataset_save: dataset is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        if (given(train_path)) {
            mmf::save_taskset(train_path, ds->data.train_blocks, ds->data.norm_mean,
                              ds->data.norm_std);
        }
        if (given(valid_path)) {
            mmf::save_taskset(valid_path, ds->data.valid_blocks, ds->data.norm_mean,
                              ds->data.norm_std);
        }
        if (given(test_path)) {
            mmf::save_taskset(test_path, ds->data.test_blocks, ds->data.norm_mean,
                              ds->data.norm_std);
        }
        return MMF_OK;
    });
}

mmf_status mmf_dataset_load(const char* train_path, const char* valid_path,
                            const char* test_path, mmf_dataset** out) {
    if (require_arg(out != nullptr, "mmf_dataset_load: out is null") != MMF_OK ||
        require_arg(given(train_path) || given(valid_path) || given(test_path),
                    "mmf_dataset_load: no paths given") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::MetaDataset data;
        bool have_stats = false;
        auto load_into = [&](const char* path, std::vector<mmf::RatingMatrix>* blocks) {
            if (!given(path)) return;
            double mean = 0.0, stddev = 1.0;
            *blocks = mmf::load_taskset(path, &mean, &stddev);
            if (have_stats) {
                mmf::require(mean == data.norm_mean && stddev == data.norm_std,
                             mmf::ErrorCode::config,
                             std::string(path) + ": normalization stats disagree with the "
                                                 "other task files");
            } else {
                data.norm_mean = mean;
                data.norm_std = stddev;
                have_stats = true;
            }
        };
        load_into(train_path, &data.train_blocks);
        load_into(valid_path, &data.valid_blocks);
        load_into(test_path, &data.test_blocks);
        *out = new mmf_dataset{std::move(data)};
        return MMF_OK;
    });
}

mmf_status mmf_dataset_block_count(const mmf_dataset* ds, mmf_split split, size_t* out) {
    if (require_arg(ds != nullptr && out != nullptr,
                    "mmf_dataset_block_count: null argument") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    const auto* blocks = split_blocks(ds, split);
    if (require_arg(blocks != nullptr, "mmf_dataset_block_count: bad split") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    *out = blocks->size();
    return MMF_OK;
}

mmf_status mmf_dataset_block_shape(const mmf_dataset* ds, mmf_split split, size_t index,
                                   size_t* rows, size_t* cols, size_t* observed) {
    if (require_arg(ds != nullptr, "mmf_dataset_block_shape: dataset is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    const auto* blocks = split_blocks(ds, split);
    if (require_arg(blocks != nullptr, "mmf_dataset_block_shape: bad split") != MMF_OK ||
        require_arg(index < blocks->size(),
                    "mmf_dataset_block_shape: block index out of range") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    const auto& block = (*blocks)[index];
    if (rows != nullptr) *rows = block.rows();
    if (cols != nullptr) *cols = block.cols();
    if (observed != nullptr) *observed = block.observed_count();
    return MMF_OK;
}

mmf_status mmf_dataset_norm_stats(const mmf_dataset* ds, double* mean, double* stddev) {
    if (require_arg(ds != nullptr, "mmf_dataset_norm_stats: dataset is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    if (mean != nullptr) *mean = ds->data.norm_mean;
    if (stddev != nullptr) *stddev = ds->data.norm_std;
    return MMF_OK;
}

void mmf_dataset_free(mmf_dataset* ds) { delete ds; }

mmf_status mmf_suite_make(const mmf_dataset* ds, mmf_split split, size_t count, size_t rows,
                          size_t cols, double holdout, uint64_t seed, mmf_suite** out) {
    if (require_arg(ds != nullptr && out != nullptr, "mmf_suite_make: null argument") !=
        MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    const auto* blocks = split_blocks(ds, split);
    if (require_arg(blocks != nullptr, "mmf_suite_make: bad split") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::RngStream rng(seed);
        auto episodes = mmf::make_meta_test_suite(*blocks, count, rows, cols, holdout, rng);
        *out = new mmf_suite{std::move(episodes), ds->data.norm_mean, ds->data.norm_std};
        return MMF_OK;
    });
}

mmf_status mmf_suite_from_taskset(const char* taskset_path, size_t count, size_t rows,
                                  size_t cols, double holdout, uint64_t seed,
                                  mmf_suite** out) {
    if (require_arg(given(taskset_path) && out != nullptr,
                    "mmf_suite_from_taskset: null argument") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        double mean = 0.0, stddev = 1.0;
        auto blocks = mmf::load_taskset(taskset_path, &mean, &stddev);
        mmf::RngStream rng(seed);
        auto episodes = mmf::make_meta_test_suite(blocks, count, rows, cols, holdout, rng);
        *out = new mmf_suite{std::move(episodes), mean, stddev};
        return MMF_OK;
    });
}

mmf_status mmf_suite_save(const mmf_suite* suite, const char* path) {
    if (require_arg(suite != nullptr && given(path), "mmf_suite_save: null argument") !=
        MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::save_manifest(path, suite->episodes, suite->norm_mean, suite->norm_std);
        return MMF_OK;
    });
}

mmf_status mmf_suite_load(const char* path, mmf_suite** out) {
    if (require_arg(given(path) && out != nullptr, "mmf_suite_load: null argument") !=
        MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        double mean = 0.0, stddev = 1.0;
        auto episodes = mmf::load_manifest(path, &mean, &stddev);
        *out = new mmf_suite{std::move(episodes), mean, stddev};
        return MMF_OK;
    });
}

mmf_status mmf_suite_size(const mmf_suite* suite, size_t* out) {
    if (require_arg(suite != nullptr && out != nullptr, "mmf_suite_size: null argument") !=
        MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    *out = suite->episodes.size();
    return MMF_OK;
}

mmf_status mmf_suite_norm_stats(const mmf_suite* suite, double* mean, double* stddev) {
    if (require_arg(suite != nullptr, "mmf_suite_norm_stats: suite is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    if (mean != nullptr) *mean = suite->norm_mean;
    if (stddev != nullptr) *stddev = suite->norm_std;
    return MMF_OK;
}

void mmf_suite_free(mmf_suite* suite) { delete suite; }

void mmf_train_config_default(mmf_train_config* cfg) {
    if (cfg == nullptr) return;
    mmf::TrainConfig ref;
    cfg->epochs = ref.epochs;
    cfg->batches_per_epoch = ref.batches_per_epoch;
    cfg->batch_size = ref.batch_size;
    cfg->outer_lr = ref.outer_lr;
    cfg->rows = ref.rows;
    cfg->cols = ref.cols;
    cfg->ratio = ref.ratio;
    cfg->inner_eta = ref.inner.eta;
    cfg->inner_steps = ref.inner.steps;
    cfg->dropout_rate = ref.dropout_rate;
    cfg->seed = ref.seed;
    cfg->patience = ref.patience;
    cfg->valid_episodes = ref.valid_episodes;
    cfg->exml_layers = ref.dims.exml_layers;
    cfg->channels = ref.dims.channels;
    cfg->ff_hidden = ref.dims.ff_hidden;
    cfg->ff_weight_layers = ref.dims.ff_weight_layers;
    cfg->factors = ref.dims.factors;
    cfg->workers = ref.workers;
}

mmf_status mmf_train(const mmf_dataset* ds, const mmf_train_config* cfg,
                     const char* epoch_log_path, mmf_model** out) {
    if (require_arg(ds != nullptr && cfg != nullptr && out != nullptr,
                    "mmf_train: null argument") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::TrainConfig tc;
        tc.epochs = cfg->epochs;
        tc.batches_per_epoch = cfg->batches_per_epoch;
        tc.batch_size = cfg->batch_size;
        tc.outer_lr = cfg->outer_lr;
        tc.rows = cfg->rows;
        tc.cols = cfg->cols;
        tc.ratio = cfg->ratio;
        tc.inner = mmf::AdaptConfig{cfg->inner_eta, cfg->inner_steps};
        tc.dropout_rate = cfg->dropout_rate;
        tc.seed = cfg->seed;
        tc.patience = cfg->patience;
        tc.valid_episodes = cfg->valid_episodes;
        tc.dims.exml_layers = cfg->exml_layers;
        tc.dims.channels = cfg->channels;
        tc.dims.ff_hidden = cfg->ff_hidden;
        tc.dims.ff_weight_layers = cfg->ff_weight_layers;
        tc.dims.factors = cfg->factors;
        tc.workers = cfg->workers;

        mmf::TrainResult result = mmf::meta_train(ds->data, tc);
        if (given(epoch_log_path)) mmf::save_epoch_log(epoch_log_path, result.log);

        auto* model = new mmf_model;
        model->ckpt = std::move(result.checkpoint);
        model->params = mmf::params_from_checkpoint(model->ckpt);
        model->norm_mean = ds->data.norm_mean;
        model->norm_std = ds->data.norm_std;
        model->inner = tc.inner;
        *out = model;
        if (result.diverged) {
            return set_error(MMF_ERR_DIVERGED, result.divergence_reason);
        }
        return MMF_OK;
    });
}

mmf_status mmf_model_save(const mmf_model* model, const char* path) {
    if (require_arg(model != nullptr && given(path), "mmf_model_save: null argument") !=
        MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::save_checkpoint(model->ckpt, path);
        return MMF_OK;
    });
}

mmf_status mmf_model_load(const char* path, mmf_model** out) {
    if (require_arg(given(path) && out != nullptr, "mmf_model_load: null argument") !=
        MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        auto* model = new mmf_model;
        try {
            model->ckpt = mmf::load_checkpoint(path);
            model->params = mmf::params_from_checkpoint(model->ckpt);
            mmf::require(model->ckpt.has("data.norm_mean") && model->ckpt.has("data.norm_std"),
                         mmf::ErrorCode::format,
                         std::string(path) + ": checkpoint lacks normalization stats");
            model->norm_mean = model->ckpt.get_f64("data.norm_mean");
            model->norm_std = model->ckpt.get_f64("data.norm_std");
            if (model->ckpt.has("train.inner_eta") && model->ckpt.has("train.inner_steps")) {
                model->inner.eta = model->ckpt.get_f64("train.inner_eta");
                model->inner.steps = std::size_t(model->ckpt.get_u64("train.inner_steps"));
            }
        } catch (...) {
            delete model;
            throw;
        }
        *out = model;
        return MMF_OK;
    });
}

mmf_status mmf_model_norm_stats(const mmf_model* model, double* mean, double* stddev) {
    if (require_arg(model != nullptr, "mmf_model_norm_stats: model is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    if (mean != nullptr) *mean = model->norm_mean;
    if (stddev != nullptr) *stddev = model->norm_std;
    return MMF_OK;
}

mmf_status mmf_model_inner_defaults(const mmf_model* model, double* eta, size_t* steps) {
    if (require_arg(model != nullptr, "mmf_model_inner_defaults: model is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    if (eta != nullptr) *eta = model->inner.eta;
    if (steps != nullptr) *steps = model->inner.steps;
    return MMF_OK;
}

mmf_status mmf_model_impute(const mmf_model* model, const double* values, const double* mask,
                            size_t rows, size_t cols, double eta, size_t steps, double* out) {
    if (require_arg(model != nullptr && values != nullptr && mask != nullptr &&
                        out != nullptr,
                    "mmf_model_impute: null argument") != MMF_OK ||
        require_arg(rows > 0 && cols > 0, "mmf_model_impute: empty matrix") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::Tensor x({rows, cols});
        mmf::Tensor b({rows, cols});
        for (size_t i = 0; i < rows * cols; ++i) {
            b[i] = mask[i];
            x[i] = mask[i] == 0.0
                       ? 0.0
                       : mmf::normalize_value(values[i], model->norm_mean, model->norm_std);
        }
        mmf::ForwardContext ctx;
        mmf::FactorPair fp =
            mmf::model_forward(x, b, model->params, mmf::AdaptConfig{eta, steps}, ctx);
        mmf::Tensor pred = mmf::predict(fp);
        for (size_t i = 0; i < rows * cols; ++i) {
            out[i] = mmf::denormalize_value(pred[i], model->norm_mean, model->norm_std);
        }
        return MMF_OK;
    });
}

void mmf_model_free(mmf_model* model) { delete model; }

void mmf_mf_config_default(mmf_mf_config* cfg) {
    if (cfg == nullptr) return;
    mmf::MFConfig ref;
    cfg->k = ref.k;
    cfg->weight_decay_grid = nullptr;
    cfg->weight_decay_count = 0;
    cfg->lr_grid = nullptr;
    cfg->lr_count = 0;
    cfg->max_iters = ref.max_iters;
    cfg->init_scale = ref.init_scale;
    cfg->rel_tol = ref.rel_tol;
    cfg->holdout = ref.holdout;
    cfg->seed = ref.seed;
}

mmf_status mmf_report_new(mmf_report** out) {
    if (require_arg(out != nullptr, "mmf_report_new: out is null") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    *out = new mmf_report;
    return MMF_OK;
}

mmf_status mmf_report_eval(mmf_report* report, const mmf_model* model, const mmf_suite* suite,
                           const char* method, const char* label, const char* dataset,
                           double inner_eta, size_t inner_steps, const mmf_mf_config* mf,
                           size_t workers) {
    if (require_arg(report != nullptr && suite != nullptr && method != nullptr &&
                        label != nullptr && dataset != nullptr,
                    "mmf_report_eval: null argument") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::EvalRequest req;
        req.method = method;
        req.label = label;
        req.inner = mmf::AdaptConfig{inner_eta, inner_steps};
        req.mf = mf_config_from(mf);
        const mmf::ModelParams* params = model != nullptr ? &model->params : nullptr;
        mmf::EpisodeScores scores =
            mmf::evaluate_method(req, params, suite->episodes, workers);
        mmf::append_method_rows(report->report, req.label, dataset, scores);
        return MMF_OK;
    });
}

mmf_status mmf_report_row_count(const mmf_report* report, size_t* out) {
    if (require_arg(report != nullptr && out != nullptr,
                    "mmf_report_row_count: null argument") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    *out = report->report.rows.size();
    return MMF_OK;
}

mmf_status mmf_report_all_finite(const mmf_report* report, int* out) {
    if (require_arg(report != nullptr && out != nullptr,
                    "mmf_report_all_finite: null argument") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    *out = report->report.all_finite() ? 1 : 0;
    return MMF_OK;
}

mmf_status mmf_report_aggregate(const mmf_report* report, const char* label,
                                const char* dataset, const char* metric,
                                const char* aggregate, double* out) {
    if (require_arg(report != nullptr && label != nullptr && dataset != nullptr &&
                        metric != nullptr && aggregate != nullptr && out != nullptr,
                    "mmf_report_aggregate: null argument") != MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    for (const auto& row : report->report.rows) {
        if (row.method == label && row.dataset == dataset && row.metric == metric &&
            row.episode == aggregate) {
            *out = row.value;
            return MMF_OK;
        }
    }
    return set_error(MMF_ERR_INVALID_ARGUMENT,
                     std::string("mmf_report_aggregate: no row for ") + label + "/" + dataset +
                         "/" + metric + "/" + aggregate);
}

mmf_status mmf_report_save(const mmf_report* report, const char* path) {
    if (require_arg(report != nullptr && given(path), "mmf_report_save: null argument") !=
        MMF_OK) {
        return MMF_ERR_INVALID_ARGUMENT;
    }
    return guard([&] {
        mmf::save_report(report->report, path);
        return MMF_OK;
    });
}

void mmf_report_free(mmf_report* report) { delete report; }

}  // extern "C"
