#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmf/mmf.h"

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void die(mmf_status status, const std::string& where) {
    std::cerr << "mmf: " << where << ": " << mmf_status_name(status) << ": "
              << mmf_last_error() << "\n";
    std::exit(1);
}

void check(mmf_status status, const std::string& where) {
    if (status != MMF_OK) die(status, where);
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct SplitSummary {
    const char* name;
    mmf_split split;
};

void print_dataset_summary(const mmf_dataset* ds) {
    const SplitSummary splits[] = {{"train", MMF_SPLIT_TRAIN},
                                   {"valid", MMF_SPLIT_VALID},
                                   {"test", MMF_SPLIT_TEST}};
    size_t total_users = 0, total_items = 0, total_entries = 0;
    for (const auto& s : splits) {
        size_t blocks = 0;
        check(mmf_dataset_block_count(ds, s.split, &blocks), "block count");
        size_t users = 0, items = 0, entries = 0;
        for (size_t i = 0; i < blocks; ++i) {
            size_t r = 0, c = 0, o = 0;
            check(mmf_dataset_block_shape(ds, s.split, i, &r, &c, &o), "block shape");
            users += r;
            items += c;
            entries += o;
        }
        std::cout << s.name << ": " << blocks << " block(s), " << users << " users, " << items
                  << " items, " << entries << " observed entries\n";
        total_users += users;
        total_items += items;
        total_entries += entries;
    }
    std::cout << "total: " << total_users << " users, " << total_items << " items, "
              << total_entries << " observed entries\n";
    double mean = 0.0, stddev = 1.0;
    check(mmf_dataset_norm_stats(ds, &mean, &stddev), "norm stats");
    std::cout << "normalization: mean " << fmt17(mean) << ", std " << fmt17(stddev) << "\n";
}

uint64_t resolve_seed(uint64_t flag_seed) {
    const char* env = std::getenv("MMF_SEED");
    if (env == nullptr || env[0] == '\0') return flag_seed;
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0') {
        std::cerr << "mmf: MMF_SEED is not an unsigned integer: " << env << "\n";
        std::exit(1);
    }
    return uint64_t(parsed);
}

int cmd_prepare(const std::string& input, const std::string& format, bool synthetic,
                const mmf_synthetic_config& synth, double f_train, double f_valid,
                double f_test, size_t episodes, size_t rows, size_t cols, double holdout,
                uint64_t seed, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        std::cerr << "mmf: cannot create " << out_dir << ": " << ec.message() << "\n";
        return 1;
    }
    mmf_dataset* ds = nullptr;
    if (synthetic) {
        mmf_synthetic_config cfg = synth;
        cfg.seed = seed;
        check(mmf_dataset_synthetic(&cfg, &ds), "synthetic family");
    } else {
        check(mmf_dataset_from_file(input.c_str(), format.c_str(), f_train, f_valid, f_test,
                                    seed, &ds),
              "load " + input);
    }
    const std::string train_path = out_dir + "/train.taskset";
    const std::string valid_path = out_dir + "/valid.taskset";
    const std::string test_path = out_dir + "/test.taskset";
    const std::string manifest_path = out_dir + "/meta_test.manifest";
    check(mmf_dataset_save(ds, train_path.c_str(), valid_path.c_str(), test_path.c_str()),
          "save task files");

    mmf_suite* suite = nullptr;
    check(mmf_suite_make(ds, MMF_SPLIT_TEST, episodes, rows, cols, holdout, seed + 1, &suite),
          "draw meta-test episodes");
    check(mmf_suite_save(suite, manifest_path.c_str()), "save " + manifest_path);

    print_dataset_summary(ds);
    std::cout << "meta-test manifest: " << episodes << " episodes of " << rows << "x" << cols
              << ", holdout " << fmt17(holdout) << "\n";
    std::cout << "wrote " << train_path << ", " << valid_path << ", " << test_path << ", "
              << manifest_path << "\n";
    mmf_suite_free(suite);
    mmf_dataset_free(ds);
    return 0;
}

int cmd_train(const std::string& train_path, const std::string& valid_path,
              const mmf_train_config& cfg, const std::string& checkpoint,
              const std::string& log_path) {
    mmf_dataset* ds = nullptr;
    check(mmf_dataset_load(train_path.c_str(), valid_path.c_str(), nullptr, &ds),
          "load task files");
    mmf_model* model = nullptr;
    const mmf_status st = mmf_train(ds, &cfg, log_path.c_str(), &model);
    if (st != MMF_OK && st != MMF_ERR_DIVERGED) die(st, "meta-training");
    std::string diverged_reason;
    if (st == MMF_ERR_DIVERGED) diverged_reason = mmf_last_error();
    check(mmf_model_save(model, checkpoint.c_str()), "save " + checkpoint);
    std::cout << "checkpoint: " << checkpoint << "\n";
    std::cout << "epoch log: " << log_path << "\n";
    mmf_model_free(model);
    mmf_dataset_free(ds);
    if (st == MMF_ERR_DIVERGED) {
        std::cerr << "mmf: training diverged: " << diverged_reason
                  << " (best finite checkpoint written)\n";
        return 1;
    }
    return 0;
}

struct EvalTarget {
    std::string label;
    std::string dataset;
};

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& test_taskset, const std::string& methods_csv,
             const std::string& sweep, double inner_eta, bool eta_given, size_t inner_steps,
             bool steps_given, const mmf_mf_config& mf_flags, size_t episodes, double holdout,
             uint64_t seed, size_t workers, const std::string& dataset_label,
             const std::string& out_path) {
    mmf_model* model = nullptr;
    check(mmf_model_load(checkpoint.c_str(), &model), "load " + checkpoint);
    double eta = inner_eta;
    size_t steps = inner_steps;
    if (!eta_given || !steps_given) {
        double ckpt_eta = 0.0;
        size_t ckpt_steps = 0;
        check(mmf_model_inner_defaults(model, &ckpt_eta, &ckpt_steps), "inner defaults");
        if (!eta_given) eta = ckpt_eta;
        if (!steps_given) steps = ckpt_steps;
    }
    double model_mean = 0.0, model_std = 1.0;
    check(mmf_model_norm_stats(model, &model_mean, &model_std), "model stats");

    const auto methods = split_csv(methods_csv);
    if (methods.empty()) {
        std::cerr << "mmf: --methods is empty\n";
        return 1;
    }

    mmf_report* report = nullptr;
    check(mmf_report_new(&report), "report");
    std::vector<EvalTarget> targets;

    auto check_stats = [&](const mmf_suite* suite, const std::string& what) {
        double mean = 0.0, stddev = 1.0;
        check(mmf_suite_norm_stats(suite, &mean, &stddev), "suite stats");
        if (mean != model_mean || stddev != model_std) {
            std::cerr << "mmf: " << what << ": normalization stats (mean " << fmt17(mean)
                      << ", std " << fmt17(stddev) << ") do not match the checkpoint (mean "
                      << fmt17(model_mean) << ", std " << fmt17(model_std) << ")\n";
            std::exit(1);
        }
    };

    auto eval_one = [&](const mmf_suite* suite, const std::string& method,
                        const std::string& label, const std::string& ds_label, size_t t) {
        const bool needs_model = method == "ours" || method == "prior_product";
        check(mmf_report_eval(report, needs_model ? model : nullptr, suite, method.c_str(),
                              label.c_str(), ds_label.c_str(), eta, t, &mf_flags, workers),
              "evaluate " + label);
        targets.push_back({label, ds_label});
    };

    if (sweep == "size") {
        const size_t sizes[] = {10, 20, 30, 40, 50};
        for (size_t s : sizes) {
            mmf_suite* suite = nullptr;
            check(mmf_suite_from_taskset(test_taskset.c_str(), episodes, s, s, holdout, seed,
                                         &suite),
                  "episodes of size " + std::to_string(s));
            check_stats(suite, "size " + std::to_string(s));
            const std::string ds_label = dataset_label + ":n" + std::to_string(s);
            for (const auto& m : methods) eval_one(suite, m, m, ds_label, steps);
            mmf_suite_free(suite);
        }
    } else {
        mmf_suite* suite = nullptr;
        check(mmf_suite_load(manifest.c_str(), &suite), "load " + manifest);
        check_stats(suite, manifest);
        if (sweep == "inner-steps") {
            const size_t ts[] = {0, 1, 2, 5, 10, 20};
            for (const auto& m : methods) {
                if (m == "ours") {
                    for (size_t t : ts) {
                        eval_one(suite, m, "ours:t" + std::to_string(t), dataset_label, t);
                    }
                } else {
                    eval_one(suite, m, m, dataset_label, steps);
                }
            }
        } else {
            for (const auto& m : methods) eval_one(suite, m, m, dataset_label, steps);
        }
        mmf_suite_free(suite);
    }

    check(mmf_report_save(report, out_path.c_str()), "save " + out_path);
    std::cout << "report: " << out_path << "\n";
    for (const auto& t : targets) {
        double mean = 0.0, se = 0.0;
        check(mmf_report_aggregate(report, t.label.c_str(), t.dataset.c_str(), "test_mse",
                                   "mean", &mean),
              "aggregate");
        check(mmf_report_aggregate(report, t.label.c_str(), t.dataset.c_str(), "test_mse",
                                   "stderr", &se),
              "aggregate");
        std::cout << t.dataset << "\t" << t.label << "\ttest_mse\t" << fmt17(mean) << "\t+-"
                  << fmt17(se) << "\n";
    }
    int finite = 0;
    check(mmf_report_all_finite(report, &finite), "finiteness");
    mmf_report_free(report);
    mmf_model_free(model);
    if (!finite) {
        std::cerr << "mmf: report contains non-finite values\n";
        return 1;
    }
    return 0;
}

int cmd_report(const std::string& input) {
    std::ifstream in(input);
    if (!in.good()) {
        std::cerr << "mmf: cannot read " << input << "\n";
        return 1;
    }
    std::string line;
    if (!std::getline(in, line) || line != "# report v1") {
        std::cerr << "mmf: " << input << " is not a report file\n";
        return 1;
    }
    if (!std::getline(in, line) || line != "method\tdataset\tmetric\tepisode\tvalue") {
        std::cerr << "mmf: " << input << ": bad column header\n";
        return 1;
    }
    struct Key {
        std::string method, dataset, metric;
    };
    std::vector<Key> order;
    std::vector<std::pair<std::string, std::string>> means, stderrs;  // keyed by join
    auto join = [](const Key& k) { return k.method + "\t" + k.dataset + "\t" + k.metric; };
    size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream fields(line);
        Key key;
        std::string episode, value;
        if (!std::getline(fields, key.method, '\t') ||
            !std::getline(fields, key.dataset, '\t') ||
            !std::getline(fields, key.metric, '\t') || !std::getline(fields, episode, '\t') ||
            !std::getline(fields, value)) {
            std::cerr << "mmf: " << input << ":" << lineno << ": expected 5 fields\n";
            return 1;
        }
        if (episode != "mean" && episode != "stderr") continue;
        const std::string k = join(key);
        bool seen = false;
        for (const auto& o : order) {
            if (join(o) == k) {
                seen = true;
                break;
            }
        }
        if (!seen) order.push_back(key);
        (episode == "mean" ? means : stderrs).push_back({k, value});
    }
    auto find = [](const std::vector<std::pair<std::string, std::string>>& rows,
                   const std::string& k) -> std::string {
        for (const auto& [key, value] : rows) {
            if (key == k) return value;
        }
        return "-";
    };
    std::cout << "method\tdataset\tmetric\tmean\tstderr\n";
    for (const auto& key : order) {
        const std::string k = join(key);
        std::cout << k << "\t" << find(means, k) << "\t" << find(stderrs, k) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-learned matrix imputation"};
    app.require_subcommand(1);

    // prepare
    auto* prepare = app.add_subcommand("prepare", "Partition data and draw the meta-test set");
    std::string input, format = "movielens_tab", out_dir;
    bool synthetic = false;
    mmf_synthetic_config synth;
    mmf_synthetic_config_default(&synth);
    double f_train = 0.7, f_valid = 0.1, f_test = 0.2;
    size_t p_episodes = 10, p_rows = 30, p_cols = 30;
    double p_holdout = 0.5;
    uint64_t p_seed = 0;
    prepare->add_option("--input", input, "Rating triplet file");
    prepare->add_option("--format", format, "movielens_tab, movielens_dcolon, or csv")
        ->capture_default_str();
    prepare->add_flag("--synthetic", synthetic, "Generate the synthetic task family instead");
    prepare->add_option("--tasks", synth.train_tasks, "Synthetic training tasks")
        ->capture_default_str();
    prepare->add_option("--valid-tasks", synth.valid_tasks, "Synthetic validation tasks")
        ->capture_default_str();
    prepare->add_option("--test-tasks", synth.test_tasks, "Synthetic test tasks")
        ->capture_default_str();
    prepare->add_option("--task-rows", synth.rows, "Synthetic task rows")
        ->capture_default_str();
    prepare->add_option("--task-cols", synth.cols, "Synthetic task cols")
        ->capture_default_str();
    prepare->add_option("--rank", synth.rank, "Synthetic factor rank")->capture_default_str();
    prepare->add_option("--density", synth.density, "Synthetic observed fraction")
        ->capture_default_str();
    prepare->add_option("--noise-std", synth.noise_std, "Synthetic noise std")
        ->capture_default_str();
    prepare->add_option("--factor-spread", synth.factor_spread,
                        "Synthetic per-task factor spread")
        ->capture_default_str();
    prepare->add_option("--train-fraction", f_train, "User/item fraction for training")
        ->capture_default_str();
    prepare->add_option("--valid-fraction", f_valid, "User/item fraction for validation")
        ->capture_default_str();
    prepare->add_option("--test-fraction", f_test, "User/item fraction for testing")
        ->capture_default_str();
    prepare->add_option("--episodes", p_episodes, "Meta-test episodes")->capture_default_str();
    prepare->add_option("--rows", p_rows, "Episode rows")->capture_default_str();
    prepare->add_option("--cols", p_cols, "Episode cols")->capture_default_str();
    prepare->add_option("--holdout", p_holdout, "Held-out fraction per meta-test episode")
        ->capture_default_str();
    prepare->add_option("--seed", p_seed, "RNG seed (MMF_SEED overrides)")
        ->capture_default_str();
    prepare->add_option("--out-dir", out_dir, "Output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Meta-train a prior generator");
    std::string train_taskset, valid_taskset, checkpoint, log_path;
    mmf_train_config tc;
    mmf_train_config_default(&tc);
    train->add_option("--train-taskset", train_taskset, "Training task file")->required();
    train->add_option("--valid-taskset", valid_taskset, "Validation task file")->required();
    train->add_option("--epochs", tc.epochs, "Meta-training epochs")->capture_default_str();
    train->add_option("--batches-per-epoch", tc.batches_per_epoch, "Batches per epoch")
        ->capture_default_str();
    train->add_option("--batch-size", tc.batch_size, "Episodes per batch")
        ->capture_default_str();
    train->add_option("--outer-lr", tc.outer_lr, "Outer Adam learning rate")
        ->capture_default_str();
    train->add_option("--rows", tc.rows, "Episode rows")->capture_default_str();
    train->add_option("--cols", tc.cols, "Episode cols")->capture_default_str();
    train->add_option("--ratio", tc.ratio, "Adaptation fraction per training episode")
        ->capture_default_str();
    train->add_option("--inner-eta", tc.inner_eta, "Adaptation step size")
        ->capture_default_str();
    train->add_option("--inner-steps", tc.inner_steps, "Adaptation steps")
        ->capture_default_str();
    train->add_option("--dropout", tc.dropout_rate, "Dropout rate")->capture_default_str();
    train->add_option("--patience", tc.patience, "Early stopping patience in epochs")
        ->capture_default_str();
    train->add_option("--valid-episodes", tc.valid_episodes, "Validation suite size")
        ->capture_default_str();
    train->add_option("--exml-layers", tc.exml_layers, "Exchangeable layers")
        ->capture_default_str();
    train->add_option("--channels", tc.channels, "Exchangeable layer channels")
        ->capture_default_str();
    train->add_option("--ff-hidden", tc.ff_hidden, "Prior network hidden width")
        ->capture_default_str();
    train->add_option("--ff-weight-layers", tc.ff_weight_layers, "Prior network weight layers")
        ->capture_default_str();
    train->add_option("--factors", tc.factors, "Latent factors")->capture_default_str();
    train->add_option("--workers", tc.workers, "Episode evaluation threads")
        ->capture_default_str();
    train->add_option("--seed", tc.seed, "RNG seed (MMF_SEED overrides)")
        ->capture_default_str();
    train->add_option("--checkpoint", checkpoint, "Checkpoint output path")->required();
    train->add_option("--log", log_path, "Epoch log output path (default <checkpoint>.log)");

    // eval
    auto* eval = app.add_subcommand("eval", "Score methods on a meta-test manifest");
    std::string eval_checkpoint, manifest, test_taskset, methods = "ours,mean,mf,prior_product";
    std::string sweep = "none", dataset_label = "data", report_out;
    double e_eta = 0.0;
    size_t e_steps = 0;
    mmf_mf_config mf_flags;
    mmf_mf_config_default(&mf_flags);
    std::vector<double> mf_wd_grid, mf_lr_grid;
    size_t e_episodes = 10;
    double e_holdout = 0.5;
    uint64_t e_seed = 0;
    size_t e_workers = 1;
    eval->add_option("--checkpoint", eval_checkpoint, "Trained model checkpoint")->required();
    eval->add_option("--manifest", manifest, "Meta-test manifest");
    eval->add_option("--test-taskset", test_taskset, "Test task file (size sweep)");
    eval->add_option("--methods", methods, "Comma list: ours,mean,mf,prior_product")
        ->capture_default_str();
    auto* sweep_opt = eval->add_option("--sweep", sweep, "none, size, or inner-steps")
                          ->check(CLI::IsMember({"none", "size", "inner-steps"}))
                          ->capture_default_str();
    auto* eta_opt = eval->add_option("--inner-eta", e_eta, "Adaptation step size "
                                                           "(default: checkpoint)");
    auto* steps_opt = eval->add_option("--inner-steps", e_steps, "Adaptation steps "
                                                                 "(default: checkpoint)");
    eval->add_option("--mf-k", mf_flags.k, "MF latent factors")->capture_default_str();
    eval->add_option("--mf-wd-grid", mf_wd_grid, "MF weight decay grid");
    eval->add_option("--mf-lr-grid", mf_lr_grid, "MF learning rate grid");
    eval->add_option("--mf-iters", mf_flags.max_iters, "MF iterations")->capture_default_str();
    eval->add_option("--mf-init", mf_flags.init_scale, "MF init scale")->capture_default_str();
    eval->add_option("--mf-rel-tol", mf_flags.rel_tol, "MF relative stop tolerance")
        ->capture_default_str();
    eval->add_option("--mf-holdout", mf_flags.holdout, "MF grid search holdout fraction")
        ->capture_default_str();
    eval->add_option("--mf-seed", mf_flags.seed, "MF RNG seed")->capture_default_str();
    eval->add_option("--episodes", e_episodes, "Episodes per regenerated size-sweep suite")
        ->capture_default_str();
    eval->add_option("--holdout", e_holdout, "Held-out fraction for regenerated suites")
        ->capture_default_str();
    eval->add_option("--seed", e_seed, "RNG seed for regenerated suites (MMF_SEED overrides)")
        ->capture_default_str();
    eval->add_option("--workers", e_workers, "Episode evaluation threads")
        ->capture_default_str();
    eval->add_option("--dataset-label", dataset_label, "Dataset column value")
        ->capture_default_str();
    eval->add_option("--out", report_out, "Report output path")->required();

    // report
    auto* report = app.add_subcommand("report", "Print the aggregate rows of a report");
    std::string report_in;
    report->add_option("--input", report_in, "Report file")->required();

    CLI11_PARSE(app, argc, argv);

    if (prepare->parsed()) {
        if (synthetic == !input.empty()) {  // exactly one source
            std::cerr << "mmf: prepare needs exactly one of --input or --synthetic\n";
            return 1;
        }
        return cmd_prepare(input, format, synthetic, synth, f_train, f_valid, f_test,
                           p_episodes, p_rows, p_cols, p_holdout, resolve_seed(p_seed),
                           out_dir);
    }
    if (train->parsed()) {
        tc.seed = resolve_seed(tc.seed);
        if (log_path.empty()) log_path = checkpoint + ".log";
        return cmd_train(train_taskset, valid_taskset, tc, checkpoint, log_path);
    }
    if (eval->parsed()) {
        if (sweep == "size" && test_taskset.empty()) {
            std::cerr << "mmf: --sweep size needs --test-taskset\n";
            return 1;
        }
        if (sweep != "size" && manifest.empty()) {
            std::cerr << "mmf: eval needs --manifest\n";
            return 1;
        }
        (void)sweep_opt;
        if (!mf_wd_grid.empty()) {
            mf_flags.weight_decay_grid = mf_wd_grid.data();
            mf_flags.weight_decay_count = mf_wd_grid.size();
        }
        if (!mf_lr_grid.empty()) {
            mf_flags.lr_grid = mf_lr_grid.data();
            mf_flags.lr_count = mf_lr_grid.size();
        }
        return cmd_eval(eval_checkpoint, manifest, test_taskset, methods, sweep, e_eta,
                        eta_opt->count() > 0, e_steps, steps_opt->count() > 0, mf_flags,
                        e_episodes, e_holdout, resolve_seed(e_seed), e_workers, dataset_label,
                        report_out);
    }
    return cmd_report(report_in);
}
