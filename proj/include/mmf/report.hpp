#pragma once

#include <string>
#include <vector>

#include "mmf/baselines.hpp"
#include "mmf/episodes.hpp"
#include "mmf/imputer.hpp"

namespace mmf {

// One scored value. `episode` is a 0-based index, or "mean"/"stderr" for the
// aggregate rows computed across a suite.
struct ScoreRow {
    std::string method;
    std::string dataset;
    std::string metric;  // test_mse or train_mse
    std::string episode;
    double value = 0.0;
};

struct Report {
    std::vector<ScoreRow> rows;
    bool all_finite() const;
};

// Per-episode scores of one method over a suite.
struct EpisodeScores {
    std::vector<double> test_mse;
    std::vector<double> train_mse;
};

// What to score: method is one of ours, mean, mf, prior_product; label is the
// method column value in the report (lets sweeps tag variants like ours:t5).
struct EvalRequest {
    std::string method = "ours";
    std::string label = "ours";
    AdaptConfig inner{1e-2, 10};
    MFConfig mf;
};

double masked_mse(const Tensor& pred, const Tensor& truth, const Tensor& mask);

// Scores the request on every episode. `params` may be null for methods that
// do not use the model (mean, mf).
EpisodeScores evaluate_method(const EvalRequest& req, const ModelParams* params,
                              const std::vector<Episode>& suite, std::size_t workers);

// Appends per-episode rows plus mean and standard error rows for both metrics.
void append_method_rows(Report& report, const std::string& method_label,
                        const std::string& dataset, const EpisodeScores& scores);

double mean_of(const std::vector<double>& v);
double stderr_of(const std::vector<double>& v);

void save_report(const Report& report, const std::string& path);
Report load_report(const std::string& path);

}  // namespace mmf
