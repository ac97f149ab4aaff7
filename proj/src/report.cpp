#include "mmf/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mmf/error.hpp"
#include "mmf/parallel.hpp"
#include "mmf/textfmt.hpp"

namespace mmf {

bool Report::all_finite() const {
    for (const auto& row : rows) {
        if (!std::isfinite(row.value)) return false;
    }
    return true;
}

double masked_mse(const Tensor& pred, const Tensor& truth, const Tensor& mask) {
    require(pred.same_shape(truth) && pred.same_shape(mask), ErrorCode::dimension,
            "masked_mse: shape mismatch");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] == 0.0) continue;
        const double e = pred[i] - truth[i];
        sum += e * e;
        ++count;
    }
    require(count >= 1, ErrorCode::invalid_argument, "masked_mse: no entries selected");
    return sum / double(count);
}

EpisodeScores evaluate_method(const EvalRequest& req, const ModelParams* params,
                              const std::vector<Episode>& suite, std::size_t workers) {
    require(!suite.empty(), ErrorCode::invalid_argument, "evaluate_method: empty suite");
    const bool needs_model = req.method == "ours" || req.method == "prior_product";
    require(!needs_model || params != nullptr, ErrorCode::invalid_argument,
            "evaluate_method: method " + req.method + " needs model parameters");
    require(req.method == "ours" || req.method == "mean" || req.method == "mf" ||
                req.method == "prior_product",
            ErrorCode::config, "evaluate_method: unknown method " + req.method);

    EpisodeScores scores;
    scores.test_mse.resize(suite.size());
    scores.train_mse.resize(suite.size());
    parallel_for(suite.size(), workers, [&](std::size_t i) {
        const Episode& ep = suite[i];
        Tensor pred;
        if (req.method == "ours") {
            ForwardContext ctx;
            pred = predict(model_forward(ep.x, ep.b, *params, req.inner, ctx));
        } else if (req.method == "prior_product") {
            pred = prior_product_predict(ep.x, ep.b, *params);
        } else if (req.method == "mean") {
            pred = mean_predict(ep.x, ep.b);
        } else {
            MFConfig cfg = req.mf;
            cfg.seed = req.mf.seed + i;  // independent stream per episode
            pred = mf_predict(mf_fit(ep.x, ep.b, cfg));
        }
        scores.test_mse[i] = masked_mse(pred, ep.xp, ep.bp);
        scores.train_mse[i] = masked_mse(pred, ep.x, ep.b);
    });
    return scores;
}

double mean_of(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / double(v.size());
}

double stderr_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / double(v.size() - 1));
    return sd / std::sqrt(double(v.size()));
}

void append_method_rows(Report& report, const std::string& method_label,
                        const std::string& dataset, const EpisodeScores& scores) {
    require(scores.test_mse.size() == scores.train_mse.size(), ErrorCode::contract,
            "append_method_rows: metric lengths differ");
    const struct {
        const char* name;
        const std::vector<double>& values;
    } metrics[] = {{"test_mse", scores.test_mse}, {"train_mse", scores.train_mse}};
    for (const auto& metric : metrics) {
        for (std::size_t i = 0; i < metric.values.size(); ++i) {
            report.rows.push_back(
                {method_label, dataset, metric.name, std::to_string(i), metric.values[i]});
        }
        report.rows.push_back({method_label, dataset, metric.name, "mean",
                               mean_of(metric.values)});
        report.rows.push_back({method_label, dataset, metric.name, "stderr",
                               stderr_of(metric.values)});
    }
}

void save_report(const Report& report, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io, "cannot write " + path);
    out << "# report v1\n";
    out << "method\tdataset\tmetric\tepisode\tvalue\n";
    for (const auto& row : report.rows) {
        out << row.method << "\t" << row.dataset << "\t" << row.metric << "\t" << row.episode
            << "\t" << format_double(row.value) << "\n";
    }
    require(out.good(), ErrorCode::io, "write failed for " + path);
}

Report load_report(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot read " + path);
    std::string line;
    require(bool(std::getline(in, line)) && line == "# report v1", ErrorCode::parse,
            path + ":1: expected '# report v1'");
    require(bool(std::getline(in, line)) && line == "method\tdataset\tmetric\tepisode\tvalue",
            ErrorCode::parse, path + ":2: bad column header");
    Report report;
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        ScoreRow row;
        std::string value;
        if (!std::getline(fields, row.method, '\t') ||
            !std::getline(fields, row.dataset, '\t') ||
            !std::getline(fields, row.metric, '\t') ||
            !std::getline(fields, row.episode, '\t') || !std::getline(fields, value)) {
            fail(ErrorCode::parse, path + ":" + std::to_string(lineno) + ": expected 5 fields");
        }
        try {
            std::size_t used = 0;
            row.value = std::stod(value, &used);
            require(used == value.size(), ErrorCode::parse, "trailing characters");
        } catch (const Error&) {
            fail(ErrorCode::parse,
                 path + ":" + std::to_string(lineno) + ": bad value '" + value + "'");
        } catch (const std::exception&) {
            fail(ErrorCode::parse,
                 path + ":" + std::to_string(lineno) + ": bad value '" + value + "'");
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace mmf
