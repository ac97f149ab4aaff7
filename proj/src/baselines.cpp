#include "mmf/baselines.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mmf/error.hpp"
#include "mmf/rng.hpp"

namespace mmf {

namespace {

void check_pair(const Tensor& x, const Tensor& b, const char* where) {
    require(x.shape().size() == 2, ErrorCode::dimension,
            std::string(where) + ": x must be rank 2");
    require(x.same_shape(b), ErrorCode::dimension,
            std::string(where) + ": x and mask shapes differ");
    for (std::size_t i = 0; i < b.numel(); ++i) {
        require(b[i] == 0.0 || b[i] == 1.0, ErrorCode::invalid_argument,
                std::string(where) + ": mask entries must be 0 or 1");
    }
}

Tensor random_factors(std::size_t rows, std::size_t k, double scale, RngStream& rng) {
    Tensor t({rows, k});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = (2.0 * rng.uniform() - 1.0) * scale;
    return t;
}

double mf_objective(const Tensor& x, const Tensor& b, const Tensor& u, const Tensor& v,
                    double wd) {
    const std::size_t n = x.shape()[0], m = x.shape()[1], k = u.shape()[1];
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (b[i * m + j] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) dot += u[i * k + c] * v[j * k + c];
            const double e = dot - x[i * m + j];
            obj += e * e;
        }
    }
    double reg = 0.0;
    for (std::size_t i = 0; i < u.numel(); ++i) reg += u[i] * u[i];
    for (std::size_t i = 0; i < v.numel(); ++i) reg += v[i] * v[i];
    return obj + wd * reg;
}

void mf_gradients(const Tensor& x, const Tensor& b, const Tensor& u, const Tensor& v,
                  double wd, Tensor& gu, Tensor& gv) {
    const std::size_t n = x.shape()[0], m = x.shape()[1], k = u.shape()[1];
    for (std::size_t i = 0; i < gu.numel(); ++i) gu[i] = 2.0 * wd * u[i];
    for (std::size_t i = 0; i < gv.numel(); ++i) gv[i] = 2.0 * wd * v[i];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (b[i * m + j] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) dot += u[i * k + c] * v[j * k + c];
            const double e = 2.0 * (dot - x[i * m + j]);
            for (std::size_t c = 0; c < k; ++c) {
                gu[i * k + c] += e * v[j * k + c];
                gv[j * k + c] += e * u[i * k + c];
            }
        }
    }
}

struct CellFit {
    Tensor u, v;
    bool ok = false;
    std::string what;
};

CellFit fit_cell(const Tensor& x, const Tensor& b, const MFConfig& cfg, double wd, double lr,
                 RngStream rng) {
    const std::size_t n = x.shape()[0], m = x.shape()[1];
    CellFit fit;
    fit.u = random_factors(n, cfg.k, cfg.init_scale, rng);
    fit.v = random_factors(m, cfg.k, cfg.init_scale, rng);
    double obj = mf_objective(x, b, fit.u, fit.v, wd);
    if (!std::isfinite(obj)) {
        fit.what = "objective non-finite at initialization";
        return fit;
    }
    Tensor gu(fit.u.shape()), gv(fit.v.shape());
    double step = lr;
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        mf_gradients(x, b, fit.u, fit.v, wd, gu, gv);
        if (!gu.all_finite() || !gv.all_finite()) {
            fit.what = "gradient non-finite at iteration " + std::to_string(iter);
            return fit;
        }
        Tensor cu = fit.u, cv = fit.v;
        double cand = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int halvings = 0; halvings < 40; ++halvings) {
            for (std::size_t i = 0; i < cu.numel(); ++i) cu[i] = fit.u[i] - step * gu[i];
            for (std::size_t i = 0; i < cv.numel(); ++i) cv[i] = fit.v[i] - step * gv[i];
            cand = mf_objective(x, b, cu, cv, wd);
            if (std::isfinite(cand) && cand <= obj) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // stalled at a (local) minimum
        fit.u = cu;
        fit.v = cv;
        const double drop = obj - cand;
        obj = cand;
        if (drop <= cfg.rel_tol * std::max(1.0, std::abs(obj))) break;
    }
    fit.ok = true;
    return fit;
}

double masked_mse(const Tensor& x, const Tensor& mask, const Tensor& u, const Tensor& v) {
    const std::size_t n = x.shape()[0], m = x.shape()[1], k = u.shape()[1];
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (mask[i * m + j] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) dot += u[i * k + c] * v[j * k + c];
            const double e = dot - x[i * m + j];
            sum += e * e;
            ++count;
        }
    }
    return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / double(count);
}

}  // namespace

MFFactors mf_fit(const Tensor& x, const Tensor& b, const MFConfig& cfg,
                 const Tensor& valid_mask) {
    check_pair(x, b, "mf_fit");
    require(cfg.k >= 1, ErrorCode::config, "mf_fit: k must be at least 1");
    require(!cfg.weight_decay_grid.empty() && !cfg.lr_grid.empty(), ErrorCode::config,
            "mf_fit: hyperparameter grids must be nonempty");
    require(cfg.holdout > 0.0 && cfg.holdout < 1.0, ErrorCode::config,
            "mf_fit: holdout fraction must lie strictly between 0 and 1");

    std::vector<std::size_t> observed;
    const std::size_t cells = x.numel();
    for (std::size_t i = 0; i < cells; ++i) {
        if (b[i] == 1.0) observed.push_back(i);
    }
    require(!observed.empty(), ErrorCode::invalid_argument, "mf_fit: no observed entries");

    RngStream root(cfg.seed);
    RngStream holdout_rng = root.child(0);

    // Validation subset of the observed entries, sampled unless supplied.
    Tensor vmask(x.shape());
    if (valid_mask.numel() > 0) {
        require(valid_mask.same_shape(b), ErrorCode::dimension,
                "mf_fit: valid_mask shape differs from the data");
        for (std::size_t i = 0; i < cells; ++i) {
            require(valid_mask[i] == 0.0 || valid_mask[i] == 1.0, ErrorCode::invalid_argument,
                    "mf_fit: valid_mask entries must be 0 or 1");
            require(valid_mask[i] == 0.0 || b[i] == 1.0, ErrorCode::invalid_argument,
                    "mf_fit: valid_mask selects an unobserved entry");
        }
        vmask = valid_mask;
    } else {
        std::size_t want = std::size_t(cfg.holdout * double(observed.size()));
        if (want == 0 && observed.size() >= 2) want = 1;
        if (want >= observed.size()) want = observed.size() - 1;
        if (want > 0) {
            auto picks = holdout_rng.sample_without_replacement(observed.size(), want);
            for (std::size_t p : picks) vmask[observed[p]] = 1.0;
        }
    }

    Tensor train_b = b;
    std::size_t train_count = 0, valid_count = 0;
    for (std::size_t i = 0; i < cells; ++i) {
        if (vmask[i] == 1.0) {
            train_b[i] = 0.0;
            ++valid_count;
        } else if (train_b[i] == 1.0) {
            ++train_count;
        }
    }
    require(valid_count == 0 || train_count >= 1, ErrorCode::invalid_argument,
            "mf_fit: validation holdout leaves no training entries");

    // Grid search; with no validation entries the first cell wins by default.
    double best_wd = cfg.weight_decay_grid.front();
    double best_lr = cfg.lr_grid.front();
    double best_score = std::numeric_limits<double>::infinity();
    bool any_ok = false;
    std::string first_failure;
    std::size_t cell = 0;
    for (double wd : cfg.weight_decay_grid) {
        for (double lr : cfg.lr_grid) {
            CellFit fit = fit_cell(x, train_b, cfg, wd, lr, root.child(2 + cell));
            ++cell;
            if (!fit.ok) {
                if (first_failure.empty()) first_failure = fit.what;
                continue;
            }
            any_ok = true;
            if (valid_count == 0) continue;
            const double score = masked_mse(x, vmask, fit.u, fit.v);
            if (score < best_score) {
                best_score = score;
                best_wd = wd;
                best_lr = lr;
            }
        }
    }
    if (!any_ok) {
        fail(ErrorCode::diverged, "mf_fit: every grid configuration failed (" +
                                      first_failure + ")");
    }

    CellFit refit = fit_cell(x, b, cfg, best_wd, best_lr, root.child(1));
    if (!refit.ok) {
        fail(ErrorCode::diverged, "mf_fit: refit with wd=" + std::to_string(best_wd) +
                                      " lr=" + std::to_string(best_lr) + " failed (" +
                                      refit.what + ")");
    }
    MFFactors out;
    out.u = std::move(refit.u);
    out.v = std::move(refit.v);
    out.weight_decay = best_wd;
    out.lr = best_lr;
    return out;
}

Tensor mf_predict(const MFFactors& factors) {
    const std::size_t n = factors.u.shape()[0], m = factors.v.shape()[0];
    const std::size_t k = factors.u.shape()[1];
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                dot += factors.u[i * k + c] * factors.v[j * k + c];
            }
            out[i * m + j] = dot;
        }
    }
    return out;
}

Tensor mean_predict(const Tensor& x, const Tensor& b) {
    check_pair(x, b, "mean_predict");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (b[i] == 1.0) {
            sum += x[i];
            ++count;
        }
    }
    require(count >= 1, ErrorCode::invalid_argument, "mean_predict: no observed entries");
    return Tensor(x.shape(), sum / double(count));
}

Tensor prior_product_predict(const Tensor& x, const Tensor& b, const ModelParams& params) {
    ForwardContext ctx;
    FactorPair fp = model_forward(x, b, params, AdaptConfig{1e-2, 0}, ctx);
    return predict(fp);
}

}  // namespace mmf
