#include "mmf/imputer.hpp"

#include <cmath>

#include "mmf/error.hpp"

namespace mmf {

namespace {

void check_matrix_pair(const Tensor& x, const Tensor& mask, const char* where) {
    require(x.rank() == 2 && mask.rank() == 2, ErrorCode::dimension,
            std::string(where) + ": matrix and mask must be rank 2");
    require(x.same_shape(mask), ErrorCode::dimension,
            std::string(where) + ": matrix " + shape_string(x) + " and mask " +
                shape_string(mask) + " differ");
    require(mask.is_binary(), ErrorCode::invalid_argument,
            std::string(where) + ": mask entries must be 0 or 1");
}

}  // namespace

std::vector<std::pair<std::string, grad::Value>> ModelParams::named_parameters() const {
    std::vector<std::pair<std::string, grad::Value>> out;
    for (std::size_t i = 0; i < exml.size(); ++i) {
        const std::string base = "exml" + std::to_string(i) + ".";
        for (std::size_t k = 0; k < exml[i].w.size(); ++k) {
            out.emplace_back(base + "w" + std::to_string(k + 1), exml[i].w[k]);
        }
        out.emplace_back(base + "bias", exml[i].bias);
    }
    for (std::size_t i = 0; i < f_u.layers.size(); ++i) {
        const std::string base = "f_u." + std::to_string(i) + ".";
        out.emplace_back(base + "weight", f_u.layers[i].weight);
        out.emplace_back(base + "bias", f_u.layers[i].bias);
    }
    for (std::size_t i = 0; i < f_v.layers.size(); ++i) {
        const std::string base = "f_v." + std::to_string(i) + ".";
        out.emplace_back(base + "weight", f_v.layers[i].weight);
        out.emplace_back(base + "bias", f_v.layers[i].bias);
    }
    out.emplace_back("lambda_raw", lambda_raw);
    return out;
}

ModelParams ModelParams::clone() const {
    ModelParams copy;
    copy.dims = dims;
    copy.exml.reserve(exml.size());
    for (const auto& layer : exml) {
        ExchangeableLayer l;
        for (std::size_t k = 0; k < layer.w.size(); ++k) {
            l.w[k] = grad::parameter(layer.w[k]->value);
        }
        l.bias = grad::parameter(layer.bias->value);
        l.activation = layer.activation;
        copy.exml.push_back(std::move(l));
    }
    auto clone_ff = [](const FeedForward& src) {
        FeedForward dst;
        dst.layers.reserve(src.layers.size());
        for (const auto& layer : src.layers) {
            dst.layers.push_back({grad::parameter(layer.weight->value),
                                  grad::parameter(layer.bias->value)});
        }
        return dst;
    };
    copy.f_u = clone_ff(f_u);
    copy.f_v = clone_ff(f_v);
    copy.lambda_raw = grad::parameter(lambda_raw->value);
    return copy;
}

double ModelParams::lambda_value() const {
    const double x = lambda_raw->value[0];
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

ModelParams make_model_params(const ModelDims& dims, RngStream& rng) {
    require(dims.exml_layers >= 1 && dims.channels >= 1 && dims.factors >= 1 &&
                dims.ff_hidden >= 1 && dims.ff_weight_layers >= 1,
            ErrorCode::config, "model dims must all be positive");
    ModelParams params;
    params.dims = dims;
    params.exml = make_exml_stack(dims.exml_layers, dims.channels, rng);
    params.f_u = make_feed_forward(dims.channels, dims.ff_hidden, dims.factors,
                                   dims.ff_weight_layers, rng);
    params.f_v = make_feed_forward(dims.channels, dims.ff_hidden, dims.factors,
                                   dims.ff_weight_layers, rng);
    // softplus(ln(e - 1)) = 1, so regularization starts at strength one
    params.lambda_raw = grad::parameter(Tensor::scalar(std::log(std::expm1(1.0))));
    return params;
}

grad::Value map_objective(const Tensor& x, const Tensor& mask, const FactorPair& fp,
                          const grad::Value& lambda) {
    check_matrix_pair(x, mask, "map_objective");
    auto recon = grad::matmul(fp.U, grad::transpose(fp.V));
    auto data = grad::sum(grad::mask_mul(grad::square(grad::sub(recon, grad::constant(x))),
                                         mask));
    auto drift = grad::add(grad::sum(grad::square(grad::sub(fp.U, fp.U0))),
                           grad::sum(grad::square(grad::sub(fp.V, fp.V0))));
    return grad::add(data, grad::mul(lambda, drift));
}

FactorPair adapt_step(const Tensor& x, const Tensor& mask, const FactorPair& fp,
                      const grad::Value& lambda, double eta) {
    check_matrix_pair(x, mask, "adapt_step");
    auto err = grad::mask_mul(grad::sub(grad::matmul(fp.U, grad::transpose(fp.V)),
                                        grad::constant(x)),
                              mask);
    auto grad_u = grad::add(grad::matmul(err, fp.V),
                            grad::mul(lambda, grad::sub(fp.U, fp.U0)));
    auto grad_v = grad::add(grad::matmul(grad::transpose(err), fp.U),
                            grad::mul(lambda, grad::sub(fp.V, fp.V0)));
    FactorPair next;
    next.U = grad::sub(fp.U, grad::scale(grad_u, eta));
    next.V = grad::sub(fp.V, grad::scale(grad_v, eta));
    next.U0 = fp.U0;
    next.V0 = fp.V0;
    return next;
}

FactorPair model_forward(const Tensor& x, const Tensor& mask, const ModelParams& params,
                         const AdaptConfig& cfg, const ForwardContext& ctx) {
    require(x.rank() == 2, ErrorCode::dimension,
            "model_forward: input must be rank 2, got " + shape_string(x));
    require(x.dim(0) > 0 && x.dim(1) > 0, ErrorCode::contract,
            "model_forward: empty matrix " + shape_string(x));
    check_matrix_pair(x, mask, "model_forward");
    require(cfg.steps == 0 || cfg.eta > 0.0, ErrorCode::invalid_argument,
            "model_forward: eta must be positive when steps > 0");

    auto z = exml_stack_forward(params.exml, x, mask, ctx);
    auto [u0, v0] = prior_means(z, params.f_u, params.f_v, ctx);
    FactorPair fp{u0, v0, u0, v0};
    auto lambda = grad::softplus(params.lambda_raw);
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        fp = adapt_step(x, mask, fp, lambda, cfg.eta);
    }
    return fp;
}

Tensor predict(const FactorPair& fp) {
    const Tensor& u = fp.U->value;
    const Tensor& v = fp.V->value;
    require(u.rank() == 2 && v.rank() == 2 && u.dim(1) == v.dim(1), ErrorCode::dimension,
            "predict: factor shapes " + shape_string(u) + " and " + shape_string(v) +
                " are incompatible");
    Tensor out({u.dim(0), v.dim(0)});
    for (std::size_t n = 0; n < u.dim(0); ++n) {
        for (std::size_t m = 0; m < v.dim(0); ++m) {
            double acc = 0.0;
            for (std::size_t k = 0; k < u.dim(1); ++k) acc += u.at2(n, k) * v.at2(m, k);
            out.at2(n, m) = acc;
        }
    }
    return out;
}

grad::Value episode_loss(const Tensor& x_test, const Tensor& mask_test, const FactorPair& fp) {
    check_matrix_pair(x_test, mask_test, "episode_loss");
    double observed = 0.0;
    for (std::size_t i = 0; i < mask_test.numel(); ++i) observed += mask_test[i];
    require(observed >= 1.0, ErrorCode::contract,
            "episode_loss: test mask has no observed entries");
    auto recon = grad::matmul(fp.U, grad::transpose(fp.V));
    auto sq = grad::square(grad::sub(recon, grad::constant(x_test)));
    return grad::scale(grad::sum(grad::mask_mul(sq, mask_test)), 1.0 / observed);
}

}  // namespace mmf
