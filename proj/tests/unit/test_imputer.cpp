#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "mmf/error.hpp"
#include "mmf/imputer.hpp"
#include "mmf/rng.hpp"
#include "oracles.hpp"

using namespace mmf;
namespace g = mmf::grad;

namespace {

ModelDims tiny_dims() {
    ModelDims d;
    d.exml_layers = 2;
    d.channels = 3;
    d.ff_hidden = 4;
    d.ff_weight_layers = 2;
    d.factors = 2;
    return d;
}

FactorPair pair_from(const Tensor& u, const Tensor& v, const Tensor& u0, const Tensor& v0) {
    return {g::parameter(u), g::parameter(v), g::parameter(u0), g::parameter(v0)};
}

Tensor permute_rows2(const Tensor& t, const std::vector<std::size_t>& perm) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) out.at2(i, j) = t.at2(perm[i], j);
    return out;
}

Tensor permute_cols2(const Tensor& t, const std::vector<std::size_t>& perm) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) out.at2(i, j) = t.at2(i, perm[j]);
    return out;
}

}  // namespace

TEST_CASE("map objective vanishes at a perfect fit resting on its prior") {
    Tensor u = Tensor::from({2, 1}, {1, 2});
    Tensor v = Tensor::from({2, 1}, {3, 4});
    Tensor x = Tensor::from({2, 2}, {3, 4, 6, 8});
    Tensor mask({2, 2}, 1.0);
    auto fp = pair_from(u, v, u, v);
    auto obj = map_objective(x, mask, fp, g::constant(Tensor::scalar(2.5)));
    CHECK(obj->value[0] == 0.0);
}

TEST_CASE("map objective vanishes with an empty mask at the prior") {
    RngStream rng(3);
    Tensor u = support::random_tensor(rng, {3, 2});
    Tensor v = support::random_tensor(rng, {4, 2});
    Tensor x = support::random_tensor(rng, {3, 4});
    Tensor mask({3, 4}, 0.0);
    auto fp = pair_from(u, v, u, v);
    auto obj = map_objective(x, mask, fp, g::constant(Tensor::scalar(1.0)));
    CHECK(obj->value[0] == 0.0);
}

TEST_CASE("map objective matches a hand evaluation") {
    // u=[1], v=[2], u0=[0.5], v0=[1], x=[[3]], b=[[1]], lambda=2
    // data: (1*2-3)^2 = 1; prior: 2*((0.5)^2+(1)^2) = 2.5; total 3.5
    auto fp = pair_from(Tensor::from({1, 1}, {1}), Tensor::from({1, 1}, {2}),
                        Tensor::from({1, 1}, {0.5}), Tensor::from({1, 1}, {1}));
    auto obj = map_objective(Tensor::from({1, 1}, {3}), Tensor({1, 1}, 1.0), fp,
                             g::constant(Tensor::scalar(2.0)));
    CHECK(obj->value[0] == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("adapt step with zero eta is the identity") {
    RngStream rng(7);
    Tensor u = support::random_tensor(rng, {3, 2});
    Tensor v = support::random_tensor(rng, {4, 2});
    Tensor x = support::random_tensor(rng, {3, 4});
    Tensor mask = support::random_mask(rng, 3, 4);
    auto fp = pair_from(u, v, u, v);
    auto next = adapt_step(x, mask, fp, g::constant(Tensor::scalar(1.0)), 0.0);
    CHECK(next.U->value == u);
    CHECK(next.V->value == v);
}

TEST_CASE("adapt step single cell moves both factors to 1.1") {
    auto fp = pair_from(Tensor::from({1, 1}, {1}), Tensor::from({1, 1}, {1}),
                        Tensor::from({1, 1}, {1}), Tensor::from({1, 1}, {1}));
    auto next = adapt_step(Tensor::from({1, 1}, {2}), Tensor({1, 1}, 1.0), fp,
                           g::constant(Tensor::scalar(0.0)), 0.1);
    CHECK(next.U->value[0] == doctest::Approx(1.1).epsilon(1e-15));
    CHECK(next.V->value[0] == doctest::Approx(1.1).epsilon(1e-15));
}

TEST_CASE("origin with zero priors is a fixed point") {
    Tensor zero_u({3, 2}, 0.0), zero_v({4, 2}, 0.0);
    RngStream rng(11);
    Tensor x = support::random_tensor(rng, {3, 4});
    Tensor mask({3, 4}, 1.0);
    auto fp = pair_from(zero_u, zero_v, zero_u, zero_v);
    auto next = adapt_step(x, mask, fp, g::constant(Tensor::scalar(3.0)), 0.05);
    CHECK(next.U->value == zero_u);
    CHECK(next.V->value == zero_v);
}

TEST_CASE("zero lambda removes the prior pull exactly") {
    RngStream rng(13);
    Tensor u = support::random_tensor(rng, {3, 2});
    Tensor v = support::random_tensor(rng, {4, 2});
    Tensor u0 = support::random_tensor(rng, {3, 2});
    Tensor v0 = support::random_tensor(rng, {4, 2});
    Tensor x = support::random_tensor(rng, {3, 4});
    Tensor mask = support::random_mask(rng, 3, 4);
    const double eta = 0.05;

    auto fp = pair_from(u, v, u0, v0);
    auto next = adapt_step(x, mask, fp, g::constant(Tensor::scalar(0.0)), eta);

    // hand compute the pure data step
    Tensor vt({2, 4});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < 2; ++k) vt.at2(k, i) = v.at2(i, k);
    Tensor p = support::oracle_matmul(u, vt);
    Tensor e({3, 4});
    for (std::size_t i = 0; i < e.numel(); ++i) e[i] = mask[i] * (p[i] - x[i]);
    Tensor gu = support::oracle_matmul(e, v);
    for (std::size_t i = 0; i < gu.numel(); ++i) {
        CHECK(next.U->value[i] == doctest::Approx(u[i] - eta * gu[i]).epsilon(1e-14));
    }
}

TEST_CASE("model forward with zero steps returns the prior means") {
    RngStream rng(17);
    auto params = make_model_params(tiny_dims(), rng);
    Tensor x = support::random_tensor(rng, {4, 5});
    Tensor mask = support::random_mask(rng, 4, 5);
    ForwardContext ctx;
    auto fp = model_forward(x, mask, params, {1e-2, 0}, ctx);
    CHECK(fp.U.get() == fp.U0.get());
    CHECK(fp.V.get() == fp.V0.get());
}

TEST_CASE("model forward rejects empty matrices") {
    RngStream rng(19);
    auto params = make_model_params(tiny_dims(), rng);
    ForwardContext ctx;
    CHECK_THROWS_AS((void)model_forward(Tensor({0, 3}), Tensor({0, 3}), params, {1e-2, 1}, ctx),
                    Error);
}

TEST_CASE("model forward rejects nonpositive eta when stepping") {
    RngStream rng(23);
    auto params = make_model_params(tiny_dims(), rng);
    Tensor x({2, 2}, 1.0);
    Tensor mask({2, 2}, 1.0);
    ForwardContext ctx;
    CHECK_THROWS_AS((void)model_forward(x, mask, params, {0.0, 3}, ctx), Error);
    CHECK_NOTHROW((void)model_forward(x, mask, params, {0.0, 0}, ctx));
}

TEST_CASE("small steps do not increase the map objective") {
    RngStream rng(29);
    auto params = make_model_params(tiny_dims(), rng);
    Tensor x = support::random_tensor(rng, {5, 6});
    Tensor mask = support::random_mask(rng, 5, 6);
    mask.at2(0, 0) = 1.0;
    ForwardContext ctx;

    double eta = 1e-4;
    bool ok = false;
    for (int attempt = 0; attempt < 8 && !ok; ++attempt, eta *= 0.5) {
        auto fp = model_forward(x, mask, params, {eta, 0}, ctx);
        auto lambda = g::softplus(params.lambda_raw);
        double before = map_objective(x, mask, fp, lambda)->value[0];
        for (int t = 0; t < 10; ++t) fp = adapt_step(x, mask, fp, lambda, eta);
        double after = map_objective(x, mask, fp, lambda)->value[0];
        ok = after <= before + 1e-12;
    }
    CHECK(ok);
}

TEST_CASE("model forward stays finite over many steps") {
    RngStream rng(31);
    auto params = make_model_params(tiny_dims(), rng);
    Tensor x = support::random_tensor(rng, {6, 4});
    Tensor mask = support::random_mask(rng, 6, 4);
    ForwardContext ctx;
    auto fp = model_forward(x, mask, params, {1e-2, 20}, ctx);
    CHECK(fp.U->value.all_finite());
    CHECK(fp.V->value.all_finite());
    CHECK(predict(fp).all_finite());
}

TEST_CASE("predict is the outer product for rank one factors") {
    auto fp = pair_from(Tensor::from({2, 1}, {2, 3}), Tensor::from({2, 1}, {1, 4}),
                        Tensor({2, 1}, 0.0), Tensor({2, 1}, 0.0));
    Tensor out = predict(fp);
    CHECK(out == Tensor::from({2, 2}, {2, 8, 3, 12}));

    auto zero = pair_from(Tensor({2, 3}, 0.0), Tensor({4, 3}, 0.0), Tensor({2, 3}, 0.0),
                          Tensor({4, 3}, 0.0));
    CHECK(predict(zero) == Tensor({2, 4}, 0.0));
}

TEST_CASE("predict matches the in graph reconstruction") {
    RngStream rng(37);
    Tensor u = support::random_tensor(rng, {5, 3});
    Tensor v = support::random_tensor(rng, {6, 3});
    auto fp = pair_from(u, v, u, v);
    Tensor out = predict(fp);
    auto recon = g::matmul(fp.U, g::transpose(fp.V));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        CHECK(std::abs(out[i] - recon->value[i]) <= 1e-12);
    }
}

TEST_CASE("episode loss is zero under perfect prediction and one for a unit miss") {
    Tensor u = Tensor::from({2, 1}, {1, 2});
    Tensor v = Tensor::from({2, 1}, {3, 4});
    Tensor x = Tensor::from({2, 2}, {3, 4, 6, 8});
    Tensor mask({2, 2}, 1.0);
    auto fp = pair_from(u, v, u, v);
    CHECK(episode_loss(x, mask, fp)->value[0] == 0.0);

    auto zero = pair_from(Tensor({1, 1}, 0.0), Tensor({1, 1}, 0.0), Tensor({1, 1}, 0.0),
                          Tensor({1, 1}, 0.0));
    Tensor truth = Tensor::from({1, 1}, {1});
    CHECK(episode_loss(truth, Tensor({1, 1}, 1.0), zero)->value[0] == 1.0);
}

TEST_CASE("episode loss matches the loop oracle") {
    RngStream rng(41);
    Tensor u = support::random_tensor(rng, {4, 2});
    Tensor v = support::random_tensor(rng, {5, 2});
    Tensor x = support::random_tensor(rng, {4, 5});
    Tensor mask = support::random_mask(rng, 4, 5);
    mask.at2(1, 1) = 1.0;
    auto fp = pair_from(u, v, u, v);
    double got = episode_loss(x, mask, fp)->value[0];

    double acc = 0.0, count = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        for (std::size_t m = 0; m < 5; ++m) {
            if (mask.at2(n, m) == 0.0) continue;
            double pred = 0.0;
            for (std::size_t k = 0; k < 2; ++k) pred += u.at2(n, k) * v.at2(m, k);
            acc += (pred - x.at2(n, m)) * (pred - x.at2(n, m));
            count += 1.0;
        }
    }
    CHECK(got == doctest::Approx(acc / count).epsilon(1e-14));
}

TEST_CASE("episode loss rejects an empty test mask") {
    auto fp = pair_from(Tensor({2, 1}, 1.0), Tensor({2, 1}, 1.0), Tensor({2, 1}, 1.0),
                        Tensor({2, 1}, 1.0));
    CHECK_THROWS_AS((void)episode_loss(Tensor({2, 2}, 1.0), Tensor({2, 2}, 0.0), fp), Error);
}

TEST_CASE("episode loss is invariant to joint permutations") {
    RngStream rng(43);
    auto params = make_model_params(tiny_dims(), rng);
    Tensor x = support::random_tensor(rng, {5, 6});
    Tensor mask = support::random_mask(rng, 5, 6);
    Tensor xt = support::random_tensor(rng, {5, 6});
    Tensor mt = support::random_mask(rng, 5, 6);
    mt.at2(2, 2) = 1.0;
    ForwardContext ctx;
    AdaptConfig cfg{1e-2, 3};
    double base = episode_loss(xt, mt, model_forward(x, mask, params, cfg, ctx))->value[0];

    std::vector<std::size_t> rperm{4, 2, 0, 3, 1};
    std::vector<std::size_t> cperm{1, 5, 3, 0, 2, 4};
    auto px = permute_cols2(permute_rows2(x, rperm), cperm);
    auto pm = permute_cols2(permute_rows2(mask, rperm), cperm);
    auto pxt = permute_cols2(permute_rows2(xt, rperm), cperm);
    auto pmt = permute_cols2(permute_rows2(mt, rperm), cperm);
    double permuted =
        episode_loss(pxt, pmt, model_forward(px, pm, params, cfg, ctx))->value[0];
    CHECK(std::abs(base - permuted) <= 1e-10);
}

TEST_CASE("episode loss gradients match finite differences for every parameter") {
    RngStream rng(47);
    auto params = make_model_params(tiny_dims(), rng);
    Tensor x = support::random_tensor(rng, {4, 5});
    Tensor mask = support::random_mask(rng, 4, 5);
    mask.at2(0, 1) = 1.0;
    Tensor xt = support::random_tensor(rng, {4, 5});
    Tensor mt = support::random_mask(rng, 4, 5);
    mt.at2(3, 2) = 1.0;
    ForwardContext ctx;
    AdaptConfig cfg{1e-2, 3};

    auto forward = [&]() {
        return episode_loss(xt, mt, model_forward(x, mask, params, cfg, ctx));
    };
    auto loss = forward();
    g::backward(loss);

    std::vector<Tensor*> leaves;
    std::vector<Tensor> analytic;
    for (auto& [name, value] : params.named_parameters()) {
        leaves.push_back(&value->value);
        analytic.push_back(value->grad_buffer());
    }
    auto rep = support::fd_check(leaves, analytic, [&]() { return forward()->value[0]; });
    CHECK(rep.max_rel < 1e-4);
}
