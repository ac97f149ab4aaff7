#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "mmf/error.hpp"
#include "mmf/report.hpp"
#include "mmf/rng.hpp"
#include "mmf/synthetic.hpp"
#include "tmpdir.hpp"

using namespace mmf;

namespace {

std::vector<Episode> small_suite(std::uint64_t seed, std::size_t count) {
    SyntheticConfig cfg;
    cfg.train_tasks = 2;
    cfg.valid_tasks = 1;
    cfg.test_tasks = 3;
    cfg.rows = 10;
    cfg.cols = 10;
    cfg.rank = 2;
    cfg.density = 0.6;
    cfg.seed = seed;
    MetaDataset data = make_synthetic_family(cfg);
    RngStream rng(seed + 1);
    return make_meta_test_suite(data.test_blocks, count, 8, 8, 0.5, rng);
}

ModelParams small_params(std::uint64_t seed) {
    ModelDims dims;
    dims.exml_layers = 2;
    dims.channels = 4;
    dims.ff_hidden = 4;
    dims.ff_weight_layers = 2;
    dims.factors = 3;
    RngStream rng(seed);
    return make_model_params(dims, rng);
}

}  // namespace

TEST_CASE("masked_mse matches a hand computation") {
    Tensor pred({2, 2});
    pred[0] = 1.0;
    pred[1] = 2.0;
    pred[2] = 3.0;
    pred[3] = 4.0;
    Tensor truth({2, 2});
    truth[0] = 0.0;
    truth[1] = 2.0;
    truth[2] = 5.0;
    truth[3] = 4.0;
    Tensor mask({2, 2});
    mask[0] = mask[2] = 1.0;
    CHECK(masked_mse(pred, truth, mask) == doctest::Approx((1.0 + 4.0) / 2.0).epsilon(1e-15));
    mask[2] = 0.0;
    CHECK(masked_mse(pred, truth, mask) == 1.0);
}

TEST_CASE("masked_mse is zero when prediction equals truth") {
    Tensor t({3, 3}, 0.5);
    Tensor mask({3, 3}, 1.0);
    CHECK(masked_mse(t, t, mask) == 0.0);
}

TEST_CASE("masked_mse rejects an empty selection") {
    Tensor t({2, 2});
    Tensor mask({2, 2});
    CHECK_THROWS_AS(masked_mse(t, t, mask), Error);
}

TEST_CASE("mean and stderr aggregates match manual formulas") {
    std::vector<double> v = {1.0, 2.0, 4.0, 5.0};
    CHECK(mean_of(v) == 3.0);
    // sample sd = sqrt(((4+1+1+4)/3)) = sqrt(10/3); stderr = sd / 2
    CHECK(stderr_of(v) == doctest::Approx(std::sqrt(10.0 / 3.0) / 2.0).epsilon(1e-15));
    CHECK(stderr_of({7.0}) == 0.0);
}

TEST_CASE("evaluate_method scores the mean baseline like a manual loop") {
    auto suite = small_suite(101, 4);
    EvalRequest req;
    req.method = "mean";
    req.label = "mean";
    EpisodeScores scores = evaluate_method(req, nullptr, suite, 1);
    REQUIRE(scores.test_mse.size() == suite.size());
    for (std::size_t i = 0; i < suite.size(); ++i) {
        Tensor pred = mean_predict(suite[i].x, suite[i].b);
        CHECK(scores.test_mse[i] ==
              doctest::Approx(masked_mse(pred, suite[i].xp, suite[i].bp)).epsilon(1e-15));
        CHECK(scores.train_mse[i] ==
              doctest::Approx(masked_mse(pred, suite[i].x, suite[i].b)).epsilon(1e-15));
    }
}

TEST_CASE("zero-step ours and prior_product produce identical scores") {
    auto suite = small_suite(103, 5);
    ModelParams params = small_params(7);
    EvalRequest ours;
    ours.method = "ours";
    ours.inner = AdaptConfig{1e-2, 0};
    EvalRequest ablation;
    ablation.method = "prior_product";
    EpisodeScores a = evaluate_method(ours, &params, suite, 1);
    EpisodeScores b = evaluate_method(ablation, &params, suite, 1);
    for (std::size_t i = 0; i < suite.size(); ++i) {
        CHECK(a.test_mse[i] == b.test_mse[i]);
        CHECK(a.train_mse[i] == b.train_mse[i]);
    }
}

TEST_CASE("evaluate_method is deterministic and worker-count independent") {
    auto suite = small_suite(107, 4);
    EvalRequest req;
    req.method = "mf";
    req.mf.k = 2;
    req.mf.weight_decay_grid = {1e-3};
    req.mf.lr_grid = {1e-1};
    req.mf.seed = 9;
    EpisodeScores a = evaluate_method(req, nullptr, suite, 1);
    EpisodeScores b = evaluate_method(req, nullptr, suite, 3);
    for (std::size_t i = 0; i < suite.size(); ++i) {
        CHECK(a.test_mse[i] == b.test_mse[i]);
        CHECK(a.train_mse[i] == b.train_mse[i]);
    }
}

TEST_CASE("evaluate_method validates its request") {
    auto suite = small_suite(109, 2);
    EvalRequest req;
    req.method = "nope";
    CHECK_THROWS_AS(evaluate_method(req, nullptr, suite, 1), Error);
    req.method = "ours";
    CHECK_THROWS_AS(evaluate_method(req, nullptr, suite, 1), Error);  // missing params
    std::vector<Episode> empty;
    req.method = "mean";
    CHECK_THROWS_AS(evaluate_method(req, nullptr, empty, 1), Error);
}

TEST_CASE("append_method_rows emits per-episode plus aggregate rows") {
    Report report;
    EpisodeScores scores;
    scores.test_mse = {1.0, 3.0};
    scores.train_mse = {0.5, 0.5};
    append_method_rows(report, "mean", "demo", scores);
    REQUIRE(report.rows.size() == 8);  // (2 episodes + mean + stderr) x 2 metrics
    CHECK(report.rows[0].method == "mean");
    CHECK(report.rows[0].metric == "test_mse");
    CHECK(report.rows[0].episode == "0");
    CHECK(report.rows[2].episode == "mean");
    CHECK(report.rows[2].value == 2.0);
    CHECK(report.rows[3].episode == "stderr");
    CHECK(report.rows[3].value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(report.rows[4].metric == "train_mse");
    CHECK(report.all_finite());
}

TEST_CASE("report round trips through its text format") {
    Report report;
    EpisodeScores scores;
    scores.test_mse = {0.12345678901234567, 2.5};
    scores.train_mse = {1e-17, 3.0};
    append_method_rows(report, "ours:t5", "synthetic", scores);

    support::TempDir dir;
    auto path = dir.file("report.tsv");
    save_report(report, path);
    Report back = load_report(path);
    REQUIRE(back.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        CHECK(back.rows[i].method == report.rows[i].method);
        CHECK(back.rows[i].dataset == report.rows[i].dataset);
        CHECK(back.rows[i].metric == report.rows[i].metric);
        CHECK(back.rows[i].episode == report.rows[i].episode);
        CHECK(back.rows[i].value == report.rows[i].value);
    }
}

TEST_CASE("report loader rejects malformed files") {
    support::TempDir dir;
    auto path = dir.file("bad.tsv");
    support::TempDir::write_text(path, "not a report\n");
    CHECK_THROWS_AS(load_report(path), Error);

    support::TempDir::write_text(
        path, "# report v1\nmethod\tdataset\tmetric\tepisode\tvalue\na\tb\tc\t0\tx\n");
    CHECK_THROWS_AS(load_report(path), Error);

    support::TempDir::write_text(
        path, "# report v1\nmethod\tdataset\tmetric\tepisode\tvalue\na\tb\tc\t0\n");
    CHECK_THROWS_AS(load_report(path), Error);
}

TEST_CASE("all_finite flags non-finite values") {
    Report report;
    report.rows.push_back({"m", "d", "test_mse", "0", 1.0});
    CHECK(report.all_finite());
    report.rows.push_back({"m", "d", "test_mse", "1", std::nan("")});
    CHECK(!report.all_finite());
}
