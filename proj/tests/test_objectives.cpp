#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fams/errors.hpp"
#include "fams/objectives.hpp"
#include "test_util.hpp"

using namespace fams;
using namespace fams::test;

namespace {

SubgroupDataset random_batch(int rows, int dim, SeededRng& rng, const char* id = "b") {
    SubgroupDataset d;
    d.group_id = id;
    DenseMatrix X(rows, dim);
    for (auto& v : X.data()) v = rng.next_normal();
    d.features = std::move(X);
    d.labels.resize(rows);
    for (auto& y : d.labels) y = rng.next_double() < 0.5 ? 0 : 1;
    return d;
}

}  // namespace

TEST_CASE("empirical_bce closed forms") {
    MlpTopology t;
    t.layer_sizes = {2, 1};
    // Zero weights score 0.5 everywhere: loss = ln 2.
    auto zero = make_dist(t, {0, 0, 0}, {0.1, 0.1, 0.1});
    SeededRng rng(3);
    auto batch = random_batch(64, 2, rng);
    CHECK(empirical_bce(sample_mean(zero), batch) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // Saturated correct scores on y=1: the clamp caps the score at 1-1e-7.
    auto sat = make_dist(t, {0, 0, 100.0}, {1e-3, 1e-3, 1e-3});
    SubgroupDataset ones = batch;
    for (auto& y : ones.labels) y = 1;
    const double loss = empirical_bce(sample_mean(sat), ones);
    CHECK(loss == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-6));
    CHECK(loss < 2e-7);

    SubgroupDataset empty;
    empty.group_id = "e";
    empty.features = DenseMatrix(0, 2);
    CHECK_THROWS_AS(empirical_bce(sample_mean(zero), empty), DataError);
}

TEST_CASE("empirical_bce matches a direct-sum oracle") {
    MlpTopology t;
    t.layer_sizes = {3, 4, 1};
    SeededRng rng(17);
    auto dist = random_dist(t, rng);
    auto net = sample(dist, rng);
    auto batch = random_batch(37, 3, rng);

    double oracle = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const double s = std::clamp(forward(net, batch.features.row(r)), kBceClamp, 1.0 - kBceClamp);
        oracle += batch.labels[r] ? -std::log(s) : -std::log(1.0 - s);
    }
    oracle /= static_cast<double>(batch.size());
    CHECK(rel_err(empirical_bce(net, batch), oracle, 1e-12) < 1e-12);
}

TEST_CASE("lower_level_loss composition") {
    MlpTopology t;
    t.layer_sizes = {2, 3, 1};
    SeededRng rng(5);
    auto q = random_dist(t, rng);
    auto qa = random_dist(t, rng);
    auto batch = random_batch(20, 2, rng);

    SeededRng r1(9);
    auto zero_lambda = lower_level_loss(qa, q, batch, 0.0, 5, r1);
    CHECK(zero_lambda.total == zero_lambda.data_term);

    SeededRng r2(9);
    auto same = lower_level_loss(q, q, batch, 0.7, 5, r2);
    CHECK(same.kl_term == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(same.total == doctest::Approx(same.data_term).epsilon(1e-15));

    SeededRng r3(9);
    auto amazon = lower_level_loss(qa, q, batch, 0.4, 5, r3);
    CHECK(amazon.total == amazon.data_term + 0.4 * amazon.kl_term);
}

TEST_CASE("lower_level_loss is monotone in lambda") {
    MlpTopology t;
    t.layer_sizes = {2, 2, 1};
    SeededRng rng(6);
    auto q = random_dist(t, rng);
    auto qa = random_dist(t, rng);
    auto batch = random_batch(16, 2, rng);

    double prev = -1.0;
    for (double lambda : {0.0, 0.1, 0.5, 2.0, 10.0}) {
        SeededRng r(123);  // shared stream: identical data term across lambdas
        auto loss = lower_level_loss(qa, q, batch, lambda, 3, r);
        CHECK(loss.total >= prev);
        prev = loss.total;
    }
}

TEST_CASE("upper_level_loss basics and permutation invariance") {
    MlpTopology t;
    t.layer_sizes = {1, 1};
    SeededRng rng(7);
    auto q = random_dist(t, rng);

    auto same = upper_level_loss({q, q, q}, q);
    CHECK(same.mean_kl == doctest::Approx(0.0).epsilon(1e-15));

    // Two d=1-style dists symmetric about q's mean with equal sigma.
    auto center = make_dist(t, {0.0, 0.5}, {1.0, 0.8});
    auto left = make_dist(t, {-1.2, 0.5}, {0.6, 0.8});
    auto right = make_dist(t, {1.2, 0.5}, {0.6, 0.8});
    auto sym = upper_level_loss({left, right}, center);
    CHECK(sym.per_group_kl.at("0") == doctest::Approx(sym.per_group_kl.at("1")).epsilon(1e-12));

    auto a = random_dist(t, rng);
    auto b = random_dist(t, rng);
    auto c = random_dist(t, rng);
    auto fwd = upper_level_loss({a, b, c}, q);
    auto rev = upper_level_loss({c, a, b}, q);
    CHECK(fwd.mean_kl == doctest::Approx(rev.mean_kl).epsilon(1e-15));

    const double direct =
        (kl_divergence(a, q) + kl_divergence(b, q) + kl_divergence(c, q)) / 3.0;
    CHECK(rel_err(fwd.mean_kl, direct, 1e-12) < 1e-12);
}

TEST_CASE("closed_form_upper_solution: single dist and symmetric pair") {
    MlpTopology t;
    t.layer_sizes = {1, 1};
    SeededRng rng(8);
    auto only = random_dist(t, rng);
    auto sol1 = closed_form_upper_solution({only});
    for (std::size_t i = 0; i < only.theta.size(); ++i) {
        CHECK(sol1.theta[i] == doctest::Approx(only.theta[i]).epsilon(1e-12));
        CHECK(sol1.sigma(i) == doctest::Approx(only.sigma(i)).epsilon(1e-12));
    }

    // Coordinate 0 carries N(-1,1) vs N(+1,1); coordinate 1 is shared.
    auto qa1 = make_dist(t, {-1.0, 0.2}, {1.0, 0.5});
    auto qa2 = make_dist(t, {1.0, 0.2}, {1.0, 0.5});
    auto sol = closed_form_upper_solution({qa1, qa2});
    CHECK(sol.theta[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sol.sigma(0) * sol.sigma(0) == doctest::Approx(2.0).epsilon(1e-12));

    // 1-D grid search oracle over (theta, sigma^2) for coordinate 0.
    double best = 1e100;
    for (double th = -0.6; th <= 0.6; th += 0.01) {
        for (double v = 1.2; v <= 2.8; v += 0.01) {
            auto cand = make_dist(t, {th, 0.2}, {std::sqrt(v), 0.5});
            best = std::min(best, upper_level_loss({qa1, qa2}, cand).mean_kl);
        }
    }
    CHECK(upper_level_loss({qa1, qa2}, sol).mean_kl <= best + 1e-9);
}

TEST_CASE("closed_form_upper_solution beats random probes and has zero gradient") {
    MlpTopology t;
    t.layer_sizes = {3, 2, 1};
    SeededRng rng(9);
    std::vector<GaussianWeightDist> dists;
    for (int i = 0; i < 4; ++i) dists.push_back(random_dist(t, rng));

    auto sol = closed_form_upper_solution(dists);
    const double at_sol = upper_level_loss(dists, sol).mean_kl;

    for (int probe = 0; probe < 1000; ++probe) {
        auto cand = sol;
        const double scale = 0.001 + 0.3 * rng.next_double();
        for (auto& v : cand.theta) v += scale * rng.next_normal();
        for (auto& v : cand.rho) v += scale * rng.next_normal();
        CHECK(upper_level_loss(dists, cand).mean_kl >= at_sol - 1e-12);
    }

    GradPair mean_grad;
    const std::size_t d = sol.theta.size();
    mean_grad.d_theta.assign(d, 0.0);
    mean_grad.d_rho.assign(d, 0.0);
    for (const auto& qa : dists) {
        mean_grad.axpy(1.0 / dists.size(), kl_gradients(qa, sol).d_q);
    }
    CHECK(std::sqrt(mean_grad.squared_norm()) < 1e-8);
}

TEST_CASE("mc_bce_gradient averages per-draw reparameterized gradients") {
    MlpTopology t;
    t.layer_sizes = {2, 3, 1};
    t.activation = MlpTopology::Activation::Tanh;
    SeededRng rng(44);
    auto dist = random_dist(t, rng, 0.5, 0.2, 0.6);
    auto batch = random_batch(9, 2, rng);

    SeededRng ra(77);
    auto got = mc_bce_gradient(dist, batch, 4, ra);

    // Replay the same stream: same nets, gradient assembled row by row.
    SeededRng rb(77);
    const std::size_t d = dist.theta.size();
    GradPair expect;
    expect.d_theta.assign(d, 0.0);
    expect.d_rho.assign(d, 0.0);
    double loss = 0.0;
    for (int s = 0; s < 4; ++s) {
        auto net = sample(dist, rb);
        loss += empirical_bce(net, batch);
        for (std::size_t r = 0; r < batch.size(); ++r) {
            GradPair g = backward_bce(net, batch.features.row(r), batch.labels[r]);
            expect.axpy(1.0 / (4.0 * batch.size()), g);
        }
    }
    loss /= 4.0;
    CHECK(rel_err(got.mean_loss, loss, 1e-12) < 1e-10);
    for (std::size_t i = 0; i < d; ++i) {
        CHECK(rel_err(got.grad.d_theta[i], expect.d_theta[i], 1e-9) < 1e-9);
        CHECK(rel_err(got.grad.d_rho[i], expect.d_rho[i], 1e-9) < 1e-9);
    }
}

TEST_CASE("batch_bce_gradient is chunk-order deterministic and matches per-row sums") {
    MlpTopology t;
    t.layer_sizes = {3, 4, 1};
    SeededRng rng(45);
    auto dist = random_dist(t, rng);
    auto net = sample(dist, rng);
    auto batch = random_batch(200, 3, rng);

    auto a = batch_bce_gradient(net, batch);
    auto b = batch_bce_gradient(net, batch);
    CHECK(a.grad.d_theta == b.grad.d_theta);
    CHECK(a.mean_loss == b.mean_loss);
    CHECK(rel_err(a.mean_loss, empirical_bce(net, batch), 1e-12) < 1e-10);
}
