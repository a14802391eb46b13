#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "fams/errors.hpp"
#include "fams/stochastic_net.hpp"
#include "test_util.hpp"

using namespace fams;
using namespace fams::test;

namespace {

// Straightforward re-implementation of the forward pass, used as the
// duplicate-implementation oracle.
double forward_oracle(const MlpTopology& topo, const std::vector<double>& w,
                      std::vector<double> act) {
    std::size_t off = 0;
    const int layers = static_cast<int>(topo.layer_sizes.size()) - 1;
    for (int l = 0; l < layers; ++l) {
        const int nin = topo.layer_sizes[l];
        const int nout = topo.layer_sizes[l + 1];
        std::vector<double> next(nout, 0.0);
        for (int o = 0; o < nout; ++o) {
            double z = 0.0;
            for (int i = 0; i < nin; ++i) z += w[off + o * nin + i] * act[i];
            z += w[off + nout * nin + o];
            if (l + 1 == layers) {
                next[o] = 1.0 / (1.0 + std::exp(-z));
            } else if (topo.activation == MlpTopology::Activation::ReLU) {
                next[o] = std::max(0.0, z);
            } else {
                next[o] = std::tanh(z);
            }
        }
        act = std::move(next);
        off += static_cast<std::size_t>(nout) * (nin + 1);
    }
    return std::clamp(act[0], 1e-12, 1.0 - 1e-12);
}

double bce_loss(double s, int y) {
    const double sc = std::clamp(s, kBceClamp, 1.0 - kBceClamp);
    return -(y * std::log(sc) + (1 - y) * std::log(1.0 - sc));
}

// Loss as a function of (theta, rho) with frozen noise, for finite differences.
double loss_at(const MlpTopology& topo, std::vector<double> theta, std::vector<double> rho,
               const std::vector<double>& eps, const std::vector<double>& x, int y) {
    GaussianWeightDist dist;
    dist.topology = topo;
    dist.theta = std::move(theta);
    dist.rho = std::move(rho);
    SampledNetwork net = net_with_noise(dist, eps);
    return bce_loss(forward(net, x), y);
}

}  // namespace

TEST_CASE("parameter count matches the fan-in formula") {
    MlpTopology t;
    t.layer_sizes = {768, 128, 64, 32, 1};
    // Recompute independently: sum of (fan_in + 1) * fan_out.
    int expected = 0;
    for (std::size_t l = 0; l + 1 < t.layer_sizes.size(); ++l) {
        expected += (t.layer_sizes[l] + 1) * t.layer_sizes[l + 1];
    }
    CHECK(expected == 108801);
    CHECK(t.param_count() == 108801);

    MlpTopology small;
    small.layer_sizes = {2, 3, 1};
    CHECK(small.param_count() == (2 + 1) * 3 + (3 + 1) * 1);
}

TEST_CASE("init_dist sets sigma to init_scale and is seed deterministic") {
    MlpTopology t;
    t.layer_sizes = {4, 8, 1};
    SeededRng r1(3);
    auto d1 = init_dist(t, r1, 0.05);
    for (std::size_t i = 0; i < d1.rho.size(); ++i) {
        CHECK(std::abs(d1.sigma(i) - 0.05) < 1e-9);
    }
    SeededRng r2(3);
    auto d2 = init_dist(t, r2, 0.05);
    CHECK(d1.theta == d2.theta);

    SeededRng r3(4);
    CHECK_THROWS_AS(init_dist(t, r3, 0.0), ConfigError);
}

TEST_CASE("sample collapses to theta when sigma -> 0") {
    MlpTopology t;
    t.layer_sizes = {2, 2, 1};
    SeededRng rng(7);
    auto dist = init_dist(t, rng, 0.05);
    for (auto& r : dist.rho) r = -40.0;  // sigma ~ 4e-18
    auto net = sample(dist, rng);
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        CHECK(std::abs(net.weights[i] - dist.theta[i]) < 1e-6);
    }
}

TEST_CASE("sampled weights average to theta (d = 10 net)") {
    MlpTopology t;
    t.layer_sizes = {1, 3, 1};
    REQUIRE(t.param_count() == 10);
    SeededRng rng(21);
    auto dist = random_dist(t, rng, 0.5, 0.2, 0.6);

    const int n = 100000;
    std::vector<double> mean(10, 0.0);
    SeededRng draw = rng.split(1);
    for (int s = 0; s < n; ++s) {
        auto net = sample(dist, draw);
        for (int i = 0; i < 10; ++i) mean[i] += net.weights[i];
    }
    for (int i = 0; i < 10; ++i) {
        mean[i] /= n;
        const double se = dist.sigma(i) / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(mean[i] - dist.theta[i]) < 3.0 * se);
    }
}

TEST_CASE("retained noise reproduces the weights exactly") {
    MlpTopology t;
    t.layer_sizes = {3, 4, 1};
    SeededRng rng(9);
    auto dist = random_dist(t, rng);
    auto net = sample(dist, rng);
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        CHECK(net.weights[i] == dist.theta[i] + dist.sigma(i) * net.noise[i]);
    }
}

TEST_CASE("forward closed forms") {
    MlpTopology t;
    t.layer_sizes = {2, 3, 1};
    GaussianWeightDist dist = make_dist(t, std::vector<double>(t.param_count(), 0.0),
                                        std::vector<double>(t.param_count(), 0.1));
    auto net = sample_mean(dist);
    std::vector<double> x{0.3, -0.8};
    CHECK(forward(net, x) == doctest::Approx(0.5));

    MlpTopology one;
    one.layer_sizes = {1, 1};
    GaussianWeightDist d1 = make_dist(one, {1.0, 0.0}, {0.1, 0.1});
    auto n1 = sample_mean(d1);
    std::vector<double> xi{std::log(3.0)};
    CHECK(forward(n1, xi) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("forward matches the duplicate-implementation oracle") {
    for (auto activation : {MlpTopology::Activation::ReLU, MlpTopology::Activation::Tanh}) {
        MlpTopology t;
        t.layer_sizes = {5, 7, 4, 1};
        t.activation = activation;
        SeededRng rng(31);
        auto dist = random_dist(t, rng);
        auto net = sample(dist, rng);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> x(5);
            for (auto& v : x) v = rng.next_normal();
            CHECK(rel_err(forward(net, x), forward_oracle(t, net.weights, x), 1e-12) < 1e-12);
        }
    }
}

TEST_CASE("forward rejects wrong input width") {
    MlpTopology t;
    t.layer_sizes = {3, 2, 1};
    SeededRng rng(5);
    auto dist = random_dist(t, rng);
    auto net = sample(dist, rng);
    std::vector<double> x{1.0, 2.0};
    CHECK_THROWS_AS(forward(net, x), ShapeError);
}

TEST_CASE("forward output stays strictly inside (0,1)") {
    MlpTopology t;
    t.layer_sizes = {1, 2, 1};
    const int d = t.param_count();
    GaussianWeightDist dist = make_dist(t, std::vector<double>(d, 500.0), std::vector<double>(d, 0.01));
    auto net = sample_mean(dist);
    std::vector<double> x{1000.0};
    const double s = forward(net, x);
    CHECK(s > 0.0);
    CHECK(s < 1.0);

    for (auto& v : dist.theta) v = -500.0;
    auto net2 = sample_mean(dist);
    const double s2 = forward(net2, x);
    CHECK(s2 > 0.0);
    CHECK(s2 < 1.0);
}

TEST_CASE("backward_bce matches central finite differences everywhere") {
    SeededRng rng(101);
    for (int rep = 0; rep < 4; ++rep) {
        MlpTopology t;
        t.layer_sizes = {6, 6, 1};  // d = 49
        t.activation = MlpTopology::Activation::Tanh;
        REQUIRE(t.param_count() == 49);
        auto dist = random_dist(t, rng, 0.6, 0.2, 0.8);
        const int d = t.param_count();
        std::vector<double> eps(d);
        for (auto& e : eps) e = rng.next_normal();
        std::vector<double> x(6);
        for (auto& v : x) v = rng.next_normal();
        const int y = rep % 2;

        auto net = net_with_noise(dist, eps);
        GradPair g = backward_bce(net, x, y);

        const double h = 1e-5;
        for (int i = 0; i < d; ++i) {
            auto tp = dist.theta;
            tp[i] += h;
            auto tm = dist.theta;
            tm[i] -= h;
            const double fd_theta =
                (loss_at(t, tp, dist.rho, eps, x, y) - loss_at(t, tm, dist.rho, eps, x, y)) / (2 * h);
            CHECK(rel_err(g.d_theta[i], fd_theta) < 1e-4);

            auto rp = dist.rho;
            rp[i] += h;
            auto rm = dist.rho;
            rm[i] -= h;
            const double fd_rho =
                (loss_at(t, dist.theta, rp, eps, x, y) - loss_at(t, dist.theta, rm, eps, x, y)) / (2 * h);
            CHECK(rel_err(g.d_rho[i], fd_rho) < 1e-4);
        }
    }
}

TEST_CASE("saturated BCE drives the output-unit gradient to zero") {
    MlpTopology t;
    t.layer_sizes = {1, 1};
    GaussianWeightDist dist = make_dist(t, {20.0, 5.0}, {1e-6, 1e-6});
    auto net = sample_mean(dist);
    std::vector<double> x{1.0};
    GradPair g = backward_bce(net, x, 1);  // score ~ 1, y = 1
    for (double v : g.d_theta) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("d_rho vanishes exactly when noise is zero") {
    MlpTopology t;
    t.layer_sizes = {3, 5, 1};
    SeededRng rng(55);
    auto dist = random_dist(t, rng);
    auto net = sample_mean(dist);  // eps = 0
    std::vector<double> x{0.4, -1.0, 2.2};
    GradPair g = backward_bce(net, x, 1);
    for (double v : g.d_rho) CHECK(v == 0.0);
}

TEST_CASE("KL closed-form basics") {
    MlpTopology t;
    t.layer_sizes = {1, 1};  // d = 2
    SeededRng rng(6);
    auto q = random_dist(t, rng);
    CHECK(kl_divergence(q, q) == doctest::Approx(0.0).epsilon(1e-15));

    // Second coordinate identical in both, so only the first contributes:
    // KL(N(1,1) || N(0,1)) = 0.5.
    auto qa = make_dist(t, {1.0, 0.3}, {1.0, 0.7});
    auto qb = make_dist(t, {0.0, 0.3}, {1.0, 0.7});
    CHECK(kl_divergence(qa, qb) == doctest::Approx(0.5).epsilon(1e-12));

    MlpTopology other;
    other.layer_sizes = {2, 1};
    auto qc = make_dist(other, {0, 0, 0}, {1, 1, 1});
    CHECK_THROWS_AS(kl_divergence(qa, qc), ShapeError);
}

TEST_CASE("KL matches the Monte-Carlo log-ratio oracle") {
    MlpTopology t;
    t.layer_sizes = {19, 1};  // d = 20
    REQUIRE(t.param_count() == 20);
    SeededRng rng(404);
    for (int rep = 0; rep < 3; ++rep) {
        auto qa = random_dist(t, rng, 0.5, 0.4, 1.2);
        auto q = random_dist(t, rng, 0.5, 0.4, 1.2);
        const double closed = kl_divergence(qa, q);

        SeededRng draw = rng.split(900 + rep);
        const int n = 1'000'000;
        double acc = 0.0;
        for (int s = 0; s < n; ++s) {
            double term = 0.0;
            for (int i = 0; i < 20; ++i) {
                const double z = draw.next_normal();
                const double sa = qa.sigma(i);
                const double sq = q.sigma(i);
                const double w = qa.theta[i] + sa * z;
                const double dq = (w - q.theta[i]) / sq;
                term += std::log(sq / sa) + 0.5 * (dq * dq - z * z);
            }
            acc += term;
        }
        acc /= n;
        CHECK(rel_err(closed, acc) < 0.01);
    }
}

TEST_CASE("KL nonnegative on random pairs, zero iff equal") {
    MlpTopology t;
    t.layer_sizes = {4, 3, 1};
    SeededRng rng(77);
    for (int rep = 0; rep < 1000; ++rep) {
        auto qa = random_dist(t, rng);
        auto q = random_dist(t, rng);
        CHECK(kl_divergence(qa, q) >= 0.0);
    }
    auto q = random_dist(t, rng);
    CHECK(std::abs(kl_divergence(q, q)) < 1e-12);
}

TEST_CASE("kl_gradients: closed forms and finite differences") {
    MlpTopology t;
    t.layer_sizes = {29, 1};  // d = 30
    REQUIRE(t.param_count() == 30);
    SeededRng rng(88);
    auto qa = random_dist(t, rng, 0.7, 0.3, 1.4);
    auto q = random_dist(t, rng, 0.7, 0.3, 1.4);

    auto g = kl_gradients(qa, q);
    for (int i = 0; i < 30; ++i) {
        const double s = q.sigma(i);
        CHECK(rel_err(g.d_q.d_theta[i], -(qa.theta[i] - q.theta[i]) / (s * s)) < 1e-12);
    }

    auto at = [&](const std::vector<double>& ta, const std::vector<double>& ra,
                  const std::vector<double>& tq, const std::vector<double>& rq) {
        GaussianWeightDist a;
        a.topology = t;
        a.theta = ta;
        a.rho = ra;
        GaussianWeightDist b;
        b.topology = t;
        b.theta = tq;
        b.rho = rq;
        return kl_divergence(a, b);
    };
    const double h = 1e-5;
    for (int i = 0; i < 30; ++i) {
        auto bump = [&](std::vector<double> v, double dv) {
            v[i] += dv;
            return v;
        };
        const double fd_ta = (at(bump(qa.theta, h), qa.rho, q.theta, q.rho) -
                              at(bump(qa.theta, -h), qa.rho, q.theta, q.rho)) / (2 * h);
        const double fd_ra = (at(qa.theta, bump(qa.rho, h), q.theta, q.rho) -
                              at(qa.theta, bump(qa.rho, -h), q.theta, q.rho)) / (2 * h);
        const double fd_tq = (at(qa.theta, qa.rho, bump(q.theta, h), q.rho) -
                              at(qa.theta, qa.rho, bump(q.theta, -h), q.rho)) / (2 * h);
        const double fd_rq = (at(qa.theta, qa.rho, q.theta, bump(q.rho, h)) -
                              at(qa.theta, qa.rho, q.theta, bump(q.rho, -h))) / (2 * h);
        CHECK(rel_err(g.d_qa.d_theta[i], fd_ta, 1e-4) < 1e-6);
        CHECK(rel_err(g.d_qa.d_rho[i], fd_ra, 1e-4) < 1e-6);
        CHECK(rel_err(g.d_q.d_theta[i], fd_tq, 1e-4) < 1e-6);
        CHECK(rel_err(g.d_q.d_rho[i], fd_rq, 1e-4) < 1e-6);
    }

    auto gg = kl_gradients(qa, qa);
    for (double v : gg.d_qa.d_theta) CHECK(v == 0.0);
}

TEST_CASE("reparameterized gradients are unbiased for the MC expected loss") {
    MlpTopology t;
    t.layer_sizes = {3, 4, 1};  // d = 21
    t.activation = MlpTopology::Activation::Tanh;
    SeededRng rng(909);
    auto dist = random_dist(t, rng, 0.5, 0.1, 0.4);
    std::vector<double> x{0.5, -0.2, 1.1};
    const int y = 1;
    const int d = t.param_count();

    const int n = 10000;
    std::vector<std::vector<double>> eps(n, std::vector<double>(d));
    for (auto& e : eps) {
        for (auto& v : e) v = rng.next_normal();
    }

    std::vector<double> mean_grad(d, 0.0);
    std::vector<double> sq_grad(d, 0.0);
    for (const auto& e : eps) {
        auto net = net_with_noise(dist, e);
        GradPair g = backward_bce(net, x, y);
        for (int i = 0; i < d; ++i) {
            mean_grad[i] += g.d_theta[i];
            sq_grad[i] += g.d_theta[i] * g.d_theta[i];
        }
    }

    const double h = 1e-4;
    for (int i = 0; i < d; i += 4) {  // a subset of coordinates keeps this quick
        const double m = mean_grad[i] / n;
        const double var = sq_grad[i] / n - m * m;
        const double se = std::sqrt(std::max(var, 0.0) / n);

        auto tp = dist.theta;
        tp[i] += h;
        auto tm = dist.theta;
        tm[i] -= h;
        double up = 0.0;
        double down = 0.0;
        for (const auto& e : eps) {
            up += loss_at(t, tp, dist.rho, e, x, y);
            down += loss_at(t, tm, dist.rho, e, x, y);
        }
        const double fd = (up - down) / (2 * h * n);
        CHECK(std::abs(m - fd) <= 3.0 * se + 1e-7);
    }
}

TEST_CASE("predict_mc degenerate scale and convergence") {
    MlpTopology t;
    t.layer_sizes = {2, 3, 1};
    SeededRng rng(33);
    auto dist = random_dist(t, rng, 0.8, 0.3, 0.9);
    std::vector<double> x{0.7, -0.4};

    auto frozen = dist;
    for (auto& r : frozen.rho) r = -40.0;
    SeededRng r1(1);
    const double mc = predict_mc(frozen, x, 7, r1);
    CHECK(mc == doctest::Approx(forward(sample_mean(frozen), x)).epsilon(1e-9));

    SeededRng r2(2);
    const double small = predict_mc(dist, x, 10000, r2);
    SeededRng r3(3);
    // Standard error of the n = 1e4 estimate, from the draws themselves.
    double mean = 0.0;
    double sq = 0.0;
    SeededRng r4(2);
    for (int i = 0; i < 10000; ++i) {
        const double v = forward(sample(dist, r4), x);
        mean += v;
        sq += v * v;
    }
    mean /= 10000;
    const double se = std::sqrt((sq / 10000 - mean * mean) / 10000);
    const double big = predict_mc(dist, x, 100000, r3);
    CHECK(std::abs(small - big) < 3.0 * se + 1e-12);

    SeededRng r5(4);
    const double five = predict_mc(dist, x, 5, r5);
    CHECK(five > 0.0);
    CHECK(five < 1.0);
}

TEST_CASE("score_dataset parallel matches serial bitwise") {
    MlpTopology t;
    t.layer_sizes = {4, 5, 1};
    SeededRng rng(66);
    auto dist = random_dist(t, rng);
    DenseMatrix X(200, 4);
    for (auto& v : X.data()) v = rng.next_normal();

    SeededRng ra(9);
    SeededRng rb(9);
    auto par = score_dataset(dist, X, 5, ra);
    auto ser = score_dataset_serial(dist, X, 5, rb);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) CHECK(par[i] == ser[i]);
}

TEST_CASE("weight distribution JSON round trip is lossless") {
    MlpTopology t;
    t.layer_sizes = {3, 2, 1};
    t.activation = MlpTopology::Activation::Tanh;
    SeededRng rng(14);
    auto dist = random_dist(t, rng);

    auto back = dist_from_json(dist_to_json(dist));
    CHECK(back.topology == dist.topology);
    CHECK(back.theta == dist.theta);
    CHECK(back.rho == dist.rho);

    const auto path = std::filesystem::temp_directory_path() / "fams_dist_roundtrip.json";
    save_dist(dist, path.string());
    auto loaded = load_dist(path.string());
    CHECK(loaded.theta == dist.theta);
    CHECK(loaded.rho == dist.rho);
    std::filesystem::remove(path);
}
