#include "fams/stochastic_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fams/errors.hpp"
#include "fams/parallel.hpp"

namespace fams {

namespace {

constexpr double kScoreClampLo = 1e-12;
constexpr double kScoreClampHi = 1.0 - 1e-12;
constexpr double kSigmaFloor = 1e-300;

}  // namespace

int MlpTopology::param_count() const {
    int d = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        d += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    }
    return d;
}

void MlpTopology::validate() const {
    if (layer_sizes.size() < 2) {
        throw ShapeError("MlpTopology: need at least input and output layers");
    }
    if (layer_sizes.back() != 1) {
        throw ShapeError("MlpTopology: last layer size must be 1");
    }
    for (int s : layer_sizes) {
        if (s < 1) throw ShapeError("MlpTopology: layer sizes must be >= 1");
    }
}

std::string to_string(MlpTopology::Activation a) {
    return a == MlpTopology::Activation::ReLU ? "relu" : "tanh";
}

MlpTopology::Activation activation_from_string(const std::string& s) {
    if (s == "relu") return MlpTopology::Activation::ReLU;
    if (s == "tanh") return MlpTopology::Activation::Tanh;
    throw ConfigError("activation: expected 'relu' or 'tanh', got '" + s + "'");
}

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

double softplus_grad(double x) { return sigmoid(x); }

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double GaussianWeightDist::sigma(std::size_t i) const {
    return std::max(softplus(rho[i]), kSigmaFloor);
}

std::vector<double> GaussianWeightDist::sigma_vec() const {
    std::vector<double> s(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) s[i] = sigma(i);
    return s;
}

void GaussianWeightDist::validate() const {
    topology.validate();
    const auto d = static_cast<std::size_t>(topology.param_count());
    if (theta.size() != d || rho.size() != d) {
        throw ShapeError("GaussianWeightDist: parameter vectors do not match topology");
    }
    for (std::size_t i = 0; i < d; ++i) {
        if (!std::isfinite(theta[i]) || !std::isfinite(rho[i])) {
            throw DataError("GaussianWeightDist: non-finite parameter");
        }
    }
}

void GradPair::axpy(double alpha, const GradPair& other) {
    for (std::size_t i = 0; i < d_theta.size(); ++i) {
        d_theta[i] += alpha * other.d_theta[i];
        d_rho[i] += alpha * other.d_rho[i];
    }
}

void GradPair::scale(double alpha) {
    for (std::size_t i = 0; i < d_theta.size(); ++i) {
        d_theta[i] *= alpha;
        d_rho[i] *= alpha;
    }
}

double GradPair::squared_norm() const {
    double s = 0.0;
    for (double v : d_theta) s += v * v;
    for (double v : d_rho) s += v * v;
    return s;
}

GaussianWeightDist init_dist(const MlpTopology& topology, SeededRng& rng, double init_scale) {
    topology.validate();
    if (!(init_scale > 0.0)) {
        throw ConfigError("init_scale: must be > 0");
    }
    const int d = topology.param_count();
    GaussianWeightDist dist;
    dist.topology = topology;
    dist.theta.assign(d, 0.0);
    dist.rho.assign(d, softplus_inv(init_scale));

    std::size_t off = 0;
    const int layers = static_cast<int>(topology.layer_sizes.size()) - 1;
    for (int l = 0; l < layers; ++l) {
        const int fan_in = topology.layer_sizes[l];
        const int fan_out = topology.layer_sizes[l + 1];
        // He-style hidden layers; the output layer is damped so a fresh
        // network scores near 0.5 instead of inheriting a random label bias.
        const double std_dev = std::sqrt(2.0 / fan_in) * (l + 1 == layers ? 0.05 : 1.0);
        for (int i = 0; i < fan_out * fan_in; ++i) {
            dist.theta[off + i] = std_dev * rng.next_normal();
        }
        off += static_cast<std::size_t>(fan_out) * fan_in;
        off += fan_out;  // biases stay 0
    }
    return dist;
}

SampledNetwork sample(const GaussianWeightDist& dist, SeededRng& rng) {
    const std::size_t d = dist.theta.size();
    SampledNetwork net;
    net.source = &dist;
    net.noise.resize(d);
    rng.normal_fill(net.noise);
    net.weights.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        net.weights[i] = dist.theta[i] + dist.sigma(i) * net.noise[i];
    }
    return net;
}

SampledNetwork sample_mean(const GaussianWeightDist& dist) {
    SampledNetwork net;
    net.source = &dist;
    net.noise.assign(dist.theta.size(), 0.0);
    net.weights = dist.theta;
    return net;
}

namespace {

inline double activate(double z, MlpTopology::Activation a) {
    return a == MlpTopology::Activation::ReLU ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

inline double activate_grad(double z, MlpTopology::Activation a) {
    if (a == MlpTopology::Activation::ReLU) return z > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

struct ForwardCache {
    // acts[0] = input; acts[l] = post-activation of layer l.
    std::vector<std::vector<double>> acts;
    // pre[l] = pre-activation of layer l+1 (z values).
    std::vector<std::vector<double>> pre;
    double raw_score = 0.0;    // sigmoid(z_out) before clamping
    double score = 0.0;        // clamped to (0,1)
};

void run_forward(const SampledNetwork& net, std::span<const double> x, ForwardCache& cache) {
    const MlpTopology& topo = net.source->topology;
    if (static_cast<int>(x.size()) != topo.input_dim()) {
        throw ShapeError("forward: input length " + std::to_string(x.size()) +
                         " != topology input dim " + std::to_string(topo.input_dim()));
    }
    const int layers = topo.layer_count();
    cache.acts.assign(layers + 1, {});
    cache.pre.assign(layers, {});
    cache.acts[0].assign(x.begin(), x.end());

    const double* w = net.weights.data();
    std::size_t off = 0;
    for (int l = 0; l < layers; ++l) {
        const int fan_in = topo.layer_sizes[l];
        const int fan_out = topo.layer_sizes[l + 1];
        const std::vector<double>& in = cache.acts[l];
        std::vector<double>& z = cache.pre[l];
        z.assign(fan_out, 0.0);
        for (int o = 0; o < fan_out; ++o) {
            const double* row = w + off + static_cast<std::size_t>(o) * fan_in;
            double acc = 0.0;
            for (int i = 0; i < fan_in; ++i) acc += row[i] * in[i];
            z[o] = acc + w[off + static_cast<std::size_t>(fan_out) * fan_in + o];
        }
        off += static_cast<std::size_t>(fan_out) * (fan_in + 1);

        std::vector<double>& out = cache.acts[l + 1];
        out.assign(fan_out, 0.0);
        if (l + 1 == layers) {
            cache.raw_score = sigmoid(z[0]);
            cache.score = std::clamp(cache.raw_score, kScoreClampLo, kScoreClampHi);
            out[0] = cache.score;
        } else {
            for (int o = 0; o < fan_out; ++o) out[o] = activate(z[o], topo.activation);
        }
    }
}

// Backprop from the clamped BCE through the cached forward pass into dw.
// Returns the loss value.
double backprop_weights(const SampledNetwork& net, const ForwardCache& cache, int y,
                        std::span<double> dw) {
    const MlpTopology& topo = net.source->topology;
    const int layers = topo.layer_count();

    const double s = cache.score;
    const double sc = std::clamp(s, kBceClamp, 1.0 - kBceClamp);
    const double loss = -(y * std::log(sc) + (1 - y) * std::log(1.0 - sc));

    // dL/dz at the output unit. Zero when either clamp is active: the
    // clamped composite is flat there, which is what finite differences see.
    double dloss_dz = 0.0;
    if (s > kBceClamp && s < 1.0 - kBceClamp &&
        cache.raw_score > kScoreClampLo && cache.raw_score < kScoreClampHi) {
        dloss_dz = cache.raw_score - y;
    }

    std::vector<double> delta{dloss_dz};
    std::size_t off = net.weights.size();
    for (int l = layers - 1; l >= 0; --l) {
        const int fan_in = topo.layer_sizes[l];
        const int fan_out = topo.layer_sizes[l + 1];
        off -= static_cast<std::size_t>(fan_out) * (fan_in + 1);
        const std::vector<double>& in = cache.acts[l];
        const double* w = net.weights.data() + off;

        for (int o = 0; o < fan_out; ++o) {
            const double d = delta[o];
            double* dw_row = dw.data() + off + static_cast<std::size_t>(o) * fan_in;
            for (int i = 0; i < fan_in; ++i) dw_row[i] += d * in[i];
            dw[off + static_cast<std::size_t>(fan_out) * fan_in + o] += d;
        }
        if (l > 0) {
            std::vector<double> prev(fan_in, 0.0);
            for (int i = 0; i < fan_in; ++i) {
                double acc = 0.0;
                for (int o = 0; o < fan_out; ++o) {
                    acc += w[static_cast<std::size_t>(o) * fan_in + i] * delta[o];
                }
                prev[i] = acc * activate_grad(cache.pre[l - 1][i], topo.activation);
            }
            delta = std::move(prev);
        }
    }
    return loss;
}

}  // namespace

double forward(const SampledNetwork& net, std::span<const double> x) {
    ForwardCache cache;
    run_forward(net, x, cache);
    return cache.score;
}

double accumulate_bce_weight_grad(const SampledNetwork& net, std::span<const double> x,
                                  int y, std::span<double> dw) {
    ForwardCache cache;
    run_forward(net, x, cache);
    return backprop_weights(net, cache, y, dw);
}

GradPair backward_bce(const SampledNetwork& net, std::span<const double> x, int y) {
    const GaussianWeightDist& dist = *net.source;
    const std::size_t d = dist.theta.size();
    std::vector<double> dw(d, 0.0);
    accumulate_bce_weight_grad(net, x, y, dw);

    GradPair g;
    g.d_theta = dw;
    g.d_rho.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        g.d_rho[i] = dw[i] * net.noise[i] * softplus_grad(dist.rho[i]);
    }
    return g;
}

double kl_divergence(const GaussianWeightDist& q_a, const GaussianWeightDist& q) {
    if (!(q_a.topology == q.topology)) {
        throw ShapeError("kl_divergence: topology mismatch");
    }
    const std::size_t d = q_a.theta.size();
    double kl = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double sa = q_a.sigma(i);
        const double s = q.sigma(i);
        const double diff = q_a.theta[i] - q.theta[i];
        kl += 0.5 * (2.0 * std::log(s / sa) + (sa * sa + diff * diff) / (s * s) - 1.0);
    }
    return kl;
}

KlGradients kl_gradients(const GaussianWeightDist& q_a, const GaussianWeightDist& q) {
    if (!(q_a.topology == q.topology)) {
        throw ShapeError("kl_gradients: topology mismatch");
    }
    const std::size_t d = q_a.theta.size();
    KlGradients g;
    g.d_qa.d_theta.resize(d);
    g.d_qa.d_rho.resize(d);
    g.d_q.d_theta.resize(d);
    g.d_q.d_rho.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double sa = q_a.sigma(i);
        const double s = q.sigma(i);
        const double diff = q_a.theta[i] - q.theta[i];
        const double inv_s2 = 1.0 / (s * s);

        g.d_qa.d_theta[i] = diff * inv_s2;
        g.d_q.d_theta[i] = -diff * inv_s2;
        // d/d sigma_a and d/d sigma, then the softplus chain.
        const double d_sa = sa * inv_s2 - 1.0 / sa;
        const double d_s = 1.0 / s - (sa * sa + diff * diff) * inv_s2 / s;
        g.d_qa.d_rho[i] = d_sa * softplus_grad(q_a.rho[i]);
        g.d_q.d_rho[i] = d_s * softplus_grad(q.rho[i]);
    }
    return g;
}

double predict_mc(const GaussianWeightDist& dist, std::span<const double> x,
                  int n_samples, SeededRng& rng) {
    if (n_samples < 1) {
        throw std::invalid_argument("predict_mc: n_samples must be >= 1");
    }
    double acc = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        acc += forward(sample(dist, rng), x);
    }
    return acc / n_samples;
}

namespace {

std::vector<double> score_rows(const GaussianWeightDist& dist, const DenseMatrix& X,
                               int n_samples, SeededRng& rng, bool parallel) {
    if (n_samples < 1) {
        throw std::invalid_argument("score_dataset: n_samples must be >= 1");
    }
    std::vector<SampledNetwork> nets;
    nets.reserve(n_samples);
    for (int s = 0; s < n_samples; ++s) nets.push_back(sample(dist, rng));

    std::vector<double> scores(X.rows(), 0.0);
    auto body = [&](std::int64_t r) {
        double acc = 0.0;
        for (const SampledNetwork& net : nets) acc += forward(net, X.row(r));
        scores[r] = acc / n_samples;
    };
    if (parallel) {
        par::parallel_for(static_cast<std::int64_t>(X.rows()), body);
    } else {
        for (std::int64_t r = 0; r < static_cast<std::int64_t>(X.rows()); ++r) body(r);
    }
    return scores;
}

}  // namespace

std::vector<double> score_dataset(const GaussianWeightDist& dist, const DenseMatrix& X,
                                  int n_samples, SeededRng& rng) {
    return score_rows(dist, X, n_samples, rng, true);
}

std::vector<double> score_dataset_serial(const GaussianWeightDist& dist, const DenseMatrix& X,
                                         int n_samples, SeededRng& rng) {
    return score_rows(dist, X, n_samples, rng, false);
}

std::string dist_to_json(const GaussianWeightDist& dist) {
    nlohmann::json j;
    j["topology"]["layer_sizes"] = dist.topology.layer_sizes;
    j["topology"]["activation"] = to_string(dist.topology.activation);
    j["theta"] = dist.theta;
    j["rho"] = dist.rho;
    return j.dump(2);
}

GaussianWeightDist dist_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GaussianWeightDist dist;
    dist.topology.layer_sizes = j.at("topology").at("layer_sizes").get<std::vector<int>>();
    dist.topology.activation =
        activation_from_string(j.at("topology").at("activation").get<std::string>());
    dist.theta = j.at("theta").get<std::vector<double>>();
    dist.rho = j.at("rho").get<std::vector<double>>();
    dist.validate();
    return dist;
}

void save_dist(const GaussianWeightDist& dist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_dist: cannot open " + path);
    out << dist_to_json(dist) << "\n";
}

GaussianWeightDist load_dist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dist: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return dist_from_json(text);
}

}  // namespace fams
