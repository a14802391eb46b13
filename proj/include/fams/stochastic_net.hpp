#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fams/numerics.hpp"

namespace fams {

// Fixed fully connected topology: [input, hidden..., 1]. The scalar output
// is squashed by a logistic sigmoid into (0,1).
struct MlpTopology {
    enum class Activation { ReLU, Tanh };

    std::vector<int> layer_sizes;
    Activation activation = Activation::ReLU;

    // d = sum over layers of (fan_in + 1) * fan_out.
    int param_count() const;
    int input_dim() const { return layer_sizes.front(); }
    int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }

    void validate() const;
    bool operator==(const MlpTopology&) const = default;
};

std::string to_string(MlpTopology::Activation a);
MlpTopology::Activation activation_from_string(const std::string& s);

// Factorized Gaussian over the flattened weight vector: w[i] ~ N(theta[i],
// sigma[i]^2) with sigma = softplus(rho), which keeps every scale positive
// no matter where SGD drives rho.
struct GaussianWeightDist {
    MlpTopology topology;
    std::vector<double> theta;
    std::vector<double> rho;

    double sigma(std::size_t i) const;
    std::vector<double> sigma_vec() const;
    void validate() const;
};

double softplus(double x);
double softplus_inv(double y);
// d/dx softplus(x) = logistic(x).
double softplus_grad(double x);
double sigmoid(double x);

// One concrete weight draw w = theta + sigma .* eps with the noise retained
// so gradients can flow back through the deterministic map.
struct SampledNetwork {
    std::vector<double> weights;
    std::vector<double> noise;
    const GaussianWeightDist* source = nullptr;
};

struct GradPair {
    std::vector<double> d_theta;
    std::vector<double> d_rho;

    void axpy(double alpha, const GradPair& other);
    void scale(double alpha);
    double squared_norm() const;
};

// theta ~ N(0, 2/fan_in) per weight (He-style), biases 0; rho chosen so that
// sigma == init_scale everywhere.
GaussianWeightDist init_dist(const MlpTopology& topology, SeededRng& rng, double init_scale);

SampledNetwork sample(const GaussianWeightDist& dist, SeededRng& rng);
// w = theta exactly (eps = 0); the sigma -> 0 limit used by point predictors.
SampledNetwork sample_mean(const GaussianWeightDist& dist);

// MLP forward pass; output clamped to [1e-12, 1-1e-12] so scores stay
// strictly inside (0,1) for any finite weights.
double forward(const SampledNetwork& net, std::span<const double> x);

// Reparameterized gradient of the clamped BCE -[y log f + (1-y) log(1-f)]
// w.r.t. (theta, rho) through w = theta + softplus(rho) .* eps.
GradPair backward_bce(const SampledNetwork& net, std::span<const double> x, int y);

// Gradient w.r.t. the flat weight vector only, accumulated into dw.
// Returns the per-example loss. Used by batch kernels that fold the
// theta/rho chain in once per sampled network.
double accumulate_bce_weight_grad(const SampledNetwork& net, std::span<const double> x,
                                  int y, std::span<double> dw);

// Clamp applied inside BCE losses before taking logs.
inline constexpr double kBceClamp = 1e-7;

// KL(N(theta_a, sigma_a^2) || N(theta, sigma^2)), closed form summed over
// coordinates. Topologies must match.
double kl_divergence(const GaussianWeightDist& q_a, const GaussianWeightDist& q);

struct KlGradients {
    GradPair d_qa;
    GradPair d_q;
};

// Analytic partials of kl_divergence w.r.t. both parameter sets, with the
// softplus chain applied to the rho components.
KlGradients kl_gradients(const GaussianWeightDist& q_a, const GaussianWeightDist& q);

// (1/n) sum of forward passes under fresh weight draws.
double predict_mc(const GaussianWeightDist& dist, std::span<const double> x,
                  int n_samples, SeededRng& rng);

// Scores every row of X under n_samples shared weight draws (the draws are
// taken once up front, then reused for all rows). Row loop is the OpenMP
// kernel; each row writes its own slot, so results do not depend on the
// thread count.
std::vector<double> score_dataset(const GaussianWeightDist& dist, const DenseMatrix& X,
                                  int n_samples, SeededRng& rng);
std::vector<double> score_dataset_serial(const GaussianWeightDist& dist, const DenseMatrix& X,
                                         int n_samples, SeededRng& rng);

// Lossless JSON round trip: {topology, theta[], rho[]}.
std::string dist_to_json(const GaussianWeightDist& dist);
GaussianWeightDist dist_from_json(const std::string& text);
void save_dist(const GaussianWeightDist& dist, const std::string& path);
GaussianWeightDist load_dist(const std::string& path);

}  // namespace fams
