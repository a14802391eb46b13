#pragma once

#include <cmath>
#include <vector>

#include "fams/stochastic_net.hpp"

namespace fams::test {

inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Builds a distribution with explicit sigma values (rho = softplus^-1).
inline GaussianWeightDist make_dist(const MlpTopology& topo, const std::vector<double>& theta,
                                    const std::vector<double>& sigma) {
    GaussianWeightDist d;
    d.topology = topo;
    d.theta = theta;
    d.rho.resize(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) d.rho[i] = softplus_inv(sigma[i]);
    return d;
}

inline GaussianWeightDist random_dist(const MlpTopology& topo, SeededRng& rng,
                                      double theta_scale = 0.8, double sigma_lo = 0.3,
                                      double sigma_hi = 1.5) {
    const int d = topo.param_count();
    std::vector<double> theta(d);
    std::vector<double> sigma(d);
    for (int i = 0; i < d; ++i) {
        theta[i] = theta_scale * rng.next_normal();
        sigma[i] = sigma_lo + (sigma_hi - sigma_lo) * rng.next_double();
    }
    return make_dist(topo, theta, sigma);
}

// A sampled network with caller-chosen noise, for frozen-noise gradient checks.
inline SampledNetwork net_with_noise(const GaussianWeightDist& dist,
                                     const std::vector<double>& eps) {
    SampledNetwork net;
    net.source = &dist;
    net.noise = eps;
    net.weights.resize(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        net.weights[i] = dist.theta[i] + dist.sigma(i) * eps[i];
    }
    return net;
}

}  // namespace fams::test
