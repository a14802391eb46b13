#pragma once

#include <map>
#include <string>
#include <vector>

#include "fams/data.hpp"
#include "fams/stochastic_net.hpp"

namespace fams {

struct LowerLevelLoss {
    double data_term = 0.0;  // MC estimate of E_{f~Q_a} empirical BCE
    double kl_term = 0.0;    // KL(Q_a || Q)
    double lambda = 0.0;
    double total = 0.0;      // data_term + lambda * kl_term
};

struct UpperLevelLoss {
    std::map<std::string, double> per_group_kl;
    double mean_kl = 0.0;
};

// (1/m) sum of clamped BCE terms over the batch.
double empirical_bce(const SampledNetwork& net, const SubgroupDataset& batch);

LowerLevelLoss lower_level_loss(const GaussianWeightDist& q_a, const GaussianWeightDist& q,
                                const SubgroupDataset& batch, double lambda, int mc_samples,
                                SeededRng& rng);

UpperLevelLoss upper_level_loss(const std::vector<GaussianWeightDist>& dists,
                                const GaussianWeightDist& q,
                                const std::vector<std::string>* group_ids = nullptr);

// Analytic minimizer of the mean KL(Q_a || Q) over factorized Gaussians:
// theta* = mean of theta_a; sigma*^2 = mean of (sigma_a^2 + (theta_a - theta*)^2).
// Test oracle for the SGD upper-level path; not the production update.
GaussianWeightDist closed_form_upper_solution(const std::vector<GaussianWeightDist>& dists);

struct McGrad {
    GradPair grad;
    double mean_loss = 0.0;
};

// Reparameterized gradient of the MC data term: mean over mc_samples fresh
// weight draws of the batch-mean BCE gradient w.r.t. (theta, rho).
McGrad mc_bce_gradient(const GaussianWeightDist& dist, const SubgroupDataset& batch,
                       int mc_samples, SeededRng& rng);

// Same data term but on a fixed sampled network (theta gradient only);
// used by the deterministic (sigma -> 0) trainers. Row loop runs in fixed
// chunks so parallel and serial accumulation are bitwise identical.
McGrad batch_bce_gradient(const SampledNetwork& net, const SubgroupDataset& batch);

}  // namespace fams
