#include "fams/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "fams/errors.hpp"
#include "fams/parallel.hpp"

namespace fams {

double empirical_bce(const SampledNetwork& net, const SubgroupDataset& batch) {
    if (batch.size() == 0) throw DataError("empirical_bce: empty batch");
    double loss = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const double s = forward(net, batch.features.row(r));
        const double sc = std::clamp(s, kBceClamp, 1.0 - kBceClamp);
        const int y = batch.labels[r];
        loss += -(y * std::log(sc) + (1 - y) * std::log(1.0 - sc));
    }
    return loss / static_cast<double>(batch.size());
}

LowerLevelLoss lower_level_loss(const GaussianWeightDist& q_a, const GaussianWeightDist& q,
                                const SubgroupDataset& batch, double lambda, int mc_samples,
                                SeededRng& rng) {
    if (lambda < 0.0) throw std::invalid_argument("lower_level_loss: lambda must be >= 0");
    if (mc_samples < 1) throw std::invalid_argument("lower_level_loss: mc_samples must be >= 1");
    LowerLevelLoss out;
    out.lambda = lambda;
    for (int s = 0; s < mc_samples; ++s) {
        out.data_term += empirical_bce(sample(q_a, rng), batch);
    }
    out.data_term /= mc_samples;
    out.kl_term = kl_divergence(q_a, q);
    out.total = out.data_term + lambda * out.kl_term;
    return out;
}

UpperLevelLoss upper_level_loss(const std::vector<GaussianWeightDist>& dists,
                                const GaussianWeightDist& q,
                                const std::vector<std::string>* group_ids) {
    if (dists.empty()) throw std::invalid_argument("upper_level_loss: empty list");
    if (group_ids && group_ids->size() != dists.size()) {
        throw std::invalid_argument("upper_level_loss: ids/dists size mismatch");
    }
    UpperLevelLoss out;
    for (std::size_t a = 0; a < dists.size(); ++a) {
        const double kl = kl_divergence(dists[a], q);
        const std::string id = group_ids ? (*group_ids)[a] : std::to_string(a);
        out.per_group_kl[id] = kl;
        out.mean_kl += kl;
    }
    out.mean_kl /= static_cast<double>(dists.size());
    return out;
}

GaussianWeightDist closed_form_upper_solution(const std::vector<GaussianWeightDist>& dists) {
    if (dists.empty()) throw std::invalid_argument("closed_form_upper_solution: empty list");
    const GaussianWeightDist& first = dists.front();
    for (const auto& d : dists) {
        if (!(d.topology == first.topology)) {
            throw ShapeError("closed_form_upper_solution: topology mismatch");
        }
    }
    const std::size_t d = first.theta.size();
    const double n = static_cast<double>(dists.size());

    GaussianWeightDist out;
    out.topology = first.topology;
    out.theta.assign(d, 0.0);
    out.rho.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double mean = 0.0;
        for (const auto& qa : dists) mean += qa.theta[i];
        mean /= n;
        double var = 0.0;
        for (const auto& qa : dists) {
            const double s = qa.sigma(i);
            const double diff = qa.theta[i] - mean;
            var += s * s + diff * diff;
        }
        var /= n;
        out.theta[i] = mean;
        out.rho[i] = softplus_inv(std::sqrt(var));
    }
    return out;
}

McGrad mc_bce_gradient(const GaussianWeightDist& dist, const SubgroupDataset& batch,
                       int mc_samples, SeededRng& rng) {
    if (batch.size() == 0) throw DataError("mc_bce_gradient: empty batch");
    if (mc_samples < 1) throw std::invalid_argument("mc_bce_gradient: mc_samples must be >= 1");
    const std::size_t d = dist.theta.size();

    McGrad out;
    out.grad.d_theta.assign(d, 0.0);
    out.grad.d_rho.assign(d, 0.0);
    const double row_scale = 1.0 / static_cast<double>(batch.size());

    std::vector<double> dw(d);
    for (int s = 0; s < mc_samples; ++s) {
        const SampledNetwork net = sample(dist, rng);
        dw.assign(d, 0.0);
        double loss = 0.0;
        for (std::size_t r = 0; r < batch.size(); ++r) {
            loss += accumulate_bce_weight_grad(net, batch.features.row(r), batch.labels[r], dw);
        }
        out.mean_loss += loss * row_scale;
        // Fold the reparameterization chain in once per sampled network.
        for (std::size_t i = 0; i < d; ++i) {
            const double g = dw[i] * row_scale;
            out.grad.d_theta[i] += g;
            out.grad.d_rho[i] += g * net.noise[i] * softplus_grad(dist.rho[i]);
        }
    }
    out.mean_loss /= mc_samples;
    out.grad.scale(1.0 / mc_samples);
    return out;
}

McGrad batch_bce_gradient(const SampledNetwork& net, const SubgroupDataset& batch) {
    if (batch.size() == 0) throw DataError("batch_bce_gradient: empty batch");
    const std::size_t d = net.weights.size();
    const std::size_t rows = batch.size();
    constexpr std::size_t kChunk = 64;
    const std::size_t chunks = (rows + kChunk - 1) / kChunk;

    std::vector<std::vector<double>> partial(chunks);
    std::vector<double> losses(chunks, 0.0);
    par::parallel_for(static_cast<std::int64_t>(chunks), [&](std::int64_t c) {
        auto& dw = partial[c];
        dw.assign(d, 0.0);
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = std::min(lo + kChunk, rows);
        for (std::size_t r = lo; r < hi; ++r) {
            losses[c] += accumulate_bce_weight_grad(net, batch.features.row(r), batch.labels[r], dw);
        }
    });

    McGrad out;
    out.grad.d_theta.assign(d, 0.0);
    out.grad.d_rho.assign(d, 0.0);
    for (std::size_t c = 0; c < chunks; ++c) {
        out.mean_loss += losses[c];
        for (std::size_t i = 0; i < d; ++i) out.grad.d_theta[i] += partial[c][i];
    }
    const double scale = 1.0 / static_cast<double>(rows);
    out.mean_loss *= scale;
    for (std::size_t i = 0; i < d; ++i) out.grad.d_theta[i] *= scale;
    return out;
}

}  // namespace fams
