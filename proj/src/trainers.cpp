#include "fams/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fams/errors.hpp"
#include "fams/parallel.hpp"

namespace fams {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPointSigma = 1e-9;  // sigma used by the deterministic trainers

// Stream ids under the per-epoch stream.
constexpr std::uint64_t kSelectStream = 0;
constexpr std::uint64_t kSlotStreamBase = 1;
constexpr std::uint64_t kValidStream = 1u << 20;

void check_datasets(std::span<const SubgroupDataset> train,
                    std::span<const SubgroupDataset> valid) {
    if (train.empty()) throw DataError("train: need at least one subgroup");
    for (const auto& g : train) {
        if (g.size() == 0) throw DataError("train: subgroup '" + g.group_id + "' is empty");
        g.validate();
    }
    if (valid.empty()) throw DataError("valid: need at least one subgroup");
    for (const auto& g : valid) {
        if (g.size() == 0) throw DataError("valid: subgroup '" + g.group_id + "' is empty");
        g.validate();
    }
}

struct SgdState {
    std::vector<double> v_theta;
    std::vector<double> v_rho;

    explicit SgdState(std::size_t d) : v_theta(d, 0.0), v_rho(d, 0.0) {}
};

void clip_by_norm(GradPair& g, double clip) {
    if (clip <= 0.0) return;
    const double norm = std::sqrt(g.squared_norm());
    if (norm > clip) g.scale(clip / norm);
}

void sgd_step(GaussianWeightDist& dist, const GradPair& g, double lr, double momentum,
              SgdState& state, bool update_rho) {
    const std::size_t d = dist.theta.size();
    for (std::size_t i = 0; i < d; ++i) {
        state.v_theta[i] = momentum * state.v_theta[i] - lr * g.d_theta[i];
        dist.theta[i] += state.v_theta[i];
        if (update_rho) {
            state.v_rho[i] = momentum * state.v_rho[i] - lr * g.d_rho[i];
            dist.rho[i] += state.v_rho[i];
        }
    }
}

void check_finite_loss(double loss, const char* trainer, int epoch, int step) {
    if (!std::isfinite(loss)) {
        throw TrainingError(std::string(trainer) + ": non-finite loss at epoch " +
                            std::to_string(epoch) + ", step " + std::to_string(step));
    }
}

struct LowerStats {
    double data_term = 0.0;
    double kl_term = 0.0;
};

// One lower-level solve. The data term and the sigma part of the KL take
// explicit SGD steps; the theta part of lambda*KL(Q_a||Q) is quadratic in
// theta_a with curvature lambda/sigma_q^2, which blows past the explicit
// stability limit once lambda is large, so it is applied as an exact
// proximal step instead. Same objective, stable for every lambda the sweep
// uses.
GaussianWeightDist solve_lower_impl(const GaussianWeightDist& q, const SubgroupDataset& batch,
                                    const BilevelConfig& c, SeededRng rng, LowerStats* stats,
                                    int epoch) {
    GaussianWeightDist qa = q;  // warm start from the prior
    const std::size_t d = qa.theta.size();
    SgdState state(d);

    std::vector<double> prox(d, 0.0);  // lr * lambda / sigma_q^2 per coordinate
    if (c.lambda > 0.0) {
        for (std::size_t i = 0; i < d; ++i) {
            const double s = q.sigma(i);
            prox[i] = c.lower_lr * c.lambda / (s * s);
        }
    }

    for (int step = 0; step < c.lower_steps; ++step) {
        McGrad mc = mc_bce_gradient(qa, batch, c.mc_samples, rng);
        check_finite_loss(mc.mean_loss, "lower-level", epoch, step);
        GradPair g = std::move(mc.grad);
        if (c.lambda > 0.0) {
            KlGradients kg = kl_gradients(qa, q);
            for (std::size_t i = 0; i < d; ++i) g.d_rho[i] += c.lambda * kg.d_qa.d_rho[i];
        }
        clip_by_norm(g, c.clip_norm);
        sgd_step(qa, g, c.lower_lr, c.momentum, state, true);
        if (c.lambda > 0.0) {
            for (std::size_t i = 0; i < d; ++i) {
                qa.theta[i] = (qa.theta[i] + prox[i] * q.theta[i]) / (1.0 + prox[i]);
            }
        }
    }
    if (stats) {
        double data = 0.0;
        for (int s = 0; s < c.mc_samples; ++s) data += empirical_bce(sample(qa, rng), batch);
        stats->data_term = data / c.mc_samples;
        stats->kl_term = kl_divergence(qa, q);
    }
    return qa;
}

// Validation pass shared by all trainers.
void fill_valid_metrics(EpochRecord& rec, const GaussianWeightDist& dist,
                        std::span<const SubgroupDataset> valid, int mc_samples, SeededRng rng) {
    ScoredDataset scored = score_groups(dist, valid, mc_samples, rng);
    rec.valid_bce = mean_bce(scored);
    rec.valid_accuracy = accuracy(scored);
    rec.valid_suff_gap = kNaN;
    if (scored.group_count() >= 2) {
        try {
            rec.valid_suff_gap = sufficiency_gap(scored, 10).overall_gap;
        } catch (const DataError&) {
            // degenerate score spread; leave NaN
        }
    }
}

// Early-stopping bookkeeping on the validation pooled BCE.
struct EarlyStopper {
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    GaussianWeightDist best_dist;

    bool update(int epoch, double value, const GaussianWeightDist& dist, int patience) {
        if (value < best - 1e-12) {
            best = value;
            best_epoch = epoch;
            best_dist = dist;
        }
        return patience > 0 && epoch - best_epoch >= patience;
    }
};

void finish(TrainedPredictor& result, const EarlyStopper& stopper, const GaussianWeightDist& q,
            const BilevelConfig& config) {
    if (config.early_stop_patience > 0) {
        result.dist = stopper.best_dist;
        result.best_epoch = stopper.best_epoch;
    } else {
        result.dist = q;
        result.best_epoch = result.history.back().epoch;
    }
}

GaussianWeightDist init_point_dist(const BilevelConfig& config, SeededRng& rng) {
    GaussianWeightDist q = init_dist(config.topology, rng, 1.0);
    std::fill(q.rho.begin(), q.rho.end(), softplus_inv(kPointSigma));
    return q;
}

}  // namespace

void BilevelConfig::validate(std::size_t total_groups) const {
    if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
    if (lambda < 0.0) throw ConfigError("train.lambda: must be >= 0");
    if (subgroups_per_round < 1 ||
        static_cast<std::size_t>(subgroups_per_round) > total_groups) {
        throw ConfigError("train.subgroups_per_round: must be in [1, " +
                          std::to_string(total_groups) + "]");
    }
    if (samples_per_subgroup < 1) throw ConfigError("train.samples_per_subgroup: must be >= 1");
    if (lower_steps < 1) throw ConfigError("train.lower_steps: must be >= 1");
    if (upper_steps < 1) throw ConfigError("train.upper_steps: must be >= 1");
    if (!(lower_lr > 0.0)) throw ConfigError("train.lower_lr: must be > 0");
    if (!(upper_lr > 0.0)) throw ConfigError("train.upper_lr: must be > 0");
    if (mc_samples < 1) throw ConfigError("train.mc_samples: must be >= 1");
    if (early_stop_patience < 0) throw ConfigError("train.early_stop_patience: must be >= 0");
    if (!(init_scale > 0.0)) throw ConfigError("train.init_scale: must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum: must be in [0,1)");
    if (clip_norm < 0.0) throw ConfigError("train.clip_norm: must be >= 0");
    if (!(group_dro_eta > 0.0)) throw ConfigError("train.group_dro_eta: must be > 0");
    topology.validate();
}

std::string to_string(TrainedPredictor::Kind k) {
    switch (k) {
        case TrainedPredictor::Kind::Fams: return "fams";
        case TrainedPredictor::Kind::Erm: return "erm";
        case TrainedPredictor::Kind::Snn: return "snn";
        case TrainedPredictor::Kind::GroupDro: return "group_dro";
    }
    return "?";
}

TrainedPredictor::Kind trainer_kind_from_string(const std::string& s) {
    if (s == "fams") return TrainedPredictor::Kind::Fams;
    if (s == "erm") return TrainedPredictor::Kind::Erm;
    if (s == "snn") return TrainedPredictor::Kind::Snn;
    if (s == "group_dro") return TrainedPredictor::Kind::GroupDro;
    throw ConfigError("method: expected fams|erm|snn|group_dro, got '" + s + "'");
}

GaussianWeightDist solve_lower(const GaussianWeightDist& q, const SubgroupDataset& batch,
                               const BilevelConfig& config, SeededRng rng) {
    return solve_lower_impl(q, batch, config, rng, nullptr, 0);
}

std::vector<GaussianWeightDist> fit_all_lower(const GaussianWeightDist& q,
                                              std::span<const SubgroupDataset> train,
                                              const BilevelConfig& config, SeededRng& rng) {
    std::vector<SeededRng> streams;
    streams.reserve(train.size());
    for (std::size_t a = 0; a < train.size(); ++a) streams.push_back(rng.split(a));
    std::vector<GaussianWeightDist> out(train.size());
    par::parallel_for(static_cast<std::int64_t>(train.size()), [&](std::int64_t a) {
        out[a] = solve_lower_impl(q, train[a], config, streams[a], nullptr, 0);
    });
    return out;
}

ScoredDataset score_groups(const GaussianWeightDist& dist,
                           std::span<const SubgroupDataset> groups, int mc_samples,
                           SeededRng& rng) {
    ScoredDataset out;
    for (std::size_t a = 0; a < groups.size(); ++a) {
        out.group_names.push_back(groups[a].group_id);
        auto scores = score_dataset(dist, groups[a].features, mc_samples, rng);
        for (std::size_t r = 0; r < scores.size(); ++r) {
            out.scores.push_back(scores[r]);
            out.labels.push_back(groups[a].labels[r]);
            out.groups.push_back(static_cast<int>(a));
        }
    }
    return out;
}

double accuracy(const ScoredDataset& scored) {
    if (scored.scores.empty()) throw DataError("accuracy: empty dataset");
    long hits = 0;
    for (std::size_t i = 0; i < scored.scores.size(); ++i) {
        hits += (scored.scores[i] > 0.5 ? 1 : 0) == scored.labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(scored.scores.size());
}

double mean_bce(const ScoredDataset& scored) {
    if (scored.scores.empty()) throw DataError("mean_bce: empty dataset");
    double loss = 0.0;
    for (std::size_t i = 0; i < scored.scores.size(); ++i) {
        const double s = std::clamp(scored.scores[i], kBceClamp, 1.0 - kBceClamp);
        loss += scored.labels[i] ? -std::log(s) : -std::log(1.0 - s);
    }
    return loss / static_cast<double>(scored.scores.size());
}

TrainedPredictor train_fams(const BilevelConfig& config, std::span<const SubgroupDataset> train,
                            std::span<const SubgroupDataset> valid) {
    config.validate(train.size());
    check_datasets(train, valid);

    SeededRng root(config.seed);
    SeededRng init_stream = root.split(0);
    GaussianWeightDist q = init_dist(config.topology, init_stream, config.init_scale);

    TrainedPredictor result;
    result.kind = TrainedPredictor::Kind::Fams;
    EarlyStopper stopper;

    const int k = config.subgroups_per_round;
    std::vector<GaussianWeightDist> qas(k);
    std::vector<LowerStats> stats(k);
    std::vector<std::string> round_ids(k);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SeededRng es = root.split(1000 + static_cast<std::uint64_t>(epoch));
        SeededRng select = es.split(kSelectStream);
        auto round = sample_round(train, k, config.samples_per_subgroup, select);

        std::vector<SeededRng> slot_streams;
        slot_streams.reserve(k);
        for (int j = 0; j < k; ++j) slot_streams.push_back(es.split(kSlotStreamBase + j));

        auto solve_slot = [&](std::int64_t j) {
            qas[j] = solve_lower_impl(q, round[j], config, slot_streams[j], &stats[j], epoch);
            round_ids[j] = round[j].group_id;
        };
        if (config.parallel_lower) {
            par::parallel_for(k, solve_slot);
        } else {
            for (int j = 0; j < k; ++j) solve_slot(j);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        for (int j = 0; j < k; ++j) {
            rec.data_term += stats[j].data_term / k;
            rec.kl_term += stats[j].kl_term / k;
        }
        rec.upper_kl_pre = upper_level_loss(qas, q).mean_kl;

        SgdState upper_state(q.theta.size());
        for (int t = 0; t < config.upper_steps; ++t) {
            GradPair g;
            g.d_theta.assign(q.theta.size(), 0.0);
            g.d_rho.assign(q.theta.size(), 0.0);
            for (int j = 0; j < k; ++j) {
                g.axpy(1.0 / k, kl_gradients(qas[j], q).d_q);
            }
            clip_by_norm(g, config.clip_norm);
            sgd_step(q, g, config.upper_lr, config.momentum, upper_state, true);
        }
        rec.upper_kl = upper_level_loss(qas, q).mean_kl;
        check_finite_loss(rec.upper_kl, "upper-level", epoch, config.upper_steps);

        fill_valid_metrics(rec, q, valid, config.mc_samples, es.split(kValidStream));
        check_finite_loss(rec.valid_bce, "validation", epoch, 0);
        result.history.push_back(rec);

        const bool stop = stopper.update(epoch, rec.valid_bce, q, config.early_stop_patience);
        if (epoch == config.epochs || stop) {
            result.final_round_dists = qas;
            result.final_round_ids = round_ids;
            result.final_round_q = q;
            break;
        }
    }

    finish(result, stopper, q, config);
    return result;
}

TrainedPredictor train_erm(const BilevelConfig& config, std::span<const SubgroupDataset> train,
                           std::span<const SubgroupDataset> valid) {
    config.validate(train.size());
    check_datasets(train, valid);

    SeededRng root(config.seed);
    SeededRng init_stream = root.split(0);
    GaussianWeightDist q = init_point_dist(config, init_stream);

    std::vector<SubgroupDataset> pooled_list{pool(train)};
    const int batch_size = config.subgroups_per_round * config.samples_per_subgroup;

    TrainedPredictor result;
    result.kind = TrainedPredictor::Kind::Erm;
    EarlyStopper stopper;
    SgdState state(q.theta.size());

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SeededRng es = root.split(1000 + static_cast<std::uint64_t>(epoch));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.kl_term = kNaN;
        rec.upper_kl_pre = kNaN;
        rec.upper_kl = kNaN;
        for (int step = 0; step < config.lower_steps; ++step) {
            SeededRng bs = es.split(kSlotStreamBase + static_cast<std::uint64_t>(step));
            auto batch = sample_round(pooled_list, 1, batch_size, bs);
            McGrad g = batch_bce_gradient(sample_mean(q), batch[0]);
            check_finite_loss(g.mean_loss, "erm", epoch, step);
            rec.data_term += g.mean_loss / config.lower_steps;
            clip_by_norm(g.grad, config.clip_norm);
            sgd_step(q, g.grad, config.lower_lr, config.momentum, state, false);
        }
        fill_valid_metrics(rec, q, valid, 1, es.split(kValidStream));
        result.history.push_back(rec);
        if (stopper.update(epoch, rec.valid_bce, q, config.early_stop_patience)) break;
    }

    finish(result, stopper, q, config);
    return result;
}

TrainedPredictor train_snn(const BilevelConfig& config, std::span<const SubgroupDataset> train,
                           std::span<const SubgroupDataset> valid) {
    config.validate(train.size());
    check_datasets(train, valid);

    SeededRng root(config.seed);
    SeededRng init_stream = root.split(0);
    GaussianWeightDist q = init_dist(config.topology, init_stream, config.init_scale);

    const int k = config.subgroups_per_round;
    TrainedPredictor result;
    result.kind = TrainedPredictor::Kind::Snn;
    EarlyStopper stopper;
    SgdState state(q.theta.size());
    std::vector<GradPair> slot_grads(k);
    std::vector<double> slot_losses(k);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SeededRng es = root.split(1000 + static_cast<std::uint64_t>(epoch));
        SeededRng select = es.split(kSelectStream);
        auto round = sample_round(train, k, config.samples_per_subgroup, select);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.kl_term = kNaN;
        rec.upper_kl_pre = kNaN;
        rec.upper_kl = kNaN;
        for (int step = 0; step < config.lower_steps; ++step) {
            std::vector<SeededRng> slot_streams;
            slot_streams.reserve(k);
            for (int j = 0; j < k; ++j) {
                slot_streams.push_back(
                    es.split(kSlotStreamBase + static_cast<std::uint64_t>(step) * k + j));
            }
            par::parallel_for(k, [&](std::int64_t j) {
                McGrad mg = mc_bce_gradient(q, round[j], config.mc_samples, slot_streams[j]);
                slot_grads[j] = std::move(mg.grad);
                slot_losses[j] = mg.mean_loss;
            });
            GradPair g;
            g.d_theta.assign(q.theta.size(), 0.0);
            g.d_rho.assign(q.theta.size(), 0.0);
            double loss = 0.0;
            for (int j = 0; j < k; ++j) {
                g.axpy(1.0 / k, slot_grads[j]);
                loss += slot_losses[j] / k;
            }
            check_finite_loss(loss, "snn", epoch, step);
            rec.data_term += loss / config.lower_steps;
            clip_by_norm(g, config.clip_norm);
            sgd_step(q, g, config.lower_lr, config.momentum, state, true);
        }
        fill_valid_metrics(rec, q, valid, config.mc_samples, es.split(kValidStream));
        result.history.push_back(rec);
        if (stopper.update(epoch, rec.valid_bce, q, config.early_stop_patience)) break;
    }

    finish(result, stopper, q, config);
    return result;
}

TrainedPredictor train_group_dro(const BilevelConfig& config,
                                 std::span<const SubgroupDataset> train,
                                 std::span<const SubgroupDataset> valid) {
    config.validate(train.size());
    check_datasets(train, valid);

    SeededRng root(config.seed);
    SeededRng init_stream = root.split(0);
    GaussianWeightDist q = init_point_dist(config, init_stream);

    std::map<std::string, std::size_t> group_index;
    for (std::size_t a = 0; a < train.size(); ++a) group_index[train[a].group_id] = a;
    std::vector<double> weights(train.size(), 1.0 / static_cast<double>(train.size()));

    const int k = config.subgroups_per_round;
    TrainedPredictor result;
    result.kind = TrainedPredictor::Kind::GroupDro;
    EarlyStopper stopper;
    SgdState state(q.theta.size());
    std::vector<double> slot_losses(k);
    std::vector<GradPair> slot_grads(k);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SeededRng es = root.split(1000 + static_cast<std::uint64_t>(epoch));
        SeededRng select = es.split(kSelectStream);
        auto round = sample_round(train, k, config.samples_per_subgroup, select);

        // Exponentiated-gradient reweighting driven by the running losses.
        par::parallel_for(k, [&](std::int64_t j) {
            slot_losses[j] = empirical_bce(sample_mean(q), round[j]);
        });
        for (int j = 0; j < k; ++j) {
            check_finite_loss(slot_losses[j], "group_dro", epoch, -1);
            weights[group_index.at(round[j].group_id)] *=
                std::exp(config.group_dro_eta * slot_losses[j]);
        }
        double total = 0.0;
        for (double w : weights) total += w;
        for (double& w : weights) w /= total;

        double round_weight = 0.0;
        for (int j = 0; j < k; ++j) round_weight += weights[group_index.at(round[j].group_id)];

        EpochRecord rec;
        rec.epoch = epoch;
        rec.kl_term = kNaN;
        rec.upper_kl_pre = kNaN;
        rec.upper_kl = kNaN;
        for (int step = 0; step < config.lower_steps; ++step) {
            par::parallel_for(k, [&](std::int64_t j) {
                McGrad mg = batch_bce_gradient(sample_mean(q), round[j]);
                slot_grads[j] = std::move(mg.grad);
                slot_losses[j] = mg.mean_loss;
            });
            GradPair g;
            g.d_theta.assign(q.theta.size(), 0.0);
            g.d_rho.assign(q.theta.size(), 0.0);
            double loss = 0.0;
            for (int j = 0; j < k; ++j) {
                const double w = weights[group_index.at(round[j].group_id)] / round_weight;
                g.axpy(w, slot_grads[j]);
                loss += w * slot_losses[j];
            }
            check_finite_loss(loss, "group_dro", epoch, step);
            rec.data_term += loss / config.lower_steps;
            clip_by_norm(g, config.clip_norm);
            sgd_step(q, g, config.lower_lr, config.momentum, state, false);
        }
        fill_valid_metrics(rec, q, valid, 1, es.split(kValidStream));
        result.history.push_back(rec);
        if (stopper.update(epoch, rec.valid_bce, q, config.early_stop_patience)) break;
    }

    finish(result, stopper, q, config);
    return result;
}

TrainedPredictor train(TrainedPredictor::Kind kind, const BilevelConfig& config,
                       std::span<const SubgroupDataset> train_sets,
                       std::span<const SubgroupDataset> valid_sets) {
    switch (kind) {
        case TrainedPredictor::Kind::Fams: return train_fams(config, train_sets, valid_sets);
        case TrainedPredictor::Kind::Erm: return train_erm(config, train_sets, valid_sets);
        case TrainedPredictor::Kind::Snn: return train_snn(config, train_sets, valid_sets);
        case TrainedPredictor::Kind::GroupDro:
            return train_group_dro(config, train_sets, valid_sets);
    }
    throw ConfigError("train: unknown trainer kind");
}

void write_history_csv(const TrainedPredictor& predictor, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_history_csv: cannot open " + path);
    std::ostringstream ss;
    ss.precision(17);
    ss << "epoch,data_term,kl_term,upper_kl_pre,upper_kl,valid_bce,valid_accuracy,valid_suff_gap\n";
    for (const auto& r : predictor.history) {
        ss << r.epoch << "," << r.data_term << "," << r.kl_term << "," << r.upper_kl_pre << ","
           << r.upper_kl << "," << r.valid_bce << "," << r.valid_accuracy << ","
           << r.valid_suff_gap << "\n";
    }
    out << ss.str();
}

}  // namespace fams
