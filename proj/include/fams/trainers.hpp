#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fams/data.hpp"
#include "fams/fairness_metrics.hpp"
#include "fams/objectives.hpp"
#include "fams/stochastic_net.hpp"

namespace fams {

struct BilevelConfig {
    double lambda = 0.4;
    int epochs = 60;
    int subgroups_per_round = 20;   // |A'|
    int samples_per_subgroup = 50;  // drawn with replacement each round
    int lower_steps = 40;
    double lower_lr = 0.02;
    int upper_steps = 200;
    double upper_lr = 0.005;
    int mc_samples = 5;
    std::uint64_t seed = 0;
    MlpTopology topology;
    int early_stop_patience = 10;  // 0 disables early stopping

    double init_scale = 0.2;
    double momentum = 0.0;
    double clip_norm = 10.0;  // gradient-norm clip; 0 disables
    double group_dro_eta = 0.1;
    // Serial reference schedule for the per-subgroup solves; results must be
    // bitwise identical either way.
    bool parallel_lower = true;

    void validate(std::size_t total_groups) const;
};

struct EpochRecord {
    int epoch = 0;
    double data_term = 0.0;     // lower-level MC data loss (trainer dependent)
    double kl_term = 0.0;       // mean KL(Q_a || Q) after the lower solves
    double upper_kl_pre = 0.0;  // upper objective before the Q update
    double upper_kl = 0.0;      // and after
    double valid_bce = 0.0;
    double valid_accuracy = 0.0;
    double valid_suff_gap = 0.0;  // NaN when fewer than 2 valid subgroups
};

struct TrainedPredictor {
    enum class Kind { Fams, Erm, Snn, GroupDro };

    Kind kind = Kind::Fams;
    GaussianWeightDist dist;
    std::vector<EpochRecord> history;
    int best_epoch = 0;

    // Last executed round's subgroup posteriors and the Q they were fit
    // against (FAMS only); feeds the bound reports and the closed-form
    // upper-level oracle check.
    std::vector<GaussianWeightDist> final_round_dists;
    std::vector<std::string> final_round_ids;
    GaussianWeightDist final_round_q;
};

std::string to_string(TrainedPredictor::Kind k);
TrainedPredictor::Kind trainer_kind_from_string(const std::string& s);

TrainedPredictor train_fams(const BilevelConfig& config, std::span<const SubgroupDataset> train,
                            std::span<const SubgroupDataset> valid);
TrainedPredictor train_erm(const BilevelConfig& config, std::span<const SubgroupDataset> train,
                           std::span<const SubgroupDataset> valid);
TrainedPredictor train_snn(const BilevelConfig& config, std::span<const SubgroupDataset> train,
                           std::span<const SubgroupDataset> valid);
TrainedPredictor train_group_dro(const BilevelConfig& config,
                                 std::span<const SubgroupDataset> train,
                                 std::span<const SubgroupDataset> valid);

TrainedPredictor train(TrainedPredictor::Kind kind, const BilevelConfig& config,
                       std::span<const SubgroupDataset> train_sets,
                       std::span<const SubgroupDataset> valid_sets);

// One lower-level solve: warm start from q, lower_steps SGD steps on the
// reparameterized data term plus lambda * KL(q_a || q).
GaussianWeightDist solve_lower(const GaussianWeightDist& q, const SubgroupDataset& batch,
                               const BilevelConfig& config, SeededRng rng);

// Lower-level solve for every group on its full training set; used by bound
// reports, which need a Q_a for all of A rather than the sampled subset.
std::vector<GaussianWeightDist> fit_all_lower(const GaussianWeightDist& q,
                                              std::span<const SubgroupDataset> train,
                                              const BilevelConfig& config, SeededRng& rng);

// Scores every group with shared MC draws (group order fixed by the list).
ScoredDataset score_groups(const GaussianWeightDist& dist,
                           std::span<const SubgroupDataset> groups, int mc_samples,
                           SeededRng& rng);

double accuracy(const ScoredDataset& scored);
double mean_bce(const ScoredDataset& scored);

void write_history_csv(const TrainedPredictor& predictor, const std::string& path);

}  // namespace fams
