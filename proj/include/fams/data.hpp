#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fams/numerics.hpp"

namespace fams {

// One subgroup's labeled examples: rows of `features` paired with binary
// labels.
struct SubgroupDataset {
    std::string group_id;
    DenseMatrix features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    void validate() const;
};

std::size_t total_rows(std::span<const SubgroupDataset> datasets);
// Fraction of positive labels over all rows.
double label_mean(std::span<const SubgroupDataset> datasets);
// Concatenate all groups into a single pseudo-group (order preserving).
SubgroupDataset pool(std::span<const SubgroupDataset> datasets);

// Logistic-linear synthetic family: E[Y|X, A=a] = sigmoid(beta_a . x + b_a)
// with x ~ N(0, I). group_similarity interpolates each beta_a between a
// shared vector and an independent one (1 = identical Bayes predictors).
struct SyntheticSpec {
    int n_groups = 50;
    int input_dim = 10;
    int samples_per_group = 167;  // split 60/20/20 into train/valid/test
    double group_similarity = 0.9;
    double beta_scale = 2.0;  // approximate ||beta_a||
    double bias_mean = 1.0;   // shifts the base rate away from 0.5
    double bias_spread = 0.5; // per-group bias dispersion, scaled by (1-similarity)

    void validate() const;
};

// Exact ground-truth conditional expectation, queryable per group.
struct BayesOracle {
    std::vector<std::vector<double>> betas;
    std::vector<double> biases;

    double operator()(std::span<const double> x, int group) const;
};

struct SyntheticData {
    std::vector<SubgroupDataset> train;
    std::vector<SubgroupDataset> valid;
    std::vector<SubgroupDataset> test;
    BayesOracle bayes;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, SeededRng& rng);

// Tabular CSV ingestion. Generic files carry a header row; the native Adult
// format (no header, ", " separators, "?" missing markers, trailing '.' on
// test labels) is handled behind the `native_adult` flag.
struct TabularSchema {
    enum class Role { Numeric, Categorical, Label, Sensitive };
    struct Column {
        std::string name;
        Role role;
    };

    std::vector<Column> columns;  // for native_adult: all 15 columns in file order
    std::string positive_label;   // label value encoded as 1
    bool native_adult = false;

    void validate() const;
};

// One-hot levels and z-score statistics fitted on the training rows only.
struct TabularEncoding {
    struct NumericStat {
        std::string column;
        double mean = 0.0;
        double std_dev = 1.0;
    };
    struct CategoricalMap {
        std::string column;
        std::vector<std::string> levels;  // one-hot positions in this order
    };

    std::vector<NumericStat> numeric;
    std::vector<CategoricalMap> categorical;
    int feature_dim() const;
};

struct TabularData {
    std::vector<SubgroupDataset> groups;
    TabularEncoding encoding;
    std::vector<std::string> warnings;  // e.g. unseen categorical levels
};

// Loads and encodes a whole file; fits normalization on its rows unless an
// existing encoding is supplied (the eval path).
TabularData load_tabular(const std::string& path, const TabularSchema& schema,
                         const TabularEncoding* reuse = nullptr);

struct TabularOptions {
    long subsample_per_group = 0;  // 0 = all rows are training rows
    double valid_fraction = 0.5;   // of the per-group remainder (ignored with test_csv)
    std::string test_csv;          // optional separate evaluation file
    std::uint64_t seed = 0;
};

struct TabularSplits {
    std::vector<SubgroupDataset> train;
    std::vector<SubgroupDataset> valid;
    std::vector<SubgroupDataset> test;
    TabularEncoding encoding;
    std::vector<std::string> warnings;
};

// Full ingestion pipeline: parse, partition by the sensitive attribute,
// subsample the training rows per group (seeded), fit normalization on the
// training rows, encode the remaining rows as valid/test.
TabularSplits load_tabular_splits(const std::string& train_csv, const TabularSchema& schema,
                                  const TabularOptions& options);

// k_groups drawn without replacement; within each, m_per_group rows drawn
// with replacement. Algorithm step "sample a subset of {S_a}".
std::vector<SubgroupDataset> sample_round(std::span<const SubgroupDataset> datasets,
                                          int k_groups, int m_per_group, SeededRng& rng);

// The canonical Adult schema (14 features + income, gender sensitive).
TabularSchema adult_schema();

// Deterministic Adult-format sample data for offline runs: same columns,
// separators and label strings as the UCI file. Row marginals and the
// income model are synthetic.
void write_adult_like_csv(const std::string& path, int n_rows, std::uint64_t seed);

}  // namespace fams
