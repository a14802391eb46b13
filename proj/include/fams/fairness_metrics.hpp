#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fams {

// A scored joint sample of (f(X), Y, A). Group codes are dense 0..G-1;
// group_names (optional) carries the original identifiers for reports.
struct ScoredDataset {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<int> groups;
    std::vector<std::string> group_names;

    int group_count() const;
    std::string name_of(int group) const;
    void validate() const;
};

// Binned conditional-expectation table over equal-width bins of [0,1]:
// per bin the mean score p, the conditional label mean q and the count n.
struct BinTable {
    std::vector<double> edges;  // size bins+1
    std::vector<double> p;      // NaN when the bin is empty
    std::vector<double> q;
    std::vector<long> n;
    std::string group;          // "ALL" or a subgroup name

    int bins() const { return static_cast<int>(n.size()); }
    long total() const;
};

enum class EmptyBinPolicy {
    NearestNeighbor,  // per-group empty bins borrow the nearest nonempty bin's value
    Strict,           // error out instead
};

std::string to_string(EmptyBinPolicy p);
EmptyBinPolicy empty_bin_policy_from_string(const std::string& s);

struct SufficiencyOptions {
    int bins = 10;
    // Weight per-bin gaps by global bin mass. The unweighted switch
    // reproduces the plain sum across bins (not normalized, may exceed 1).
    bool weighted = true;
    EmptyBinPolicy policy = EmptyBinPolicy::NearestNeighbor;
};

struct SufficiencyReport {
    std::map<std::string, double> per_group_gap;
    double overall_gap = 0.0;  // uniform average over subgroups
    int bin_count = 0;
    bool weighted = true;
    EmptyBinPolicy policy = EmptyBinPolicy::NearestNeighbor;
    BinTable global_table;
    std::vector<BinTable> group_tables;
};

// Group-sufficiency gap via binned conditional expectations with linear
// interpolation of each group's curve to the global bin mean score.
SufficiencyReport sufficiency_gap(const ScoredDataset& data, const SufficiencyOptions& options);
SufficiencyReport sufficiency_gap(const ScoredDataset& data, int bins);

// (1/|A|) sum over groups of |E[f] - E[f|A=a]|.
double dp_gap(const ScoredDataset& data);

// Average over label classes and groups of |E[f|Y=y] - E[f|Y=y,A=a]|;
// groups missing a label class are skipped for that class.
double eo_gap(const ScoredDataset& data);

// (p_i, q_i) reliability pairs, globally or restricted to one subgroup.
BinTable calibration_curve(const ScoredDataset& data, int bins,
                           std::optional<int> group = std::nullopt);

// CSV with header bin_lo,bin_hi,p,q,n,group; empty bins are skipped.
std::string bin_tables_to_csv(const std::vector<BinTable>& tables);

std::string sufficiency_report_to_json(const SufficiencyReport& report);

// Reads a header CSV with columns score,label,group.
ScoredDataset load_scored_csv(const std::string& path);

}  // namespace fams
