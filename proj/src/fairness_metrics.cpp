#include "fams/fairness_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fams/errors.hpp"

namespace fams {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int bin_of(double score, int bins) {
    int b = static_cast<int>(score * bins);
    return std::clamp(b, 0, bins - 1);  // score == 1.0 joins the last bin
}

}  // namespace

int ScoredDataset::group_count() const {
    int g = 0;
    for (int v : groups) g = std::max(g, v + 1);
    return g;
}

std::string ScoredDataset::name_of(int group) const {
    if (group >= 0 && static_cast<std::size_t>(group) < group_names.size()) {
        return group_names[group];
    }
    return std::to_string(group);
}

void ScoredDataset::validate() const {
    if (scores.size() != labels.size() || scores.size() != groups.size()) {
        throw ShapeError("ScoredDataset: scores/labels/groups lengths differ");
    }
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) throw DataError("ScoredDataset: score outside [0,1]");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("ScoredDataset: labels must be 0/1");
    }
    for (int g : groups) {
        if (g < 0) throw DataError("ScoredDataset: negative group code");
    }
}

long BinTable::total() const {
    long t = 0;
    for (long v : n) t += v;
    return t;
}

std::string to_string(EmptyBinPolicy p) {
    return p == EmptyBinPolicy::NearestNeighbor ? "nearest" : "strict";
}

EmptyBinPolicy empty_bin_policy_from_string(const std::string& s) {
    if (s == "nearest") return EmptyBinPolicy::NearestNeighbor;
    if (s == "strict") return EmptyBinPolicy::Strict;
    throw ConfigError("empty_bin_policy: expected 'nearest' or 'strict', got '" + s + "'");
}

namespace {

BinTable build_table(const ScoredDataset& data, int bins, std::optional<int> group,
                     const std::string& name) {
    BinTable t;
    t.group = name;
    t.edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i) t.edges[i] = static_cast<double>(i) / bins;
    t.n.assign(bins, 0);
    std::vector<double> score_sum(bins, 0.0);
    std::vector<double> label_sum(bins, 0.0);
    for (std::size_t r = 0; r < data.scores.size(); ++r) {
        if (group && data.groups[r] != *group) continue;
        const int b = bin_of(data.scores[r], bins);
        ++t.n[b];
        score_sum[b] += data.scores[r];
        label_sum[b] += data.labels[r];
    }
    t.p.assign(bins, kNaN);
    t.q.assign(bins, kNaN);
    for (int b = 0; b < bins; ++b) {
        if (t.n[b] > 0) {
            t.p[b] = score_sum[b] / t.n[b];
            t.q[b] = label_sum[b] / t.n[b];
        }
    }
    return t;
}

// Group a's conditional label mean carried to the global bin mean score p_i:
// interpolate between the group's bin i and bin i+1 points when both exist,
// otherwise fall back per the empty-bin policy.
double group_value_at(const BinTable& ga, int i, double p_global, EmptyBinPolicy policy) {
    const int bins = ga.bins();
    if (ga.n[i] > 0) {
        if (i + 1 < bins && ga.n[i + 1] > 0 && ga.p[i + 1] != ga.p[i]) {
            const double t = (p_global - ga.p[i]) / (ga.p[i + 1] - ga.p[i]);
            const double v = ga.q[i] + t * (ga.q[i + 1] - ga.q[i]);
            // Conditional expectations of a {0,1} label live in [0,1];
            // extrapolation may step outside, so clamp.
            return std::clamp(v, 0.0, 1.0);
        }
        return ga.q[i];
    }
    if (policy == EmptyBinPolicy::Strict) {
        throw DataError("sufficiency_gap: group '" + ga.group + "' has empty bin " +
                        std::to_string(i) + " (strict empty-bin policy)");
    }
    // Nearest nonempty bin; lower index wins ties.
    for (int d = 1; d < bins; ++d) {
        if (i - d >= 0 && ga.n[i - d] > 0) return ga.q[i - d];
        if (i + d < bins && ga.n[i + d] > 0) return ga.q[i + d];
    }
    throw DataError("sufficiency_gap: group '" + ga.group + "' has no scored rows");
}

}  // namespace

SufficiencyReport sufficiency_gap(const ScoredDataset& data, const SufficiencyOptions& options) {
    data.validate();
    if (options.bins < 2) throw std::invalid_argument("sufficiency_gap: bins must be >= 2");
    const int n_groups = data.group_count();
    if (n_groups < 2) throw DataError("sufficiency_gap: need >= 2 subgroups, got " +
                                      std::to_string(n_groups));

    SufficiencyReport report;
    report.bin_count = options.bins;
    report.weighted = options.weighted;
    report.policy = options.policy;
    report.global_table = build_table(data, options.bins, std::nullopt, "ALL");

    int nonempty = 0;
    for (long c : report.global_table.n) nonempty += c > 0 ? 1 : 0;
    if (nonempty < 2) {
        throw DataError("sufficiency_gap: fewer than 2 nonempty global bins");
    }

    const double total = static_cast<double>(report.global_table.total());
    for (int a = 0; a < n_groups; ++a) {
        report.group_tables.push_back(build_table(data, options.bins, a, data.name_of(a)));
    }

    double overall = 0.0;
    for (int a = 0; a < n_groups; ++a) {
        const BinTable& ga = report.group_tables[a];
        double gap = 0.0;
        for (int i = 0; i < options.bins; ++i) {
            if (report.global_table.n[i] == 0) continue;  // dropped
            const double q_i = report.global_table.q[i];
            const double p_i = report.global_table.p[i];
            const double q_a = group_value_at(ga, i, p_i, options.policy);
            const double w = options.weighted ? report.global_table.n[i] / total : 1.0;
            gap += w * std::abs(q_i - q_a);
        }
        report.per_group_gap[data.name_of(a)] = gap;
        overall += gap;
    }
    report.overall_gap = overall / n_groups;
    return report;
}

SufficiencyReport sufficiency_gap(const ScoredDataset& data, int bins) {
    SufficiencyOptions options;
    options.bins = bins;
    return sufficiency_gap(data, options);
}

double dp_gap(const ScoredDataset& data) {
    data.validate();
    const int n_groups = data.group_count();
    if (n_groups < 2) throw DataError("dp_gap: need >= 2 subgroups");

    double overall = 0.0;
    std::vector<double> sum(n_groups, 0.0);
    std::vector<long> count(n_groups, 0);
    for (std::size_t r = 0; r < data.scores.size(); ++r) {
        overall += data.scores[r];
        sum[data.groups[r]] += data.scores[r];
        ++count[data.groups[r]];
    }
    overall /= static_cast<double>(data.scores.size());

    double gap = 0.0;
    for (int a = 0; a < n_groups; ++a) {
        if (count[a] == 0) throw DataError("dp_gap: group " + data.name_of(a) + " has no rows");
        gap += std::abs(overall - sum[a] / count[a]);
    }
    return gap / n_groups;
}

double eo_gap(const ScoredDataset& data) {
    data.validate();
    const int n_groups = data.group_count();
    if (n_groups < 2) throw DataError("eo_gap: need >= 2 subgroups");

    double class_gap[2];
    for (int y = 0; y < 2; ++y) {
        double overall_sum = 0.0;
        long overall_n = 0;
        std::vector<double> sum(n_groups, 0.0);
        std::vector<long> count(n_groups, 0);
        for (std::size_t r = 0; r < data.scores.size(); ++r) {
            if (data.labels[r] != y) continue;
            overall_sum += data.scores[r];
            ++overall_n;
            sum[data.groups[r]] += data.scores[r];
            ++count[data.groups[r]];
        }
        if (overall_n == 0) {
            throw DataError("eo_gap: label class " + std::to_string(y) + " absent");
        }
        const double overall = overall_sum / overall_n;
        double gap = 0.0;
        int present = 0;
        for (int a = 0; a < n_groups; ++a) {
            if (count[a] == 0) continue;  // skipped for this class
            gap += std::abs(overall - sum[a] / count[a]);
            ++present;
        }
        class_gap[y] = gap / present;
    }
    return 0.5 * (class_gap[0] + class_gap[1]);
}

BinTable calibration_curve(const ScoredDataset& data, int bins, std::optional<int> group) {
    data.validate();
    if (bins < 2) throw std::invalid_argument("calibration_curve: bins must be >= 2");
    const std::string name = group ? data.name_of(*group) : "ALL";
    BinTable t = build_table(data, bins, group, name);
    if (t.total() == 0) {
        throw DataError("calibration_curve: no rows for group '" + name + "'");
    }
    return t;
}

std::string bin_tables_to_csv(const std::vector<BinTable>& tables) {
    std::ostringstream out;
    out.precision(17);
    out << "bin_lo,bin_hi,p,q,n,group\n";
    for (const auto& t : tables) {
        for (int b = 0; b < t.bins(); ++b) {
            if (t.n[b] == 0) continue;
            out << t.edges[b] << "," << t.edges[b + 1] << "," << t.p[b] << "," << t.q[b] << ","
                << t.n[b] << "," << t.group << "\n";
        }
    }
    return out.str();
}

std::string sufficiency_report_to_json(const SufficiencyReport& report) {
    nlohmann::json j;
    j["overall_gap"] = report.overall_gap;
    j["per_group_gap"] = report.per_group_gap;
    j["bin_count"] = report.bin_count;
    j["weighted"] = report.weighted;
    j["empty_bin_policy"] = to_string(report.policy);
    return j.dump(2);
}

ScoredDataset load_scored_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");

    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            cells.push_back(cell);
        }
        return cells;
    };

    const auto header = split(line);
    int score_col = -1;
    int label_col = -1;
    int group_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "score") score_col = static_cast<int>(i);
        if (header[i] == "label") label_col = static_cast<int>(i);
        if (header[i] == "group") group_col = static_cast<int>(i);
    }
    if (score_col < 0 || label_col < 0 || group_col < 0) {
        throw DataError(path + ": header must contain score,label,group");
    }

    ScoredDataset data;
    std::map<std::string, int> codes;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": wrong field count");
        }
        try {
            data.scores.push_back(std::stod(cells[score_col]));
            data.labels.push_back(std::stoi(cells[label_col]));
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(line_no) + ": unparseable row");
        }
        auto [it, inserted] = codes.emplace(cells[group_col], static_cast<int>(codes.size()));
        data.groups.push_back(it->second);
    }
    data.group_names.resize(codes.size());
    for (const auto& [name, code] : codes) data.group_names[code] = name;
    data.validate();
    return data;
}

}  // namespace fams
