#include "fams/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fams/errors.hpp"
#include "fams/stochastic_net.hpp"

namespace fams {

void SubgroupDataset::validate() const {
    if (labels.size() != features.rows()) {
        throw ShapeError("SubgroupDataset '" + group_id + "': " + std::to_string(labels.size()) +
                         " labels vs " + std::to_string(features.rows()) + " feature rows");
    }
    features.ensure_finite(("SubgroupDataset '" + group_id + "' features").c_str());
    for (int y : labels) {
        if (y != 0 && y != 1) {
            throw DataError("SubgroupDataset '" + group_id + "': labels must be 0/1");
        }
    }
}

std::size_t total_rows(std::span<const SubgroupDataset> datasets) {
    std::size_t n = 0;
    for (const auto& d : datasets) n += d.size();
    return n;
}

double label_mean(std::span<const SubgroupDataset> datasets) {
    std::size_t n = 0;
    double s = 0.0;
    for (const auto& d : datasets) {
        n += d.size();
        s += std::accumulate(d.labels.begin(), d.labels.end(), 0.0);
    }
    if (n == 0) throw DataError("label_mean: no rows");
    return s / static_cast<double>(n);
}

SubgroupDataset pool(std::span<const SubgroupDataset> datasets) {
    if (datasets.empty()) throw DataError("pool: no datasets");
    const std::size_t cols = datasets.front().features.cols();
    SubgroupDataset out;
    out.group_id = "pooled";
    std::vector<double> data;
    for (const auto& d : datasets) {
        if (d.features.cols() != cols) throw ShapeError("pool: feature width mismatch");
        data.insert(data.end(), d.features.data().begin(), d.features.data().end());
        out.labels.insert(out.labels.end(), d.labels.begin(), d.labels.end());
    }
    out.features = DenseMatrix(out.labels.size(), cols, std::move(data));
    return out;
}

void SyntheticSpec::validate() const {
    if (n_groups < 1) throw ConfigError("synthetic.n_groups: must be >= 1");
    if (input_dim < 1) throw ConfigError("synthetic.input_dim: must be >= 1");
    if (samples_per_group < 5) throw ConfigError("synthetic.samples_per_group: must be >= 5");
    if (group_similarity < 0.0 || group_similarity > 1.0) {
        throw ConfigError("synthetic.group_similarity: must be in [0,1]");
    }
    if (!(beta_scale > 0.0)) throw ConfigError("synthetic.beta_scale: must be > 0");
}

double BayesOracle::operator()(std::span<const double> x, int group) const {
    const std::vector<double>& beta = betas.at(group);
    if (x.size() != beta.size()) throw ShapeError("BayesOracle: input dim mismatch");
    double z = biases.at(group);
    for (std::size_t i = 0; i < beta.size(); ++i) z += beta[i] * x[i];
    return sigmoid(z);
}

namespace {

std::string group_name(int index, int n_groups) {
    int width = 1;
    for (int v = n_groups - 1; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index);
    return "g" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, SeededRng& rng) {
    spec.validate();
    SyntheticData out;

    SeededRng shared_stream = rng.split(0);
    std::vector<double> beta_shared(spec.input_dim);
    const double entry_scale = spec.beta_scale / std::sqrt(static_cast<double>(spec.input_dim));
    for (double& b : beta_shared) b = entry_scale * shared_stream.next_normal();

    const double s = spec.group_similarity;
    for (int a = 0; a < spec.n_groups; ++a) {
        SeededRng param_stream = rng.split(100 + static_cast<std::uint64_t>(a));
        std::vector<double> beta(spec.input_dim);
        for (int i = 0; i < spec.input_dim; ++i) {
            beta[i] = s * beta_shared[i] + (1.0 - s) * entry_scale * param_stream.next_normal();
        }
        const double bias = spec.bias_mean + (1.0 - s) * spec.bias_spread * param_stream.next_normal();
        out.bayes.betas.push_back(beta);
        out.bayes.biases.push_back(bias);

        SeededRng row_stream = rng.split(1000 + static_cast<std::uint64_t>(a));
        const int n = spec.samples_per_group;
        std::vector<double> features(static_cast<std::size_t>(n) * spec.input_dim);
        std::vector<int> labels(n);
        for (int r = 0; r < n; ++r) {
            double z = bias;
            for (int i = 0; i < spec.input_dim; ++i) {
                const double x = row_stream.next_normal();
                features[static_cast<std::size_t>(r) * spec.input_dim + i] = x;
                z += beta[i] * x;
            }
            labels[r] = row_stream.next_double() <= sigmoid(z) ? 1 : 0;
        }

        const int n_train = static_cast<int>(std::floor(0.6 * n));
        const int n_valid = static_cast<int>(std::floor(0.2 * n));
        const std::string id = group_name(a, spec.n_groups);
        auto slice = [&](int lo, int hi) {
            SubgroupDataset d;
            d.group_id = id;
            d.labels.assign(labels.begin() + lo, labels.begin() + hi);
            std::vector<double> rows(features.begin() + static_cast<std::size_t>(lo) * spec.input_dim,
                                     features.begin() + static_cast<std::size_t>(hi) * spec.input_dim);
            d.features = DenseMatrix(hi - lo, spec.input_dim, std::move(rows));
            return d;
        };
        out.train.push_back(slice(0, n_train));
        out.valid.push_back(slice(n_train, n_train + n_valid));
        out.test.push_back(slice(n_train + n_valid, n));
    }
    return out;
}

void TabularSchema::validate() const {
    int labels = 0;
    int sensitive = 0;
    std::set<std::string> names;
    for (const auto& c : columns) {
        if (!names.insert(c.name).second) {
            throw ConfigError("schema: duplicate column '" + c.name + "'");
        }
        if (c.role == Role::Label) ++labels;
        if (c.role == Role::Sensitive) ++sensitive;
    }
    if (labels != 1) throw ConfigError("schema: exactly one label column required");
    if (sensitive != 1) throw ConfigError("schema: exactly one sensitive column required");
}

int TabularEncoding::feature_dim() const {
    int d = static_cast<int>(numeric.size());
    for (const auto& c : categorical) d += static_cast<int>(c.levels.size());
    return d;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct RawTable {
    std::vector<std::string> header;               // = schema names for native files
    std::vector<std::vector<std::string>> rows;    // cells, trimmed
    long skipped_missing = 0;
};

RawTable read_csv(const std::string& path, const TabularSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    RawTable table;
    std::string line;
    long line_no = 0;

    if (!schema.native_adult) {
        if (!std::getline(in, line)) throw DataError(path + ": empty file");
        ++line_no;
        for (auto& h : split_csv_line(line)) table.header.push_back(trim(h));
    } else {
        for (const auto& c : schema.columns) table.header.push_back(c.name);
    }

    const std::size_t width = table.header.size();
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (schema.native_adult && stripped.front() == '|') continue;  // adult.test banner
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != width) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields, got " + std::to_string(cells.size()));
        }
        bool missing = false;
        for (auto& c : cells) {
            c = trim(c);
            if (schema.native_adult && c == "?") missing = true;
        }
        if (missing) {
            ++table.skipped_missing;
            continue;
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

struct ColumnIndex {
    std::vector<std::pair<int, std::string>> numeric;      // file position, name
    std::vector<std::pair<int, std::string>> categorical;
    int label = -1;
    int sensitive = -1;
};

ColumnIndex resolve_columns(const RawTable& table, const TabularSchema& schema,
                            const std::string& path) {
    ColumnIndex idx;
    for (const auto& col : schema.columns) {
        auto it = std::find(table.header.begin(), table.header.end(), col.name);
        if (it == table.header.end()) {
            throw DataError(path + ": missing column '" + col.name + "'");
        }
        const int pos = static_cast<int>(it - table.header.begin());
        switch (col.role) {
            case TabularSchema::Role::Numeric: idx.numeric.emplace_back(pos, col.name); break;
            case TabularSchema::Role::Categorical: idx.categorical.emplace_back(pos, col.name); break;
            case TabularSchema::Role::Label: idx.label = pos; break;
            case TabularSchema::Role::Sensitive: idx.sensitive = pos; break;
        }
    }
    return idx;
}

double parse_numeric(const std::string& cell, const std::string& path, long row) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError(path + ": row " + std::to_string(row) + ": cannot parse numeric '" +
                        cell + "'");
    }
}

int parse_label(std::string cell, const TabularSchema& schema) {
    if (schema.native_adult && !cell.empty() && cell.back() == '.') cell.pop_back();
    return cell == schema.positive_label ? 1 : 0;
}

TabularEncoding fit_encoding(const RawTable& table, const ColumnIndex& idx,
                             const std::vector<std::size_t>& fit_rows, const std::string& path) {
    TabularEncoding enc;
    for (const auto& [pos, name] : idx.numeric) {
        double sum = 0.0;
        double sq = 0.0;
        for (std::size_t r : fit_rows) {
            const double v = parse_numeric(table.rows[r][pos], path, static_cast<long>(r));
            sum += v;
            sq += v * v;
        }
        const double n = static_cast<double>(fit_rows.size());
        const double mean = sum / n;
        double var = sq / n - mean * mean;
        if (var < 0.0) var = 0.0;
        // Constant columns z-score to 0 rather than dividing by zero.
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        enc.numeric.push_back({name, mean, sd});
    }
    for (const auto& [pos, name] : idx.categorical) {
        std::set<std::string> levels;
        for (std::size_t r : fit_rows) levels.insert(table.rows[r][pos]);
        TabularEncoding::CategoricalMap m;
        m.column = name;
        m.levels.assign(levels.begin(), levels.end());
        enc.categorical.push_back(std::move(m));
    }
    return enc;
}

std::vector<SubgroupDataset> encode_rows(const RawTable& table, const ColumnIndex& idx,
                                         const TabularSchema& schema, const TabularEncoding& enc,
                                         const std::vector<std::size_t>& rows,
                                         const std::string& path,
                                         std::vector<std::string>& warnings) {
    // Partition by sensitive value, preserving the relative row order.
    std::map<std::string, std::vector<std::size_t>> by_group;
    for (std::size_t r : rows) by_group[table.rows[r][idx.sensitive]].push_back(r);

    std::map<std::string, long> unseen_counts;
    const int dim = enc.feature_dim();

    std::vector<SubgroupDataset> out;
    for (const auto& [group, members] : by_group) {
        SubgroupDataset d;
        d.group_id = group;
        std::vector<double> data;
        data.reserve(members.size() * static_cast<std::size_t>(dim));
        for (std::size_t r : members) {
            const auto& cells = table.rows[r];
            for (std::size_t k = 0; k < idx.numeric.size(); ++k) {
                const double v = parse_numeric(cells[idx.numeric[k].first], path, static_cast<long>(r));
                data.push_back((v - enc.numeric[k].mean) / enc.numeric[k].std_dev);
            }
            for (std::size_t k = 0; k < idx.categorical.size(); ++k) {
                const auto& levels = enc.categorical[k].levels;
                const std::string& cell = cells[idx.categorical[k].first];
                auto it = std::lower_bound(levels.begin(), levels.end(), cell);
                std::size_t hot = levels.size();
                if (it != levels.end() && *it == cell) {
                    hot = static_cast<std::size_t>(it - levels.begin());
                } else {
                    ++unseen_counts[enc.categorical[k].column + ":" + cell];
                }
                for (std::size_t l = 0; l < levels.size(); ++l) {
                    data.push_back(l == hot ? 1.0 : 0.0);
                }
            }
            d.labels.push_back(parse_label(cells[idx.label], schema));
        }
        d.features = DenseMatrix(members.size(), dim, std::move(data));
        out.push_back(std::move(d));
    }
    for (const auto& [key, count] : unseen_counts) {
        warnings.push_back("unseen categorical level " + key + " mapped to zeros (" +
                           std::to_string(count) + " rows)");
    }
    return out;
}

}  // namespace

TabularData load_tabular(const std::string& path, const TabularSchema& schema,
                         const TabularEncoding* reuse) {
    schema.validate();
    RawTable table = read_csv(path, schema);
    if (table.rows.empty()) throw DataError(path + ": no data rows");
    ColumnIndex idx = resolve_columns(table, schema, path);

    std::vector<std::size_t> all(table.rows.size());
    std::iota(all.begin(), all.end(), 0);

    TabularData out;
    if (reuse) {
        out.encoding = *reuse;
    } else {
        out.encoding = fit_encoding(table, idx, all, path);
    }
    out.groups = encode_rows(table, idx, schema, out.encoding, all, path, out.warnings);
    if (table.skipped_missing > 0) {
        out.warnings.push_back(std::to_string(table.skipped_missing) +
                               " rows skipped for '?' missing values");
    }
    return out;
}

TabularSplits load_tabular_splits(const std::string& train_csv, const TabularSchema& schema,
                                  const TabularOptions& options) {
    schema.validate();
    RawTable table = read_csv(train_csv, schema);
    if (table.rows.empty()) throw DataError(train_csv + ": no data rows");
    ColumnIndex idx = resolve_columns(table, schema, train_csv);

    std::map<std::string, std::vector<std::size_t>> by_group;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        by_group[table.rows[r][idx.sensitive]].push_back(r);
    }

    SeededRng rng(options.seed);
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> valid_rows;
    std::vector<std::size_t> test_rows;
    std::uint64_t group_counter = 0;
    for (auto& [group, members] : by_group) {
        SeededRng g = rng.split(group_counter++);
        // Fisher-Yates shuffle so the subsample is uniform.
        for (std::size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[uniform_index(g, i)]);
        }
        std::size_t n_train = members.size();
        if (options.subsample_per_group > 0) {
            if (members.size() < static_cast<std::size_t>(options.subsample_per_group)) {
                throw DataError(train_csv + ": group '" + group + "' has " +
                                std::to_string(members.size()) + " rows, need " +
                                std::to_string(options.subsample_per_group));
            }
            n_train = static_cast<std::size_t>(options.subsample_per_group);
        }
        train_rows.insert(train_rows.end(), members.begin(), members.begin() + n_train);
        const std::size_t rest = members.size() - n_train;
        std::size_t n_valid = rest;
        if (options.test_csv.empty()) {
            n_valid = static_cast<std::size_t>(std::floor(options.valid_fraction * rest));
        }
        valid_rows.insert(valid_rows.end(), members.begin() + n_train,
                          members.begin() + n_train + n_valid);
        test_rows.insert(test_rows.end(), members.begin() + n_train + n_valid, members.end());
    }

    TabularSplits out;
    out.encoding = fit_encoding(table, idx, train_rows, train_csv);
    out.train = encode_rows(table, idx, schema, out.encoding, train_rows, train_csv, out.warnings);
    if (!valid_rows.empty()) {
        out.valid = encode_rows(table, idx, schema, out.encoding, valid_rows, train_csv, out.warnings);
    }
    if (!options.test_csv.empty()) {
        TabularData t = load_tabular(options.test_csv, schema, &out.encoding);
        out.test = std::move(t.groups);
        for (auto& w : t.warnings) out.warnings.push_back(std::move(w));
    } else if (!test_rows.empty()) {
        out.test = encode_rows(table, idx, schema, out.encoding, test_rows, train_csv, out.warnings);
    }
    if (table.skipped_missing > 0) {
        out.warnings.push_back(std::to_string(table.skipped_missing) +
                               " rows skipped for '?' missing values");
    }
    return out;
}

std::vector<SubgroupDataset> sample_round(std::span<const SubgroupDataset> datasets,
                                          int k_groups, int m_per_group, SeededRng& rng) {
    if (k_groups < 1 || static_cast<std::size_t>(k_groups) > datasets.size()) {
        throw DataError("sample_round: k_groups " + std::to_string(k_groups) + " out of range (" +
                        std::to_string(datasets.size()) + " groups)");
    }
    if (m_per_group < 1) throw DataError("sample_round: m_per_group must be >= 1");

    // Partial Fisher-Yates: first k entries are a uniform draw w/o replacement.
    std::vector<std::size_t> order(datasets.size());
    std::iota(order.begin(), order.end(), 0);
    for (int j = 0; j < k_groups; ++j) {
        const std::size_t pick = j + uniform_index(rng, order.size() - j);
        std::swap(order[j], order[pick]);
    }

    std::vector<SubgroupDataset> out;
    out.reserve(k_groups);
    for (int j = 0; j < k_groups; ++j) {
        const SubgroupDataset& src = datasets[order[j]];
        SubgroupDataset d;
        d.group_id = src.group_id;
        const std::size_t cols = src.features.cols();
        std::vector<double> data(static_cast<std::size_t>(m_per_group) * cols);
        d.labels.resize(m_per_group);
        for (int r = 0; r < m_per_group; ++r) {
            const std::size_t row = uniform_index(rng, src.size());
            const auto span = src.features.row(row);
            std::copy(span.begin(), span.end(), data.begin() + static_cast<std::size_t>(r) * cols);
            d.labels[r] = src.labels[row];
        }
        d.features = DenseMatrix(m_per_group, cols, std::move(data));
        out.push_back(std::move(d));
    }
    return out;
}

TabularSchema adult_schema() {
    using R = TabularSchema::Role;
    TabularSchema s;
    s.columns = {
        {"age", R::Numeric},
        {"workclass", R::Categorical},
        {"fnlwgt", R::Numeric},
        {"education", R::Categorical},
        {"education-num", R::Numeric},
        {"marital-status", R::Categorical},
        {"occupation", R::Categorical},
        {"relationship", R::Categorical},
        {"race", R::Categorical},
        {"sex", R::Sensitive},
        {"capital-gain", R::Numeric},
        {"capital-loss", R::Numeric},
        {"hours-per-week", R::Numeric},
        {"native-country", R::Categorical},
        {"income", R::Label},
    };
    s.positive_label = ">50K";
    s.native_adult = true;
    return s;
}

namespace {

template <std::size_t N>
const char* pick(SeededRng& rng, const char* (&values)[N], const double (&weights)[N]) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.next_double() * total;
    for (std::size_t i = 0; i < N; ++i) {
        u -= weights[i];
        if (u <= 0.0) return values[i];
    }
    return values[N - 1];
}

const char* education_for(int edu_num) {
    static const char* names[] = {"Preschool", "1st-4th", "5th-6th", "7th-8th", "9th",
                                  "10th", "11th", "12th", "HS-grad", "Some-college",
                                  "Assoc-voc", "Assoc-acdm", "Bachelors", "Masters",
                                  "Prof-school", "Doctorate"};
    return names[std::clamp(edu_num, 1, 16) - 1];
}

}  // namespace

void write_adult_like_csv(const std::string& path, int n_rows, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw DataError("write_adult_like_csv: cannot open " + path);

    static const char* workclasses[] = {"Private", "Self-emp-not-inc", "Self-emp-inc",
                                        "Federal-gov", "Local-gov", "State-gov",
                                        "Without-pay", "?"};
    static const double workclass_w[] = {0.70, 0.08, 0.035, 0.03, 0.065, 0.04, 0.005, 0.045};
    static const char* occupations[] = {"Prof-specialty", "Craft-repair", "Exec-managerial",
                                        "Adm-clerical", "Sales", "Other-service",
                                        "Machine-op-inspct", "Transport-moving",
                                        "Handlers-cleaners", "Farming-fishing",
                                        "Tech-support", "Protective-serv", "Priv-house-serv"};
    static const double occupation_w[] = {0.13, 0.13, 0.13, 0.12, 0.11, 0.10,
                                          0.06, 0.05, 0.04, 0.03, 0.03, 0.02, 0.01};
    static const char* races[] = {"White", "Black", "Asian-Pac-Islander",
                                  "Amer-Indian-Eskimo", "Other"};
    static const double race_w[] = {0.855, 0.096, 0.031, 0.01, 0.008};
    static const char* countries[] = {"United-States", "Mexico", "Philippines", "Germany",
                                      "Canada"};
    static const double country_w[] = {0.93, 0.03, 0.02, 0.01, 0.01};

    SeededRng rng(seed);
    for (int r = 0; r < n_rows; ++r) {
        SeededRng row = rng.split(static_cast<std::uint64_t>(r));
        const bool male = row.next_double() <= 0.67;
        const int age = std::clamp(static_cast<int>(std::lround(38.0 + 13.0 * row.next_normal())), 17, 90);
        const int edu_num = std::clamp(static_cast<int>(std::lround(10.0 + 2.6 * row.next_normal())), 1, 16);
        const int hours = std::clamp(
            static_cast<int>(std::lround(40.0 + 11.0 * row.next_normal() + (male ? 2.0 : -2.0))), 1, 99);
        const double married_p =
            sigmoid(0.09 * (age - 30)) * (male ? 0.85 : 0.55);
        const bool married = row.next_double() <= married_p;
        const char* marital = married ? "Married-civ-spouse"
                                      : (age < 30 ? "Never-married"
                                                  : (row.next_double() <= 0.5 ? "Divorced" : "Separated"));
        const char* relationship = married ? (male ? "Husband" : "Wife")
                                           : (age < 26 ? "Own-child" : "Not-in-family");
        const bool has_gain = row.next_double() <= (0.05 + 0.01 * (edu_num - 8));
        const long gain = has_gain
                              ? std::clamp<long>(std::lround(std::exp(8.0 + 0.9 * std::fabs(row.next_normal()))), 114, 99999)
                              : 0;
        const bool has_loss = !has_gain && row.next_double() <= 0.047;
        const long loss = has_loss
                              ? std::clamp<long>(std::lround(1870.0 + 240.0 * row.next_normal()), 155, 4356)
                              : 0;
        const long fnlwgt = std::lround(std::exp(11.9 + 0.45 * row.next_normal()));
        const char* workclass = pick(row, workclasses, workclass_w);
        const char* occupation = workclass[0] == '?' ? "?" : pick(row, occupations, occupation_w);
        const char* race = pick(row, races, race_w);
        const char* country = pick(row, countries, country_w);

        // Latent income model; coefficients sized so a small MLP on 500
        // samples/group lands in the low-80s accuracy range. Occupation
        // offsets, an age-hours interaction and a mild sex-dependent married
        // effect give the target enough structure that a 1000-row fit
        // chases noise.
        static const double occupation_shift[] = {0.55, -0.15, 0.70, -0.25, 0.15, -0.60,
                                                  -0.35, -0.20, -0.55, -0.45, 0.30, 0.05, -0.70};
        double occ_shift = 0.0;
        for (std::size_t i = 0; i < 13; ++i) {
            if (occupation == occupations[i]) occ_shift = occupation_shift[i];
        }
        const double kinked_age = age - (age > 62 ? 2.0 * (age - 62) : 0.0);
        const double latent = -10.6 + 0.40 * edu_num + 0.050 * kinked_age + 0.034 * hours +
                              0.0008 * (kinked_age - 38.0) * (hours - 40.0) + occ_shift +
                              (male ? 1.3 : 1.1) * (married ? 1.0 : 0.0) +
                              0.15 * (male ? 1.0 : 0.0) + 2.8 * (gain > 4000 ? 1.0 : 0.0) +
                              0.5 * (loss > 0 ? 1.0 : 0.0);
        const int y = row.next_double() <= sigmoid(1.22 * latent) ? 1 : 0;

        out << age << ", " << workclass << ", " << fnlwgt << ", " << education_for(edu_num)
            << ", " << edu_num << ", " << marital << ", " << occupation << ", " << relationship
            << ", " << race << ", " << (male ? "Male" : "Female") << ", " << gain << ", " << loss
            << ", " << hours << ", " << country << ", " << (y ? ">50K" : "<=50K") << "\n";
    }
}

}  // namespace fams
