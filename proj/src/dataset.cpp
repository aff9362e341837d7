#include "poisonlab/dataset.hpp"

#include "poisonlab/csvio.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace poisonlab {

void Dataset::validate() const {
    if (features.rows() < 1 || features.cols() < 1)
        throw DataError("dataset is empty after ingestion");
    if (labels.size() != features.rows())
        throw DataError("label count does not match row count");
    if (static_cast<Eigen::Index>(feature_names.size()) != features.cols())
        throw DataError("feature_names length does not match feature dimension");
    if (!features.allFinite())
        throw DataError("non-finite feature value after ingestion");
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1.0 && labels[i] != -1.0)
            throw DataError("label outside {-1,+1}");
    }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
        out.labels[static_cast<Eigen::Index>(i)] = labels[rows[i]];
    }
    out.feature_names = feature_names;
    return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.dim() != b.dim()) throw DataError("concat: feature dimensions differ");
    Dataset out;
    out.features.resize(a.n() + b.n(), a.dim());
    out.features.topRows(a.n()) = a.features;
    out.features.bottomRows(b.n()) = b.features;
    out.labels.resize(a.n() + b.n());
    out.labels.head(a.n()) = a.labels;
    out.labels.tail(b.n()) = b.labels;
    out.feature_names = a.feature_names;
    return out;
}

// ---------------------------------------------------------------------------
// Standardizer
// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Dataset& train) {
    const Eigen::Index n = train.n();
    const Eigen::Index d = train.dim();
    Standardizer s;
    s.mean = train.features.colwise().mean();
    s.stddev.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double var = 0.0;
        if (n > 1) {
            var = (train.features.col(j).array() - s.mean[j]).square().sum()
                  / static_cast<double>(n - 1);
        }
        // Constant feature: store 1 so the transformed column is identically 0.
        s.stddev[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Dataset Standardizer::apply(const Dataset& d) const {
    Dataset out = d;
    out.features = (d.features.rowwise() - mean.transpose()).array().rowwise()
                   / stddev.transpose().array();
    return out;
}

Dataset Standardizer::invert(const Dataset& d) const {
    Dataset out = d;
    out.features = (d.features.array().rowwise() * stddev.transpose().array()).rowwise()
                   + mean.transpose().array();
    return out;
}

Eigen::VectorXd Standardizer::apply_point(const Eigen::VectorXd& x) const {
    return (x - mean).cwiseQuotient(stddev);
}

Eigen::VectorXd Standardizer::invert_point(const Eigen::VectorXd& x) const {
    return x.cwiseProduct(stddev) + mean;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace {

bool parse_number(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    char* end = nullptr;
    out = std::strtod(cell.c_str(), &end);
    return end == cell.c_str() + cell.size() && std::isfinite(out);
}

} // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    auto rows = read_csv_rows(path);
    if (rows.empty()) throw DataError("empty file: " + path);

    std::vector<std::string> column_names;
    std::size_t first_data_row = 0;
    const std::size_t ncols = rows[0].size();
    if (schema.has_header) {
        column_names = rows[0];
        first_data_row = 1;
        if (rows.size() < 2) throw DataError("no data rows in " + path);
    } else {
        for (std::size_t c = 0; c < ncols; ++c) column_names.push_back("c" + std::to_string(c));
    }

    if (schema.label_column < 0 || static_cast<std::size_t>(schema.label_column) >= ncols)
        throw DataError("schema label column out of range for " + path);
    for (int c : schema.categorical_columns) {
        if (c < 0 || static_cast<std::size_t>(c) >= ncols)
            throw DataError("schema categorical column out of range for " + path);
    }

    // Pass 1: drop missing rows, apply recodes, collect label values and
    // categorical category sets.
    struct RawRow {
        std::vector<std::string> cells;
    };
    std::vector<RawRow> kept;
    std::map<int, std::set<std::string>> categories;
    std::set<std::string> label_values;
    for (std::size_t r = first_data_row; r < rows.size(); ++r) {
        if (rows[r].size() != ncols) {
            std::ostringstream msg;
            msg << path << ": row " << (r + 1) << " has " << rows[r].size()
                << " columns, expected " << ncols;
            throw DataError(msg.str());
        }
        bool missing = false;
        for (std::size_t c = 0; c < ncols; ++c) {
            const std::string& cell = rows[r][c];
            if (cell == schema.missing_marker
                && schema.value_recode.find(cell) == schema.value_recode.end()) {
                missing = true;
                break;
            }
        }
        if (missing) {
            if (schema.drop_missing_rows) continue;
            std::ostringstream msg;
            msg << path << ": missing value in row " << (r + 1);
            throw DataError(msg.str());
        }
        kept.push_back({rows[r]});
        label_values.insert(rows[r][static_cast<std::size_t>(schema.label_column)]);
        for (int c : schema.categorical_columns)
            categories[c].insert(rows[r][static_cast<std::size_t>(c)]);
    }
    if (kept.empty()) throw DataError("no usable rows in " + path);

    // Label mapping.
    std::map<std::string, double> label_map = schema.label_map;
    if (label_map.empty()) {
        if (label_values.size() != 2) {
            std::ostringstream msg;
            msg << path << ": label column has " << label_values.size()
                << " distinct values, expected 2";
            throw DataError(msg.str());
        }
        auto it = label_values.begin();
        label_map[*it++] = -1.0; // lexicographically smaller -> -1
        label_map[*it] = 1.0;
    }

    // Output layout: source column order, categoricals expanded in place.
    std::vector<std::string> names;
    struct ColPlan {
        int source = 0;
        bool categorical = false;
        std::vector<std::string> cats; // sorted
        Eigen::Index offset = 0;
    };
    std::vector<ColPlan> plan;
    Eigen::Index d = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
        if (static_cast<int>(c) == schema.label_column) continue;
        ColPlan p;
        p.source = static_cast<int>(c);
        p.offset = d;
        if (schema.categorical_columns.count(static_cast<int>(c))) {
            p.categorical = true;
            p.cats.assign(categories[static_cast<int>(c)].begin(),
                          categories[static_cast<int>(c)].end());
            for (const auto& cat : p.cats) names.push_back(column_names[c] + "=" + cat);
            d += static_cast<Eigen::Index>(p.cats.size());
        } else {
            names.push_back(column_names[c]);
            d += 1;
        }
        plan.push_back(std::move(p));
    }

    Dataset out;
    out.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kept.size()), d);
    out.labels.resize(static_cast<Eigen::Index>(kept.size()));
    out.feature_names = std::move(names);

    for (std::size_t r = 0; r < kept.size(); ++r) {
        const auto& cells = kept[r].cells;
        const std::string& label_cell = cells[static_cast<std::size_t>(schema.label_column)];
        auto lit = label_map.find(label_cell);
        if (lit == label_map.end())
            throw DataError(path + ": unmapped label value '" + label_cell + "'");
        out.labels[static_cast<Eigen::Index>(r)] = lit->second;

        for (const auto& p : plan) {
            const std::string& cell = cells[static_cast<std::size_t>(p.source)];
            if (p.categorical) {
                auto pos = std::lower_bound(p.cats.begin(), p.cats.end(), cell);
                // Present by construction of the category sets.
                out.features(static_cast<Eigen::Index>(r),
                             p.offset + (pos - p.cats.begin())) = 1.0;
            } else {
                double value = 0.0;
                auto recode = schema.value_recode.find(cell);
                if (recode != schema.value_recode.end()) {
                    value = recode->second;
                } else if (!parse_number(cell, value)) {
                    std::ostringstream msg;
                    msg << path << ": non-numeric entry '" << cell << "' in numeric column "
                        << column_names[static_cast<std::size_t>(p.source)];
                    throw DataError(msg.str());
                }
                out.features(static_cast<Eigen::Index>(r), p.offset) = value;
            }
        }
    }

    out.validate();
    return out;
}

Dataset load_uci(const std::string& name, const std::string& data_dir) {
    namespace fs = std::filesystem;
    CsvSchema schema;
    std::string file;
    if (name == "spambase") {
        file = "spambase.data";
        schema.label_column = 57;
        schema.label_map = {{"1", 1.0}, {"0", -1.0}}; // spam -> +1
    } else if (name == "credit-approval") {
        file = "crx.data";
        schema.label_column = 15;
        schema.label_map = {{"+", 1.0}, {"-", -1.0}};
        schema.categorical_columns = {0, 3, 4, 5, 6, 8, 9, 11, 12};
        schema.drop_missing_rows = true;
    } else if (name == "congressional-voting") {
        file = "house-votes-84.data";
        schema.label_column = 0;
        schema.label_map = {{"democrat", 1.0}, {"republican", -1.0}};
        // Abstention coded as the midpoint; keeps all 435 rows.
        schema.value_recode = {{"y", 1.0}, {"n", 0.0}, {"?", 0.5}};
        schema.drop_missing_rows = false;
    } else {
        throw DataError("unknown dataset '" + name
                        + "' (expected spambase, credit-approval or congressional-voting)");
    }

    fs::path path = fs::path(data_dir) / file;
    if (!fs::exists(path)) {
        throw DataError("raw file not found: " + path.string()
                        + " (see tools/fetch_uci.sh for how to obtain it)");
    }
    return load_csv(path.string(), schema);
}

// ---------------------------------------------------------------------------
// Splitting and toy data
// ---------------------------------------------------------------------------

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train_fraction must lie in (0,1)");
    const Eigen::Index n = d.n();
    if (n < 2) throw std::invalid_argument("cannot split a dataset with fewer than 2 rows");
    auto n_train =
        static_cast<Eigen::Index>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
    if (n_train < 1) throw std::invalid_argument("train_fraction keeps no training rows");
    n_train = std::min(n_train, n - 1);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<Eigen::Index> train_idx(order.begin(), order.begin() + n_train);
    std::vector<Eigen::Index> test_idx(order.begin() + n_train, order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {d.subset(train_idx), d.subset(test_idx)};
}

Dataset gen_gaussian_toy(const GaussianToyConfig& cfg) {
    if (cfg.samples_per_class < 1)
        throw std::invalid_argument("samples_per_class must be positive");
    const Eigen::Matrix2d cov = cfg.covariance;
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + cov.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("covariance must be symmetric");
    Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("covariance must be positive definite");
    const Eigen::Matrix2d chol = llt.matrixL();

    const int m = cfg.samples_per_class;
    Dataset out;
    out.features.resize(2 * m, 2);
    out.labels.resize(2 * m);
    out.feature_names = {"x1", "x2"};

    Rng rng(cfg.seed);
    for (int c = 0; c < 2; ++c) {
        const Eigen::Vector2d& mu = (c == 0) ? cfg.mean_pos : cfg.mean_neg;
        const double label = (c == 0) ? 1.0 : -1.0;
        for (int i = 0; i < m; ++i) {
            Eigen::Vector2d z(rng.normal(), rng.normal());
            out.features.row(c * m + i) = (mu + chol * z).transpose();
            out.labels[c * m + i] = label;
        }
    }
    return out;
}

} // namespace poisonlab
