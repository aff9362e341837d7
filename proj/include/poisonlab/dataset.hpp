#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace poisonlab {

// Labeled feature matrix. Labels are always -1/+1; features are finite after
// ingestion. Immutable by convention once built (the attack loop works on its
// own copy).
struct Dataset {
    Eigen::MatrixXd features;               // n x d
    Eigen::VectorXd labels;                 // entries in {-1, +1}
    std::vector<std::string> feature_names; // length d

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }

    /// Throws DataError when an ingestion invariant is broken (non-finite
    /// feature, label outside {-1,+1}, empty matrix, name/dim mismatch).
    void validate() const;

    Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

/// a stacked on top of b; feature_names taken from a (dims must match).
Dataset concat(const Dataset& a, const Dataset& b);

// Per-feature affine normalization fitted on training data only.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev; // constant features get 1 so apply() is total

    static Standardizer fit(const Dataset& train);

    Dataset apply(const Dataset& d) const;
    Dataset invert(const Dataset& d) const;
    Eigen::VectorXd apply_point(const Eigen::VectorXd& x) const;
    Eigen::VectorXd invert_point(const Eigen::VectorXd& x) const;
};

struct CsvSchema {
    bool has_header = false;
    int label_column = -1;                       // required, exactly one
    std::set<int> categorical_columns;           // one-hot encoded
    std::map<std::string, double> label_map;     // empty: auto-map two values
    std::map<std::string, double> value_recode;  // cell text -> numeric, applied
                                                 // to feature cells before parse
    std::string missing_marker = "?";
    bool drop_missing_rows = true;
};

/// Plain CSV ingestion: drops rows carrying the missing marker (unless the
/// marker is recoded), one-hot encodes categorical columns with category order
/// sorted lexicographically, maps the label column to {-1,+1}. When no
/// label_map is given the two distinct label strings are mapped with the
/// lexicographically smaller one to -1.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

/// Preset schemas over load_csv for the three supported corpora:
///   spambase             <- data_dir/spambase.data
///   credit-approval      <- data_dir/crx.data
///   congressional-voting <- data_dir/house-votes-84.data
/// Returns the unnormalized dataset.
Dataset load_uci(const std::string& name, const std::string& data_dir);

/// Disjoint, exhaustive, seed-deterministic shuffle split. Row order within
/// each side preserves the input order.
std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, std::uint64_t seed);

struct GaussianToyConfig {
    Eigen::Vector2d mean_pos{1.0, 1.0};
    Eigen::Vector2d mean_neg{-1.0, -1.0};
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
    int samples_per_class = 50;
    std::uint64_t seed = 0;
};

/// Two-class 2-D Gaussian sample, +1 block first. Throws on non-SPD covariance.
Dataset gen_gaussian_toy(const GaussianToyConfig& cfg);

} // namespace poisonlab
