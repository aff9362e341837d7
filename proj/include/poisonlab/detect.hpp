#pragma once

#include "poisonlab/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace poisonlab {

enum class ScorerKind { dt, ocsvm, iforest, lof };

ScorerKind scorer_kind_from_name(const std::string& name);
std::string scorer_kind_name(ScorerKind kind);

struct ScorerParams {
    // dt
    double d_def = 1.0;
    // ocsvm
    double nu = 0.1;
    double gamma = 0.0; // <= 0 means 1/d
    // iforest
    int trees = 100;
    int subsample = 256; // capped at n
    // lof
    int k = 20; // capped at n-1
};

namespace detail {

struct DtState {
    Eigen::MatrixXd reference;
};

struct SvmState {
    Eigen::MatrixXd support;  // support vectors (alpha > 0)
    Eigen::VectorXd alpha;
    Eigen::VectorXd alpha_full; // dual vector aligned with the training rows
    double offset = 0.0;        // rho in the decision value sum_i alpha_i K(x_i,x) - rho
    double gamma = 1.0;
};

struct IsoNode {
    int feature = -1; // -1: leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int size = 0;
};

struct IsoTree {
    std::vector<IsoNode> nodes; // root at 0
};

struct ForestState {
    std::vector<IsoTree> trees;
    double normalizer = 1.0; // c(subsample)
};

struct LofState {
    Eigen::MatrixXd reference;
    Eigen::VectorXd kdist; // k-distance per reference point
    Eigen::VectorXd lrd;   // local reachability density per reference point
    int k = 20;
    bool identical_fallback = false; // all-identical training data: score by distance
};

} // namespace detail

// Fitted novelty/outlier detector. Immutable after fitting; scoring is
// deterministic and oriented so that higher = more outlying.
//   dt      nearest-neighbor Euclidean distance to the reference set
//   ocsvm   negated RBF one-class SVM decision value
//   iforest 2^(-E[path length]/c(subsample))
//   lof     local outlier factor (density ratio against the k neighbors)
struct OutlierScorer {
    ScorerKind kind = ScorerKind::dt;
    ScorerParams params;
    std::uint64_t seed = 0;
    std::variant<detail::DtState, detail::SvmState, detail::ForestState, detail::LofState> state;

    double score(const Eigen::VectorXd& x) const;
};

OutlierScorer fit_scorer(ScorerKind kind, const ScorerParams& params, const Dataset& train,
                         std::uint64_t seed);

double score(const OutlierScorer& s, const Eigen::VectorXd& x);

/// Indices of points in descending score order; ties keep input order.
std::vector<std::size_t> rank(const OutlierScorer& s, const std::vector<Eigen::VectorXd>& points);

/// Partition into (kept, rejected) by score > threshold.
std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>>
filter(const OutlierScorer& s, double threshold, const std::vector<Eigen::VectorXd>& points);

/// Expected isolation path length c(n) = 2 H(n-1) - 2(n-1)/n with the exact
/// harmonic sum; c(0) = c(1) = 0.
double expected_path_length(int n);

} // namespace poisonlab
