#include "poisonlab/detect.hpp"

#include "poisonlab/attack.hpp" // nearest-neighbor helpers
#include "poisonlab/errors.hpp"
#include "poisonlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace poisonlab {

ScorerKind scorer_kind_from_name(const std::string& name) {
    if (name == "dt") return ScorerKind::dt;
    if (name == "ocsvm") return ScorerKind::ocsvm;
    if (name == "iforest") return ScorerKind::iforest;
    if (name == "lof") return ScorerKind::lof;
    throw std::invalid_argument("unknown detector '" + name + "'");
}

std::string scorer_kind_name(ScorerKind kind) {
    switch (kind) {
    case ScorerKind::dt: return "dt";
    case ScorerKind::ocsvm: return "ocsvm";
    case ScorerKind::iforest: return "iforest";
    case ScorerKind::lof: return "lof";
    }
    return "dt";
}

double expected_path_length(int n) {
    if (n <= 1) return 0.0;
    if (n == 2) return 1.0;
    double harmonic = 0.0;
    for (int i = 1; i <= n - 1; ++i) harmonic += 1.0 / static_cast<double>(i);
    return 2.0 * harmonic - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

namespace {

bool all_rows_identical(const Eigen::MatrixXd& x) {
    for (Eigen::Index i = 1; i < x.rows(); ++i) {
        if (x.row(i) != x.row(0)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// One-class SVM: minimize 0.5 a^T Q a  s.t.  0 <= a_i <= 1/(nu n), sum a = 1,
// solved by maximal-violating-pair SMO on the RBF gram matrix.
// ---------------------------------------------------------------------------

class RbfColumnCache {
public:
    RbfColumnCache(const Eigen::MatrixXd& x, double gamma, std::size_t capacity)
        : x_(x), gamma_(gamma), capacity_(capacity) {
        row_sq_ = x.rowwise().squaredNorm();
    }

    const Eigen::VectorXd& column(Eigen::Index j) {
        auto it = cache_.find(j);
        if (it != cache_.end()) return it->second;
        if (cache_.size() >= capacity_) cache_.erase(cache_.begin());
        Eigen::VectorXd col =
            (-gamma_
             * (row_sq_.array() - 2.0 * (x_ * x_.row(j).transpose()).array() + row_sq_[j]))
                .cwiseMin(0.0)
                .exp();
        return cache_.emplace(j, std::move(col)).first->second;
    }

private:
    const Eigen::MatrixXd& x_;
    double gamma_;
    std::size_t capacity_;
    Eigen::VectorXd row_sq_;
    std::unordered_map<Eigen::Index, Eigen::VectorXd> cache_;
};

detail::SvmState fit_ocsvm(const Eigen::MatrixXd& x, double nu, double gamma) {
    const Eigen::Index n = x.rows();
    if (n < 2) throw std::invalid_argument("ocsvm requires at least 2 training points");
    if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("ocsvm requires nu in (0,1]");
    if (all_rows_identical(x))
        throw DataError("ocsvm: all training points are identical");

    const double cap = 1.0 / (nu * static_cast<double>(n));
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    // Standard initialization: the first floor(nu n) points saturated, the
    // remainder mass on the next one. Feasible by construction.
    double mass = 1.0;
    for (Eigen::Index i = 0; i < n && mass > 0.0; ++i) {
        alpha[i] = std::min(cap, mass);
        mass -= alpha[i];
    }

    RbfColumnCache cache(x, gamma, 512);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n); // Q alpha
    for (Eigen::Index i = 0; i < n; ++i) {
        if (alpha[i] > 0.0) grad += alpha[i] * cache.column(i);
    }

    const double kkt_tol = 1e-6;
    const double bound_eps = cap * 1e-12;
    const long max_iter = std::max<long>(200000, 200L * n);
    long iter = 0;
    for (; iter < max_iter; ++iter) {
        // i: steepest feasible descent among raisable, j: among lowerable.
        Eigen::Index up = -1, down = -1;
        double up_grad = std::numeric_limits<double>::infinity();
        double down_grad = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (alpha[i] < cap - bound_eps && grad[i] < up_grad) {
                up_grad = grad[i];
                up = i;
            }
            if (alpha[i] > bound_eps && grad[i] > down_grad) {
                down_grad = grad[i];
                down = i;
            }
        }
        if (up < 0 || down < 0 || down_grad - up_grad <= kkt_tol) break;

        // Copies: a later cache fill may evict the slot a reference points at.
        const Eigen::VectorXd col_up = cache.column(up);
        const Eigen::VectorXd col_down = cache.column(down);
        const double curvature = std::max(col_up[up] + col_down[down] - 2.0 * col_up[down], 1e-12);
        double delta = (down_grad - up_grad) / curvature;
        delta = std::min({delta, cap - alpha[up], alpha[down]});
        alpha[up] += delta;
        alpha[down] -= delta;
        grad += delta * (col_up - col_down);
    }
    if (iter >= max_iter)
        throw NumericError("ocsvm SMO did not reach KKT tolerance");

    // Offset from the free (margin) support vectors; bound midpoint fallback.
    double offset = 0.0;
    int free_count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (alpha[i] > bound_eps && alpha[i] < cap - bound_eps) {
            offset += grad[i];
            ++free_count;
        }
    }
    if (free_count > 0) {
        offset /= free_count;
    } else {
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (alpha[i] >= cap - bound_eps) lo = std::max(lo, grad[i]);
            if (alpha[i] <= bound_eps) hi = std::min(hi, grad[i]);
        }
        offset = 0.5 * (lo + hi);
    }

    // Keep the support vectors only (the full dual stays for verification).
    std::vector<Eigen::Index> sv;
    for (Eigen::Index i = 0; i < n; ++i)
        if (alpha[i] > bound_eps) sv.push_back(i);
    detail::SvmState state;
    state.alpha_full = alpha;
    state.support.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    state.alpha.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t i = 0; i < sv.size(); ++i) {
        state.support.row(static_cast<Eigen::Index>(i)) = x.row(sv[i]);
        state.alpha[static_cast<Eigen::Index>(i)] = alpha[sv[i]];
    }
    state.offset = offset;
    state.gamma = gamma;
    return state;
}

// ---------------------------------------------------------------------------
// Isolation forest
// ---------------------------------------------------------------------------

int build_iso_node(detail::IsoTree& tree, const Eigen::MatrixXd& x,
                   std::vector<Eigen::Index>& rows, int begin, int end, int depth,
                   int depth_limit, Rng& rng) {
    const int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    detail::IsoNode node;
    node.size = end - begin;

    std::vector<int> splittable;
    if (node.size > 1 && depth < depth_limit) {
        for (int j = 0; j < static_cast<int>(x.cols()); ++j) {
            double lo = x(rows[static_cast<std::size_t>(begin)], j);
            double hi = lo;
            for (int i = begin + 1; i < end; ++i) {
                const double v = x(rows[static_cast<std::size_t>(i)], j);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi > lo) splittable.push_back(j);
        }
    }
    if (splittable.empty()) {
        tree.nodes[static_cast<std::size_t>(node_index)] = node;
        return node_index;
    }

    const int feature = splittable[rng.uniform_index(splittable.size())];
    double lo = x(rows[static_cast<std::size_t>(begin)], feature);
    double hi = lo;
    for (int i = begin + 1; i < end; ++i) {
        const double v = x(rows[static_cast<std::size_t>(i)], feature);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double threshold = rng.uniform(lo, hi);

    auto middle = std::stable_partition(
        rows.begin() + begin, rows.begin() + end,
        [&](Eigen::Index r) { return x(r, feature) < threshold; });
    int mid = static_cast<int>(middle - rows.begin());
    if (mid == begin || mid == end) {
        // Degenerate cut (threshold at the group's edge): force a 1/rest split
        // on the sorted extreme so the recursion always shrinks.
        std::nth_element(rows.begin() + begin, rows.begin() + begin, rows.begin() + end,
                         [&](Eigen::Index a, Eigen::Index b) {
                             return x(a, feature) < x(b, feature);
                         });
        mid = begin + 1;
    }

    node.feature = feature;
    node.threshold = threshold;
    node.left = build_iso_node(tree, x, rows, begin, mid, depth + 1, depth_limit, rng);
    node.right = build_iso_node(tree, x, rows, mid, end, depth + 1, depth_limit, rng);
    tree.nodes[static_cast<std::size_t>(node_index)] = node;
    return node_index;
}

detail::ForestState fit_iforest(const Eigen::MatrixXd& x, int trees, int subsample,
                                std::uint64_t seed) {
    if (trees < 1) throw std::invalid_argument("iforest requires at least one tree");
    if (subsample < 1) throw std::invalid_argument("iforest subsample must be positive");
    const Eigen::Index n = x.rows();
    const int psi = static_cast<int>(std::min<Eigen::Index>(subsample, n));
    const int depth_limit =
        psi > 1 ? static_cast<int>(std::ceil(std::log2(static_cast<double>(psi)))) : 0;

    detail::ForestState state;
    state.normalizer = expected_path_length(psi);
    state.trees.reserve(static_cast<std::size_t>(trees));
    for (int t = 0; t < trees; ++t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        // Partial Fisher-Yates draw of psi distinct rows.
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        for (int i = 0; i < psi; ++i) {
            const std::size_t j =
                static_cast<std::size_t>(i) + rng.uniform_index(static_cast<std::size_t>(n - i));
            std::swap(rows[static_cast<std::size_t>(i)], rows[j]);
        }
        rows.resize(static_cast<std::size_t>(psi));

        detail::IsoTree tree;
        build_iso_node(tree, x, rows, 0, psi, 0, depth_limit, rng);
        state.trees.push_back(std::move(tree));
    }
    return state;
}

double iso_path_length(const detail::IsoTree& tree, const Eigen::VectorXd& p) {
    int node = 0;
    int depth = 0;
    while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
        node = p[nd.feature] < nd.threshold ? nd.left : nd.right;
        ++depth;
    }
    return depth + expected_path_length(tree.nodes[static_cast<std::size_t>(node)].size);
}

// ---------------------------------------------------------------------------
// Local outlier factor (novelty mode: queries are scored against the fitted
// reference set)
// ---------------------------------------------------------------------------

// Indices of the k nearest rows to p (rows `skip` excluded), ordered by
// (distance, index).
std::vector<Eigen::Index> knn_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& p, int k,
                                   Eigen::Index skip = -1) {
    std::vector<std::pair<double, Eigen::Index>> dist;
    dist.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (i == skip) continue;
        dist.emplace_back((x.row(i).transpose() - p).squaredNorm(), i);
    }
    const auto kk = static_cast<std::size_t>(k);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(kk), dist.end());
    std::vector<Eigen::Index> out(kk);
    for (std::size_t i = 0; i < kk; ++i) out[i] = dist[i].second;
    return out;
}

detail::LofState fit_lof(const Eigen::MatrixXd& x, int k) {
    const Eigen::Index n = x.rows();
    if (n < 2) throw std::invalid_argument("lof requires at least 2 training points");
    const int k_eff = std::min<int>(k, static_cast<int>(n) - 1);
    if (k_eff < 1) throw std::invalid_argument("lof requires k >= 1");

    detail::LofState state;
    state.reference = x;
    state.k = k_eff;
    if (all_rows_identical(x)) {
        state.identical_fallback = true;
        return state;
    }

    state.kdist.resize(n);
    state.lrd.resize(n);
    std::vector<std::vector<Eigen::Index>> neighbors(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        neighbors[static_cast<std::size_t>(i)] =
            knn_rows(x, x.row(i).transpose(), k_eff, i);
        state.kdist[i] =
            (x.row(neighbors[static_cast<std::size_t>(i)].back()).transpose()
             - x.row(i).transpose())
                .norm();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double reach_sum = 0.0;
        for (Eigen::Index o : neighbors[static_cast<std::size_t>(i)]) {
            const double dist = (x.row(o).transpose() - x.row(i).transpose()).norm();
            reach_sum += std::max(state.kdist[o], dist);
        }
        state.lrd[i] = reach_sum > 0.0 ? static_cast<double>(k_eff) / reach_sum
                                       : std::numeric_limits<double>::infinity();
    }
    return state;
}

double lof_score(const detail::LofState& state, const Eigen::VectorXd& p) {
    if (state.identical_fallback) {
        return (state.reference.row(0).transpose() - p).norm();
    }
    const auto neighbors = knn_rows(state.reference, p, state.k);
    double reach_sum = 0.0;
    double lrd_sum = 0.0;
    bool lrd_inf = false;
    for (Eigen::Index o : neighbors) {
        const double dist = (state.reference.row(o).transpose() - p).norm();
        reach_sum += std::max(state.kdist[o], dist);
        if (std::isinf(state.lrd[o])) {
            lrd_inf = true;
        } else {
            lrd_sum += state.lrd[o];
        }
    }
    const double k = static_cast<double>(state.k);
    if (reach_sum == 0.0) {
        // p duplicates an infinitely-dense neighborhood: as inlying as they are
        return 1.0;
    }
    const double lrd_p = k / reach_sum;
    if (lrd_inf) return std::numeric_limits<double>::infinity();
    return (lrd_sum / k) / lrd_p;
}

} // namespace

// ---------------------------------------------------------------------------
// Public interface
// ---------------------------------------------------------------------------

OutlierScorer fit_scorer(ScorerKind kind, const ScorerParams& params, const Dataset& train,
                         std::uint64_t seed) {
    if (train.n() < 1) throw std::invalid_argument("fit_scorer: empty training set");
    OutlierScorer s;
    s.kind = kind;
    s.params = params;
    s.seed = seed;
    switch (kind) {
    case ScorerKind::dt:
        s.state = detail::DtState{train.features};
        break;
    case ScorerKind::ocsvm: {
        const double gamma =
            params.gamma > 0.0 ? params.gamma : 1.0 / static_cast<double>(train.dim());
        s.state = fit_ocsvm(train.features, params.nu, gamma);
        break;
    }
    case ScorerKind::iforest:
        s.state = fit_iforest(train.features, params.trees, params.subsample, seed);
        break;
    case ScorerKind::lof:
        s.state = fit_lof(train.features, params.k);
        break;
    }
    return s;
}

double OutlierScorer::score(const Eigen::VectorXd& x) const {
    switch (kind) {
    case ScorerKind::dt:
        return nearest_distance(std::get<detail::DtState>(state).reference, x);
    case ScorerKind::ocsvm: {
        const auto& svm = std::get<detail::SvmState>(state);
        double decision = -svm.offset;
        for (Eigen::Index i = 0; i < svm.support.rows(); ++i) {
            const double sq = (svm.support.row(i).transpose() - x).squaredNorm();
            decision += svm.alpha[i] * std::exp(-svm.gamma * sq);
        }
        return -decision; // boundary-exterior points score higher
    }
    case ScorerKind::iforest: {
        const auto& forest = std::get<detail::ForestState>(state);
        if (forest.normalizer <= 0.0) return 0.5; // single-point subsample
        double total = 0.0;
        for (const auto& tree : forest.trees) total += iso_path_length(tree, x);
        const double mean_path = total / static_cast<double>(forest.trees.size());
        return std::exp2(-mean_path / forest.normalizer);
    }
    case ScorerKind::lof:
        return lof_score(std::get<detail::LofState>(state), x);
    }
    return 0.0;
}

double score(const OutlierScorer& s, const Eigen::VectorXd& x) { return s.score(x); }

std::vector<std::size_t> rank(const OutlierScorer& s, const std::vector<Eigen::VectorXd>& points) {
    std::vector<double> scores(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) scores[i] = s.score(points[i]);
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>>
filter(const OutlierScorer& s, double threshold, const std::vector<Eigen::VectorXd>& points) {
    std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>> out;
    for (const auto& p : points) {
        (s.score(p) > threshold ? out.second : out.first).push_back(p);
    }
    return out;
}

} // namespace poisonlab
