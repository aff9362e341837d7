#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace poisonlab::oracles {

std::pair<Eigen::VectorXd, double> ridge_closed_form(const Eigen::MatrixXd& x,
                                                     const Eigen::VectorXd& y, double lambda) {
    const auto n = static_cast<double>(x.rows());
    const Eigen::RowVectorXd mean_x = x.colwise().mean();
    const double mean_y = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - mean_x;
    const Eigen::VectorXd yc = y.array() - mean_y;
    const Eigen::MatrixXd lhs = xc.transpose() * xc / n
                                + lambda * Eigen::MatrixXd::Identity(x.cols(), x.cols());
    const Eigen::VectorXd w = lhs.ldlt().solve(xc.transpose() * yc / n);
    return {w, mean_y - mean_x.dot(w)};
}

namespace {

FitOptions tight_fit_options() {
    FitOptions opt;
    opt.tol = 1e-12;
    opt.max_sweeps = 500000;
    return opt;
}

std::vector<Eigen::Index> nonzero_pattern(const Eigen::VectorXd& w) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < w.size(); ++j)
        if (w[j] != 0.0) idx.push_back(j);
    return idx;
}

} // namespace

FdJacobian fd_model_jacobian(const Dataset& train, Eigen::Index attack_row, double lambda,
                             Regularizer reg, double h) {
    const Eigen::Index d = train.dim();
    FdJacobian out;
    out.dw.resize(d, d);
    out.db.resize(d);

    const LinearModel base = fit(train, lambda, reg, tight_fit_options());
    const auto base_pattern = nonzero_pattern(base.weights);

    for (Eigen::Index l = 0; l < d; ++l) {
        Dataset plus = train;
        plus.features(attack_row, l) += h;
        Dataset minus = train;
        minus.features(attack_row, l) -= h;
        const LinearModel mp = fit(plus, lambda, reg, tight_fit_options());
        const LinearModel mm = fit(minus, lambda, reg, tight_fit_options());
        out.dw.col(l) = (mp.weights - mm.weights) / (2.0 * h);
        out.db[l] = (mp.bias - mm.bias) / (2.0 * h);
        if (reg.l1_fraction() > 0.0
            && (nonzero_pattern(mp.weights) != base_pattern
                || nonzero_pattern(mm.weights) != base_pattern)) {
            out.active_set_stable = false;
        }
    }
    return out;
}

Eigen::VectorXd fd_attacker_gradient(const Dataset& reference, const Dataset& train,
                                     Eigen::Index attack_row, double lambda, Regularizer reg,
                                     double h) {
    const Eigen::Index d = train.dim();
    Eigen::VectorXd grad(d);
    for (Eigen::Index l = 0; l < d; ++l) {
        Dataset plus = train;
        plus.features(attack_row, l) += h;
        Dataset minus = train;
        minus.features(attack_row, l) -= h;
        const double wp = objective(fit(plus, lambda, reg, tight_fit_options()), reference);
        const double wm = objective(fit(minus, lambda, reg, tight_fit_options()), reference);
        grad[l] = (wp - wm) / (2.0 * h);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// LOF
// ---------------------------------------------------------------------------

namespace {

std::vector<Eigen::Index> brute_knn(const Eigen::MatrixXd& x, const Eigen::VectorXd& p, int k,
                                    Eigen::Index skip) {
    std::vector<std::pair<double, Eigen::Index>> dist;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (i == skip) continue;
        dist.emplace_back((x.row(i).transpose() - p).norm(), i);
    }
    std::sort(dist.begin(), dist.end());
    std::vector<Eigen::Index> out;
    for (int i = 0; i < k; ++i) out.push_back(dist[static_cast<std::size_t>(i)].second);
    return out;
}

double brute_kdist(const Eigen::MatrixXd& x, Eigen::Index i, int k) {
    const auto nbrs = brute_knn(x, x.row(i).transpose(), k, i);
    return (x.row(nbrs.back()).transpose() - x.row(i).transpose()).norm();
}

double brute_lrd(const Eigen::MatrixXd& x, const Eigen::VectorXd& p, int k, Eigen::Index skip) {
    const auto nbrs = brute_knn(x, p, k, skip);
    double reach = 0.0;
    for (Eigen::Index o : nbrs) {
        const double dist = (x.row(o).transpose() - p).norm();
        reach += std::max(brute_kdist(x, o, k), dist);
    }
    if (reach == 0.0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(k) / reach;
}

} // namespace

double brute_lof(const Eigen::MatrixXd& train, const Eigen::VectorXd& query, int k) {
    const auto nbrs = brute_knn(train, query, k, -1);
    const double lrd_q = brute_lrd(train, query, k, -1);
    double ratio_sum = 0.0;
    for (Eigen::Index o : nbrs) {
        ratio_sum += brute_lrd(train, train.row(o).transpose(), k, o) / lrd_q;
    }
    return ratio_sum / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// One-class SVM dual by grid enumeration
// ---------------------------------------------------------------------------

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x, double gamma) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            gram(i, j) = std::exp(-gamma * (x.row(i) - x.row(j)).squaredNorm());
        }
    }
    return gram;
}

namespace {

void enumerate_simplex(const Eigen::MatrixXd& gram, int ticks, int cap_ticks,
                       std::vector<int>& assignment, int var, int mass_left, double obj,
                       double& best) {
    const auto n = static_cast<int>(gram.rows());
    if (obj >= best) return; // all Q entries are nonnegative: obj only grows
    if (var == n - 1) {
        // Last variable takes the remaining mass if it fits.
        if (mass_left > cap_ticks) return;
        const double v = static_cast<double>(mass_left) / ticks;
        double add = 0.5 * v * v * gram(var, var);
        for (int i = 0; i < var; ++i)
            add += v * (static_cast<double>(assignment[static_cast<std::size_t>(i)]) / ticks)
                   * gram(i, var);
        best = std::min(best, obj + add);
        return;
    }
    // Feasibility prune: the rest must be able to absorb the remaining mass.
    const int remaining_capacity = (n - var) * cap_ticks;
    if (mass_left > remaining_capacity) return;
    for (int t = 0; t <= std::min(cap_ticks, mass_left); ++t) {
        const double v = static_cast<double>(t) / ticks;
        double add = 0.5 * v * v * gram(var, var);
        for (int i = 0; i < var; ++i)
            add += v * (static_cast<double>(assignment[static_cast<std::size_t>(i)]) / ticks)
                   * gram(i, var);
        assignment[static_cast<std::size_t>(var)] = t;
        enumerate_simplex(gram, ticks, cap_ticks, assignment, var + 1, mass_left - t, obj + add,
                          best);
    }
    assignment[static_cast<std::size_t>(var)] = 0;
}

} // namespace

double brute_ocsvm_grid_objective(const Eigen::MatrixXd& gram, double nu, int ticks) {
    const auto n = static_cast<int>(gram.rows());
    const double cap = 1.0 / (nu * n);
    const int cap_ticks = static_cast<int>(std::floor(cap * ticks + 1e-9));
    std::vector<int> assignment(static_cast<std::size_t>(n), 0);
    double best = std::numeric_limits<double>::infinity();
    enumerate_simplex(gram, ticks, cap_ticks, assignment, 0, ticks, 0.0, best);
    return best;
}

} // namespace poisonlab::oracles
