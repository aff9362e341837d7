#include "poisonlab/attack.hpp"

#include "poisonlab/csvio.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace poisonlab {

// ---------------------------------------------------------------------------
// Feasible domain
// ---------------------------------------------------------------------------

Eigen::VectorXd FeasibleDomain::project(const Eigen::VectorXd& x) const {
    if (x.size() != lower.size())
        throw std::invalid_argument("project: dimension mismatch");
    return x.cwiseMax(lower).cwiseMin(upper);
}

bool FeasibleDomain::contains(const Eigen::VectorXd& x, double tol) const {
    if (x.size() != lower.size()) return false;
    return ((x.array() >= lower.array() - tol) && (x.array() <= upper.array() + tol)).all();
}

FeasibleDomain FeasibleDomain::from_data(const Eigen::MatrixXd& x, double margin) {
    FeasibleDomain dom;
    dom.lower = x.colwise().minCoeff();
    dom.upper = x.colwise().maxCoeff();
    const Eigen::VectorXd pad = margin * (dom.upper - dom.lower);
    dom.lower -= pad;
    dom.upper += pad;
    return dom;
}

FeasibleDomain FeasibleDomain::from_data_padded(const Eigen::MatrixXd& x, double pad) {
    FeasibleDomain dom;
    dom.lower = x.colwise().minCoeff();
    dom.upper = x.colwise().maxCoeff();
    dom.lower.array() -= pad;
    dom.upper.array() += pad;
    return dom;
}

static void validate_domain(const FeasibleDomain& dom, Eigen::Index d) {
    if (dom.lower.size() != d || dom.upper.size() != d)
        throw std::invalid_argument("feasible domain dimension mismatch");
    for (Eigen::Index j = 0; j < d; ++j) {
        if (std::isnan(dom.lower[j]) || std::isnan(dom.upper[j]) || dom.lower[j] > dom.upper[j])
            throw std::invalid_argument("feasible domain requires lower <= upper");
    }
}

// ---------------------------------------------------------------------------
// Penalty terms
// ---------------------------------------------------------------------------

PenaltyTerm PenaltyTerm::distance_threshold(double d_att) {
    if (!(d_att > 0.0))
        throw std::invalid_argument("distance_threshold penalty requires d_att > 0");
    PenaltyTerm pen;
    pen.kind = PenaltyKind::distance_threshold;
    pen.distance = d_att;
    return pen;
}

PenaltyTerm PenaltyTerm::knn_power(double phi, int k, double power) {
    if (phi < 0.0) throw std::invalid_argument("knn penalty weight must be nonnegative");
    if (k < 1) throw std::invalid_argument("knn penalty requires k >= 1");
    if (power < 1.0) throw std::invalid_argument("knn penalty requires power >= 1");
    PenaltyTerm pen;
    pen.kind = PenaltyKind::knn_power;
    pen.weight = phi;
    pen.k = k;
    pen.power = power;
    return pen;
}

// ---------------------------------------------------------------------------
// Nearest neighbors (ties broken by smallest index)
// ---------------------------------------------------------------------------

double nearest_distance(const Eigen::MatrixXd& reference, const Eigen::VectorXd& x) {
    if (reference.rows() < 1) throw std::invalid_argument("nearest_distance: empty reference");
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < reference.rows(); ++i) {
        best = std::min(best, (reference.row(i).transpose() - x).squaredNorm());
    }
    return std::sqrt(best);
}

Eigen::Index kth_nearest_index(const Eigen::MatrixXd& reference, const Eigen::VectorXd& x, int k) {
    const Eigen::Index n = reference.rows();
    if (k < 1 || k > n)
        throw std::invalid_argument("kth_nearest_index: k out of range");
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        dist[static_cast<std::size_t>(i)] = {(reference.row(i).transpose() - x).squaredNorm(), i};
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + k);
    return dist[static_cast<std::size_t>(k - 1)].second;
}

// ---------------------------------------------------------------------------
// Attacker objective and its gradient
// ---------------------------------------------------------------------------

double attacker_objective(const Dataset& reference, const LinearModel& model) {
    return objective(model, reference);
}

namespace {

// Gram/mean statistics of the full training set (reference + attack points).
struct TrainStats {
    Eigen::MatrixXd gram; // X^T X / n
    Eigen::VectorXd mean;
    double n = 0.0;
};

TrainStats compute_stats(const Eigen::MatrixXd& x) {
    TrainStats s;
    s.n = static_cast<double>(x.rows());
    s.gram = x.transpose() * x / s.n;
    s.mean = x.colwise().mean();
    return s;
}

ImplicitGradients implicit_gradients_impl(const LinearModel& model, const TrainStats& stats,
                                          const Eigen::VectorXd& x_c, double y_c) {
    const Eigen::Index d = model.weights.size();
    if (x_c.size() != d) throw std::invalid_argument("implicit_gradients: dimension mismatch");

    // Active set: every coordinate for ridge, the nonzero ones otherwise.
    std::vector<Eigen::Index> active;
    if (model.reg.l1_fraction() == 0.0) {
        active.resize(static_cast<std::size_t>(d));
        std::iota(active.begin(), active.end(), Eigen::Index{0});
    } else {
        for (Eigen::Index j = 0; j < d; ++j)
            if (model.weights[j] != 0.0) active.push_back(j);
    }
    const auto a = static_cast<Eigen::Index>(active.size());
    const double l2_pen = model.lambda * (1.0 - model.reg.l1_fraction());
    const double inv_n = 1.0 / stats.n;
    const double f_c = model.weights.dot(x_c) + model.bias - y_c;

    Eigen::MatrixXd system(a + 1, a + 1);
    for (Eigen::Index i = 0; i < a; ++i) {
        for (Eigen::Index j = 0; j < a; ++j) system(i, j) = stats.gram(active[i], active[j]);
        system(i, i) += l2_pen;
        system(i, a) = stats.mean[active[i]];
        system(a, i) = stats.mean[active[i]];
    }
    system(a, a) = 1.0;

    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(a + 1, d);
    for (Eigen::Index i = 0; i < a; ++i) {
        rhs.row(i) = -inv_n * x_c[active[i]] * model.weights.transpose();
        rhs(i, active[i]) -= inv_n * f_c;
    }
    rhs.row(a) = -inv_n * model.weights.transpose();

    ImplicitGradients out;
    Eigen::MatrixXd solution = system.ldlt().solve(rhs);
    const double rhs_scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    if (!solution.allFinite()
        || (system * solution - rhs).cwiseAbs().maxCoeff() > 1e-8 * rhs_scale) {
        // Singular stationarity system: least-squares solution, flagged.
        solution = system.completeOrthogonalDecomposition().solve(rhs);
        out.singular_fallback = true;
    }

    out.dw_dxc = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < a; ++i) out.dw_dxc.row(active[i]) = solution.row(i);
    out.db_dxc = solution.row(a);
    return out;
}

} // namespace

ImplicitGradients implicit_gradients(const LinearModel& model, const Dataset& train_with_attack,
                                     const Eigen::VectorXd& x_c, double y_c) {
    return implicit_gradients_impl(model, compute_stats(train_with_attack.features), x_c, y_c);
}

namespace {

Eigen::VectorXd assemble_gradient(const LinearModel& model, const Dataset& reference,
                                  const ImplicitGradients& ig) {
    const Eigen::Index m = reference.n();
    const Eigen::VectorXd resid = reference.features * model.weights
                                  + Eigen::VectorXd::Constant(m, model.bias) - reference.labels;
    const double inv_m = 1.0 / static_cast<double>(m);
    Eigen::VectorXd grad =
        inv_m * (ig.dw_dxc.transpose() * (reference.features.transpose() * resid)
                 + resid.sum() * ig.db_dxc);
    grad += model.lambda * (ig.dw_dxc.transpose() * reg_subgradient(model));
    return grad;
}

} // namespace

Eigen::VectorXd objective_gradient(const LinearModel& model, const Dataset& reference,
                                   const Dataset& train_with_attack, const Eigen::VectorXd& x_c,
                                   double y_c, bool* singular_fallback) {
    if (reference.n() < 1) throw std::invalid_argument("objective_gradient: empty reference");
    ImplicitGradients ig = implicit_gradients(model, train_with_attack, x_c, y_c);
    if (singular_fallback) *singular_fallback = ig.singular_fallback;
    return assemble_gradient(model, reference, ig);
}

// ---------------------------------------------------------------------------
// Penalty evaluation
// ---------------------------------------------------------------------------

double penalty_value(const PenaltyTerm& pen, const Eigen::VectorXd& x_c,
                     const Dataset& reference) {
    switch (pen.kind) {
    case PenaltyKind::none:
        return 0.0;
    case PenaltyKind::distance_threshold:
        return nearest_distance(reference.features, x_c) <= pen.distance
                   ? 0.0
                   : std::numeric_limits<double>::infinity();
    case PenaltyKind::knn_power: {
        const Eigen::Index idx = kth_nearest_index(reference.features, x_c, pen.k);
        const double dist = (reference.features.row(idx).transpose() - x_c).norm();
        return std::pow(dist, pen.power);
    }
    }
    return 0.0;
}

Eigen::VectorXd penalty_gradient(const PenaltyTerm& pen, const Eigen::VectorXd& x_c,
                                 const Dataset& reference, bool* singular) {
    if (singular) *singular = false;
    if (pen.kind != PenaltyKind::knn_power) return Eigen::VectorXd::Zero(x_c.size());

    const Eigen::Index idx = kth_nearest_index(reference.features, x_c, pen.k);
    const Eigen::VectorXd diff = x_c - reference.features.row(idx).transpose();
    const double dist = diff.norm();
    if (dist == 0.0) {
        if (pen.power < 2.0 && singular) *singular = true;
        return Eigen::VectorXd::Zero(x_c.size());
    }
    return pen.power * std::pow(dist, pen.power - 2.0) * diff;
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

const TraceRow& AttackTrace::row(int step, int point) const {
    return rows[static_cast<std::size_t>(step) * static_cast<std::size_t>(num_points)
                + static_cast<std::size_t>(point)];
}

CsvTable AttackTrace::to_csv_table() const {
    CsvTable table;
    const Eigen::Index d = rows.empty() ? 0 : rows.front().position.size();
    table.header = {"t", "c"};
    for (Eigen::Index j = 0; j < d; ++j) table.header.push_back("x" + std::to_string(j));
    table.header.insert(table.header.end(),
                        {"W", "W_penalized", "grad_norm", "rejected", "error"});
    for (const auto& r : rows) {
        std::vector<std::string> cells{std::to_string(r.step), std::to_string(r.point)};
        for (Eigen::Index j = 0; j < d; ++j) cells.push_back(fmt_g12(r.position[j]));
        cells.push_back(fmt_g12(r.objective));
        cells.push_back(fmt_g12(r.penalized_objective));
        cells.push_back(fmt_g12(r.grad_norm));
        cells.push_back(r.rejected ? "1" : "0");
        cells.push_back(r.error ? "1" : "0");
        table.add_row(std::move(cells));
    }
    return table;
}

void AttackTrace::write_csv(const std::filesystem::path& path) const {
    poisonlab::write_csv(path, to_csv_table());
}

nlohmann::json AttackTrace::summary() const {
    nlohmann::json doc;
    doc["num_points"] = num_points;
    doc["num_steps"] = num_steps;
    doc["labels"] = labels;
    doc["singular_fallback"] = singular_fallback;
    doc["had_errors"] = had_errors;
    nlohmann::json finals = nlohmann::json::array();
    for (int c = 0; c < num_points; ++c) {
        const TraceRow& last = row(num_steps, c);
        nlohmann::json entry;
        entry["point"] = c;
        entry["position"] = std::vector<double>(final_points[static_cast<std::size_t>(c)].data(),
                                                final_points[static_cast<std::size_t>(c)].data()
                                                    + final_points[static_cast<std::size_t>(c)].size());
        entry["objective"] = last.objective;
        entry["penalized_objective"] = last.penalized_objective;
        finals.push_back(std::move(entry));
    }
    doc["final_points"] = std::move(finals);
    return doc;
}

// ---------------------------------------------------------------------------
// The poisoning loop (fixed step size, boundary projection, optional wall)
// ---------------------------------------------------------------------------

namespace {

void validate_penalty(const PenaltyTerm& pen, Eigen::Index ref_n) {
    switch (pen.kind) {
    case PenaltyKind::none:
        return;
    case PenaltyKind::distance_threshold:
        if (!(pen.distance > 0.0))
            throw std::invalid_argument("distance_threshold penalty requires d_att > 0");
        return;
    case PenaltyKind::knn_power:
        if (pen.k < 1 || pen.k > ref_n)
            throw std::invalid_argument("knn penalty requires 1 <= k <= reference size");
        if (pen.power < 1.0)
            throw std::invalid_argument("knn penalty requires power >= 1");
        if (pen.weight < 0.0)
            throw std::invalid_argument("knn penalty weight must be nonnegative");
        return;
    }
}

} // namespace

AttackTrace poison(const AttackConfig& cfg) {
    const Dataset& ref = cfg.reference;
    if (ref.n() < 1) throw std::invalid_argument("poison: empty reference dataset");
    const Eigen::Index d = ref.dim();
    const int q = cfg.num_points;
    if (q < 1) throw std::invalid_argument("poison: need at least one attack point");
    if (!(cfg.step_size > 0.0)) throw std::invalid_argument("poison: step size must be positive");
    if (cfg.num_steps < 0) throw std::invalid_argument("poison: negative step count");
    validate_penalty(cfg.penalty, ref.n());

    FeasibleDomain domain =
        cfg.domain.empty() ? FeasibleDomain::from_data(ref.features, 0.1) : cfg.domain;
    validate_domain(domain, d);

    // Labels default to alternating +1, -1.
    std::vector<double> labels = cfg.labels;
    if (labels.empty()) {
        for (int c = 0; c < q; ++c) labels.push_back(c % 2 == 0 ? 1.0 : -1.0);
    }
    if (static_cast<int>(labels.size()) != q)
        throw std::invalid_argument("poison: label count does not match num_points");
    for (double y : labels) {
        if (y != 1.0 && y != -1.0)
            throw std::invalid_argument("poison: attack labels must be -1 or +1");
    }

    // Initial points: user-supplied, or a uniformly drawn reference point of
    // the opposite class (so the attack label is the donor's flip), without
    // replacement per class.
    std::vector<Eigen::VectorXd> points = cfg.initial_points;
    if (points.empty()) {
        Rng rng(cfg.seed);
        std::vector<Eigen::Index> donors_pos, donors_neg; // donor pools by class
        for (Eigen::Index i = 0; i < ref.n(); ++i)
            (ref.labels[i] > 0 ? donors_pos : donors_neg).push_back(i);
        rng.shuffle(donors_pos);
        rng.shuffle(donors_neg);
        std::size_t next_pos = 0, next_neg = 0;
        for (int c = 0; c < q; ++c) {
            auto& pool = labels[static_cast<std::size_t>(c)] > 0 ? donors_neg : donors_pos;
            auto& cursor = labels[static_cast<std::size_t>(c)] > 0 ? next_neg : next_pos;
            if (pool.empty())
                throw std::invalid_argument("poison: no reference points of the donor class");
            if (cursor >= pool.size()) cursor = 0; // more points than donors: wrap
            points.push_back(domain.project(ref.features.row(pool[cursor++]).transpose()));
        }
    } else {
        if (static_cast<int>(points.size()) != q)
            throw std::invalid_argument("poison: initial point count does not match num_points");
        for (const auto& p : points) {
            if (p.size() != d) throw std::invalid_argument("poison: initial point dimension");
            if (!domain.contains(p, 1e-12))
                throw std::invalid_argument("poison: initial point outside the feasible domain");
        }
    }

    // Training set with the attack rows appended at the bottom.
    Dataset train = ref;
    train.features.conservativeResize(ref.n() + q, d);
    train.labels.conservativeResize(ref.n() + q);
    for (int c = 0; c < q; ++c) {
        train.features.row(ref.n() + c) = points[static_cast<std::size_t>(c)].transpose();
        train.labels[ref.n() + c] = labels[static_cast<std::size_t>(c)];
    }

    // Gram/mean of the reference part never changes; attack rows are added in.
    const Eigen::MatrixXd gram_ref = ref.features.transpose() * ref.features;
    const Eigen::VectorXd colsum_ref = ref.features.colwise().sum();
    const double n_total = static_cast<double>(ref.n() + q);
    auto current_stats = [&]() {
        TrainStats s;
        s.n = n_total;
        s.gram = gram_ref;
        s.mean = colsum_ref;
        for (int c = 0; c < q; ++c) {
            const auto& p = points[static_cast<std::size_t>(c)];
            s.gram += p * p.transpose();
            s.mean += p;
        }
        s.gram /= n_total;
        s.mean /= n_total;
        return s;
    };

    auto penalized = [&](double w_value, const Eigen::VectorXd& x) {
        if (cfg.penalty.kind == PenaltyKind::knn_power)
            return w_value - cfg.penalty.weight * penalty_value(cfg.penalty, x, ref);
        return w_value; // none; the wall contributes 0 on every retained position
    };

    AttackTrace trace;
    trace.num_steps = cfg.num_steps;
    trace.num_points = q;
    trace.labels = labels;
    trace.rows.reserve(static_cast<std::size_t>(cfg.num_steps + 1) * static_cast<std::size_t>(q));

    LinearModel model = fit(train, cfg.lambda, cfg.reg, cfg.fit_options);
    double objective_now = attacker_objective(ref, model);
    for (int c = 0; c < q; ++c) {
        trace.rows.push_back({0, c, points[static_cast<std::size_t>(c)], objective_now,
                              penalized(objective_now, points[static_cast<std::size_t>(c)]),
                              0.0, false, false});
    }

    std::vector<bool> frozen(static_cast<std::size_t>(q), false);
    for (int t = 1; t <= cfg.num_steps; ++t) {
        for (int c = 0; c < q; ++c) {
            Eigen::VectorXd& x_c = points[static_cast<std::size_t>(c)];
            TraceRow row{t, c, x_c, objective_now, penalized(objective_now, x_c),
                         0.0, false, false};
            if (frozen[static_cast<std::size_t>(c)]) {
                row.error = true;
                trace.rows.push_back(std::move(row));
                continue;
            }

            Eigen::VectorXd grad;
            try {
                bool singular = false;
                TrainStats stats = current_stats();
                ImplicitGradients ig = implicit_gradients_impl(
                    model, stats, x_c, labels[static_cast<std::size_t>(c)]);
                singular = ig.singular_fallback;
                grad = assemble_gradient(model, ref, ig);
                if (cfg.penalty.kind == PenaltyKind::knn_power) {
                    grad -= cfg.penalty.weight * penalty_gradient(cfg.penalty, x_c, ref);
                }
                if (singular) trace.singular_fallback = true;
                if (!grad.allFinite()) throw NumericError("non-finite attack gradient");
            } catch (const std::exception&) {
                frozen[static_cast<std::size_t>(c)] = true;
                trace.had_errors = true;
                row.error = true;
                trace.rows.push_back(std::move(row));
                continue;
            }

            // The ascent direction is the unit-normalized gradient, so sigma
            // is a step length in feature units and k steps can traverse the
            // feasible box:  d = Pi_B(x + g/||g||) - x ; x <- x + sigma d.
            const double grad_norm = grad.norm();
            if (grad_norm < 1e-12) {
                row.grad_norm = grad_norm;
                trace.rows.push_back(std::move(row));
                continue;
            }
            const Eigen::VectorXd direction = domain.project(x_c + grad / grad_norm) - x_c;
            Eigen::VectorXd candidate = domain.project(x_c + cfg.step_size * direction);

            bool rejected = false;
            if (cfg.penalty.kind == PenaltyKind::distance_threshold
                && nearest_distance(ref.features, candidate) > cfg.penalty.distance) {
                rejected = true; // the infinity wall: step refused, point retained
            }

            if (!rejected && candidate != x_c) {
                x_c = candidate;
                train.features.row(ref.n() + c) = x_c.transpose();
                model = fit(train, cfg.lambda, cfg.reg, cfg.fit_options, &model);
                objective_now = attacker_objective(ref, model);
            }

            row.position = x_c;
            row.objective = objective_now;
            row.penalized_objective = penalized(objective_now, x_c);
            row.grad_norm = grad_norm;
            row.rejected = rejected;
            trace.rows.push_back(std::move(row));
        }
    }

    trace.final_points = points;
    trace.final_model = model;
    return trace;
}

} // namespace poisonlab
