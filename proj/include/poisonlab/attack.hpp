#pragma once

#include "poisonlab/csvio.hpp"
#include "poisonlab/dataset.hpp"
#include "poisonlab/linmod.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace poisonlab {

// Box of allowed attack-point values; bounds may be +/-infinity.
struct FeasibleDomain {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    bool empty() const { return lower.size() == 0; }

    /// Componentwise clip into [lower, upper]; idempotent.
    Eigen::VectorXd project(const Eigen::VectorXd& x) const;
    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;

    /// Per-feature [min - margin*range, max + margin*range] of the rows of x.
    static FeasibleDomain from_data(const Eigen::MatrixXd& x, double margin = 0.1);
    /// Per-feature [min - pad, max + pad]; used where a sweep must not be
    /// box-limited.
    static FeasibleDomain from_data_padded(const Eigen::MatrixXd& x, double pad);
};

enum class PenaltyKind { none, distance_threshold, knn_power };

// Outlier-evasion term subtracted (with weight) from the attacker objective.
struct PenaltyTerm {
    PenaltyKind kind = PenaltyKind::none;
    double distance = 1.0; // d_att, nearest-neighbor wall (distance_threshold)
    double weight = 0.0;   // phi (knn_power only; the wall needs no weight)
    int k = 3;             // neighbor order (knn_power)
    double power = 2.0;    // P >= 1 (knn_power)

    static PenaltyTerm none() { return {}; }
    static PenaltyTerm distance_threshold(double d_att);
    static PenaltyTerm knn_power(double phi, int k, double power);
};

enum class Knowledge { perfect, surrogate };

struct AttackConfig {
    Knowledge knowledge = Knowledge::perfect; // reference is D (perfect) or D-hat
    Dataset reference;                        // the data the attacker optimizes against
    int num_points = 1;                       // q
    std::vector<double> labels;               // y_c per point; empty -> alternate +1,-1
    std::vector<Eigen::VectorXd> initial_points; // empty -> sampled (see poison)
    double step_size = 0.05;                  // sigma
    int num_steps = 200;                      // k
    double lambda = 0.1;
    Regularizer reg;
    FitOptions fit_options;
    FeasibleDomain domain;                    // empty -> from_data(reference, 0.1)
    PenaltyTerm penalty;
    std::uint64_t seed = 0;
};

struct TraceRow {
    int step = 0;  // t, 0 = initial state
    int point = 0; // c
    Eigen::VectorXd position;
    double objective = 0.0;           // W, Eq.-2 value on the reference data
    double penalized_objective = 0.0; // W' = W - phi * Lambda (== W for none/wall)
    double grad_norm = 0.0;           // ||grad W'|| used for this step (0 at t=0)
    bool rejected = false;            // distance wall refused the step
    bool error = false;               // gradient/solver failure, point frozen
};

struct AttackTrace {
    int num_steps = 0;
    int num_points = 0;
    std::vector<TraceRow> rows; // (num_steps+1) per point, step-major order
    std::vector<Eigen::VectorXd> final_points;
    std::vector<double> labels;
    LinearModel final_model;    // fitted on reference + final points
    bool singular_fallback = false;
    bool had_errors = false;

    const TraceRow& row(int step, int point) const;
    CsvTable to_csv_table() const;
    void write_csv(const std::filesystem::path& path) const;
    nlohmann::json summary() const;
};

/// W(A'; theta): the learner objective evaluated on the reference data
/// (surrogate or true), (1/m) sum 0.5 (f(x) - y)^2 + lambda * Omega(w).
double attacker_objective(const Dataset& reference, const LinearModel& model);

struct ImplicitGradients {
    Eigen::MatrixXd dw_dxc; // (j, l) = d w_j / d x_c[l]; inactive rows are zero
    Eigen::VectorXd db_dxc;
    bool singular_fallback = false; // least-squares fallback was needed
};

/// Differentiates the learner's stationarity conditions with respect to the
/// attack point. With active set A (all coordinates for ridge, the nonzero
/// ones for lasso/elastic net, held fixed), the derivatives solve
///
///   [ G_AA + lambda(1-rho') I   mu_A ] [dw_A/dx_c]     -1  [ x_cA w^T + f_c E_A ]
///   [ mu_A^T                    1    ] [db/dx_c  ]  =  --- [ w^T                ]
///                                                       n
///
/// where G = X^T X / n and mu are gram/mean statistics of the full training
/// set (reference plus attack points), f_c = f(x_c) - y_c, and rho' is the L1
/// share of the regularizer. A singular system falls back to least squares
/// and is flagged.
ImplicitGradients implicit_gradients(const LinearModel& model, const Dataset& train_with_attack,
                                     const Eigen::VectorXd& x_c, double y_c);

/// Assembles dW/dx_c = (1/m) sum_j (f(x_j) - y_j) (x_j^T dw/dx_c + db/dx_c)
///                     + lambda r^T dw/dx_c
/// from implicit_gradients and reg_subgradient. model must be stationary on
/// train_with_attack.
Eigen::VectorXd objective_gradient(const LinearModel& model, const Dataset& reference,
                                   const Dataset& train_with_attack, const Eigen::VectorXd& x_c,
                                   double y_c, bool* singular_fallback = nullptr);

/// distance_threshold: 0 inside the wall, +infinity outside (the wall itself
/// is enforced by step rejection in poison). knn_power: ||x_c - x_k||^P with
/// x_k the k-th nearest reference point, smallest index winning distance ties.
double penalty_value(const PenaltyTerm& pen, const Eigen::VectorXd& x_c, const Dataset& reference);

/// knn_power: P ||x_c - x_k||^(P-2) (x_c - x_k); zero for the other kinds.
/// The P<2 coincident-point singularity returns zero and sets *singular.
Eigen::VectorXd penalty_gradient(const PenaltyTerm& pen, const Eigen::VectorXd& x_c,
                                 const Dataset& reference, bool* singular = nullptr);

/// Fixed-step projected gradient ascent over the attack points: per step and
/// per point, refit the learner on reference + current points, form the
/// unit-normalized ascent direction g = grad W' / ||grad W'|| (so step_size is
/// a length in feature units), take d = project(x + g) - x and move
/// step_size * d; steps whose endpoint violates the distance wall are rejected
/// with the point retained. Solver errors freeze the affected point and are
/// recorded on the trace.
AttackTrace poison(const AttackConfig& cfg);

// Shared nearest-neighbor helpers (also used by the detectors).
double nearest_distance(const Eigen::MatrixXd& reference, const Eigen::VectorXd& x);
Eigen::Index kth_nearest_index(const Eigen::MatrixXd& reference, const Eigen::VectorXd& x, int k);

} // namespace poisonlab
