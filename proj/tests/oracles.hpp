#pragma once

// Independent reference implementations backing the unit and acceptance
// suites. These are written straight from the definitions and stay separate
// from the library code paths they check.

#include "poisonlab/dataset.hpp"
#include "poisonlab/linmod.hpp"

#include <Eigen/Dense>

#include <utility>

namespace poisonlab::oracles {

/// Closed form of min (1/2n)||Xw + b1 - y||^2 + (lambda/2)||w||^2 via the
/// centered normal equations.
std::pair<Eigen::VectorXd, double> ridge_closed_form(const Eigen::MatrixXd& x,
                                                     const Eigen::VectorXd& y, double lambda);

struct FdJacobian {
    Eigen::MatrixXd dw; // (j, l) = d w_j / d x_c[l]
    Eigen::VectorXd db;
    bool active_set_stable = true; // lasso/en: nonzero pattern unchanged at x +/- h
};

/// Central-difference Jacobian of the refit map x_c -> (w*, b*): the learner
/// is refit from scratch at x_c +/- h e_l with a tight tolerance.
FdJacobian fd_model_jacobian(const Dataset& train, Eigen::Index attack_row, double lambda,
                             Regularizer reg, double h = 1e-5);

/// Central differences of the attacker objective (refit, then evaluate Eq.-2
/// style on the reference data).
Eigen::VectorXd fd_attacker_gradient(const Dataset& reference, const Dataset& train,
                                     Eigen::Index attack_row, double lambda, Regularizer reg,
                                     double h = 1e-5);

/// Direct transcription of the local outlier factor formulas (k-distance,
/// reachability distance, local reachability density, density ratio), with
/// neighbors ordered by (distance, index).
double brute_lof(const Eigen::MatrixXd& train, const Eigen::VectorXd& query, int k);

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& x, double gamma);

/// Minimum of 0.5 a^T Q a over {0 <= a_i <= 1/(nu n), sum a = 1} by exhaustive
/// enumeration of the grid with `ticks` subdivisions of the unit mass.
double brute_ocsvm_grid_objective(const Eigen::MatrixXd& gram, double nu, int ticks);

} // namespace poisonlab::oracles
