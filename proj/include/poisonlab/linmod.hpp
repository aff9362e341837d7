#pragma once

#include "poisonlab/dataset.hpp"

#include <Eigen/Dense>

#include <string>

namespace poisonlab {

enum class RegKind { lasso, ridge, elastic_net };

struct Regularizer {
    RegKind kind = RegKind::lasso;
    double rho = 1.0; // elastic-net mix in [0,1]; ignored for lasso/ridge

    // L1 share of the penalty: 1 for lasso, 0 for ridge, rho for elastic net.
    double l1_fraction() const {
        switch (kind) {
        case RegKind::lasso: return 1.0;
        case RegKind::ridge: return 0.0;
        case RegKind::elastic_net: return rho;
        }
        return 1.0;
    }

    // Omega(w) = l1 * ||w||_1 + (1 - l1) * ||w||_2^2 / 2
    double penalty(const Eigen::VectorXd& w) const {
        const double l1 = l1_fraction();
        return l1 * w.lpNorm<1>() + (1.0 - l1) * 0.5 * w.squaredNorm();
    }
};

Regularizer make_regularizer(const std::string& name, double rho = 1.0);
std::string regularizer_name(const Regularizer& reg);

struct FitOptions {
    double tol = 1e-8;     // max coordinate change per sweep
    int max_sweeps = 10000;
};

// f(x) = weights . x + bias, trained as a regressor on the -1/+1 labels.
struct LinearModel {
    Eigen::VectorXd weights;
    double bias = 0.0;
    double lambda = 0.0;
    Regularizer reg;

    // solver diagnostics
    bool converged = true;
    int sweeps = 0;

    double predict(const Eigen::VectorXd& x) const;
    int classify(const Eigen::VectorXd& x) const; // sign(0) = +1
};

/// Minimizes (1/n) sum_i 0.5 (f(x_i) - y_i)^2 + lambda * Omega(w) by cyclic
/// coordinate descent with exact soft-threshold updates; the bias is never
/// penalized. A non-converged fit is still returned, flagged in the model.
LinearModel fit(const Dataset& train, double lambda, Regularizer reg, FitOptions opt = {},
                const LinearModel* warm_start = nullptr);

/// Objective value (1/n) sum 0.5 (f - y)^2 + lambda * Omega(w) on d.
double objective(const LinearModel& m, const Dataset& d);

double accuracy(const LinearModel& m, const Dataset& d);

/// dOmega/dw: sign pattern for lasso (sub(0)=0), w for ridge,
/// rho*sub(w) + (1-rho)*w for elastic net.
Eigen::VectorXd reg_subgradient(const LinearModel& m);

// Stationarity residuals of the fitted model on its training data.
struct KktReport {
    double active_residual = 0.0; // max_j, w_j != 0: |grad_j + lambda r_j|
    double zero_excess = 0.0;     // max_j, w_j == 0: |grad_j| - lambda*l1 (clamped at 0)
    double bias_residual = 0.0;   // |mean residual|
    double worst() const;
};
KktReport check_kkt(const LinearModel& m, const Dataset& train);

void save_model(const LinearModel& m, const std::string& path);
LinearModel load_model(const std::string& path);

} // namespace poisonlab
