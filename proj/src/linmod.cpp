#include "poisonlab/linmod.hpp"

#include "poisonlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace poisonlab {

Regularizer make_regularizer(const std::string& name, double rho) {
    Regularizer reg;
    if (name == "lasso") {
        reg.kind = RegKind::lasso;
    } else if (name == "ridge") {
        reg.kind = RegKind::ridge;
    } else if (name == "elastic_net" || name == "enet") {
        reg.kind = RegKind::elastic_net;
        if (!(rho >= 0.0 && rho <= 1.0))
            throw std::invalid_argument("elastic-net rho must lie in [0,1]");
        reg.rho = rho;
    } else {
        throw std::invalid_argument("unknown regularizer '" + name + "'");
    }
    return reg;
}

std::string regularizer_name(const Regularizer& reg) {
    switch (reg.kind) {
    case RegKind::lasso: return "lasso";
    case RegKind::ridge: return "ridge";
    case RegKind::elastic_net: return "elastic_net";
    }
    return "lasso";
}

double LinearModel::predict(const Eigen::VectorXd& x) const {
    if (x.size() != weights.size())
        throw std::invalid_argument("predict: dimension mismatch");
    return weights.dot(x) + bias;
}

int LinearModel::classify(const Eigen::VectorXd& x) const {
    return predict(x) >= 0.0 ? 1 : -1;
}

namespace {

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

} // namespace

LinearModel fit(const Dataset& train, double lambda, Regularizer reg, FitOptions opt,
                const LinearModel* warm_start) {
    const Eigen::Index n = train.n();
    const Eigen::Index d = train.dim();
    if (n < 1) throw std::invalid_argument("fit: empty training set");
    if (!(lambda > 0.0)) throw std::invalid_argument("fit: lambda must be positive");
    if (reg.kind == RegKind::elastic_net && !(reg.rho >= 0.0 && reg.rho <= 1.0))
        throw std::invalid_argument("fit: elastic-net rho must lie in [0,1]");

    const Eigen::MatrixXd& x = train.features;
    const Eigen::VectorXd& y = train.labels;

    LinearModel m;
    m.lambda = lambda;
    m.reg = reg;
    if (warm_start && warm_start->weights.size() == d) {
        m.weights = warm_start->weights;
        m.bias = warm_start->bias;
    } else {
        m.weights = Eigen::VectorXd::Zero(d);
        m.bias = 0.0;
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd col_sq(d);
    for (Eigen::Index j = 0; j < d; ++j) col_sq[j] = x.col(j).squaredNorm() * inv_n;

    const double l1 = reg.l1_fraction();
    const double l1_pen = lambda * l1;
    const double l2_pen = lambda * (1.0 - l1);

    Eigen::VectorXd resid = y - x * m.weights;
    resid.array() -= m.bias;

    m.converged = false;
    int sweep = 0;
    for (; sweep < opt.max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double denom = col_sq[j] + l2_pen;
            if (denom <= 0.0) {
                // all-zero column with pure L1: the coordinate is irrelevant
                if (m.weights[j] != 0.0) {
                    resid += x.col(j) * m.weights[j];
                    m.weights[j] = 0.0;
                }
                continue;
            }
            const double z = col_sq[j] * m.weights[j] + x.col(j).dot(resid) * inv_n;
            const double w_new = soft_threshold(z, l1_pen) / denom;
            const double delta = w_new - m.weights[j];
            if (delta != 0.0) {
                resid -= x.col(j) * delta;
                m.weights[j] = w_new;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        const double bias_delta = resid.mean();
        if (bias_delta != 0.0) {
            m.bias += bias_delta;
            resid.array() -= bias_delta;
            max_delta = std::max(max_delta, std::abs(bias_delta));
        }
        if (max_delta < opt.tol) {
            m.converged = true;
            ++sweep;
            break;
        }
    }
    m.sweeps = sweep;
    return m;
}

double objective(const LinearModel& m, const Dataset& d) {
    if (d.n() < 1) throw std::invalid_argument("objective: empty dataset");
    const Eigen::VectorXd resid = d.features * m.weights
                                  + Eigen::VectorXd::Constant(d.n(), m.bias) - d.labels;
    return 0.5 * resid.squaredNorm() / static_cast<double>(d.n())
           + m.lambda * m.reg.penalty(m.weights);
}

double accuracy(const LinearModel& m, const Dataset& d) {
    if (d.n() < 1) throw std::invalid_argument("accuracy: empty dataset");
    const Eigen::VectorXd pred = d.features * m.weights
                                 + Eigen::VectorXd::Constant(d.n(), m.bias);
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        const double sign = pred[i] >= 0.0 ? 1.0 : -1.0;
        if (sign == d.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(d.n());
}

Eigen::VectorXd reg_subgradient(const LinearModel& m) {
    const Eigen::Index d = m.weights.size();
    Eigen::VectorXd r(d);
    const double l1 = m.reg.l1_fraction();
    for (Eigen::Index j = 0; j < d; ++j) {
        const double w = m.weights[j];
        const double sub = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
        r[j] = l1 * sub + (1.0 - l1) * w;
    }
    return r;
}

double KktReport::worst() const {
    return std::max({active_residual, zero_excess, bias_residual});
}

KktReport check_kkt(const LinearModel& m, const Dataset& train) {
    const Eigen::Index n = train.n();
    const Eigen::VectorXd resid = train.features * m.weights
                                  + Eigen::VectorXd::Constant(n, m.bias) - train.labels;
    const Eigen::VectorXd grad = train.features.transpose() * resid / static_cast<double>(n);
    const Eigen::VectorXd r = reg_subgradient(m);
    const double l1 = m.reg.l1_fraction();

    KktReport rep;
    for (Eigen::Index j = 0; j < m.weights.size(); ++j) {
        if (m.weights[j] != 0.0 || l1 == 0.0) {
            rep.active_residual =
                std::max(rep.active_residual, std::abs(grad[j] + m.lambda * r[j]));
        } else {
            rep.zero_excess =
                std::max(rep.zero_excess, std::abs(grad[j]) - m.lambda * l1);
        }
    }
    rep.zero_excess = std::max(rep.zero_excess, 0.0);
    rep.bias_residual = std::abs(resid.mean());
    return rep;
}

void save_model(const LinearModel& m, const std::string& path) {
    nlohmann::json doc;
    doc["w"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
    doc["b"] = m.bias;
    doc["lambda"] = m.lambda;
    doc["kind"] = regularizer_name(m.reg);
    doc["rho"] = m.reg.rho;
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << doc.dump(2) << '\n';
}

LinearModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
        LinearModel m;
        const auto w = doc.at("w").get<std::vector<double>>();
        m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(),
                                                      static_cast<Eigen::Index>(w.size()));
        m.bias = doc.at("b").get<double>();
        m.lambda = doc.at("lambda").get<double>();
        m.reg = make_regularizer(doc.at("kind").get<std::string>(),
                                 doc.value("rho", 1.0));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed model file " + path + ": " + e.what());
    }
}

} // namespace poisonlab
