#include "poisonlab/attack.hpp"
#include "poisonlab/errors.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace poisonlab;

namespace {

// reference + one attack row appended, label flipped from its donor
struct AttackInstance {
    Dataset reference;
    Dataset train;
    Eigen::Index attack_row;
    double y_c;
};

AttackInstance make_instance(Eigen::Index n, Eigen::Index d, std::uint64_t seed,
                             double displacement = 1.5) {
    AttackInstance inst;
    inst.reference = testutil::random_dataset(n, d, seed);
    inst.train = inst.reference;
    inst.train.features.conservativeResize(n + 1, d);
    inst.train.labels.conservativeResize(n + 1);
    Eigen::VectorXd x_c = inst.reference.features.row(0).transpose();
    x_c.array() += displacement;
    inst.train.features.row(n) = x_c.transpose();
    inst.y_c = -inst.reference.labels[0];
    inst.train.labels[n] = inst.y_c;
    inst.attack_row = n;
    return inst;
}

double rel_inf_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
    return (got - want).cwiseAbs().maxCoeff() / scale;
}

} // namespace

TEST_CASE("attacker objective basics") {
    Dataset ref = testutil::random_dataset(20, 3, 51);
    LinearModel zero;
    zero.weights = Eigen::VectorXd::Zero(3);
    zero.bias = 0.0;
    zero.lambda = 0.1;
    zero.reg = {RegKind::lasso};
    // w=0, b=0 on +/-1 labels: every residual is 1, so the mean half-square is 0.5
    CHECK(attacker_objective(ref, zero) == doctest::Approx(0.5));

    // interpolation with lambda brought to zero-ish: objective vanishes
    Dataset tiny;
    tiny.features.resize(2, 1);
    tiny.features << 1.0, -1.0;
    tiny.labels = Eigen::Vector2d(1.0, -1.0);
    tiny.feature_names = {"x"};
    LinearModel interp;
    interp.weights = Eigen::VectorXd::Constant(1, 1.0);
    interp.bias = 0.0;
    interp.lambda = 1e-300;
    interp.reg = {RegKind::ridge};
    CHECK(attacker_objective(tiny, interp) == doctest::Approx(0.0));

    // independent term-by-term recomputation
    Dataset toy = testutil::random_dataset(30, 2, 53);
    LinearModel m = fit(toy, 0.1, {RegKind::lasso});
    double loss = 0.0;
    for (Eigen::Index i = 0; i < toy.n(); ++i) {
        const double r = m.predict(toy.features.row(i).transpose()) - toy.labels[i];
        loss += 0.5 * r * r;
    }
    loss /= static_cast<double>(toy.n());
    loss += m.lambda * m.weights.cwiseAbs().sum();
    CHECK(std::abs(attacker_objective(toy, m) - loss) < 1e-12);

    Dataset empty;
    CHECK_THROWS_AS(attacker_objective(empty, m), std::invalid_argument);
}

TEST_CASE("implicit gradients match the hand-solved 1-D ridge system") {
    // Two points: (x=1, y=1) fixed, attack (x=2, y=-1), lambda=0.5, n=2.
    // Stationarity gives w=-2/3, b=1, dw/dx_c=-2/9, db/dx_c=2/3.
    Dataset train;
    train.features.resize(2, 1);
    train.features << 1.0, 2.0;
    train.labels = Eigen::Vector2d(1.0, -1.0);
    train.feature_names = {"x"};

    FitOptions tight;
    tight.tol = 1e-14;
    tight.max_sweeps = 200000;
    LinearModel m = fit(train, 0.5, {RegKind::ridge}, tight);
    CHECK(m.weights[0] == doctest::Approx(-2.0 / 3.0).epsilon(1e-9));
    CHECK(m.bias == doctest::Approx(1.0).epsilon(1e-9));

    Eigen::VectorXd x_c = Eigen::VectorXd::Constant(1, 2.0);
    ImplicitGradients ig = implicit_gradients(m, train, x_c, -1.0);
    CHECK(ig.dw_dxc(0, 0) == doctest::Approx(-2.0 / 9.0).epsilon(1e-9));
    CHECK(ig.db_dxc[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK_FALSE(ig.singular_fallback);
}

TEST_CASE("implicit gradients match the finite-difference refit oracle (ridge)") {
    Rng rng(777);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<Eigen::Index>(15 + rng.uniform_index(40));
        const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
        AttackInstance inst = make_instance(n, d, 3000 + trial);
        const double lambda = 0.05 + rng.uniform() * 0.4;

        FitOptions tight;
        tight.tol = 1e-12;
        tight.max_sweeps = 500000;
        LinearModel m = fit(inst.train, lambda, {RegKind::ridge}, tight);
        ImplicitGradients ig = implicit_gradients(
            m, inst.train, inst.train.features.row(inst.attack_row).transpose(), inst.y_c);

        auto fd = oracles::fd_model_jacobian(inst.train, inst.attack_row, lambda,
                                             {RegKind::ridge});
        CHECK(rel_inf_error(ig.dw_dxc, fd.dw) < 1e-4);
        CHECK(rel_inf_error(ig.db_dxc.transpose(), fd.db.transpose()) < 1e-4);
    }
}

TEST_CASE("implicit gradients match the oracle on kink-free lasso instances") {
    Rng rng(888);
    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 12; ++trial) {
        const auto n = static_cast<Eigen::Index>(20 + rng.uniform_index(30));
        const auto d = static_cast<Eigen::Index>(2 + rng.uniform_index(5));
        AttackInstance inst = make_instance(n, d, 4000 + trial);
        const double lambda = 0.02 + rng.uniform() * 0.15;

        auto fd = oracles::fd_model_jacobian(inst.train, inst.attack_row, lambda,
                                             {RegKind::lasso});
        if (!fd.active_set_stable) continue; // perturbation crossed a kink
        FitOptions tight;
        tight.tol = 1e-12;
        tight.max_sweeps = 500000;
        LinearModel m = fit(inst.train, lambda, {RegKind::lasso}, tight);
        ImplicitGradients ig = implicit_gradients(
            m, inst.train, inst.train.features.row(inst.attack_row).transpose(), inst.y_c);
        CHECK(rel_inf_error(ig.dw_dxc, fd.dw) < 1e-4);
        CHECK(rel_inf_error(ig.db_dxc.transpose(), fd.db.transpose()) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 8); // enough kink-free instances actually ran
}

TEST_CASE("duplicated stationary point still perturbs the model as the oracle says") {
    Dataset ref = testutil::random_dataset(25, 3, 61);
    Dataset train = ref;
    train.features.conservativeResize(26, 3);
    train.labels.conservativeResize(26);
    train.features.row(25) = ref.features.row(4); // exact duplicate, same label
    train.labels[25] = ref.labels[4];

    FitOptions tight;
    tight.tol = 1e-12;
    tight.max_sweeps = 500000;
    LinearModel m = fit(train, 0.2, {RegKind::ridge}, tight);
    ImplicitGradients ig =
        implicit_gradients(m, train, train.features.row(25).transpose(), train.labels[25]);
    auto fd = oracles::fd_model_jacobian(train, 25, 0.2, {RegKind::ridge});
    CHECK(rel_inf_error(ig.dw_dxc, fd.dw) < 1e-4);
}

TEST_CASE("objective gradient matches finite differences of the refit objective") {
    Rng rng(999);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<Eigen::Index>(15 + rng.uniform_index(30));
        const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(4));
        AttackInstance inst = make_instance(n, d, 5000 + trial);
        const double lambda = 0.05 + rng.uniform() * 0.3;

        FitOptions tight;
        tight.tol = 1e-12;
        tight.max_sweeps = 500000;
        LinearModel m = fit(inst.train, lambda, {RegKind::ridge}, tight);
        Eigen::VectorXd grad = objective_gradient(
            m, inst.reference, inst.train,
            inst.train.features.row(inst.attack_row).transpose(), inst.y_c);
        Eigen::VectorXd fd = oracles::fd_attacker_gradient(inst.reference, inst.train,
                                                           inst.attack_row, lambda,
                                                           {RegKind::ridge});
        const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
        CHECK((grad - fd).cwiseAbs().maxCoeff() / scale < 1e-4);
    }
}

TEST_CASE("zero reference residuals with vanishing lambda give a zero gradient") {
    // Reference interpolated exactly by w=1, b=0; the attack point duplicates
    // a reference point, so every residual is ~0 and with lambda ~ 0 both
    // terms of the gradient vanish.
    Dataset ref;
    ref.features.resize(2, 1);
    ref.features << -1.0, 1.0;
    ref.labels = Eigen::Vector2d(-1.0, 1.0);
    ref.feature_names = {"x"};

    Dataset train = ref;
    train.features.conservativeResize(3, 1);
    train.labels.conservativeResize(3);
    train.features(2, 0) = 1.0;
    train.labels[2] = 1.0;

    FitOptions tight;
    tight.tol = 1e-15;
    tight.max_sweeps = 1000000;
    LinearModel m = fit(train, 1e-12, {RegKind::ridge}, tight);
    Eigen::VectorXd grad = objective_gradient(m, ref, train,
                                              train.features.row(2).transpose(), 1.0);
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("penalty values and gradients") {
    Dataset ref;
    ref.features.resize(3, 2);
    ref.features << 0.0, 0.0,
                    1.0, 0.0,
                    0.0, 1.0;
    ref.labels = Eigen::Vector3d(1.0, -1.0, 1.0);
    ref.feature_names = {"a", "b"};

    SUBCASE("distance threshold wall") {
        PenaltyTerm wall = PenaltyTerm::distance_threshold(1.0);
        Eigen::VectorXd near = Eigen::Vector2d(0.4, 0.0);
        CHECK(penalty_value(wall, near, ref) == 0.0);
        Eigen::VectorXd far = Eigen::Vector2d(0.0, -1.7);
        CHECK(std::isinf(penalty_value(wall, far, ref)));
        CHECK(penalty_gradient(wall, far, ref).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("knn power value and exact quadratic gradient") {
        PenaltyTerm knn = PenaltyTerm::knn_power(0.005, 2, 2.0);
        Eigen::VectorXd x = Eigen::Vector2d(2.0, 0.0);
        // neighbors by distance: (1,0) d=1, (0,0) d=2, (0,1) d=sqrt(5)
        CHECK(penalty_value(knn, x, ref) == doctest::Approx(4.0));
        Eigen::VectorXd g = penalty_gradient(knn, x, ref);
        CHECK(g[0] == doctest::Approx(2.0 * 2.0)); // 2 (x - x_k)
        CHECK(g[1] == doctest::Approx(0.0));

        // coincide with the k-th neighbor: value 0, gradient 0
        Eigen::VectorXd on = Eigen::Vector2d(0.0, 0.0);
        PenaltyTerm knn1 = PenaltyTerm::knn_power(0.005, 1, 2.0);
        CHECK(penalty_value(knn1, on, ref) == 0.0);
        CHECK(penalty_gradient(knn1, on, ref).cwiseAbs().maxCoeff() == 0.0);

        // P < 2 at the coincidence is singular by convention
        PenaltyTerm knn_sing = PenaltyTerm::knn_power(0.005, 1, 1.0);
        bool singular = false;
        CHECK(penalty_gradient(knn_sing, on, ref, &singular).cwiseAbs().maxCoeff() == 0.0);
        CHECK(singular);

        CHECK_THROWS_AS(penalty_value(PenaltyTerm::knn_power(0.1, 9, 2.0), x, ref),
                        std::invalid_argument);
    }

    SUBCASE("knn gradient matches finite differences away from switches") {
        Dataset cloud = testutil::random_dataset(15, 2, 71);
        PenaltyTerm knn = PenaltyTerm::knn_power(1.0, 3, 2.5);
        Rng rng(72);
        int checked = 0;
        for (int i = 0; i < 12 && checked < 6; ++i) {
            Eigen::VectorXd x = Eigen::Vector2d(rng.uniform(-3, 3), rng.uniform(-3, 3));
            const Eigen::Index k_idx = kth_nearest_index(cloud.features, x, 3);
            // stay away from neighbor-switch boundaries under the fd step
            bool stable = true;
            const double h = 1e-6;
            for (Eigen::Index l = 0; l < 2 && stable; ++l) {
                for (double s : {-h, h}) {
                    Eigen::VectorXd xp = x;
                    xp[l] += s;
                    if (kth_nearest_index(cloud.features, xp, 3) != k_idx) stable = false;
                }
            }
            if (!stable) continue;
            Eigen::VectorXd g = penalty_gradient(knn, x, cloud);
            for (Eigen::Index l = 0; l < 2; ++l) {
                Eigen::VectorXd xp = x, xm = x;
                xp[l] += h;
                xm[l] -= h;
                const double fd =
                    (penalty_value(knn, xp, cloud) - penalty_value(knn, xm, cloud)) / (2 * h);
                CHECK(g[l] == doctest::Approx(fd).epsilon(1e-6));
            }
            ++checked;
        }
        CHECK(checked >= 3);
    }
}

TEST_CASE("projection clips, is idempotent, and leaves interior points alone") {
    FeasibleDomain box;
    box.lower = Eigen::Vector2d(0.0, 0.0);
    box.upper = Eigen::Vector2d(10.0, 10.0);

    Eigen::VectorXd inside = Eigen::Vector2d(3.0, 7.0);
    CHECK(box.project(inside) == inside);

    Eigen::VectorXd out = Eigen::Vector2d(12.0, -3.0);
    Eigen::VectorXd proj = box.project(out);
    CHECK(proj[0] == 10.0);
    CHECK(proj[1] == 0.0);

    Rng rng(73);
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd x = Eigen::Vector2d(rng.uniform(-20, 20), rng.uniform(-20, 20));
        CHECK(box.project(box.project(x)) == box.project(x));
    }

    FeasibleDomain open;
    open.lower = Eigen::Vector2d(0.0, -std::numeric_limits<double>::infinity());
    open.upper = Eigen::Vector2d(std::numeric_limits<double>::infinity(), 0.0);
    Eigen::VectorXd y = open.project(Eigen::Vector2d(1e9, -1e9));
    CHECK(y[0] == 1e9);
    CHECK(y[1] == -1e9);
}

TEST_CASE("poison with zero steps returns the initial points") {
    Dataset ref = testutil::random_dataset(30, 2, 81);
    AttackConfig cfg;
    cfg.reference = ref;
    cfg.num_points = 2;
    cfg.num_steps = 0;
    cfg.lambda = 0.1;
    cfg.seed = 4;
    AttackTrace trace = poison(cfg);
    CHECK(trace.rows.size() == 2);
    CHECK(trace.final_points[0] == trace.row(0, 0).position);
    CHECK(trace.final_points[1] == trace.row(0, 1).position);
    // initializer drew donors from the opposite class of each label
    CHECK(trace.labels[0] == 1.0);
    CHECK(trace.labels[1] == -1.0);
}

TEST_CASE("poison traces stay inside the box and rejected walls hold") {
    Dataset ref = testutil::random_dataset(40, 2, 83);
    AttackConfig cfg;
    cfg.reference = ref;
    cfg.num_points = 1;
    cfg.num_steps = 60;
    cfg.lambda = 0.05;
    cfg.seed = 9;
    cfg.penalty = PenaltyTerm::distance_threshold(1.0);
    AttackTrace trace = poison(cfg);

    CHECK(trace.rows.size() == 61);
    FeasibleDomain box = FeasibleDomain::from_data(ref.features, 0.1);
    for (const auto& row : trace.rows) CHECK(box.contains(row.position, 1e-9));
    CHECK(nearest_distance(ref.features, trace.final_points[0]) <= 1.0 + 1e-12);
}

TEST_CASE("penalty-free runs match a zero-weight knn penalty and a huge wall") {
    Dataset ref = testutil::random_dataset(30, 2, 85);
    AttackConfig cfg;
    cfg.reference = ref;
    cfg.num_points = 1;
    cfg.num_steps = 40;
    cfg.lambda = 0.05;
    cfg.seed = 12;

    AttackTrace plain = poison(cfg);

    AttackConfig zero_knn = cfg;
    zero_knn.penalty = PenaltyTerm::knn_power(0.0, 3, 2.0);
    AttackTrace with_zero = poison(zero_knn);

    AttackConfig huge_wall = cfg;
    huge_wall.penalty = PenaltyTerm::distance_threshold(1e9);
    AttackTrace with_wall = poison(huge_wall);

    for (std::size_t i = 0; i < plain.rows.size(); ++i) {
        CHECK(plain.rows[i].position == with_zero.rows[i].position);
        CHECK(plain.rows[i].position == with_wall.rows[i].position);
        CHECK(plain.rows[i].objective == with_zero.rows[i].objective);
        CHECK(plain.rows[i].objective == with_wall.rows[i].objective);
    }
}

TEST_CASE("ridge ascent with a small step is almost monotone") {
    Dataset ref = testutil::random_dataset(40, 2, 87);
    AttackConfig cfg;
    cfg.reference = ref;
    cfg.num_points = 1;
    cfg.num_steps = 80;
    cfg.step_size = 0.05;
    cfg.lambda = 0.1;
    cfg.reg = {RegKind::ridge};
    cfg.seed = 14;
    AttackTrace trace = poison(cfg);

    int up = 0, total = 0;
    for (int t = 1; t <= trace.num_steps; ++t) {
        const double prev = trace.row(t - 1, 0).objective;
        const double cur = trace.row(t, 0).objective;
        if (cur >= prev - 1e-12) ++up;
        ++total;
    }
    CHECK(static_cast<double>(up) / total >= 0.95);
}

TEST_CASE("user-supplied initial points are validated against the domain") {
    Dataset ref = testutil::random_dataset(20, 2, 91);
    AttackConfig cfg;
    cfg.reference = ref;
    cfg.num_points = 1;
    cfg.labels = {1.0};
    cfg.domain.lower = Eigen::Vector2d(-1.0, -1.0);
    cfg.domain.upper = Eigen::Vector2d(1.0, 1.0);
    cfg.initial_points = {Eigen::Vector2d(5.0, 0.0)};
    CHECK_THROWS_AS(poison(cfg), std::invalid_argument);

    cfg.initial_points = {Eigen::Vector2d(0.5, 0.0)};
    cfg.num_steps = 3;
    AttackTrace trace = poison(cfg);
    CHECK(trace.row(0, 0).position == cfg.initial_points[0]);
}
