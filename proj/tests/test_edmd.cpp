#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>

#include "kuq/common.hpp"
#include "kuq/edmd.hpp"
#include "test_helpers.hpp"

using namespace kuq;
using cplx = std::complex<double>;

namespace {

double closest_eig_distance(const KoopmanModel& model, cplx target) {
    double best = 1e300;
    for (int i = 0; i < model.size(); ++i)
        best = std::min(best, std::abs(model.mu[i] - target));
    return best;
}

}  // namespace

TEST_SUITE("edmd") {

TEST_CASE("linear dictionary recovers the system eigenvalues to 1e-8") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::linear);
    const Eigen::Vector2cd eigs = oracle::linear_system_eigs();
    CHECK(closest_eig_distance(model, eigs[0]) < 1e-8);
    CHECK(closest_eig_distance(model, eigs[1]) < 1e-8);
    CHECK(closest_eig_distance(model, cplx(1.0, 0.0)) < 1e-8);  // constant observable
}

TEST_CASE("hermite2 spectrum contains the linear eigenvalues to 1e-6") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::hermite2);
    const Eigen::Vector2cd eigs = oracle::linear_system_eigs();
    CHECK(closest_eig_distance(model, eigs[0]) < 1e-6);
    CHECK(closest_eig_distance(model, eigs[1]) < 1e-6);
}

TEST_CASE("single fixed-point trajectory yields a unit eigenvalue and stays put") {
    Trajectory traj;
    traj.n_g = 1;
    traj.n_m = 0;
    const int n = 10;
    traj.times.resize(n);
    traj.states.resize(2, n);
    for (int k = 0; k < n; ++k) {
        traj.times[k] = 0.01 * k;
        traj.states.col(k) = Eigen::Vector2d(0.4, -0.2);
    }
    const Dictionary dict = build_dictionary(DictionaryKind::hermite2, 1, 0,
                                             traj.states);
    const KoopmanModel model = fit_edmd({traj}, dict, 1e-10);
    CHECK(closest_eig_distance(model, cplx(1.0, 0.0)) < 1e-10);
    CHECK(model.rank == 1);

    AugmentedState x0(1, 0);
    x0.data = Eigen::Vector2d(0.4, -0.2);
    const SurrogateTrajectory st = realize(model, x0, 20);
    for (int k = 0; k <= 20; ++k) {
        CHECK(st.states(0, k) == doctest::Approx(0.4).epsilon(1e-10));
        CHECK(st.states(1, k) == doctest::Approx(-0.2).epsilon(1e-10));
    }
}

TEST_CASE("model invariants: L R = I, K R = R diag(mu), conjugate closure") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::hermite2);
    const int n_d = model.size();

    const double lr = (model.l_vecs * model.r_vecs -
                       Eigen::MatrixXcd::Identity(n_d, n_d)).cwiseAbs().maxCoeff();
    CHECK(lr <= 1e-8);

    REQUIRE(model.k_matrix.size() > 0);
    const Eigen::MatrixXcd kr = model.k_matrix.cast<cplx>() * model.r_vecs;
    const Eigen::MatrixXcd rmu = model.r_vecs * model.mu.asDiagonal();
    CHECK((kr - rmu).cwiseAbs().maxCoeff() <=
          1e-8 * model.k_matrix.cwiseAbs().maxCoeff());

    for (int i = 0; i < n_d; ++i)
        CHECK(closest_eig_distance(model, std::conj(model.mu[i])) < 1e-9);
}

TEST_CASE("round-trip identity R L g(x) = g(x) on training snapshots") {
    const auto trajs = helpers::linear_trajectories(6, 25);
    const Dictionary dict = build_dictionary(DictionaryKind::hermite2, 1, 0,
                                             helpers::pool_snapshots(trajs));
    const KoopmanModel model = fit_edmd(trajs, dict, 1e-12);
    for (int c = 0; c < trajs[0].n_snapshots(); c += 7) {
        const Eigen::VectorXcd g =
            dict.evaluate(trajs[0].states.col(c)).cast<cplx>();
        const Eigen::VectorXcd rt = model.r_vecs * (model.l_vecs * g);
        CHECK((rt - g).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("eigenfunction evaluation inverts through R") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::hermite2);
    AugmentedState x(1, 0);
    x.data = Eigen::Vector2d(0.31, -0.44);
    const Eigen::VectorXcd phi = eigenfunctions_at(model, x);
    const Eigen::VectorXcd g = model.dict.evaluate(x.data).cast<cplx>();
    CHECK((model.r_vecs * phi - g).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("zero-step realization reproduces the initial state") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::hermite2);
    AugmentedState x0(1, 0);
    x0.data = Eigen::Vector2d(0.5, 0.1);
    const SurrogateTrajectory st = realize(model, x0, 0);
    CHECK(st.states(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(st.states(1, 0) == doctest::Approx(0.1).epsilon(1e-8));
}

TEST_CASE("surrogate matches matrix-power propagation over 500 steps") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::linear);
    const Eigen::Matrix2d phi = oracle::linear_system_phi();

    AugmentedState x0(1, 0);
    x0.data = Eigen::Vector2d(0.7, -0.3);
    const SurrogateTrajectory st = realize(model, x0, 500);
    CHECK(st.max_imag_residual < 1e-6);

    Eigen::Vector2d x = x0.data;
    for (int k = 0; k <= 500; ++k) {
        CHECK(std::abs(st.states(0, k) - x[0]) < 1e-6);
        CHECK(std::abs(st.states(1, k) - x[1]) < 1e-6);
        x = phi * x;
    }
}

TEST_CASE("realization restarted from a re-lifted midpoint state agrees") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::linear);
    AugmentedState x0(1, 0);
    x0.data = Eigen::Vector2d(0.9, 0.2);
    const int k1 = 60, k2 = 140;
    const SurrogateTrajectory full = realize(model, x0, k1 + k2);

    AugmentedState mid(1, 0);
    mid.data = full.states.col(k1);
    const SurrogateTrajectory rest = realize(model, mid, k2);
    for (int k = 0; k <= k2; ++k)
        CHECK((rest.states.col(k) - full.states.col(k1 + k)).cwiseAbs().maxCoeff()
              < 1e-6);
}

TEST_CASE("eigenfunctions of the linear model scale linearly in the state") {
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::linear);
    AugmentedState a(1, 0), b(1, 0), sum(1, 0);
    a.data = Eigen::Vector2d(0.4, -0.1);
    b.data = Eigen::Vector2d(-0.2, 0.3);
    sum.data = a.data + b.data;

    // The affine lift [z; 1] makes phi affine: phi(a + b) - phi(a) - phi(b)
    // equals -phi(0) exactly.
    AugmentedState zero(1, 0);
    zero.data.setZero();
    const Eigen::VectorXcd lhs = eigenfunctions_at(model, sum);
    const Eigen::VectorXcd rhs = eigenfunctions_at(model, a) +
                                 eigenfunctions_at(model, b) -
                                 eigenfunctions_at(model, zero);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("continuous eigenvalues follow ln(mu)/dt") {
    const double dt = 0.01;
    KoopmanModel toy;
    toy.dt = dt;
    toy.mu.resize(3);
    toy.mu << cplx(1.0, 0.0), cplx(std::exp(-0.01), 0.0), cplx(0.0, 0.0);
    const Eigen::VectorXcd lambda = continuous_eigenvalues(toy);
    CHECK(std::abs(lambda[0]) < 1e-14);
    CHECK(lambda[1].real() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::isinf(lambda[2].real()));

    // logm oracle on the fitted linear model.
    const KoopmanModel model = helpers::fit_linear_model(DictionaryKind::linear);
    const Eigen::Vector2cd cont = oracle::linear_system_cont_eigs(model.dt);
    const Eigen::VectorXcd fitted = continuous_eigenvalues(model);
    for (int t = 0; t < 2; ++t) {
        double best = 1e300;
        for (int i = 0; i < fitted.size(); ++i)
            best = std::min(best, std::abs(fitted[i] - cont[t]));
        CHECK(best < 1e-6);
    }
}

TEST_CASE("pseudo-state perturbation moves the eigenfunctions") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    static const KoopmanModel model = helpers::train_smib_model(s);

    const AugmentedState nominal =
        AugmentedState::from_parts(s.delta0, s.omega0, s.nominal_m);
    AugmentedState bumped = nominal;
    bumped.m() *= 1.05;  // true-state part untouched

    const Eigen::VectorXcd phi_a = eigenfunctions_at(model, nominal);
    const Eigen::VectorXcd phi_b = eigenfunctions_at(model, bumped);
    CHECK((phi_a - phi_b).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("fit residual does not grow when the dictionary is enriched") {
    // Measured on the reference grid scenario, where the speed deviations
    // stay well inside one radian and the trig block is easy to predict.
    const Case cs = load_case(oracle::data_file("ieee39.json"));
    const PowerFlowSolution pf = solve_power_flow(cs, 1e-12, 30);
    const ReducedNetwork net = kron_reduce(cs, pf, {"15-16"});
    const ReducedNetwork pre = kron_reduce(cs, pf);

    const auto dist = ParamDistribution::gaussian_relative(net.h, 0.10);
    const SampleSet train = draw_params(dist, 8, SampleMethod::lhs, 17);
    const auto trajs = generate_training_set(net, pre.delta0,
                                             Eigen::VectorXd::Zero(10),
                                             train.samples, 2.0, 0.005, 0.01, 2);
    const Eigen::MatrixXd pooled = helpers::pool_snapshots(trajs);

    const KoopmanModel m_h2 = fit_edmd(
        trajs, build_dictionary(DictionaryKind::hermite2, 10, 10, pooled), 1e-10, 2);
    const KoopmanModel m_ht = fit_edmd(
        trajs, build_dictionary(DictionaryKind::hermite2_trig, 10, 10, pooled), 1e-10, 2);
    CHECK(m_ht.fit_residual <= m_h2.fit_residual * (1.0 + 1e-9));
}

TEST_CASE("fit rejects inconsistent snapshot spacing") {
    auto trajs = helpers::linear_trajectories(2, 10);
    trajs[1].times *= 2.0;
    const Dictionary dict = build_dictionary(DictionaryKind::linear, 1, 0,
                                             helpers::pool_snapshots(trajs));
    CHECK_THROWS_AS(fit_edmd(trajs, dict, 1e-10), NumericalError);
}

TEST_CASE("fit rejects single-snapshot trajectories") {
    auto trajs = helpers::linear_trajectories(1, 5);
    trajs[0].times.conservativeResize(1);
    trajs[0].states.conservativeResize(Eigen::NoChange, 1);
    const Dictionary dict =
        build_dictionary(DictionaryKind::linear, 1, 0, trajs[0].states);
    CHECK_THROWS_AS(fit_edmd(trajs, dict, 1e-10), ConfigError);
}

TEST_CASE("model persists and reloads bit-exactly") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    const KoopmanModel model = helpers::train_smib_model(s, 20, 33);

    const std::string path = "kuq_test_model.kpm";
    save_model(model, path);
    const KoopmanModel back = load_model(path);
    std::remove(path.c_str());

    REQUIRE(back.size() == model.size());
    CHECK(back.dt == model.dt);
    CHECK(back.rank == model.rank);
    CHECK(back.fit_residual == model.fit_residual);
    CHECK((back.mu - model.mu).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.r_vecs - model.r_vecs).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.l_vecs - model.l_vecs).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.dict.shift - model.dict.shift).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.dict.scale - model.dict.scale).cwiseAbs().maxCoeff() == 0.0);

    const AugmentedState x0 =
        AugmentedState::from_parts(s.delta0, s.omega0, s.nominal_m);
    const SurrogateTrajectory a = realize(model, x0, 50);
    const SurrogateTrajectory b = realize(back, x0, 50);
    CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("load rejects a non-model file") {
    const std::string path = "kuq_test_notmodel.bin";
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("garbage", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_model(path), IoError);
    std::remove(path.c_str());
}

}  // TEST_SUITE
