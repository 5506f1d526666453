#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "kuq/common.hpp"
#include "kuq/uq.hpp"
#include "test_helpers.hpp"

using namespace kuq;

namespace {

Ensemble gaussian_ensemble(int n, std::uint64_t seed) {
    Ensemble e;
    e.times.resize(1);
    e.times[0] = 0.0;
    e.values.resize(n, 1);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) e.values(i, 0) = probit(rng.uniform01());
    return e;
}

Ensemble uniform_ensemble(int n, double lo, double hi, std::uint64_t seed) {
    Ensemble e;
    e.times.resize(1);
    e.times[0] = 0.0;
    e.values.resize(n, 1);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) e.values(i, 0) = lo + (hi - lo) * rng.uniform01();
    return e;
}

}  // namespace

TEST_SUITE("uq") {

TEST_CASE("relative angle of a generator against itself vanishes") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    const AugmentedState x0 =
        AugmentedState::from_parts(s.delta0, s.omega0, s.nominal_m);
    const Trajectory traj = simulate(x0, s.net, 1.0, s.dt_int, s.dt_snap);
    CHECK(qoi_relative_angle(traj, 1, 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("equilibrium trajectory gives a constant relative angle") {
    helpers::SmibStudy s = helpers::make_smib_study();
    const AugmentedState x0 =
        AugmentedState::from_parts(s.net.delta0, s.omega0, s.nominal_m);
    const Trajectory traj = simulate(x0, s.net, 1.0, s.dt_int, s.dt_snap);
    const Eigen::VectorXd q = qoi_relative_angle(traj, 0, 1);
    const double expected = s.net.delta0[0] - s.net.delta0[1];
    CHECK((q.array() - expected).abs().maxCoeff() < 1e-7);
}

TEST_CASE("relative angle matches recomputation from the exported CSV") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    const AugmentedState x0 =
        AugmentedState::from_parts(s.delta0, s.omega0, s.nominal_m);
    const Trajectory traj = simulate(x0, s.net, 1.0, s.dt_int, s.dt_snap);

    const std::string path = "kuq_test_qoi_traj.csv";
    save_trajectory_csv(traj, path);
    const Trajectory back = load_trajectory_csv(path);
    std::remove(path.c_str());

    const Eigen::VectorXd direct = qoi_relative_angle(traj, 0, 1);
    const Eigen::VectorXd recomputed =
        back.states.row(0).transpose() - back.states.row(1).transpose();
    CHECK((direct - recomputed).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("index out of range is reported") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    const AugmentedState x0 =
        AugmentedState::from_parts(s.delta0, s.omega0, s.nominal_m);
    const Trajectory traj = simulate(x0, s.net, 0.1, s.dt_int, s.dt_snap);
    CHECK_THROWS_AS(qoi_relative_angle(traj, 0, 2), ConfigError);
}

TEST_CASE("MC of a single nominal sample equals the deterministic run") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    SampleSet one;
    one.samples = s.nominal_m.transpose();
    const Ensemble e = run_mc(s.net, s.delta0, s.omega0, one, 1.0, s.dt_int,
                              s.dt_snap, 0, 1, 1);
    REQUIRE(e.n_samples() == 1);

    const AugmentedState x0 =
        AugmentedState::from_parts(s.delta0, s.omega0, s.nominal_m);
    const Eigen::VectorXd q =
        qoi_relative_angle(simulate(x0, s.net, 1.0, s.dt_int, s.dt_snap), 0, 1);
    CHECK((e.values.row(0).transpose() - q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("MC is deterministic and thread-count independent") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    const auto dist = ParamDistribution::gaussian_relative(s.nominal_m, 0.10);
    const SampleSet set = draw_params(dist, 32, SampleMethod::iid, 99);
    const Ensemble a =
        run_mc(s.net, s.delta0, s.omega0, set, 1.0, s.dt_int, s.dt_snap, 0, 1, 1);
    const Ensemble b =
        run_mc(s.net, s.delta0, s.omega0, set, 1.0, s.dt_int, s.dt_snap, 0, 1, 2);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("MC with one denormal inertia sample follows the exclusion policy") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    // 2 samples, 1 bad: 50 % exclusions exceed the 0.1 % budget.
    SampleSet two;
    two.samples.resize(2, 2);
    two.samples.row(0) = s.nominal_m.transpose();
    two.samples.row(1) = s.nominal_m.transpose();
    two.samples(1, 0) = 1e-320;  // positive, but 1/(2m) overflows
    CHECK_THROWS_AS(run_mc(s.net, s.delta0, s.omega0, two, 0.2, s.dt_int,
                           s.dt_snap, 0, 1, 1),
                    NumericalError);

    // 1 bad among 2000 stays under the budget and is excluded + counted.
    const auto dist = ParamDistribution::gaussian_relative(s.nominal_m, 0.05);
    SampleSet many = draw_params(dist, 2000, SampleMethod::iid, 4);
    many.samples(1234, 1) = 1e-320;
    const Ensemble e = run_mc(s.net, s.delta0, s.omega0, many, 0.05, s.dt_int,
                              s.dt_snap, 0, 1, 2);
    CHECK(e.excluded == 1);
    CHECK(e.n_samples() == 1999);
}

TEST_CASE("surrogate of the nominal sample equals realize + qoi exactly") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    static const KoopmanModel model = helpers::train_smib_model(s);

    SampleSet one;
    one.samples = s.nominal_m.transpose();
    const Ensemble e = run_surrogate(model, s.delta0, s.omega0, one, s.k_max(),
                                     0, 1, 1);
    REQUIRE(e.n_samples() == 1);

    const AugmentedState x0 =
        AugmentedState::from_parts(s.delta0, s.omega0, s.nominal_m);
    const SurrogateTrajectory st = realize(model, x0, s.k_max());
    const Eigen::VectorXd q = qoi_relative_angle(st, 0, 1);
    CHECK((e.values.row(0).transpose() - q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("surrogate batching never changes a sample's bits") {
    // 5 samples: one four-wide lifted group plus a single-sample remainder;
    // every row must match its own realize + qoi composition exactly.
    const helpers::SmibStudy s = helpers::make_smib_study();
    static const KoopmanModel model = helpers::train_smib_model(s);
    const auto dist = ParamDistribution::gaussian_relative(s.nominal_m, 0.10);
    const SampleSet five = draw_params(dist, 5, SampleMethod::iid, 321);

    const Ensemble e =
        run_surrogate(model, s.delta0, s.omega0, five, s.k_max(), 0, 1, 2);
    REQUIRE(e.n_samples() == 5);
    for (int j = 0; j < 5; ++j) {
        const AugmentedState x0 = AugmentedState::from_parts(
            s.delta0, s.omega0, five.samples.row(j).transpose());
        const Eigen::VectorXd q = qoi_relative_angle(realize(model, x0, s.k_max()), 0, 1);
        CHECK((e.values.row(j).transpose() - q).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("surrogate ensemble is produced without ODE integration and tracks MC") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    static const KoopmanModel model = helpers::train_smib_model(s);
    const auto dist = ParamDistribution::gaussian_relative(s.nominal_m, 0.10);
    const SampleSet set = draw_params(dist, 300, SampleMethod::iid, 60);

    const Ensemble mc = run_mc(s.net, s.delta0, s.omega0, set, s.horizon, s.dt_int,
                               s.dt_snap, 0, 1, 2);
    const Ensemble su =
        run_surrogate(model, s.delta0, s.omega0, set, s.k_max(), 0, 1, 2);
    REQUIRE(mc.n_times() == su.n_times());

    const MomentSeries mm = moments(mc);
    const MomentSeries sm = moments(su);
    const ComparisonReport rep = compare(mc, mm, su, sm, 0.0, 5.0);
    CHECK(rep.mean_abs_err_max < 0.02);
    CHECK(rep.std_rel_err_max < 0.15);
}

TEST_CASE("overflowing realizations are flagged, all-overflow is an error") {
    // Hand-built unstable model: linear dictionary, one eigenvalue at 2.
    KoopmanModel toy;
    toy.dict.kind = DictionaryKind::linear;
    toy.dict.n_g = 1;
    toy.dict.n_m = 1;
    toy.dict.shift = Eigen::VectorXd::Zero(3);
    toy.dict.scale = Eigen::VectorXd::Ones(3);
    toy.dt = 0.01;
    toy.rank = 4;
    toy.state_rows = {0, 1, 2};
    toy.mu.resize(4);
    toy.mu << 2.0, 1.0, 1.0, 1.0;
    toy.r_vecs = Eigen::MatrixXcd::Identity(4, 4);
    toy.l_vecs = Eigen::MatrixXcd::Identity(4, 4);
    toy.finalize();

    AugmentedState x0(1, 1);
    x0.data << 1.0, 0.5, 1.0;
    CHECK_THROWS_AS(realize(toy, x0, 1100), NumericalError);

    SampleSet one;
    one.samples = Eigen::MatrixXd::Ones(1, 1);
    CHECK_THROWS_AS(
        run_surrogate(toy, x0.data.head(1), x0.data.segment(1, 1), one, 1100, 0, 0, 1),
        NumericalError);
}

TEST_CASE("symmetric two-point ensemble has zero mean and skewness") {
    Ensemble e;
    e.times.resize(1);
    e.times[0] = 0.0;
    e.values.resize(4, 1);
    e.values << 0.7, -0.7, 0.7, -0.7;
    const MomentSeries m = moments(e);
    CHECK(m.mean[0] == doctest::Approx(0.0));
    CHECK(m.skewness[0] == doctest::Approx(0.0));
    CHECK(m.kurtosis[0] == doctest::Approx(1.0));  // two-point distribution
}

TEST_CASE("large normal sample reproduces the Gaussian moments") {
    const Ensemble e = gaussian_ensemble(100000, 8);
    const MomentSeries m = moments(e);
    CHECK(std::abs(m.mean[0]) < 3.0 / std::sqrt(1e5));            // 3 sigma
    CHECK(std::abs(m.std[0] - 1.0) < 3.0 / std::sqrt(2e5));       // 3 sigma
    CHECK(std::abs(m.skewness[0]) < 3.0 * std::sqrt(6.0 / 1e5));  // 3 sigma
    CHECK(std::abs(m.kurtosis[0] - 3.0) < 0.05);
}

TEST_CASE("large uniform sample reproduces the closed-form moments") {
    const double lo = -2.0, hi = 3.0;
    const Ensemble e = uniform_ensemble(100000, lo, hi, 12);
    const MomentSeries m = moments(e);
    CHECK(std::abs(m.mean[0] - 0.5) < 3.0 * (hi - lo) / std::sqrt(12.0 * 1e5));
    CHECK(m.std[0] == doctest::Approx((hi - lo) / std::sqrt(12.0)).epsilon(0.01));
    CHECK(std::abs(m.skewness[0]) < 0.025);
    CHECK(std::abs(m.kurtosis[0] - 1.8) < 0.05);
}

TEST_CASE("constant ensemble: zero std, zero skewness, flagged kurtosis") {
    Ensemble e;
    e.times.resize(2);
    e.times << 0.0, 1.0;
    e.values = Eigen::MatrixXd::Constant(5, 2, 3.3);
    const MomentSeries m = moments(e);
    for (int t = 0; t < 2; ++t) {
        CHECK(m.std[t] == 0.0);
        CHECK(m.skewness[t] == 0.0);
        CHECK(std::isnan(m.kurtosis[t]));
    }
}

TEST_CASE("moment availability follows the sample count") {
    Ensemble e;
    e.times.resize(1);
    e.times[0] = 0.0;
    e.values.resize(1, 1);
    e.values << 2.0;
    const MomentSeries m1 = moments(e);
    CHECK(m1.mean[0] == 2.0);
    CHECK(std::isnan(m1.std[0]));

    e.values.resize(3, 1);
    e.values << 1.0, 2.0, 4.0;
    const MomentSeries m3 = moments(e);
    CHECK_FALSE(std::isnan(m3.skewness[0]));
    CHECK(std::isnan(m3.kurtosis[0]));  // kurtosis needs n >= 4
}

TEST_CASE("KDE of a large normal sample is close to the true density") {
    const Ensemble e = gaussian_ensemble(100000, 23);
    const DensityEstimate d = kde(e.values.col(0));
    CHECK(d.integral() >= 0.999);
    CHECK(d.integral() <= 1.001);

    // value at x = 0 within 5 % of 1/sqrt(2 pi)
    int at0 = 0;
    for (int g = 0; g < d.grid.size(); ++g)
        if (std::abs(d.grid[g]) < std::abs(d.grid[at0])) at0 = g;
    const double peak = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    CHECK(d.density[at0] == doctest::Approx(peak).epsilon(0.05));
}

TEST_CASE("KDE of a two-point sample is bimodal and normalized") {
    Eigen::VectorXd v(8);
    v << -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0;
    const DensityEstimate d = kde(v, 0.15);
    CHECK(d.integral() == doctest::Approx(1.0).epsilon(1e-3));

    int at_neg = 0, at_mid = 0, at_pos = 0;
    for (int g = 0; g < d.grid.size(); ++g) {
        if (std::abs(d.grid[g] + 1.0) < std::abs(d.grid[at_neg] + 1.0)) at_neg = g;
        if (std::abs(d.grid[g]) < std::abs(d.grid[at_mid])) at_mid = g;
        if (std::abs(d.grid[g] - 1.0) < std::abs(d.grid[at_pos] - 1.0)) at_pos = g;
    }
    CHECK(d.density[at_neg] > 5.0 * d.density[at_mid]);
    CHECK(d.density[at_pos] > 5.0 * d.density[at_mid]);
}

TEST_CASE("KDE is invariant under sample permutation") {
    Eigen::VectorXd v(64);
    Rng rng(3);
    for (int i = 0; i < 64; ++i) v[i] = probit(rng.uniform01());
    Eigen::VectorXd shuffled = v.reverse();
    const DensityEstimate a = kde(v);
    const DensityEstimate b = kde(shuffled);
    CHECK((a.density - b.density).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate KDE input is reported") {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(10, 2.0);
    CHECK_THROWS_AS(kde(v), NumericalError);
    Eigen::VectorXd single(1);
    single << 1.0;
    CHECK_THROWS_AS(kde(single), ConfigError);
}

TEST_CASE("KS statistic: zero against itself, sensitive to a shift") {
    const Ensemble e = gaussian_ensemble(2000, 31);
    CHECK(ks_statistic(e.values.col(0), e.values.col(0)) == 0.0);
    Eigen::VectorXd shifted = e.values.col(0).array() + 1.0;
    CHECK(ks_statistic(e.values.col(0), shifted) > 0.3);
}

TEST_CASE("self-comparison reports zeros") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    const auto dist = ParamDistribution::gaussian_relative(s.nominal_m, 0.10);
    const SampleSet set = draw_params(dist, 50, SampleMethod::iid, 77);
    const Ensemble e = run_mc(s.net, s.delta0, s.omega0, set, 2.0, s.dt_int,
                              s.dt_snap, 0, 1, 2);
    const MomentSeries m = moments(e);
    const ComparisonReport rep = compare(e, m, e, m, 0.0, 2.0);
    CHECK(rep.mean_abs_err_max == 0.0);
    CHECK(rep.std_rel_err_max == 0.0);
    REQUIRE(rep.ks_stats.size() == 1);
    CHECK(rep.ks_stats[0] == 0.0);
}

TEST_CASE("two MC runs with different seeds agree within sampling noise") {
    const helpers::SmibStudy s = helpers::make_smib_study();
    const auto dist = ParamDistribution::gaussian_relative(s.nominal_m, 0.10);
    const int n = 400;
    const Ensemble a = run_mc(s.net, s.delta0, s.omega0,
                              draw_params(dist, n, SampleMethod::iid, 1), 3.0,
                              s.dt_int, s.dt_snap, 0, 1, 2);
    const Ensemble b = run_mc(s.net, s.delta0, s.omega0,
                              draw_params(dist, n, SampleMethod::iid, 2), 3.0,
                              s.dt_int, s.dt_snap, 0, 1, 2);
    const MomentSeries ma = moments(a);
    const MomentSeries mb = moments(b);

    // Mean difference bounded by ~3 sigma/sqrt(n) pointwise (allow 5 for the max
    // over the whole window).
    for (int t = 0; t < a.n_times(); ++t) {
        const double noise = 5.0 * std::max(ma.std[t], 1e-12) / std::sqrt(n);
        CHECK(std::abs(ma.mean[t] - mb.mean[t]) <= noise + 1e-9);
    }
}

TEST_CASE("mismatched grids are rejected") {
    Ensemble a, b;
    a.times.resize(2);
    a.times << 0.0, 0.01;
    a.values.resize(2, 2);
    a.values.setZero();
    b = a;
    b.times[1] = 0.02;
    const MomentSeries ma = moments(a), mb = moments(b);
    CHECK_THROWS_AS(compare(a, ma, b, mb, 0.0, 0.02), ConfigError);
}

TEST_CASE("ensemble and moments CSVs round-trip") {
    const Ensemble e = gaussian_ensemble(10, 55);
    const std::string epath = "kuq_test_ens.csv";
    save_ensemble_csv(e, epath);
    const Ensemble back = load_ensemble_csv(epath);
    std::remove(epath.c_str());
    CHECK((back.values - e.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.times - e.times).cwiseAbs().maxCoeff() == 0.0);

    Ensemble wide;
    wide.times.resize(3);
    wide.times << 0.0, 0.5, 1.0;
    wide.values.resize(6, 3);
    Rng rng(2);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) wide.values(i, j) = rng.uniform01();
    const MomentSeries m = moments(wide);
    const std::string mpath = "kuq_test_mom.csv";
    save_moments_csv(m, mpath);
    const MomentSeries mback = load_moments_csv(mpath);
    std::remove(mpath.c_str());
    CHECK((mback.mean - m.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mback.std - m.std).cwiseAbs().maxCoeff() == 0.0);
}

}  // TEST_SUITE
