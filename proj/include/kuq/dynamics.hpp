#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kuq/kron.hpp"

namespace kuq {

// Augmented state [delta; omega; m]: rotor angles, speed deviations, and
// parameter pseudo-states (inertia values). The pseudo-state block has a
// zero derivative by construction, so the integrator leaves it bit-exact.
struct AugmentedState {
    Eigen::VectorXd data;  // 2*n_g + n_m
    int n_g = 0;
    int n_m = 0;

    AugmentedState() = default;
    AugmentedState(int ng, int nm)
        : data(Eigen::VectorXd::Zero(2 * ng + nm)), n_g(ng), n_m(nm) {}

    static AugmentedState from_parts(const Eigen::VectorXd& delta,
                                     const Eigen::VectorXd& omega,
                                     const Eigen::VectorXd& m);

    int dim() const { return 2 * n_g + n_m; }
    auto delta() { return data.segment(0, n_g); }
    auto delta() const { return data.segment(0, n_g); }
    auto omega() { return data.segment(n_g, n_g); }
    auto omega() const { return data.segment(n_g, n_g); }
    auto m() { return data.segment(2 * n_g, n_m); }
    auto m() const { return data.segment(2 * n_g, n_m); }
};

struct Trajectory {
    Eigen::VectorXd times;  // s, uniform spacing dt_snap, starting at 0
    Eigen::MatrixXd states; // dim x n_snapshots, columns in time order
    int n_g = 0;
    int n_m = 0;

    int n_snapshots() const { return static_cast<int>(times.size()); }
    double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

// Right-hand side of the augmented swing model. m_i (the pseudo-state)
// supplies the inertia; net.h is only the nominal value. The m block of the
// derivative is exactly zero.
Eigen::VectorXd swing_rhs(const AugmentedState& state, const ReducedNetwork& net);

// Classical fixed-step RK4, snapshots every dt_snap (an integer multiple of
// dt_int). Throws NumericalError with the blow-up time if the state goes
// non-finite.
Trajectory simulate(const AugmentedState& x0, const ReducedNetwork& net,
                    double horizon, double dt_int, double dt_snap);

// One trajectory per parameter sample; the true-state part of the initial
// condition is identical across all of them, only m(0) varies. Trajectories
// may be integrated concurrently; output order follows sample order.
std::vector<Trajectory> generate_training_set(const ReducedNetwork& net,
                                              const Eigen::VectorXd& delta0,
                                              const Eigen::VectorXd& omega0,
                                              const Eigen::MatrixXd& m_samples,
                                              double horizon, double dt_int,
                                              double dt_snap, int threads = 0);

// Canonical CSV: t, delta_1..delta_ng, omega_1..omega_ng, m_1..m_nm.
void save_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path);

}  // namespace kuq
