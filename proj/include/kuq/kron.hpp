#pragma once

#include <Eigen/Dense>
#include <set>
#include <string>

#include "kuq/case.hpp"
#include "kuq/power_flow.hpp"

namespace kuq {

// Classical-model equivalent: constant EMF behind transient reactance per
// generator, loads folded into the network as constant admittances, all
// non-internal nodes eliminated.
struct ReducedNetwork {
    Eigen::MatrixXcd y_red;   // n_g x n_g, generator internal nodes, pu
    Eigen::VectorXd e;        // internal EMF magnitude, pu
    Eigen::VectorXd p_m;      // mechanical power, pu
    Eigen::VectorXd delta0;   // initial internal angle, rad
    Eigen::VectorXd h;        // inertia constant, s
    Eigen::VectorXd d;        // damping, pu
    double omega_s = 0.0;     // synchronous speed, rad/s

    int n_gens() const { return static_cast<int>(e.size()); }

    // P_e,i = sum_j E_i E_j (G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j))
    // evaluated with the given angles and the stored EMF magnitudes.
    Eigen::VectorXd electrical_power(const Eigen::VectorXd& delta) const;
    // Allocation-free variant for integrator inner loops.
    void electrical_power_into(const Eigen::VectorXd& delta, Eigen::VectorXd& pe) const;
};

// Builds the reduced model for the topology with `excluded_branches` opened.
// Loads become constant shunt admittances at the (pre-disturbance) power
// flow voltages; EMF, initial angles and mechanical power also come from
// that power flow, so the reduction with no exclusions is at equilibrium.
ReducedNetwork kron_reduce(const Case& cs, const PowerFlowSolution& pf,
                           const std::set<std::string>& excluded_branches = {});

// Schur-complement elimination on a raw admittance matrix: retains the first
// n_keep nodes. Exposed for network-equivalence tests.
Eigen::MatrixXcd schur_reduce(const Eigen::MatrixXcd& y_full, int n_keep);

}  // namespace kuq
