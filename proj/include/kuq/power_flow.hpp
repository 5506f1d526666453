#pragma once

#include <Eigen/Dense>
#include <set>
#include <string>

#include "kuq/case.hpp"

namespace kuq {

struct PowerFlowSolution {
    Eigen::VectorXd v;      // pu magnitude per bus
    Eigen::VectorXd theta;  // rad per bus, slack at 0
    Eigen::VectorXd p_inj;  // pu net injection per bus
    Eigen::VectorXd q_inj;  // pu
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;  // pu
};

// Bus admittance matrix over in-service branches, optionally with some
// branch ids removed. Line charging split half per end; off-nominal taps on
// the from side (real ratio, so the matrix stays symmetric).
Eigen::MatrixXcd build_ybus(const Case& cs,
                            const std::set<std::string>& excluded_branches = {});

// Full Newton-Raphson in polar form, flat start. converged means every P
// mismatch (non-slack) and Q mismatch (PQ) is within tol. Non-convergence
// returns diagnostics with converged=false; a singular Jacobian throws
// NumericalError.
PowerFlowSolution solve_power_flow(const Case& cs, double tol = 1e-8,
                                   int max_iter = 20);

}  // namespace kuq
