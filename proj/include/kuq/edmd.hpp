#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "kuq/dictionary.hpp"
#include "kuq/dynamics.hpp"

namespace kuq {

// Finite-dimensional Koopman approximation fitted by EDMD. Columns of R are
// right eigenvectors (their state rows are the Koopman modes); rows of L are
// left eigenvectors, normalized so L*R = I. mu are the discrete eigenvalues
// of the one-step operator at sampling interval dt.
struct KoopmanModel {
    Eigen::VectorXcd mu;
    Eigen::MatrixXcd r_vecs;  // n_d x n_d
    Eigen::MatrixXcd l_vecs;  // n_d x n_d
    Dictionary dict;
    double dt = 0.0;
    std::vector<int> state_rows;
    double svd_truncation = 0.0;
    double fit_residual = 0.0;  // mean relative one-step residual over pairs
    int rank = 0;               // retained rank of the Gram matrix

    // Split real/imaginary copies of L: the dictionary vector is real, so
    // phi = L g runs as two real matrix-vector products.
    Eigen::MatrixXd l_re, l_im;

    // One-step matrix K = A G^+; kept for diagnostics on freshly fitted
    // models, not persisted.
    Eigen::MatrixXd k_matrix;

    int size() const { return static_cast<int>(mu.size()); }
    void finalize();  // fills l_re/l_im and state_rows after mu/L/dict are set
};

struct SurrogateTrajectory {
    Eigen::VectorXd times;
    Eigen::MatrixXd states;  // n_a x (k_max + 1), real parts, destandardized
    int n_g = 0;
    int n_m = 0;
    double max_imag_residual = 0.0;

    int n_snapshots() const { return static_cast<int>(times.size()); }
};

// Pools all consecutive snapshot pairs of the trajectories, forms
// G = Psi_X Psi_X^T and A = Psi_Y Psi_X^T, and takes K = A G^+ with the
// pseudo-inverse truncated at svd_truncation relative to the largest
// singular value. The eigendecomposition exploits the exact null space the
// truncation induces, so the left/right eigenvector pair satisfies L R = I
// to machine precision; a conditioning failure throws NumericalError.
KoopmanModel fit_edmd(const std::vector<Trajectory>& trajectories,
                      const Dictionary& dict, double svd_truncation = 1e-10,
                      int threads = 0);

// phi = L g(x_a0).
Eigen::VectorXcd eigenfunctions_at(const KoopmanModel& model,
                                   const AugmentedState& x_a0);

// Reconstructs x_ak for k = 0..k_max from g_k = R (phi .* mu^k): state rows
// read out, standardization inverted, real parts taken. Throws on overflow
// (|mu| > 1 modes amplified past floating range) naming the first bad step.
SurrogateTrajectory realize(const KoopmanModel& model, const AugmentedState& x_a0,
                            int k_max);

// Reusable row-restricted realization. Every entry point (realize and the
// surrogate sweep) funnels through Realizer::run, so a state row is computed
// by the exact same arithmetic regardless of which rows were requested or
// how samples are batched. Step 0 reconstructs through the full eigenbasis;
// later steps iterate only the live modes (the truncation-induced trailing
// zero eigenvalues contribute exactly nothing after one step). The
// imaginary-plane reductions feed only the residual diagnostic and are
// skipped when it is not requested; the real-plane arithmetic is unaffected.
class Realizer {
public:
    Realizer(const KoopmanModel& model, std::vector<int> rows);

    // out must be rows x (k_max + 1).
    void run(const Eigen::VectorXcd& phi, int k_max, Eigen::MatrixXd& out,
             double* max_imag_residual = nullptr) const;

private:
    const KoopmanModel* model_;
    std::vector<int> rows_;
    // Split real/imaginary planes: the hot loops then run as real
    // element-wise products and real dot reductions.
    std::vector<Eigen::VectorXd> row_re_, row_im_;
    Eigen::VectorXd mu_re_, mu_im_;
    int n_live_ = 0;
};

// Evaluates phi = L g(x) for four states with one streaming pass over L.
// Each output column is computed element-for-element by the same sequential
// accumulation as eigenfunctions_at, so lane packing never changes a bit.
void eigenfunctions_at4(const KoopmanModel& model,
                        const std::array<const AugmentedState*, 4>& states,
                        std::array<Eigen::VectorXcd, 4>& phis);

// One-shot convenience over Realizer. Returns rows x (k_max+1).
Eigen::MatrixXd realize_rows(const KoopmanModel& model, const Eigen::VectorXcd& phi,
                             int k_max, const std::vector<int>& rows,
                             double* max_imag_residual = nullptr);

// lambda_i = ln(mu_i)/dt, principal branch; mu = 0 maps to the infinitely
// damped sentinel (-inf, 0).
Eigen::VectorXcd continuous_eigenvalues(const KoopmanModel& model);

// Versioned binary artifact with exact double round-trip.
void save_model(const KoopmanModel& model, const std::string& path);
KoopmanModel load_model(const std::string& path);

}  // namespace kuq
