#include "kuq/kron.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "kuq/common.hpp"

namespace kuq {

Eigen::VectorXd ReducedNetwork::electrical_power(const Eigen::VectorXd& delta) const {
    Eigen::VectorXd pe(n_gens());
    electrical_power_into(delta, pe);
    return pe;
}

void ReducedNetwork::electrical_power_into(const Eigen::VectorXd& delta,
                                           Eigen::VectorXd& pe) const {
    const int n = n_gens();
    if (delta.size() != n)
        throw ConfigError("electrical_power: angle vector dimension mismatch");
    if (pe.size() != n) pe.resize(n);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const double g = y_red(i, j).real(), b = y_red(i, j).imag();
            const double dij = delta[i] - delta[j];
            acc += e[j] * (g * std::cos(dij) + b * std::sin(dij));
        }
        pe[i] = e[i] * acc;
    }
}

Eigen::MatrixXcd schur_reduce(const Eigen::MatrixXcd& y_full, int n_keep) {
    const int n = static_cast<int>(y_full.rows());
    if (n_keep < 0 || n_keep > n) throw ConfigError("schur_reduce: bad n_keep");
    const int n_elim = n - n_keep;
    if (n_elim == 0) return y_full;

    const auto y_kk = y_full.topLeftCorner(n_keep, n_keep);
    const auto y_ke = y_full.topRightCorner(n_keep, n_elim);
    const auto y_ek = y_full.bottomLeftCorner(n_elim, n_keep);
    const auto y_ee = y_full.bottomRightCorner(n_elim, n_elim);

    Eigen::FullPivLU<Eigen::MatrixXcd> lu(y_ee);
    if (!lu.isInvertible())
        throw NumericalError("schur_reduce: eliminated-block matrix is singular");
    return y_kk - y_ke * lu.solve(Eigen::MatrixXcd(y_ek));
}

ReducedNetwork kron_reduce(const Case& cs, const PowerFlowSolution& pf,
                           const std::set<std::string>& excluded_branches) {
    if (!pf.converged)
        throw ConfigError("kron_reduce: power flow solution not converged");
    const int n = cs.n_buses();
    const int ng = cs.n_gens();
    if (pf.v.size() != n)
        throw ConfigError("kron_reduce: power flow dimension does not match case");

    Eigen::MatrixXcd y_bus = build_ybus(cs, excluded_branches);

    // Constant-impedance loads at the pre-disturbance voltages.
    for (int i = 0; i < n; ++i) {
        const auto& b = cs.buses[i];
        if (b.p_load != 0.0 || b.q_load != 0.0)
            y_bus(i, i) += std::complex<double>(b.p_load, -b.q_load) / (pf.v[i] * pf.v[i]);
    }

    // Augmented matrix ordered [internal nodes | network buses]; each
    // generator couples to its terminal through 1/(j x'd).
    const int n_tot = ng + n;
    Eigen::MatrixXcd y_aug = Eigen::MatrixXcd::Zero(n_tot, n_tot);
    y_aug.bottomRightCorner(n, n) = y_bus;

    ReducedNetwork net;
    net.e.resize(ng);
    net.p_m.resize(ng);
    net.delta0.resize(ng);
    net.h.resize(ng);
    net.d.resize(ng);
    net.omega_s = 2.0 * std::numbers::pi * cs.system.nominal_freq_hz;

    for (int g = 0; g < ng; ++g) {
        const auto& gen = cs.generators[g];
        const int b = cs.bus_index(gen.bus);
        const std::complex<double> y_g = 1.0 / std::complex<double>(0.0, gen.x_d_prime);
        y_aug(g, g) += y_g;
        y_aug(ng + b, ng + b) += y_g;
        y_aug(g, ng + b) -= y_g;
        y_aug(ng + b, g) -= y_g;

        // Net generation at the terminal from the solved flow; the x'd link
        // is lossless, so the internal-node real power equals it.
        const double p_gen = pf.p_inj[b] + cs.buses[b].p_load;
        const double q_gen = pf.q_inj[b] + cs.buses[b].q_load;
        const std::complex<double> v_t = std::polar(pf.v[b], pf.theta[b]);
        const std::complex<double> i_g = std::conj(std::complex<double>(p_gen, q_gen) / v_t);
        const std::complex<double> emf = v_t + std::complex<double>(0.0, gen.x_d_prime) * i_g;

        net.e[g] = std::abs(emf);
        net.delta0[g] = std::arg(emf);
        net.p_m[g] = p_gen;
        net.h[g] = gen.h;
        net.d[g] = gen.d;
    }

    net.y_red = schur_reduce(y_aug, ng);
    return net;
}

}  // namespace kuq
