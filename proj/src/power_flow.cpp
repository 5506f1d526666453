#include "kuq/power_flow.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include "kuq/common.hpp"

namespace kuq {

Eigen::MatrixXcd build_ybus(const Case& cs, const std::set<std::string>& excluded_branches) {
    const int n = cs.n_buses();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);

    for (const auto& id : excluded_branches)
        if (cs.branch_index(id) < 0)
            throw ConfigError("build_ybus: excluded branch id '" + id + "' not found");

    for (const auto& br : cs.branches) {
        if (!br.in_service) continue;
        if (excluded_branches.count(br.id)) continue;
        const int i = cs.bus_index(br.from);
        const int j = cs.bus_index(br.to);
        const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> bc(0.0, br.b_shunt / 2.0);
        const double t = br.tap;
        y(i, i) += ys / (t * t) + bc;
        y(j, j) += ys + bc;
        y(i, j) -= ys / t;
        y(j, i) -= ys / t;
    }
    return y;
}

namespace {

struct Injections {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
};

Injections calc_injections(const Eigen::MatrixXcd& y, const Eigen::VectorXd& v,
                           const Eigen::VectorXd& th) {
    const int n = static_cast<int>(v.size());
    Injections inj{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    for (int i = 0; i < n; ++i) {
        double pi = 0.0, qi = 0.0;
        for (int j = 0; j < n; ++j) {
            const double g = y(i, j).real(), b = y(i, j).imag();
            if (g == 0.0 && b == 0.0) continue;
            const double dth = th[i] - th[j];
            const double c = std::cos(dth), s = std::sin(dth);
            pi += v[j] * (g * c + b * s);
            qi += v[j] * (g * s - b * c);
        }
        inj.p[i] = v[i] * pi;
        inj.q[i] = v[i] * qi;
    }
    return inj;
}

}  // namespace

PowerFlowSolution solve_power_flow(const Case& cs, double tol, int max_iter) {
    cs.validate();
    if (!(tol > 0.0)) throw ConfigError("solve_power_flow: tol must be > 0");

    const int n = cs.n_buses();
    const Eigen::MatrixXcd y = build_ybus(cs);

    // Specified injections: generation minus load. Slack P and PV/slack Q
    // are free.
    Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        p_spec[i] -= cs.buses[i].p_load;
        q_spec[i] -= cs.buses[i].q_load;
    }
    for (const auto& g : cs.generators) p_spec[cs.bus_index(g.bus)] += g.p_set;

    std::vector<int> pv, pq;
    int slack = -1;
    for (int i = 0; i < n; ++i) {
        switch (cs.buses[i].type) {
            case BusType::slack: slack = i; break;
            case BusType::PV: pv.push_back(i); break;
            case BusType::PQ: pq.push_back(i); break;
        }
    }
    std::vector<int> ang;  // buses with unknown angle
    ang.reserve(pv.size() + pq.size());
    ang.insert(ang.end(), pv.begin(), pv.end());
    ang.insert(ang.end(), pq.begin(), pq.end());

    const int n_ang = static_cast<int>(ang.size());
    const int n_pq = static_cast<int>(pq.size());
    const int n_unk = n_ang + n_pq;

    // Flat start at setpoint magnitudes.
    Eigen::VectorXd v(n), th = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
        v[i] = (cs.buses[i].type == BusType::PQ) ? 1.0 : cs.buses[i].v_setpoint;

    PowerFlowSolution sol;
    sol.iterations = 0;

    auto mismatch = [&](const Injections& inj) {
        Eigen::VectorXd f(n_unk);
        for (int k = 0; k < n_ang; ++k) f[k] = p_spec[ang[k]] - inj.p[ang[k]];
        for (int k = 0; k < n_pq; ++k) f[n_ang + k] = q_spec[pq[k]] - inj.q[pq[k]];
        return f;
    };

    Injections inj = calc_injections(y, v, th);
    Eigen::VectorXd f = mismatch(inj);
    sol.max_mismatch = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;

    while (sol.max_mismatch > tol && sol.iterations < max_iter) {
        // Polar Jacobian: rows [dP(ang); dQ(pq)], columns [theta(ang); V(pq)].
        Eigen::MatrixXd jac(n_unk, n_unk);
        for (int r = 0; r < n_unk; ++r) {
            const bool row_q = r >= n_ang;
            const int i = row_q ? pq[r - n_ang] : ang[r];
            for (int c = 0; c < n_unk; ++c) {
                const bool col_v = c >= n_ang;
                const int j = col_v ? pq[c - n_ang] : ang[c];
                const double g = y(i, j).real(), b = y(i, j).imag();
                double val = 0.0;
                if (i == j) {
                    if (!row_q && !col_v) val = -inj.q[i] - b * v[i] * v[i];
                    else if (!row_q && col_v) val = inj.p[i] / v[i] + g * v[i];
                    else if (row_q && !col_v) val = inj.p[i] - g * v[i] * v[i];
                    else val = inj.q[i] / v[i] - b * v[i];
                } else {
                    const double dth = th[i] - th[j];
                    const double cth = std::cos(dth), sth = std::sin(dth);
                    if (!row_q && !col_v) val = v[i] * v[j] * (g * sth - b * cth);
                    else if (!row_q && col_v) val = v[i] * (g * cth + b * sth);
                    else if (row_q && !col_v) val = -v[i] * v[j] * (g * cth + b * sth);
                    else val = v[i] * (g * sth - b * cth);
                }
                jac(r, c) = val;
            }
        }

        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible())
            throw NumericalError("solve_power_flow: singular Jacobian at iteration " +
                                 std::to_string(sol.iterations));
        Eigen::VectorXd dx = lu.solve(f);

        for (int k = 0; k < n_ang; ++k) th[ang[k]] += dx[k];
        for (int k = 0; k < n_pq; ++k) v[pq[k]] += dx[n_ang + k];

        ++sol.iterations;
        inj = calc_injections(y, v, th);
        f = mismatch(inj);
        sol.max_mismatch = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(sol.max_mismatch))
            throw NumericalError("solve_power_flow: diverged (non-finite mismatch) at iteration " +
                                 std::to_string(sol.iterations));
    }

    // Reference the angles to the slack bus.
    th.array() -= th[slack];

    sol.converged = sol.max_mismatch <= tol;
    sol.v = v;
    sol.theta = th;
    sol.p_inj = inj.p;
    sol.q_inj = inj.q;
    return sol;
}

}  // namespace kuq
