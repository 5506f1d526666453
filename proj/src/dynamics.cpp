#include "kuq/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kuq/common.hpp"

namespace kuq {

AugmentedState AugmentedState::from_parts(const Eigen::VectorXd& delta,
                                          const Eigen::VectorXd& omega,
                                          const Eigen::VectorXd& m) {
    if (delta.size() != omega.size())
        throw ConfigError("AugmentedState: delta/omega dimension mismatch");
    AugmentedState s(static_cast<int>(delta.size()), static_cast<int>(m.size()));
    s.delta() = delta;
    s.omega() = omega;
    s.m() = m;
    return s;
}

namespace {

// Allocation-free core shared by the public wrapper and the integrator.
void swing_rhs_into(const AugmentedState& state, const ReducedNetwork& net,
                    Eigen::VectorXd& pe_scratch, Eigen::VectorXd& dx) {
    const int ng = net.n_gens();
    if (state.n_g != ng)
        throw ConfigError("swing_rhs: state has " + std::to_string(state.n_g) +
                          " generators, network has " + std::to_string(ng));
    if (state.n_m != 0 && state.n_m != ng)
        throw ConfigError("swing_rhs: pseudo-state count must be 0 or n_g");

    const auto delta = state.delta();
    const auto omega = state.omega();

    dx.setZero(state.dim());
    dx.segment(0, ng) = omega;

    net.electrical_power_into(delta, pe_scratch);
    for (int i = 0; i < ng; ++i) {
        const double m_i = state.n_m ? state.m()[i] : net.h[i];
        const double acc =
            net.omega_s / (2.0 * m_i) *
            (net.p_m[i] - pe_scratch[i] - net.d[i] / net.omega_s * omega[i]);
        if (!std::isfinite(acc))
            throw NumericalError("swing_rhs: non-finite acceleration at generator " +
                                 std::to_string(i));
        dx[ng + i] = acc;
    }
    // dx for the m block stays exactly zero.
}

}  // namespace

Eigen::VectorXd swing_rhs(const AugmentedState& state, const ReducedNetwork& net) {
    Eigen::VectorXd pe, dx;
    swing_rhs_into(state, net, pe, dx);
    return dx;
}

Trajectory simulate(const AugmentedState& x0, const ReducedNetwork& net,
                    double horizon, double dt_int, double dt_snap) {
    if (!(horizon > 0.0) && horizon != 0.0)
        throw ConfigError("simulate: horizon must be >= 0");
    if (!(dt_int > 0.0) || !(dt_snap > 0.0))
        throw ConfigError("simulate: dt_int and dt_snap must be > 0");
    const double ratio_f = dt_snap / dt_int;
    const int ratio = static_cast<int>(std::lround(ratio_f));
    if (ratio < 1 || std::abs(ratio_f - ratio) > 1e-9 * ratio)
        throw ConfigError("simulate: dt_snap must be an integer multiple of dt_int");
    const double snaps_f = horizon / dt_snap;
    const int n_snap_steps = static_cast<int>(std::lround(snaps_f));
    if (std::abs(snaps_f - n_snap_steps) > 1e-9 * std::max(1, n_snap_steps))
        throw ConfigError("simulate: horizon must be an integer multiple of dt_snap");
    if (!x0.data.allFinite()) throw ConfigError("simulate: non-finite initial state");
    for (int i = 0; i < x0.n_m; ++i)
        if (!(x0.m()[i] > 0.0))
            throw ConfigError("simulate: pseudo-state m[" + std::to_string(i) +
                              "] must be > 0");

    Trajectory traj;
    traj.n_g = x0.n_g;
    traj.n_m = x0.n_m;
    traj.times.resize(n_snap_steps + 1);
    traj.states.resize(x0.dim(), n_snap_steps + 1);

    AugmentedState x = x0;
    traj.times[0] = 0.0;
    traj.states.col(0) = x.data;

    Eigen::VectorXd k1, k2, k3, k4, pe;
    AugmentedState tmp = x0;
    for (int s = 1; s <= n_snap_steps; ++s) {
        for (int sub = 0; sub < ratio; ++sub) {
            swing_rhs_into(x, net, pe, k1);
            tmp.data = x.data + 0.5 * dt_int * k1;
            swing_rhs_into(tmp, net, pe, k2);
            tmp.data = x.data + 0.5 * dt_int * k2;
            swing_rhs_into(tmp, net, pe, k3);
            tmp.data = x.data + dt_int * k3;
            swing_rhs_into(tmp, net, pe, k4);
            x.data += dt_int / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (!x.data.allFinite()) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6g", s * dt_snap);
            throw NumericalError(std::string("simulate: state blew up at t = ") + buf + " s");
        }
        traj.times[s] = s * dt_snap;
        traj.states.col(s) = x.data;
    }
    return traj;
}

std::vector<Trajectory> generate_training_set(const ReducedNetwork& net,
                                              const Eigen::VectorXd& delta0,
                                              const Eigen::VectorXd& omega0,
                                              const Eigen::MatrixXd& m_samples,
                                              double horizon, double dt_int,
                                              double dt_snap, int threads) {
    const int n_t = static_cast<int>(m_samples.rows());
    if (n_t < 1) throw ConfigError("generate_training_set: no samples");
    for (int j = 0; j < n_t; ++j)
        if (!(m_samples.row(j).minCoeff() > 0.0))
            throw ConfigError("generate_training_set: sample " + std::to_string(j) +
                              " has a non-positive entry");

    std::vector<Trajectory> out(n_t);
    parallel_for(n_t, threads, [&](std::size_t j) {
        AugmentedState x0 = AugmentedState::from_parts(
            delta0, omega0, m_samples.row(static_cast<int>(j)).transpose());
        out[j] = simulate(x0, net, horizon, dt_int, dt_snap);
    });
    return out;
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_trajectory_csv: cannot open " + path);
    out << "t";
    for (int i = 1; i <= traj.n_g; ++i) out << ",delta_" << i;
    for (int i = 1; i <= traj.n_g; ++i) out << ",omega_" << i;
    for (int i = 1; i <= traj.n_m; ++i) out << ",m_" << i;
    out << "\n";
    char buf[32];
    for (int s = 0; s < traj.n_snapshots(); ++s) {
        std::snprintf(buf, sizeof(buf), "%.17g", traj.times[s]);
        out << buf;
        for (int r = 0; r < traj.states.rows(); ++r) {
            std::snprintf(buf, sizeof(buf), "%.17g", traj.states(r, s));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("save_trajectory_csv: write failed for " + path);
}

Trajectory load_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_trajectory_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("load_trajectory_csv: empty file " + path);

    int n_g = 0, n_m = 0;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) {
            if (col.rfind("delta_", 0) == 0) ++n_g;
            else if (col.rfind("m_", 0) == 0) ++n_m;
        }
    }
    std::vector<double> ts;
    std::vector<double> vals;
    const int dim = 2 * n_g + n_m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        ts.push_back(std::stod(cell));
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            vals.push_back(std::stod(cell));
            ++c;
        }
        if (c != dim) throw IoError("load_trajectory_csv: ragged row in " + path);
    }
    Trajectory traj;
    traj.n_g = n_g;
    traj.n_m = n_m;
    const int n_snap = static_cast<int>(ts.size());
    traj.times = Eigen::Map<Eigen::VectorXd>(ts.data(), n_snap);
    traj.states.resize(dim, n_snap);
    for (int s = 0; s < n_snap; ++s)
        for (int r = 0; r < dim; ++r) traj.states(r, s) = vals[s * dim + r];
    return traj;
}

}  // namespace kuq
