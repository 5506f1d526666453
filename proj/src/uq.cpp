#include "kuq/uq.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "kuq/common.hpp"

namespace kuq {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd relative_row(const Eigen::MatrixXd& states, int n_g, int i, int j) {
    if (i < 0 || i >= n_g || j < 0 || j >= n_g)
        throw ConfigError("qoi_relative_angle: generator index out of range");
    return states.row(i).transpose() - states.row(j).transpose();
}

double interp_quantile(std::vector<double> sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Eigen::VectorXd qoi_relative_angle(const Trajectory& traj, int i, int j) {
    return relative_row(traj.states, traj.n_g, i, j);
}

Eigen::VectorXd qoi_relative_angle(const SurrogateTrajectory& traj, int i, int j) {
    return relative_row(traj.states, traj.n_g, i, j);
}

Ensemble run_mc(const ReducedNetwork& net, const Eigen::VectorXd& delta0,
                const Eigen::VectorXd& omega0, const SampleSet& samples,
                double horizon, double dt_int, double dt_snap, int qoi_i, int qoi_j,
                int threads) {
    const int n = samples.count();
    if (n < 1) throw ConfigError("run_mc: empty sample set");

    Timer timer;
    const int n_times = static_cast<int>(std::lround(horizon / dt_snap)) + 1;
    Eigen::MatrixXd rows(n, n_times);
    std::vector<char> ok(n, 0);

    parallel_for(n, threads, [&](std::size_t s) {
        try {
            AugmentedState x0 = AugmentedState::from_parts(
                delta0, omega0, samples.samples.row(static_cast<int>(s)).transpose());
            const Trajectory traj = simulate(x0, net, horizon, dt_int, dt_snap);
            rows.row(s) = qoi_relative_angle(traj, qoi_i, qoi_j).transpose();
            ok[s] = 1;
        } catch (const NumericalError&) {
            ok[s] = 0;
        }
    });

    Ensemble e;
    e.source = EnsembleSource::mc;
    e.times.resize(n_times);
    for (int k = 0; k < n_times; ++k) e.times[k] = k * dt_snap;

    int survivors = 0;
    for (int s = 0; s < n; ++s) survivors += ok[s];
    e.excluded = n - survivors;
    if (e.excluded > 0 && e.excluded * 1000 > n)
        throw NumericalError("run_mc: " + std::to_string(e.excluded) + " of " +
                             std::to_string(n) + " samples blew up (> 0.1 %)");
    e.values.resize(survivors, n_times);
    int r = 0;
    for (int s = 0; s < n; ++s)
        if (ok[s]) e.values.row(r++) = rows.row(s);
    e.wall_time = timer.seconds();
    return e;
}

Ensemble run_surrogate(const KoopmanModel& model, const Eigen::VectorXd& delta0,
                       const Eigen::VectorXd& omega0, const SampleSet& samples,
                       int k_max, int qoi_i, int qoi_j, int threads) {
    const int n = samples.count();
    if (n < 1) throw ConfigError("run_surrogate: empty sample set");
    if (samples.dim() != model.dict.n_m)
        throw ConfigError("run_surrogate: sample dimension does not match model pseudo-states");
    const int n_g = model.dict.n_g;
    if (qoi_i < 0 || qoi_i >= n_g || qoi_j < 0 || qoi_j >= n_g)
        throw ConfigError("run_surrogate: generator index out of range");

    Timer timer;
    const Realizer realizer(model, {qoi_i, qoi_j});
    Eigen::MatrixXd rows(n, k_max + 1);
    std::vector<char> ok(n, 0);

    // Fixed-size blocks keep the partition (and hence every output bit)
    // independent of the thread count while letting each worker reuse its
    // realization buffer.
    constexpr int kBlock = 64;
    const std::size_t n_blocks = (static_cast<std::size_t>(n) + kBlock - 1) / kBlock;
    parallel_for(n_blocks, threads, [&](std::size_t b) {
        Eigen::MatrixXd series(2, k_max + 1);
        const int lo = static_cast<int>(b) * kBlock;
        const int hi = std::min(n, lo + kBlock);

        auto realize_one = [&](int s, const Eigen::VectorXcd& phi) {
            try {
                realizer.run(phi, k_max, series);
                rows.row(s) = series.row(0) - series.row(1);
                ok[s] = 1;
            } catch (const NumericalError&) {
                ok[s] = 0;
            }
        };

        // Groups of four share one sweep over L when lifting to phi; the
        // remainder takes the single-sample path, which computes each bit
        // identically.
        int s = lo;
        for (; s + 4 <= hi; s += 4) {
            std::array<AugmentedState, 4> states;
            std::array<const AugmentedState*, 4> ptrs;
            for (int l = 0; l < 4; ++l) {
                states[l] = AugmentedState::from_parts(
                    delta0, omega0, samples.samples.row(s + l).transpose());
                ptrs[l] = &states[l];
            }
            std::array<Eigen::VectorXcd, 4> phis;
            eigenfunctions_at4(model, ptrs, phis);
            for (int l = 0; l < 4; ++l) realize_one(s + l, phis[l]);
        }
        for (; s < hi; ++s) {
            const AugmentedState x_a0 = AugmentedState::from_parts(
                delta0, omega0, samples.samples.row(s).transpose());
            realize_one(s, eigenfunctions_at(model, x_a0));
        }
    });

    Ensemble e;
    e.source = EnsembleSource::surrogate;
    e.times.resize(k_max + 1);
    for (int k = 0; k <= k_max; ++k) e.times[k] = k * model.dt;

    int survivors = 0;
    for (int s = 0; s < n; ++s) survivors += ok[s];
    e.excluded = n - survivors;
    if (survivors == 0) throw NumericalError("run_surrogate: every realization overflowed");
    e.values.resize(survivors, k_max + 1);
    int r = 0;
    for (int s = 0; s < n; ++s)
        if (ok[s]) e.values.row(r++) = rows.row(s);
    e.wall_time = timer.seconds();
    return e;
}

MomentSeries moments(const Ensemble& e) {
    const int n = e.n_samples();
    const int n_t = e.n_times();
    if (n < 1) throw ConfigError("moments: empty ensemble");

    MomentSeries m;
    m.times = e.times;
    m.mean.resize(n_t);
    m.std.resize(n_t);
    m.skewness.resize(n_t);
    m.kurtosis.resize(n_t);

    for (int t = 0; t < n_t; ++t) {
        const auto col = e.values.col(t);
        const double mean = col.mean();
        m.mean[t] = mean;
        if (n < 2) {
            m.std[t] = kNan;
            m.skewness[t] = kNan;
            m.kurtosis[t] = kNan;
            continue;
        }
        const Eigen::ArrayXd dev = col.array() - mean;
        const double m2 = dev.square().mean();
        m.std[t] = std::sqrt(dev.square().sum() / (n - 1));
        if (m2 <= 0.0) {
            m.skewness[t] = n >= 3 ? 0.0 : kNan;
            m.kurtosis[t] = kNan;  // undefined for a constant ensemble
            continue;
        }
        m.skewness[t] = n >= 3 ? dev.cube().mean() / std::pow(m2, 1.5) : kNan;
        m.kurtosis[t] = n >= 4 ? dev.square().square().mean() / (m2 * m2) : kNan;
    }
    return m;
}

double DensityEstimate::integral() const {
    double acc = 0.0;
    for (int i = 1; i < grid.size(); ++i)
        acc += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
    return acc;
}

DensityEstimate kde(const Eigen::VectorXd& values, std::optional<double> bandwidth,
                    int grid_size) {
    const int n = static_cast<int>(values.size());
    if (n < 2) throw ConfigError("kde: need at least 2 values");
    if (grid_size < 2) throw ConfigError("kde: grid_size must be >= 2");

    const double lo_val = values.minCoeff(), hi_val = values.maxCoeff();
    double h;
    if (bandwidth) {
        h = *bandwidth;
        if (!(h > 0.0)) throw ConfigError("kde: bandwidth must be > 0");
    } else {
        std::vector<double> sorted(values.data(), values.data() + n);
        std::sort(sorted.begin(), sorted.end());
        const double mean = values.mean();
        const double sd = std::sqrt((values.array() - mean).square().sum() / (n - 1));
        const double iqr =
            interp_quantile(sorted, 0.75) - interp_quantile(sorted, 0.25);
        double spread = sd;
        if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
        if (!(spread > 0.0))
            throw NumericalError("kde: degenerate sample (all values identical)");
        h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    }

    DensityEstimate d;
    d.bandwidth = h;
    d.sample_count = n;
    d.grid.resize(grid_size);
    d.density.resize(grid_size);
    const double lo = lo_val - 5.0 * h, hi = hi_val + 5.0 * h;
    const double step = (hi - lo) / (grid_size - 1);
    const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
    for (int g = 0; g < grid_size; ++g) {
        const double x = lo + g * step;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double u = (x - values[i]) / h;
            acc += std::exp(-0.5 * u * u);
        }
        d.grid[g] = x;
        d.density[g] = norm * acc;
    }
    return d;
}

double ks_statistic(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() == 0 || b.size() == 0) throw ConfigError("ks_statistic: empty sample");
    std::vector<double> sa(a.data(), a.data() + a.size());
    std::vector<double> sb(b.data(), b.data() + b.size());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const double na = static_cast<double>(sa.size());
    const double nb = static_cast<double>(sb.size());
    std::size_t ia = 0, ib = 0;
    double ks = 0.0;
    while (ia < sa.size() && ib < sb.size()) {
        const double x = std::min(sa[ia], sb[ib]);
        while (ia < sa.size() && sa[ia] <= x) ++ia;
        while (ib < sb.size() && sb[ib] <= x) ++ib;
        ks = std::max(ks, std::abs(ia / na - ib / nb));
    }
    return ks;
}

ComparisonReport compare(const Ensemble& bench, const MomentSeries& bench_m,
                         const Ensemble& test, const MomentSeries& test_m,
                         double t0, double t1, std::vector<double> ks_times) {
    if (bench.n_times() != test.n_times())
        throw ConfigError("compare: time grids have different lengths");
    for (int k = 0; k < bench.n_times(); ++k)
        if (std::abs(bench.times[k] - test.times[k]) > 1e-9)
            throw ConfigError("compare: time grids do not match (dt mismatch)");

    ComparisonReport rep;
    rep.window_t0 = t0;
    rep.window_t1 = t1;
    rep.bench_wall_time = bench.wall_time;
    rep.test_wall_time = test.wall_time;

    std::vector<int> window;
    for (int k = 0; k < bench.n_times(); ++k)
        if (bench.times[k] >= t0 - 1e-12 && bench.times[k] <= t1 + 1e-12)
            window.push_back(k);
    if (window.empty()) throw ConfigError("compare: empty time window");

    double max_std = 0.0;
    for (int k : window) max_std = std::max(max_std, bench_m.std[k]);

    double sum_mean_err = 0.0;
    double sum_std_err = 0.0;
    for (int k : window) {
        const double err = std::abs(test_m.mean[k] - bench_m.mean[k]);
        rep.mean_abs_err_max = std::max(rep.mean_abs_err_max, err);
        sum_mean_err += err;
        if (max_std > 0.0) {
            const double rel = std::abs(test_m.std[k] - bench_m.std[k]) / max_std;
            rep.std_rel_err_max = std::max(rep.std_rel_err_max, rel);
            sum_std_err += rel;
        }
    }
    rep.mean_abs_err_mean = sum_mean_err / static_cast<double>(window.size());
    rep.std_rel_err_mean =
        max_std > 0.0 ? sum_std_err / static_cast<double>(window.size()) : 0.0;

    for (double t : ks_times) {
        if (t < t0 - 1e-12 || t > t1 + 1e-12) continue;
        int best = window.front();
        for (int k : window)
            if (std::abs(bench.times[k] - t) < std::abs(bench.times[best] - t)) best = k;
        rep.ks_times.push_back(bench.times[best]);
        rep.ks_stats.push_back(ks_statistic(bench.values.col(best), test.values.col(best)));
    }
    return rep;
}

std::string ComparisonReport::to_json() const {
    char buf[256];
    std::string s = "{\n";
    auto add = [&](const char* key, double v, bool comma = true) {
        std::snprintf(buf, sizeof(buf), "  \"%s\": %.17g%s\n", key, v, comma ? "," : "");
        s += buf;
    };
    add("window_t0", window_t0);
    add("window_t1", window_t1);
    add("mean_abs_err_max", mean_abs_err_max);
    add("mean_abs_err_mean", mean_abs_err_mean);
    add("std_rel_err_max", std_rel_err_max);
    add("std_rel_err_mean", std_rel_err_mean);
    s += "  \"ks\": [";
    for (std::size_t i = 0; i < ks_stats.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s{\"t\": %.17g, \"stat\": %.17g}",
                      i ? ", " : "", ks_times[i], ks_stats[i]);
        s += buf;
    }
    s += "],\n";
    add("bench_wall_time_s", bench_wall_time);
    add("test_wall_time_s", test_wall_time);
    add("speedup", test_wall_time > 0.0 ? bench_wall_time / test_wall_time : 0.0, false);
    s += "}\n";
    return s;
}

namespace {

void write_csv_header(std::ofstream& out, const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
}

}  // namespace

void save_moments_csv(const MomentSeries& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_moments_csv: cannot open " + path);
    // kurtosis is the raw fourth-moment ratio (Gaussian -> 3), not excess
    write_csv_header(out, {"t", "mean", "std", "skew", "kurt"});
    char buf[32];
    for (int k = 0; k < m.times.size(); ++k) {
        const double vals[5] = {m.times[k], m.mean[k], m.std[k], m.skewness[k],
                                m.kurtosis[k]};
        for (int c = 0; c < 5; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", vals[c]);
            out << (c ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("save_moments_csv: write failed for " + path);
}

MomentSeries load_moments_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_moments_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("load_moments_csv: empty file " + path);
    std::vector<std::array<double, 5>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::array<double, 5> row{};
        for (int c = 0; c < 5; ++c) {
            if (!std::getline(ss, cell, ','))
                throw IoError("load_moments_csv: short row in " + path);
            row[c] = std::stod(cell);
        }
        rows.push_back(row);
    }
    MomentSeries m;
    const int n = static_cast<int>(rows.size());
    m.times.resize(n);
    m.mean.resize(n);
    m.std.resize(n);
    m.skewness.resize(n);
    m.kurtosis.resize(n);
    for (int k = 0; k < n; ++k) {
        m.times[k] = rows[k][0];
        m.mean[k] = rows[k][1];
        m.std[k] = rows[k][2];
        m.skewness[k] = rows[k][3];
        m.kurtosis[k] = rows[k][4];
    }
    return m;
}

void save_density_csv(const DensityEstimate& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_density_csv: cannot open " + path);
    write_csv_header(out, {"x", "density"});
    char buf[32];
    for (int g = 0; g < d.grid.size(); ++g) {
        std::snprintf(buf, sizeof(buf), "%.17g", d.grid[g]);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", d.density[g]);
        out << buf << "\n";
    }
    if (!out) throw IoError("save_density_csv: write failed for " + path);
}

void save_ensemble_csv(const Ensemble& e, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_ensemble_csv: cannot open " + path);
    out << "sample";
    char buf[32];
    for (int k = 0; k < e.n_times(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.times[k]);
        out << ",t_" << buf;
    }
    out << "\n";
    for (int s = 0; s < e.n_samples(); ++s) {
        out << s;
        for (int k = 0; k < e.n_times(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.values(s, k));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("save_ensemble_csv: write failed for " + path);
}

Ensemble load_ensemble_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_ensemble_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("load_ensemble_csv: empty file " + path);

    std::vector<double> times;
    {
        std::stringstream ss(line);
        std::string col;
        std::getline(ss, col, ',');  // "sample"
        while (std::getline(ss, col, ',')) {
            if (col.rfind("t_", 0) != 0)
                throw IoError("load_ensemble_csv: bad header in " + path);
            times.push_back(std::stod(col.substr(2)));
        }
    }
    const int n_t = static_cast<int>(times.size());
    std::vector<double> vals;
    int n_rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');  // sample index
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            vals.push_back(std::stod(cell));
            ++c;
        }
        if (c != n_t) throw IoError("load_ensemble_csv: ragged row in " + path);
        ++n_rows;
    }
    Ensemble e;
    e.times = Eigen::Map<Eigen::VectorXd>(times.data(), n_t);
    e.values.resize(n_rows, n_t);
    for (int s = 0; s < n_rows; ++s)
        for (int k = 0; k < n_t; ++k) e.values(s, k) = vals[s * n_t + k];
    return e;
}

}  // namespace kuq
