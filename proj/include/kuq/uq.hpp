#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kuq/dynamics.hpp"
#include "kuq/edmd.hpp"
#include "kuq/sampling.hpp"

namespace kuq {

enum class EnsembleSource { mc, surrogate };

// Per-sample time series of one quantity of interest.
struct Ensemble {
    std::string qoi_name;
    Eigen::VectorXd times;
    Eigen::MatrixXd values;  // n_samples x n_times, surviving samples only
    EnsembleSource source = EnsembleSource::mc;
    double wall_time = 0.0;  // s
    int excluded = 0;        // samples dropped for blow-up/overflow

    int n_samples() const { return static_cast<int>(values.rows()); }
    int n_times() const { return static_cast<int>(values.cols()); }
};

// Columnwise statistics. std is (n-1)-normalized; skewness is the biased g1;
// kurtosis is raw g2 (Gaussian -> 3). Undefined entries are NaN: std for
// n < 2, skewness for n < 3, kurtosis for n < 4 or zero-variance columns
// (skewness of a constant column is 0 by convention).
struct MomentSeries {
    Eigen::VectorXd times;
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    Eigen::VectorXd skewness;
    Eigen::VectorXd kurtosis;
};

struct DensityEstimate {
    Eigen::VectorXd grid;
    Eigen::VectorXd density;
    double bandwidth = 0.0;
    int sample_count = 0;

    double integral() const;  // trapezoid over the grid
};

struct ComparisonReport {
    double mean_abs_err_max = 0.0;
    double mean_abs_err_mean = 0.0;
    double std_rel_err_max = 0.0;
    double std_rel_err_mean = 0.0;
    std::vector<double> ks_times;
    std::vector<double> ks_stats;
    double window_t0 = 0.0;
    double window_t1 = 0.0;
    double bench_wall_time = 0.0;
    double test_wall_time = 0.0;

    std::string to_json() const;
};

// delta_i(t) - delta_j(t), indices into the generator block.
Eigen::VectorXd qoi_relative_angle(const Trajectory& traj, int i, int j);
Eigen::VectorXd qoi_relative_angle(const SurrogateTrajectory& traj, int i, int j);

// Full RK4 integration per sample (the Monte Carlo benchmark). Samples whose
// integration blows up are excluded and counted; more than 0.1 % exclusions
// is an error. Sample-parallel with deterministic ordering.
Ensemble run_mc(const ReducedNetwork& net, const Eigen::VectorXd& delta0,
                const Eigen::VectorXd& omega0, const SampleSet& samples,
                double horizon, double dt_int, double dt_snap, int qoi_i, int qoi_j,
                int threads = 0);

// Koopman surrogate sweep: per sample, x_a0 = [x0_true; m_j] is lifted
// through phi = L g(x_a0) and realized k_max steps; no ODE integration. The
// per-sample arithmetic path is identical to realize(), so a single-sample
// run reproduces realize + qoi exactly.
Ensemble run_surrogate(const KoopmanModel& model, const Eigen::VectorXd& delta0,
                       const Eigen::VectorXd& omega0, const SampleSet& samples,
                       int k_max, int qoi_i, int qoi_j, int threads = 0);

MomentSeries moments(const Ensemble& e);

// Gaussian-kernel density on a uniform grid spanning [min-5h, max+5h].
// Default bandwidth: Silverman, h = 0.9 min(std, IQR/1.34) n^{-1/5}.
DensityEstimate kde(const Eigen::VectorXd& values,
                    std::optional<double> bandwidth = std::nullopt,
                    int grid_size = 401);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Agreement metrics over a time window. The std error is normalized by the
// benchmark std's window maximum: pointwise ratios are scale-unstable where
// the std dips toward zero, while dividing by the peak spread measures the
// envelope discrepancy at the scale a mean+-std plot shows. At the variance
// peak this coincides with the pointwise relative error. ks_times defaults
// to {2.0 s}, clipped to the window.
ComparisonReport compare(const Ensemble& bench, const MomentSeries& bench_m,
                         const Ensemble& test, const MomentSeries& test_m,
                         double t0, double t1, std::vector<double> ks_times = {2.0});

void save_moments_csv(const MomentSeries& m, const std::string& path);
MomentSeries load_moments_csv(const std::string& path);
void save_density_csv(const DensityEstimate& d, const std::string& path);
void save_ensemble_csv(const Ensemble& e, const std::string& path);
Ensemble load_ensemble_csv(const std::string& path);

}  // namespace kuq
