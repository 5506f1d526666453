#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace kuq {

// Deterministic uniform generator. All randomness in the project flows
// through this so that a (seed, call sequence) pair pins every output bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return (eng_() >> 11) * 0x1.0p-53; }

    std::uint64_t next_u64() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

// Splits a user seed into independent named streams (training sampler,
// evaluation sampler, ...) without overlapping state.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Inverse standard normal CDF, Acklam's rational approximation
// (absolute error below 1.2e-9 over (0,1)).
double probit(double p);

struct Gaussian {
    double mean = 0.0;
    double std = 1.0;
};

struct Uniform {
    double low = 0.0;
    double high = 1.0;
};

using Marginal = std::variant<Gaussian, Uniform>;

// Independent per-parameter marginals; dimension equals the number of
// uncertain parameters.
struct ParamDistribution {
    std::vector<Marginal> marginals;

    int dim() const { return static_cast<int>(marginals.size()); }
    void validate() const;

    // Gaussian(m_i, spread*m_i) per parameter.
    static ParamDistribution gaussian_relative(const Eigen::VectorXd& nominal,
                                               double spread);
    // Uniform[(1-spread)*m_i, (1+spread)*m_i] per parameter.
    static ParamDistribution uniform_relative(const Eigen::VectorXd& nominal,
                                              double spread);
};

enum class SampleMethod { lhs, iid };

struct SampleSet {
    Eigen::MatrixXd samples;  // n x n_m
    SampleMethod method = SampleMethod::iid;
    std::uint64_t seed = 0;
    int redraws = 0;  // positivity redraw count

    int count() const { return static_cast<int>(samples.rows()); }
    int dim() const { return static_cast<int>(samples.cols()); }
};

// n x d Latin hypercube design on [0,1): per dimension exactly one sample in
// each stratum [k/n, (k+1)/n), uniform within the stratum, strata permuted
// independently per dimension.
Eigen::MatrixXd lhs_unit(int n, int d, std::uint64_t seed);

// Draws n parameter vectors. LHS points are pushed through each marginal's
// inverse CDF; iid draws are independent. Non-positive values are redrawn
// (LHS redraws stay inside their stratum, preserving stratification).
SampleSet draw_params(const ParamDistribution& dist, int n,
                      SampleMethod method, std::uint64_t seed);

std::string method_name(SampleMethod m);

void save_samples_csv(const SampleSet& set,
                      const std::vector<std::string>& column_names,
                      const std::string& path);
SampleSet load_samples_csv(const std::string& path);

}  // namespace kuq
