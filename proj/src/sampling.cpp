#include "kuq/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "kuq/common.hpp"

namespace kuq {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr int kRedrawBudget = 10000;

double quantile(const Marginal& m, double u) {
    if (const auto* g = std::get_if<Gaussian>(&m)) {
        return g->mean + g->std * probit(u);
    }
    const auto& uni = std::get<Uniform>(m);
    return uni.low + u * (uni.high - uni.low);
}

double draw(const Marginal& m, Rng& rng) { return quantile(m, rng.uniform01()); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

namespace {

// One Halley step against erfc sharpens Acklam's estimate (1.15e-9 relative)
// to near machine precision, absolute error included in the far tails.
double probit_refine(double x, double p) {
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace

double probit(double p) {
    // Acklam's piecewise rational approximation to the inverse normal CDF.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    static const double p_low = 0.02425;

    if (!(p > 0.0 && p < 1.0))
        throw ConfigError("probit: p must lie in (0, 1), got " + std::to_string(p));

    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    return probit_refine(x, p);
}

void ParamDistribution::validate() const {
    if (marginals.empty()) throw ConfigError("ParamDistribution: no marginals");
    for (std::size_t i = 0; i < marginals.size(); ++i) {
        if (const auto* g = std::get_if<Gaussian>(&marginals[i])) {
            if (!(g->std > 0.0))
                throw ConfigError("ParamDistribution: std must be > 0 for parameter " +
                                  std::to_string(i));
        } else {
            const auto& u = std::get<Uniform>(marginals[i]);
            if (!(u.low < u.high))
                throw ConfigError("ParamDistribution: low < high required for parameter " +
                                  std::to_string(i));
        }
    }
}

ParamDistribution ParamDistribution::gaussian_relative(const Eigen::VectorXd& nominal,
                                                       double spread) {
    ParamDistribution dist;
    dist.marginals.reserve(nominal.size());
    for (Eigen::Index i = 0; i < nominal.size(); ++i)
        dist.marginals.push_back(Gaussian{nominal[i], spread * nominal[i]});
    dist.validate();
    return dist;
}

ParamDistribution ParamDistribution::uniform_relative(const Eigen::VectorXd& nominal,
                                                      double spread) {
    ParamDistribution dist;
    dist.marginals.reserve(nominal.size());
    for (Eigen::Index i = 0; i < nominal.size(); ++i)
        dist.marginals.push_back(
            Uniform{(1.0 - spread) * nominal[i], (1.0 + spread) * nominal[i]});
    dist.validate();
    return dist;
}

Eigen::MatrixXd lhs_unit(int n, int d, std::uint64_t seed) {
    if (n < 1 || d < 1) throw ConfigError("lhs_unit: n and d must be >= 1");
    Eigen::MatrixXd pts(n, d);
    Rng rng(seed);
    std::vector<int> perm(n);
    for (int j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        // Fisher-Yates with our own uniform draws, for seed portability.
        for (int i = n - 1; i > 0; --i) {
            int k = static_cast<int>(rng.uniform01() * (i + 1));
            if (k > i) k = i;
            std::swap(perm[i], perm[k]);
        }
        for (int i = 0; i < n; ++i)
            pts(i, j) = (perm[i] + rng.uniform01()) / static_cast<double>(n);
    }
    return pts;
}

SampleSet draw_params(const ParamDistribution& dist, int n, SampleMethod method,
                      std::uint64_t seed) {
    dist.validate();
    if (n < 1) throw ConfigError("draw_params: n must be >= 1");
    const int d = dist.dim();

    SampleSet set;
    set.method = method;
    set.seed = seed;
    set.samples.resize(n, d);

    if (method == SampleMethod::lhs) {
        Eigen::MatrixXd unit = lhs_unit(n, d, seed);
        Rng redraw_rng(derive_seed(seed, 0x4c4853));  // separate stream for redraws
        for (int j = 0; j < d; ++j) {
            for (int i = 0; i < n; ++i) {
                double u = unit(i, j);
                double v = quantile(dist.marginals[j], u);
                int stratum = std::min(static_cast<int>(u * n), n - 1);
                int tries = 0;
                while (!(v > 0.0)) {
                    if (++tries > kRedrawBudget)
                        throw NumericalError(
                            "draw_params: positivity redraw budget exhausted for "
                            "parameter " + std::to_string(j));
                    u = (stratum + redraw_rng.uniform01()) / static_cast<double>(n);
                    v = quantile(dist.marginals[j], u);
                    ++set.redraws;
                }
                set.samples(i, j) = v;
            }
        }
    } else {
        Rng rng(seed);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                double v = draw(dist.marginals[j], rng);
                int tries = 0;
                while (!(v > 0.0)) {
                    if (++tries > kRedrawBudget)
                        throw NumericalError(
                            "draw_params: positivity redraw budget exhausted for "
                            "parameter " + std::to_string(j));
                    v = draw(dist.marginals[j], rng);
                    ++set.redraws;
                }
                set.samples(i, j) = v;
            }
        }
    }
    return set;
}

std::string method_name(SampleMethod m) {
    return m == SampleMethod::lhs ? "lhs" : "iid";
}

void save_samples_csv(const SampleSet& set, const std::vector<std::string>& column_names,
                      const std::string& path) {
    if (static_cast<int>(column_names.size()) != set.dim())
        throw ConfigError("save_samples_csv: column name count mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("save_samples_csv: cannot open " + path);
    for (int j = 0; j < set.dim(); ++j)
        out << (j ? "," : "") << column_names[j];
    out << "\n";
    char buf[32];
    for (int i = 0; i < set.count(); ++i) {
        for (int j = 0; j < set.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", set.samples(i, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("save_samples_csv: write failed for " + path);
}

SampleSet load_samples_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_samples_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("load_samples_csv: empty file " + path);
    int cols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
    std::vector<double> values;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++c;
        }
        if (c != cols)
            throw IoError("load_samples_csv: ragged row in " + path);
        ++rows;
    }
    SampleSet set;
    set.samples.resize(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) set.samples(i, j) = values[i * cols + j];
    return set;
}

}  // namespace kuq
