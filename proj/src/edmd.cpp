#include "kuq/edmd.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "kuq/common.hpp"

namespace kuq {

namespace {

struct GramMatrices {
    Eigen::MatrixXd g;  // Psi_X Psi_X^T
    Eigen::MatrixXd a;  // Psi_Y Psi_X^T
    long n_pairs = 0;
};

GramMatrices accumulate_grams(const std::vector<Trajectory>& trajectories,
                              const Dictionary& dict, int threads) {
    const int n_d = dict.size();
    const int n_t = static_cast<int>(trajectories.size());
    // Fixed grouping keeps the reduction order independent of thread count.
    const int n_groups = std::min(n_t, 16);
    std::vector<GramMatrices> partial(n_groups);

    parallel_for(n_groups, threads, [&](std::size_t gi) {
        auto& part = partial[gi];
        part.g = Eigen::MatrixXd::Zero(n_d, n_d);
        part.a = Eigen::MatrixXd::Zero(n_d, n_d);
        for (int t = static_cast<int>(gi); t < n_t; t += n_groups) {
            const Eigen::MatrixXd psi = dict.evaluate_block(trajectories[t].states);
            const int m = static_cast<int>(psi.cols()) - 1;
            const auto psi_x = psi.leftCols(m);
            const auto psi_y = psi.rightCols(m);
            part.g.selfadjointView<Eigen::Lower>().rankUpdate(psi_x);
            part.a.noalias() += psi_y * psi_x.transpose();
            part.n_pairs += m;
        }
    });

    GramMatrices total;
    total.g = Eigen::MatrixXd::Zero(n_d, n_d);
    total.a = Eigen::MatrixXd::Zero(n_d, n_d);
    for (const auto& part : partial) {
        total.g += part.g;
        total.a += part.a;
        total.n_pairs += part.n_pairs;
    }
    total.g.triangularView<Eigen::StrictlyUpper>() =
        total.g.transpose().triangularView<Eigen::StrictlyUpper>();
    return total;
}

double mean_relative_residual(const std::vector<Trajectory>& trajectories,
                              const Dictionary& dict, const Eigen::MatrixXd& k_matrix,
                              int threads) {
    const int n_t = static_cast<int>(trajectories.size());
    const int n_groups = std::min(n_t, 16);
    std::vector<double> sums(n_groups, 0.0);
    std::vector<long> counts(n_groups, 0);

    parallel_for(n_groups, threads, [&](std::size_t gi) {
        for (int t = static_cast<int>(gi); t < n_t; t += n_groups) {
            const Eigen::MatrixXd psi = dict.evaluate_block(trajectories[t].states);
            const int m = static_cast<int>(psi.cols()) - 1;
            const Eigen::MatrixXd pred = k_matrix * psi.leftCols(m);
            for (int c = 0; c < m; ++c) {
                const double denom = psi.col(c + 1).norm();
                sums[gi] += (pred.col(c) - psi.col(c + 1)).norm() /
                            (denom > 0.0 ? denom : 1.0);
                ++counts[gi];
            }
        }
    });

    double sum = 0.0;
    long count = 0;
    for (int i = 0; i < n_groups; ++i) {
        sum += sums[i];
        count += counts[i];
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

KoopmanModel fit_edmd(const std::vector<Trajectory>& trajectories,
                      const Dictionary& dict, double svd_truncation, int threads) {
    if (trajectories.empty()) throw ConfigError("fit_edmd: no trajectories");
    if (!(svd_truncation >= 0.0) || svd_truncation >= 1.0)
        throw ConfigError("fit_edmd: svd_truncation must lie in [0, 1)");
    const double dt = trajectories.front().dt();
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        const auto& traj = trajectories[t];
        if (traj.n_snapshots() < 2)
            throw ConfigError("fit_edmd: trajectory " + std::to_string(t) +
                              " has fewer than 2 snapshots");
        if (traj.states.rows() != dict.n_aug())
            throw ConfigError("fit_edmd: trajectory " + std::to_string(t) +
                              " dimension does not match dictionary");
        if (std::abs(traj.dt() - dt) > 1e-12 * std::max(1.0, std::abs(dt)))
            throw NumericalError("fit_edmd: inconsistent snapshot spacing across trajectories");
    }

    const int n_d = dict.size();
    const GramMatrices grams = accumulate_grams(trajectories, dict, threads);

    // Spectral decomposition of the symmetric PSD Gram matrix doubles as its
    // SVD; eigenvalues below the relative threshold span the exact null
    // space of the truncated pseudo-inverse.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gram_eig(grams.g);
    if (gram_eig.info() != Eigen::Success)
        throw NumericalError("fit_edmd: Gram matrix eigendecomposition failed");
    const Eigen::VectorXd sigma = gram_eig.eigenvalues();  // ascending
    const double sigma_max = sigma[n_d - 1];
    if (!(sigma_max > 0.0))
        throw NumericalError("fit_edmd: Gram matrix is identically zero");
    const double cutoff = svd_truncation * sigma_max;

    int rank = 0;
    for (int i = 0; i < n_d; ++i)
        if (sigma[i] > cutoff) ++rank;
    if (rank == 0) throw NumericalError("fit_edmd: truncation removed every singular value");

    // Basis ordered [retained | discarded], retained sorted by decreasing
    // singular value.
    Eigen::MatrixXd u_r(n_d, rank), u_0(n_d, n_d - rank);
    Eigen::VectorXd sig_r(rank);
    {
        int r_idx = 0, z_idx = 0;
        for (int i = n_d - 1; i >= 0; --i) {
            if (sigma[i] > cutoff) {
                u_r.col(r_idx) = gram_eig.eigenvectors().col(i);
                sig_r[r_idx++] = sigma[i];
            } else {
                u_0.col(z_idx++) = gram_eig.eigenvectors().col(i);
            }
        }
    }

    // K = A G^+ expressed on the retained subspace plus its leakage into the
    // discarded one: in the basis [U_r U_0], K is block lower-triangular
    // [[K_hat, 0], [E, 0]], so the spectrum is eig(K_hat) plus an exact zero
    // block whose eigenvectors are the U_0 columns themselves.
    const Eigen::MatrixXd a_ur = grams.a * u_r;                    // n_d x r
    const Eigen::MatrixXd k_hat =
        (u_r.transpose() * a_ur) * sig_r.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd leak =
        (u_0.transpose() * a_ur) * sig_r.cwiseInverse().asDiagonal();

    Eigen::EigenSolver<Eigen::MatrixXd> k_eig(k_hat);
    if (k_eig.info() != Eigen::Success)
        throw NumericalError("fit_edmd: eigendecomposition of the fitted operator failed");
    const Eigen::VectorXcd mu_hat = k_eig.eigenvalues();
    const Eigen::MatrixXcd r_hat = k_eig.eigenvectors();

    Eigen::PartialPivLU<Eigen::MatrixXcd> r_hat_lu(r_hat);
    Eigen::MatrixXcd r_hat_inv = r_hat_lu.solve(Eigen::MatrixXcd::Identity(rank, rank));
    // Newton steps X <- X (2I - R X) drive the inversion residual to machine
    // precision; poorly conditioned eigenbases need more than one.
    for (int it = 0; it < 3; ++it) {
        const Eigen::MatrixXcd resid =
            Eigen::MatrixXcd::Identity(rank, rank) - r_hat * r_hat_inv;
        const double err = resid.cwiseAbs().maxCoeff();
        if (err < 1e-14) break;
        r_hat_inv = r_hat_inv + r_hat_inv * resid;
    }

    // Exact eigenvectors of the full K: w_i = U_r rhat_i + U_0 (E rhat_i)/mu_i.
    const double mu_floor = 1e-12 * mu_hat.cwiseAbs().maxCoeff();
    Eigen::MatrixXcd w0 = leak.cast<std::complex<double>>() * r_hat;  // (n_d-r) x r
    for (int i = 0; i < rank; ++i) {
        if (std::abs(mu_hat[i]) > mu_floor)
            w0.col(i) /= mu_hat[i];
        else
            w0.col(i).setZero();
    }

    KoopmanModel model;
    model.dict = dict;
    model.dt = dt;
    model.svd_truncation = svd_truncation;
    model.rank = rank;

    model.mu = Eigen::VectorXcd::Zero(n_d);
    model.mu.head(rank) = mu_hat;

    model.r_vecs.resize(n_d, n_d);
    model.r_vecs.leftCols(rank) =
        u_r.cast<std::complex<double>>() * r_hat + u_0.cast<std::complex<double>>() * w0;
    model.r_vecs.rightCols(n_d - rank) = u_0.cast<std::complex<double>>();

    // L = R^{-1} in closed form from the block structure.
    model.l_vecs.resize(n_d, n_d);
    const Eigen::MatrixXcd top = r_hat_inv * u_r.transpose().cast<std::complex<double>>();
    model.l_vecs.topRows(rank) = top;
    model.l_vecs.bottomRows(n_d - rank) =
        u_0.transpose().cast<std::complex<double>>() - w0 * top;
    model.finalize();

    const double lr_err =
        (model.l_vecs * model.r_vecs - Eigen::MatrixXcd::Identity(n_d, n_d))
            .cwiseAbs()
            .maxCoeff();
    if (!(lr_err <= 1e-8)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "fit_edmd: ill-conditioned eigenbasis, max|LR - I| = %.3e "
                      "(rank %d of %d, sigma_max %.3e)",
                      lr_err, rank, n_d, sigma_max);
        throw NumericalError(buf);
    }

    model.k_matrix = a_ur * sig_r.cwiseInverse().asDiagonal() * u_r.transpose();
    model.fit_residual =
        mean_relative_residual(trajectories, dict, model.k_matrix, threads);
    return model;
}

void KoopmanModel::finalize() {
    l_re = l_vecs.real();
    l_im = l_vecs.imag();
    state_rows = dict.state_rows();
}

namespace {

// Column-sweep matrix-vector products, strictly sequential in j so that the
// per-element accumulation chain is the same whether one sample or four are
// carried through the sweep. Built with -ffp-contract=off, which pins the
// mul/add rounding across the two loop shapes.
void lift_one(const Eigen::MatrixXd& l_re, const Eigen::MatrixXd& l_im,
              const Eigen::VectorXd& g, Eigen::VectorXcd& phi) {
    const Eigen::Index n = l_re.rows();
    Eigen::VectorXd re = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd im = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < l_re.cols(); ++j) {
        re += l_re.col(j) * g[j];
        im += l_im.col(j) * g[j];
    }
    phi.resize(n);
    phi.real() = re;
    phi.imag() = im;
}

void lift_four(const Eigen::MatrixXd& l_re, const Eigen::MatrixXd& l_im,
               const std::array<Eigen::VectorXd, 4>& g,
               std::array<Eigen::VectorXcd, 4>& phis) {
    const Eigen::Index n = l_re.rows();
    std::array<Eigen::VectorXd, 4> re, im;
    for (int l = 0; l < 4; ++l) {
        re[l] = Eigen::VectorXd::Zero(n);
        im[l] = Eigen::VectorXd::Zero(n);
    }
    for (Eigen::Index j = 0; j < l_re.cols(); ++j) {
        const auto col_re = l_re.col(j);
        const auto col_im = l_im.col(j);
        for (int l = 0; l < 4; ++l) {
            re[l] += col_re * g[l][j];
            im[l] += col_im * g[l][j];
        }
    }
    for (int l = 0; l < 4; ++l) {
        phis[l].resize(n);
        phis[l].real() = re[l];
        phis[l].imag() = im[l];
    }
}

}  // namespace

Eigen::VectorXcd eigenfunctions_at(const KoopmanModel& model, const AugmentedState& x_a0) {
    const Eigen::VectorXd g = model.dict.evaluate(x_a0.data);
    Eigen::VectorXcd phi;
    lift_one(model.l_re, model.l_im, g, phi);
    return phi;
}

void eigenfunctions_at4(const KoopmanModel& model,
                        const std::array<const AugmentedState*, 4>& states,
                        std::array<Eigen::VectorXcd, 4>& phis) {
    std::array<Eigen::VectorXd, 4> g;
    for (int l = 0; l < 4; ++l) g[l] = model.dict.evaluate(states[l]->data);
    lift_four(model.l_re, model.l_im, g, phis);
}

Realizer::Realizer(const KoopmanModel& model, std::vector<int> rows)
    : model_(&model), rows_(std::move(rows)) {
    const int n_d = model.size();
    for (int r : rows_)
        if (r < 0 || r >= model.dict.n_aug())
            throw ConfigError("realize: state row index out of range");
    // Trailing exact-zero eigenvalues are the truncated directions; their
    // eigenstate is exactly zero from step 1 on.
    int live = n_d;
    while (live > 0 && model.mu[live - 1] == std::complex<double>(0.0, 0.0)) --live;
    n_live_ = live;
    mu_re_ = model.mu.head(live).real();
    mu_im_ = model.mu.head(live).imag();
    row_re_.reserve(rows_.size());
    row_im_.reserve(rows_.size());
    for (int r : rows_) {
        row_re_.push_back(model.r_vecs.row(r).real());
        row_im_.push_back(model.r_vecs.row(r).imag());
    }
}

void Realizer::run(const Eigen::VectorXcd& phi, int k_max, Eigen::MatrixXd& out,
                   double* max_imag_residual) const {
    if (k_max < 0) throw ConfigError("realize: k_max must be >= 0");
    const int n_d = model_->size();
    if (phi.size() != n_d) throw ConfigError("realize: eigenfunction vector size mismatch");
    const int n_rows = static_cast<int>(rows_.size());
    if (out.rows() != n_rows || out.cols() != k_max + 1)
        out.resize(n_rows, k_max + 1);

    const bool track_imag = max_imag_residual != nullptr;
    double max_imag = 0.0;
    auto emit = [&](int c, int k, double re) {
        if (!std::isfinite(re))
            throw NumericalError("realize: overflow at step " + std::to_string(k));
        out(c, k) = model_->dict.destandardize(rows_[c], re);
    };

    const Eigen::VectorXd phi_re = phi.real(), phi_im = phi.imag();

    // Step 0 through the full basis: the truncated directions still carry
    // their share of g(x_a0).
    for (int c = 0; c < n_rows; ++c) {
        emit(c, 0, row_re_[c].dot(phi_re) - row_im_[c].dot(phi_im));
        if (track_imag)
            max_imag = std::max(max_imag, std::abs(row_re_[c].dot(phi_im) +
                                                   row_im_[c].dot(phi_re)));
    }

    Eigen::VectorXd a_re = phi_re.head(n_live_), a_im = phi_im.head(n_live_);
    Eigen::VectorXd t_re(n_live_);
    for (int k = 1; k <= k_max; ++k) {
        t_re = a_re.cwiseProduct(mu_re_) - a_im.cwiseProduct(mu_im_);
        a_im = a_re.cwiseProduct(mu_im_) + a_im.cwiseProduct(mu_re_);
        a_re.swap(t_re);
        for (int c = 0; c < n_rows; ++c) {
            const auto rr = row_re_[c].head(n_live_);
            const auto ri = row_im_[c].head(n_live_);
            emit(c, k, rr.dot(a_re) - ri.dot(a_im));
            if (track_imag)
                max_imag = std::max(max_imag, std::abs(rr.dot(a_im) + ri.dot(a_re)));
        }
    }
    if (max_imag_residual) *max_imag_residual = max_imag;
}

Eigen::MatrixXd realize_rows(const KoopmanModel& model, const Eigen::VectorXcd& phi,
                             int k_max, const std::vector<int>& rows,
                             double* max_imag_residual) {
    Eigen::MatrixXd out;
    Realizer(model, rows).run(phi, k_max, out, max_imag_residual);
    return out;
}

SurrogateTrajectory realize(const KoopmanModel& model, const AugmentedState& x_a0,
                            int k_max) {
    if (x_a0.dim() != model.dict.n_aug())
        throw ConfigError("realize: state dimension does not match model");
    const Eigen::VectorXcd phi = eigenfunctions_at(model, x_a0);

    SurrogateTrajectory st;
    st.n_g = model.dict.n_g;
    st.n_m = model.dict.n_m;
    st.states = realize_rows(model, phi, k_max, model.state_rows, &st.max_imag_residual);
    st.times.resize(k_max + 1);
    for (int k = 0; k <= k_max; ++k) st.times[k] = k * model.dt;
    return st;
}

Eigen::VectorXcd continuous_eigenvalues(const KoopmanModel& model) {
    if (!(model.dt > 0.0)) throw ConfigError("continuous_eigenvalues: model has no dt");
    Eigen::VectorXcd lambda(model.size());
    for (int i = 0; i < model.size(); ++i) {
        if (model.mu[i] == std::complex<double>(0.0, 0.0))
            lambda[i] = {-std::numeric_limits<double>::infinity(), 0.0};
        else
            lambda[i] = std::log(model.mu[i]) / model.dt;
    }
    return lambda;
}

namespace {

constexpr char kModelMagic[8] = {'K', 'U', 'Q', 'M', 'O', 'D', 'L', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_vec(std::ofstream& out, const Eigen::VectorXd& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_vec(std::ifstream& in, Eigen::VectorXd& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_cmat(std::ofstream& out, const Eigen::MatrixXcd& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(std::complex<double>)));
}

void read_cmat(std::ifstream& in, Eigen::MatrixXcd& m) {
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(std::complex<double>)));
}

}  // namespace

void save_model(const KoopmanModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_model: cannot open " + path);
    out.write(kModelMagic, sizeof(kModelMagic));
    const std::int32_t kind = static_cast<std::int32_t>(model.dict.kind);
    write_pod(out, kind);
    write_pod(out, static_cast<std::int32_t>(model.dict.n_g));
    write_pod(out, static_cast<std::int32_t>(model.dict.n_m));
    write_pod(out, static_cast<std::int32_t>(model.size()));
    write_pod(out, static_cast<std::int32_t>(model.rank));
    write_pod(out, model.dt);
    write_pod(out, model.svd_truncation);
    write_pod(out, model.fit_residual);
    write_vec(out, model.dict.shift);
    write_vec(out, model.dict.scale);
    Eigen::VectorXd mu_re = model.mu.real(), mu_im = model.mu.imag();
    write_vec(out, mu_re);
    write_vec(out, mu_im);
    write_cmat(out, model.r_vecs);
    write_cmat(out, model.l_vecs);
    if (!out) throw IoError("save_model: write failed for " + path);
}

KoopmanModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_model: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
        throw IoError("load_model: " + path + " is not a model artifact");

    std::int32_t kind, n_g, n_m, n_d, rank;
    read_pod(in, kind);
    read_pod(in, n_g);
    read_pod(in, n_m);
    read_pod(in, n_d);
    read_pod(in, rank);

    KoopmanModel model;
    read_pod(in, model.dt);
    read_pod(in, model.svd_truncation);
    read_pod(in, model.fit_residual);
    model.rank = rank;
    model.dict.kind = static_cast<DictionaryKind>(kind);
    model.dict.n_g = n_g;
    model.dict.n_m = n_m;
    model.dict.shift.resize(2 * n_g + n_m);
    model.dict.scale.resize(2 * n_g + n_m);
    read_vec(in, model.dict.shift);
    read_vec(in, model.dict.scale);
    if (model.dict.size() != n_d)
        throw IoError("load_model: inconsistent dictionary size in " + path);

    Eigen::VectorXd mu_re(n_d), mu_im(n_d);
    read_vec(in, mu_re);
    read_vec(in, mu_im);
    model.mu.resize(n_d);
    model.mu.real() = mu_re;
    model.mu.imag() = mu_im;
    model.r_vecs.resize(n_d, n_d);
    model.l_vecs.resize(n_d, n_d);
    read_cmat(in, model.r_vecs);
    read_cmat(in, model.l_vecs);
    if (!in) throw IoError("load_model: truncated file " + path);
    model.finalize();
    return model;
}

}  // namespace kuq
