#include "kuq/dictionary.hpp"

#include <cmath>

#include "kuq/common.hpp"

namespace kuq {

DictionaryKind dictionary_kind_from_name(const std::string& name) {
    if (name == "linear") return DictionaryKind::linear;
    if (name == "hermite2") return DictionaryKind::hermite2;
    if (name == "hermite2_trig") return DictionaryKind::hermite2_trig;
    throw ConfigError("unknown dictionary kind '" + name + "'");
}

std::string dictionary_kind_name(DictionaryKind k) {
    switch (k) {
        case DictionaryKind::linear: return "linear";
        case DictionaryKind::hermite2: return "hermite2";
        case DictionaryKind::hermite2_trig: return "hermite2_trig";
    }
    return "?";
}

int Dictionary::size() const {
    const int na = n_aug();
    int n = na + 1;  // identity block + constant
    if (kind != DictionaryKind::linear) n += na + na * (na - 1) / 2;
    if (kind == DictionaryKind::hermite2_trig) n += 4 * n_g;
    return n;
}

std::vector<int> Dictionary::state_rows() const {
    std::vector<int> rows(n_aug());
    for (int i = 0; i < n_aug(); ++i) rows[i] = i;
    return rows;
}

std::string Dictionary::descriptor(int index) const {
    const int na = n_aug();
    if (index < 0 || index >= size()) throw ConfigError("descriptor: index out of range");
    if (index < na) return "z" + std::to_string(index);
    if (index == na) return "1";
    int k = index - na - 1;
    if (kind != DictionaryKind::linear) {
        if (k < na) return "z" + std::to_string(k) + "^2-1";
        k -= na;
        const int n_cross = na * (na - 1) / 2;
        if (k < n_cross) {
            for (int i = 0; i < na; ++i) {
                const int row = na - 1 - i;
                if (k < row)
                    return "z" + std::to_string(i) + "*z" + std::to_string(i + 1 + k);
                k -= row;
            }
        }
        k -= n_cross;
    }
    const int coord = k / 2;
    return (k % 2 == 0 ? "cos(x" : "sin(x") + std::to_string(coord) + ")";
}

Eigen::VectorXd Dictionary::evaluate(const Eigen::VectorXd& x_aug) const {
    const int na = n_aug();
    if (x_aug.size() != na)
        throw ConfigError("Dictionary::evaluate: state dimension mismatch");
    if (!x_aug.allFinite())
        throw ConfigError("Dictionary::evaluate: non-finite input state");

    Eigen::VectorXd g(size());
    Eigen::VectorXd z(na);
    for (int i = 0; i < na; ++i) z[i] = standardize(i, x_aug[i]);

    g.head(na) = z;
    g[na] = 1.0;
    int idx = na + 1;
    if (kind != DictionaryKind::linear) {
        for (int i = 0; i < na; ++i) g[idx++] = z[i] * z[i] - 1.0;
        for (int i = 0; i < na; ++i)
            for (int j = i + 1; j < na; ++j) g[idx++] = z[i] * z[j];
    }
    if (kind == DictionaryKind::hermite2_trig) {
        for (int i = 0; i < 2 * n_g; ++i) {
            g[idx++] = std::cos(x_aug[i]);
            g[idx++] = std::sin(x_aug[i]);
        }
    }
    return g;
}

Eigen::MatrixXd Dictionary::evaluate_block(const Eigen::MatrixXd& states) const {
    Eigen::MatrixXd psi(size(), states.cols());
    for (Eigen::Index c = 0; c < states.cols(); ++c)
        psi.col(c) = evaluate(states.col(c));
    return psi;
}

Dictionary build_dictionary(DictionaryKind kind, int n_g, int n_m,
                            const Eigen::MatrixXd& training_snapshots) {
    if (n_g < 1 || n_m < 0) throw ConfigError("build_dictionary: bad dimensions");
    const int na = 2 * n_g + n_m;
    if (training_snapshots.rows() != na)
        throw ConfigError("build_dictionary: snapshot rows do not match 2*n_g + n_m");
    if (training_snapshots.cols() < 1)
        throw ConfigError("build_dictionary: no training snapshots");

    Dictionary dict;
    dict.kind = kind;
    dict.n_g = n_g;
    dict.n_m = n_m;
    dict.shift.resize(na);
    dict.scale.resize(na);

    const double n = static_cast<double>(training_snapshots.cols());
    for (int i = 0; i < na; ++i) {
        const double mean = training_snapshots.row(i).mean();
        const double var =
            (training_snapshots.row(i).array() - mean).square().sum() / n;
        dict.shift[i] = mean;
        dict.scale[i] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return dict;
}

}  // namespace kuq
