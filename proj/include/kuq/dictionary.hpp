#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kuq/dynamics.hpp"

namespace kuq {

enum class DictionaryKind { linear, hermite2, hermite2_trig };

DictionaryKind dictionary_kind_from_name(const std::string& name);
std::string dictionary_kind_name(DictionaryKind k);

// Observable dictionary over the augmented state. Layout:
//   [0, n_a)          standardized identity coordinates z_i (state rows)
//   n_a               constant 1
//   then (hermite2)   z_i^2 - 1 for each coordinate, z_i z_j for i < j
//   then (trig)       cos(x_i), sin(x_i) on the raw true-state coordinates
// Polynomials use probabilists' Hermite values of the standardized
// coordinates; the trig block sees unstandardized angles and speeds.
class Dictionary {
public:
    DictionaryKind kind = DictionaryKind::hermite2;
    int n_g = 0;
    int n_m = 0;
    Eigen::VectorXd shift;  // per-coordinate, length n_a
    Eigen::VectorXd scale;  // per-coordinate, > 0

    int n_aug() const { return 2 * n_g + n_m; }
    int size() const;  // n_d

    // Indices of the identity observables, in augmented-state order.
    std::vector<int> state_rows() const;

    // Symbolic descriptor of one observable ("z3", "1", "z3^2-1", ...).
    std::string descriptor(int index) const;

    Eigen::VectorXd evaluate(const Eigen::VectorXd& x_aug) const;
    // One column per snapshot.
    Eigen::MatrixXd evaluate_block(const Eigen::MatrixXd& states) const;

    double standardize(int coord, double value) const {
        return (value - shift[coord]) / scale[coord];
    }
    double destandardize(int coord, double z) const {
        return shift[coord] + scale[coord] * z;
    }
};

// Learns the per-coordinate standardization from the pooled training
// snapshots (columns). Coordinates with vanishing variance get scale 1.
Dictionary build_dictionary(DictionaryKind kind, int n_g, int n_m,
                            const Eigen::MatrixXd& training_snapshots);

inline Eigen::VectorXd evaluate_dictionary(const Dictionary& dict,
                                           const AugmentedState& x) {
    return dict.evaluate(x.data);
}

}  // namespace kuq
