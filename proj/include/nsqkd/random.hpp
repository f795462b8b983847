#pragma once

#include "linop.hpp"

#include <cstdint>
#include <random>

namespace nsqkd {

using Rng = std::mt19937_64;

inline Mat gaussian_matrix(int rows, int cols, Rng& rng) {
    std::normal_distribution<double> n01;
    Mat m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) {
            const double re = n01(rng);
            const double im = n01(rng);
            m(i, j) = cplx(re, im);
        }
    return m;
}

// Modified Gram-Schmidt on the columns; deterministic for a given input.
inline Mat orthonormalize_columns(Mat m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index k = 0; k < j; ++k) {
                const cplx ov = m.col(k).dot(m.col(j));
                m.col(j) -= ov * m.col(k);
            }
        m.col(j) /= m.col(j).norm();
    }
    return m;
}

inline Mat random_unitary(int d, Rng& rng) { return orthonormalize_columns(gaussian_matrix(d, d, rng)); }

inline Mat random_hermitian(int d, Rng& rng) {
    Mat g = gaussian_matrix(d, d, rng);
    return 0.5 * (g + g.adjoint());
}

// Ginibre-distributed mixed state of the given rank (full rank by default).
inline Mat random_density(int d, Rng& rng, int rank = 0) {
    Mat g = gaussian_matrix(d, rank > 0 ? rank : d, rng);
    Mat r = g * g.adjoint();
    return r / r.trace().real();
}

inline Vec random_pure(int d, Rng& rng) {
    Mat g = gaussian_matrix(d, 1, rng);
    return g.col(0) / g.col(0).norm();
}

}  // namespace nsqkd
