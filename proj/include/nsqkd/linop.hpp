#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nsqkd {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Layout = std::vector<int>;

inline constexpr double kHermTol = 1e-12;
inline constexpr double kPosTol = 1e-10;
inline constexpr double kZeroEig = 1e-14;

inline int layout_dim(const Layout& l) {
    return std::accumulate(l.begin(), l.end(), 1, std::multiplies<int>());
}

struct DensityOperator {
    Mat data;
    Layout layout;
    double trace_hint = 1.0;

    DensityOperator() = default;
    DensityOperator(Mat m, Layout l, double hint = 1.0)
        : data(std::move(m)), layout(std::move(l)), trace_hint(hint) {
        if (layout.empty()) layout = {static_cast<int>(data.rows())};
        if (data.rows() != data.cols() || layout_dim(layout) != data.rows())
            throw std::invalid_argument("layout does not match matrix dimension");
    }
    explicit DensityOperator(Mat m) : DensityOperator(std::move(m), Layout{}) {}

    int dim() const { return static_cast<int>(data.rows()); }
    double trace() const { return data.trace().real(); }
};

struct PureState {
    Vec amplitudes;
    Layout layout;

    int dim() const { return static_cast<int>(amplitudes.size()); }
    DensityOperator projector() const {
        return {amplitudes * amplitudes.adjoint(), layout};
    }
};

// Largest entry of |M - M^dagger|.
template <typename Derived>
double herm_residual(const Eigen::MatrixBase<Derived>& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

struct EigenDecomp {
    RVec values;   // descending
    Mat vectors;   // columns are eigenvectors
};

// Cyclic Jacobi for complex Hermitian matrices. Sweeps run over (p,q) in
// row-major order so results are bitwise reproducible.
template <typename Derived>
EigenDecomp hermitian_eig(const Eigen::MatrixBase<Derived>& input, double tol = 1e-10) {
    const Eigen::Index n = input.rows();
    if (input.cols() != n) throw std::invalid_argument("hermitian_eig: matrix is not square");
    const double scale = std::max(1.0, input.cwiseAbs().maxCoeff());
    const double res = herm_residual(input);
    if (res > tol * scale) {
        std::ostringstream os;
        os << "hermitian_eig: input is not Hermitian (residual " << res << ")";
        throw std::invalid_argument(os.str());
    }
    Mat a = 0.5 * (input + input.adjoint());
    Mat v = Mat::Identity(n, n);

    auto off = [&] {
        double s = 0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) s += std::norm(a(p, q));
        return s;
    };
    const double fro = a.squaredNorm();
    const double eps2 = 1e-32 * std::max(fro, 1e-300);

    for (int sweep = 0; sweep < 100 && off() > eps2; ++sweep) {
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = std::abs(a(p, q));
                if (apq == 0.0) continue;
                const double app = a(p, p).real();
                const double aqq = a(q, q).real();
                if (apq < 1e-300 || (std::abs(app) + apq == std::abs(app) &&
                                     std::abs(aqq) + apq == std::abs(aqq) && sweep > 3)) {
                    a(p, q) = a(q, p) = 0;
                    continue;
                }
                const cplx ph = std::conj(a(p, q)) / apq;  // e^{-i phi}
                const double theta = (aqq - app) / (2.0 * apq);
                double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                if (theta < 0) t = -t;
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // U restricted to (p,q): [[c, s], [-s*ph, c*ph]]
                const cplx upp = c, upq = s, uqp = -s * ph, uqq = c * ph;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const cplx akp = a(k, p), akq = a(k, q);
                    a(k, p) = akp * upp + akq * uqp;
                    a(k, q) = akp * upq + akq * uqq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const cplx apk = a(p, k), aqk = a(q, k);
                    a(p, k) = std::conj(upp) * apk + std::conj(uqp) * aqk;
                    a(q, k) = std::conj(upq) * apk + std::conj(uqq) * aqk;
                }
                a(p, q) = a(q, p) = 0;
                a(p, p) = a(p, p).real();
                a(q, q) = a(q, q).real();
                for (Eigen::Index k = 0; k < n; ++k) {
                    const cplx vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = vkp * upp + vkq * uqp;
                    v(k, q) = vkp * upq + vkq * uqq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto i, auto j) { return a(i, i).real() > a(j, j).real(); });
    EigenDecomp out{RVec(n), Mat(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = a(order[i], order[i]).real();
        out.vectors.col(i) = v.col(order[i]);
    }
    return out;
}

inline double min_eigenvalue(const Mat& m) { return hermitian_eig(m).values(m.rows() - 1); }

// f applied to the spectrum of a Hermitian matrix.
template <typename F>
Mat matrix_function(const Mat& m, F&& f) {
    const auto e = hermitian_eig(m);
    RVec w(e.values.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = f(e.values(i));
    return e.vectors * w.asDiagonal() * e.vectors.adjoint();
}

inline double trace_norm(const Mat& m) {
    return hermitian_eig(m).values.cwiseAbs().sum();
}

inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline DensityOperator tensor(const DensityOperator& a, const DensityOperator& b) {
    Layout l = a.layout;
    l.insert(l.end(), b.layout.begin(), b.layout.end());
    return {kron(a.data, b.data), std::move(l), a.trace_hint * b.trace_hint};
}

inline Vec kron(const Vec& a, const Vec& b) {
    Vec out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

namespace detail {

inline std::vector<int> digits(int index, const Layout& l) {
    std::vector<int> d(l.size());
    for (int k = static_cast<int>(l.size()) - 1; k >= 0; --k) {
        d[k] = index % l[k];
        index /= l[k];
    }
    return d;
}

inline int undigits(const std::vector<int>& d, const Layout& l, const std::vector<int>& which) {
    int idx = 0;
    for (int k : which) idx = idx * l[k] + d[k];
    return idx;
}

}  // namespace detail

inline Mat partial_trace(const Mat& rho, const Layout& layout, std::vector<int> keep) {
    const int n = static_cast<int>(layout.size());
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    for (int k : keep)
        if (k < 0 || k >= n) throw std::out_of_range("partial_trace: subsystem index out of range");
    std::vector<int> drop;
    for (int k = 0; k < n; ++k)
        if (!std::binary_search(keep.begin(), keep.end(), k)) drop.push_back(k);
    int dk = 1;
    for (int k : keep) dk *= layout[k];
    Mat out = Mat::Zero(dk, dk);
    const int d = layout_dim(layout);
    std::vector<std::vector<int>> dig(d);
    for (int i = 0; i < d; ++i) dig[i] = detail::digits(i, layout);
    for (int i = 0; i < d; ++i) {
        const int ri = detail::undigits(dig[i], layout, drop);
        const int ki = detail::undigits(dig[i], layout, keep);
        for (int j = 0; j < d; ++j) {
            if (detail::undigits(dig[j], layout, drop) != ri) continue;
            out(ki, detail::undigits(dig[j], layout, keep)) += rho(i, j);
        }
    }
    return out;
}

inline DensityOperator partial_trace(const DensityOperator& rho, const std::vector<int>& keep) {
    std::vector<int> k = keep;
    std::sort(k.begin(), k.end());
    Mat m = partial_trace(rho.data, rho.layout, k);
    Layout l;
    for (int i : k) l.push_back(rho.layout[i]);
    if (l.empty()) l = {1};
    return {std::move(m), std::move(l), rho.trace_hint};
}

// Reorders tensor factors: factor perm[k] of the input becomes factor k of the output.
inline Mat permute_subsystems(const Mat& m, const Layout& layout, const std::vector<int>& perm) {
    Layout out_layout;
    for (int p : perm) out_layout.push_back(layout[p]);
    const int d = layout_dim(layout);
    std::vector<int> target(d);
    for (int i = 0; i < d; ++i) {
        const auto dig = detail::digits(i, layout);
        int idx = 0;
        for (int p : perm) idx = idx * layout[p] + dig[p];
        target[i] = idx;
    }
    Mat out(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out(target[i], target[j]) = m(i, j);
    return out;
}

// Unitary P with P (x_0 (x) ... (x) x_n) = x_perm[0] (x) ... for product vectors.
inline Mat permutation_matrix(const Layout& layout, const std::vector<int>& perm) {
    const int d = layout_dim(layout);
    Mat p = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        const auto dig = detail::digits(i, layout);
        int idx = 0;
        for (int q : perm) idx = idx * layout[q] + dig[q];
        p(idx, i) = 1;
    }
    return p;
}

// Inserts an identity factor of dimension `dim` at position `pos` of the layout.
inline Mat embed_identity(const Mat& m, const Layout& layout, int pos, int dim) {
    Mat full = kron(m, Mat::Identity(dim, dim));
    Layout l = layout;
    l.push_back(dim);
    std::vector<int> perm;
    for (int k = 0; k < static_cast<int>(layout.size()); ++k) {
        if (k == pos) perm.push_back(static_cast<int>(layout.size()));
        perm.push_back(k);
    }
    if (pos >= static_cast<int>(layout.size())) perm.push_back(static_cast<int>(layout.size()));
    return permute_subsystems(full, l, perm);
}

// Entropy in bits of a spectrum; tiny eigenvalues count as zeros.
inline double entropy_of_spectrum(const RVec& w) {
    double h = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w(i) > kZeroEig) h -= w(i) * std::log2(w(i));
    return h;
}

inline double von_neumann_entropy(const Mat& rho) {
    const auto e = hermitian_eig(rho);
    const double lo = e.values(e.values.size() - 1);
    if (lo < -kPosTol) {
        std::ostringstream os;
        os << "von_neumann_entropy: negative eigenvalue " << lo;
        throw std::domain_error(os.str());
    }
    return entropy_of_spectrum(e.values);
}

inline double von_neumann_entropy(const DensityOperator& rho) {
    if (rho.trace() > 1.0 + 1e-9) throw std::domain_error("von_neumann_entropy: trace exceeds 1");
    return von_neumann_entropy(rho.data);
}

// H(rest | condition_on) = H(all) - H(condition_on).
inline double conditional_entropy(const DensityOperator& rho, const std::vector<int>& condition_on) {
    if (condition_on.empty()) return von_neumann_entropy(rho);
    return von_neumann_entropy(rho) - von_neumann_entropy(partial_trace(rho, condition_on));
}

inline double relative_entropy(const Mat& rho, const Mat& sigma) {
    const auto er = hermitian_eig(rho);
    const auto es = hermitian_eig(sigma);
    double d = -entropy_of_spectrum(er.values);
    for (Eigen::Index j = 0; j < es.values.size(); ++j) {
        const double weight = (es.vectors.col(j).adjoint() * rho * es.vectors.col(j))(0).real();
        if (es.values(j) < 1e-12) {
            if (weight > 1e-12) return std::numeric_limits<double>::infinity();
            continue;
        }
        d -= weight * std::log2(es.values(j));
    }
    return d;
}

inline double relative_entropy(const DensityOperator& rho, const DensityOperator& sigma) {
    return relative_entropy(rho.data, sigma.data);
}

inline DensityOperator pinch(const DensityOperator& rho, const std::vector<Mat>& projectors) {
    const int d = rho.dim();
    Mat sum = Mat::Zero(d, d);
    for (std::size_t i = 0; i < projectors.size(); ++i) {
        sum += projectors[i];
        for (std::size_t j = i + 1; j < projectors.size(); ++j)
            if ((projectors[i] * projectors[j]).cwiseAbs().maxCoeff() > 1e-10)
                throw std::invalid_argument("pinch: projectors are not mutually orthogonal");
    }
    if ((sum - Mat::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("pinch: projectors do not sum to identity");
    Mat out = Mat::Zero(d, d);
    for (const auto& p : projectors) out += p * rho.data * p;
    return {std::move(out), rho.layout, rho.trace_hint};
}

// Purification on system (x) mirror; the mirror dimension equals the rank.
inline PureState purify(const DensityOperator& rho, double cut = 1e-14) {
    const auto e = hermitian_eig(rho.data);
    if (e.values(e.values.size() - 1) < -kPosTol)
        throw std::domain_error("purify: input is not positive");
    int rank = 0;
    while (rank < e.values.size() && e.values(rank) > cut) ++rank;
    rank = std::max(rank, 1);
    const int d = rho.dim();
    Vec psi = Vec::Zero(d * rank);
    for (int k = 0; k < rank; ++k) {
        const double w = std::sqrt(std::max(e.values(k), 0.0));
        for (int i = 0; i < d; ++i) psi(i * rank + k) += w * e.vectors(i, k);
    }
    Layout l = rho.layout;
    l.push_back(rank);
    return {std::move(psi), std::move(l)};
}

// Computational-basis projectors on one factor of a layout.
inline std::vector<Mat> local_basis_projectors(const Layout& layout, int which) {
    std::vector<Mat> out;
    for (int b = 0; b < layout[which]; ++b) {
        Mat m = Mat::Identity(1, 1);
        for (int k = 0; k < static_cast<int>(layout.size()); ++k) {
            Mat f = Mat::Identity(layout[k], layout[k]);
            if (k == which) {
                f.setZero();
                f(b, b) = 1;
            }
            m = kron(m, f);
        }
        out.push_back(std::move(m));
    }
    return out;
}

inline void require_density(const DensityOperator& rho, const char* who, double tr_tol = 1e-9) {
    const double h = herm_residual(rho.data);
    if (h > kHermTol * std::max(1.0, rho.data.cwiseAbs().maxCoeff()))
        throw std::invalid_argument(std::string(who) + ": operator is not Hermitian");
    if (min_eigenvalue(rho.data) < -kPosTol)
        throw std::invalid_argument(std::string(who) + ": operator is not positive");
    if (std::abs(rho.trace() - rho.trace_hint) > tr_tol)
        throw std::invalid_argument(std::string(who) + ": trace differs from its declared value");
}

}  // namespace nsqkd
