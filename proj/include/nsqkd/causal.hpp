#pragma once

#include "linop.hpp"
#include "random.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace nsqkd {

struct QuantumChannel {
    std::vector<Mat> kraus;
    Layout in_dims;
    Layout out_dims;

    int din() const { return layout_dim(in_dims); }
    int dout() const { return layout_dim(out_dims); }

    Mat apply(const Mat& rho) const {
        Mat out = Mat::Zero(dout(), dout());
        for (const auto& k : kraus) out += k * rho * k.adjoint();
        return out;
    }

    double completeness_residual() const {
        Mat s = Mat::Zero(din(), din());
        for (const auto& k : kraus) s += k.adjoint() * k;
        return (s - Mat::Identity(din(), din())).cwiseAbs().maxCoeff();
    }
};

// Choi state on inputs (x) outputs, built from the computational-basis |Phi>.
struct ChoiState {
    DensityOperator state;
    Layout in_dims;
    Layout out_dims;

    int din() const { return layout_dim(in_dims); }
};

inline ChoiState choi_of_channel(const QuantumChannel& ch) {
    const int din = ch.din(), dout = ch.dout();
    for (const auto& k : ch.kraus)
        if (k.rows() != dout || k.cols() != din)
            throw std::invalid_argument("choi_of_channel: Kraus operator has the wrong shape");
    Mat c = Mat::Zero(din * dout, din * dout);
    for (int i = 0; i < din; ++i)
        for (int j = 0; j < din; ++j) {
            Mat eij = Mat::Zero(din, din);
            eij(i, j) = 1;
            c.block(i * dout, j * dout, dout, dout) = ch.apply(eij) / static_cast<double>(din);
        }
    Layout l = ch.in_dims;
    l.insert(l.end(), ch.out_dims.begin(), ch.out_dims.end());
    return {DensityOperator(std::move(c), std::move(l), 1.0), ch.in_dims, ch.out_dims};
}

// sigma -> d_in tr_in[(sigma^T (x) I) C], transposing in the basis of |Phi>.
inline std::function<Mat(const Mat&)> channel_of_choi(const ChoiState& choi) {
    const int din = choi.din();
    const int dout = layout_dim(choi.out_dims);
    const Mat c = choi.state.data;
    return [c, din, dout](const Mat& sigma) {
        Mat out = Mat::Zero(dout, dout);
        for (int i = 0; i < din; ++i)
            for (int j = 0; j < din; ++j) out += sigma(i, j) * c.block(i * dout, j * dout, dout, dout);
        return Mat(static_cast<double>(din) * out);
    };
}

// Kraus family recovered from the spectral decomposition of a Choi state.
inline QuantumChannel channel_from_choi(const ChoiState& choi, double cut = 1e-14) {
    const int din = choi.din();
    const int dout = layout_dim(choi.out_dims);
    const auto e = hermitian_eig(choi.state.data);
    QuantumChannel ch{{}, choi.in_dims, choi.out_dims};
    for (int k = 0; k < e.values.size(); ++k) {
        if (e.values(k) <= cut) break;
        Mat kr(dout, din);
        const double w = std::sqrt(din * e.values(k));
        for (int i = 0; i < din; ++i)
            for (int o = 0; o < dout; ++o) kr(o, i) = w * e.vectors(i * dout + o, k);
        ch.kraus.push_back(std::move(kr));
    }
    return ch;
}

struct NsCheck {
    bool pass = false;
    double residual = 0;
};

// || tr_{other outputs}[C] - I/d_from (x) tr_{from, other outputs}[C] ||_1
inline NsCheck check_ns_choi(const ChoiState& choi, int from, int to, double tol) {
    const int nin = static_cast<int>(choi.in_dims.size());
    const int nout = static_cast<int>(choi.out_dims.size());
    if (from < 0 || from >= nin || to < 0 || to >= nout)
        throw std::out_of_range("check_ns_choi: bad subsystem label");
    std::vector<int> keep;
    for (int k = 0; k < nin; ++k) keep.push_back(k);
    keep.push_back(nin + to);
    const Mat reduced = partial_trace(choi.state.data, choi.state.layout, keep);
    Layout rl = choi.in_dims;
    rl.push_back(choi.out_dims[to]);
    std::vector<int> rest;
    Layout restl;
    for (int k = 0; k < static_cast<int>(rl.size()); ++k)
        if (k != from) {
            rest.push_back(k);
            restl.push_back(rl[k]);
        }
    const int df = choi.in_dims[from];
    const Mat marg = partial_trace(reduced, rl, rest) / static_cast<double>(df);
    const double r = trace_norm(reduced - embed_identity(marg, restl, from, df));
    return {r <= tol, r};
}

struct OperationalCheck {
    bool pass = false;
    double max_deviation = 0;
};

// Random inputs and random unitaries on input `from`; compares the `to` output marginal.
inline OperationalCheck check_ns_operational(const QuantumChannel& ch, int from, int to, int trials, double tol,
                                             std::uint64_t seed = 11) {
    const int nin = static_cast<int>(ch.in_dims.size());
    const int nout = static_cast<int>(ch.out_dims.size());
    if (from < 0 || from >= nin || to < 0 || to >= nout)
        throw std::out_of_range("check_ns_operational: bad subsystem label");
    Rng rng(seed);
    OperationalCheck out;
    for (int t = 0; t < trials; ++t) {
        const Mat rho = random_density(ch.din(), rng);
        Mat local = Mat::Identity(1, 1);
        for (int k = 0; k < nin; ++k)
            local = kron(local, k == from ? random_unitary(ch.in_dims[k], rng)
                                          : Mat(Mat::Identity(ch.in_dims[k], ch.in_dims[k])));
        const Mat a = partial_trace(ch.apply(rho), ch.out_dims, {to});
        const Mat b = partial_trace(ch.apply(local * rho * local.adjoint()), ch.out_dims, {to});
        out.max_deviation = std::max(out.max_deviation, trace_norm(a - b));
    }
    out.pass = out.max_deviation <= tol;
    return out;
}

// Stinespring isometry from a Gram-Schmidt-orthonormalized Gaussian matrix.
inline QuantumChannel random_channel(const Layout& in_dims, const Layout& out_dims, int env_dim, std::uint64_t seed) {
    const int din = layout_dim(in_dims), dout = layout_dim(out_dims);
    if (din < 1 || dout < 1 || env_dim < 1) throw std::invalid_argument("random_channel: dimensions must be positive");
    if (dout * env_dim < din) throw std::invalid_argument("random_channel: environment too small for an isometry");
    Rng rng(seed);
    const Mat v = orthonormalize_columns(gaussian_matrix(dout * env_dim, din, rng));
    QuantumChannel ch{{}, in_dims, out_dims};
    for (int e = 0; e < env_dim; ++e) {
        Mat k(dout, din);
        for (int o = 0; o < dout; ++o) k.row(o) = v.row(o * env_dim + e);
        ch.kraus.push_back(std::move(k));
    }
    return ch;
}

// Two-qubit channel S R -> S' R' in which R' is produced from R alone: R is
// broadcast into (R', X) and S' is then built from (S, X).
inline QuantumChannel planted_ns_channel(std::uint64_t seed, int env_dim = 2) {
    const auto g = random_channel({2}, {2, 2}, env_dim, seed * 2 + 1);  // R -> R' X
    const auto f = random_channel({2, 2}, {2}, env_dim, seed * 2 + 2);  // S X -> S'
    const Mat p = permutation_matrix({2, 2, 2}, {0, 2, 1});            // S R' X -> S X R'
    const Mat i2 = Mat::Identity(2, 2);
    QuantumChannel ch{{}, {2, 2}, {2, 2}};
    for (const auto& fa : f.kraus)
        for (const auto& gb : g.kraus) ch.kraus.push_back(kron(fa, i2) * p * kron(i2, gb));
    return ch;
}

inline QuantumChannel swap_channel(int d = 2) {
    return {{permutation_matrix({d, d}, {1, 0})}, {d, d}, {d, d}};
}

inline QuantumChannel identity_channel(const Layout& dims) {
    const int d = layout_dim(dims);
    return {{Mat::Identity(d, d)}, dims, dims};
}

}  // namespace nsqkd
