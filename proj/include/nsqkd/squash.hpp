#pragma once

#include "linop.hpp"
#include "optics.hpp"
#include "random.hpp"

#include <array>
#include <string>
#include <vector>

namespace nsqkd {

// Qubit pair ordering is S'R': |00>=0, |01>=1, |10>=2, |11>=3.
struct KrausBlock {
    int photons = 0;  // total photon number N of the input block
    int k = 0;        // odd index (k = -1 marks the vacuum operator)
    int l = 0;        // even index
    Mat op;           // 4 x (N+1); column j is the input |N-j, j>
};

struct SquashingMap {
    int cutoff = 0;
    std::vector<KrausBlock> kraus;

    FockSpace space() const { return {cutoff, 2}; }

    // Kraus operator as a matrix on a two-mode space; columns outside it are dropped.
    Mat full(const KrausBlock& b, const FockSpace& s) const {
        Mat out = Mat::Zero(4, s.dim());
        for (int j = 0; j <= b.photons; ++j)
            if (b.photons - j <= s.cutoff && j <= s.cutoff) out.col(s.index(b.photons - j, j)) = b.op.col(j);
        return out;
    }
    Mat full(const KrausBlock& b) const { return full(b, space()); }
};

inline SquashingMap build_squashing_map(int cutoff) {
    if (cutoff < 1) throw std::invalid_argument("build_squashing_map: cutoff must be at least 1");
    SquashingMap map{cutoff, {}};
    Mat k0 = Mat::Zero(4, 1);
    k0(0, 0) = 1;
    map.kraus.push_back({0, -1, 0, k0});
    for (int n = 1; n <= cutoff; ++n) {
        const double pre = std::sqrt(2.0) / std::pow(std::sqrt(2.0), n);
        for (int k = 1; k <= n; k += 2)
            for (int l = 0; l <= n; l += 2) {
                Mat op = Mat::Zero(4, n + 1);
                op(1, k) += pre * std::sqrt(binomial(n, l));
                op(2, l) += pre * std::sqrt(binomial(n, k));
                map.kraus.push_back({n, k, l, std::move(op)});
            }
    }
    return map;
}

inline Mat squash_completeness(const SquashingMap& map) {
    const int d = map.space().dim();
    Mat sum = Mat::Zero(d, d);
    for (const auto& b : map.kraus) {
        const Mat f = map.full(b);
        sum += f.adjoint() * f;
    }
    return sum;
}

inline DensityOperator apply_squash(const SquashingMap& map, const DensityOperator& rho) {
    const FockSpace s = map.space();
    if (rho.dim() != s.dim()) throw std::invalid_argument("apply_squash: layout does not match the cutoff");
    Mat out = Mat::Zero(4, 4);
    for (const auto& b : map.kraus) {
        const Mat f = map.full(b);
        out += f * rho.data * f.adjoint();
    }
    return {std::move(out), {2, 2}, rho.trace_hint};
}

struct TargetPovm {
    Mat n0, n1, n_bot;
};

inline TargetPovm target_povm() {
    Vec phip = Vec::Zero(4), phim = Vec::Zero(4);
    phip(1) = phip(2) = phim(1) = 1 / std::sqrt(2.0);
    phim(2) = -1 / std::sqrt(2.0);
    Mat d11 = Mat::Zero(4, 4), d00 = Mat::Zero(4, 4);
    d11(3, 3) = 1;
    d00(0, 0) = 1;
    return {phip * phip.adjoint() + 0.5 * d11, phim * phim.adjoint() + 0.5 * d11, d00};
}

struct SquashReport {
    double tp_residual = 0;
    double stats_residual = 0;
    double ns_residual = 0;
    double exhaustive_residual = 0;
    double completeness_residual = 0;
    std::string violated;
    bool ok() const { return violated.empty(); }
};

namespace detail {

// Random mixed state supported on two-mode states with total photon number <= cutoff.
inline Mat random_physical_state(const FockSpace& s, Rng& rng) {
    std::vector<int> idx;
    for (int n = 0; n <= s.cutoff; ++n)
        for (int m = 0; n + m <= s.cutoff; ++m) idx.push_back(s.index(n, m));
    const int r = static_cast<int>(idx.size());
    const Mat small = random_density(r, rng, 1 + static_cast<int>(rng() % r));
    Mat rho = Mat::Zero(s.dim(), s.dim());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) rho(idx[i], idx[j]) = small(i, j);
    return rho;
}

// Pure loss of transmittance t on mode S followed by random phases; acts on S only
// and never raises the photon number, so the physical support is preserved.
inline Mat act_on_signal_mode(const Mat& rho, const FockSpace& s, double t, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 2 * M_PI);
    std::vector<cplx> phase(s.mode_dim());
    for (auto& p : phase) p = std::polar(1.0, u(rng));
    Mat out = Mat::Zero(s.dim(), s.dim());
    for (int k = 0; k <= s.cutoff; ++k) {
        Mat a = Mat::Zero(s.mode_dim(), s.mode_dim());
        for (int n = k; n <= s.cutoff; ++n)
            a(n - k, n) = phase[n - k] * std::sqrt(binomial(n, k) * std::pow(t, n - k) * std::pow(1 - t, k));
        const Mat full = kron(a, Mat::Identity(s.mode_dim(), s.mode_dim()));
        out += full * rho * full.adjoint();
    }
    return out;
}

}  // namespace detail

inline SquashReport verify_squashing(const SquashingMap& map, int samples, double tol, std::uint64_t seed = 7) {
    const FockSpace s = map.space();
    const auto target = target_povm();
    const auto raw = detector_povm_input_frame(s);
    const std::array<const Mat*, 3> tgt{&target.n0, &target.n1, &target.n_bot};
    const Mat phys = physical_projector(s);
    SquashReport rep;
    rep.completeness_residual = (squash_completeness(map) - phys).cwiseAbs().maxCoeff();

    auto stats_gap = [&](const Mat& rho) {
        const Mat out = apply_squash(map, DensityOperator(rho, s.layout())).data;
        double g = 0;
        for (int x = 0; x < 3; ++x)
            g = std::max(g, std::abs((raw[x] * rho).trace().real() - (*tgt[x] * out).trace().real()));
        return g;
    };

    // Every Fock basis state inside the truncation.
    for (int n = 0; n <= s.cutoff; ++n)
        for (int m = 0; n + m <= s.cutoff; ++m) {
            Mat rho = Mat::Zero(s.dim(), s.dim());
            rho(s.index(n, m), s.index(n, m)) = 1;
            rep.exhaustive_residual = std::max(rep.exhaustive_residual, stats_gap(rho));
        }

    Rng rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int i = 0; i < samples; ++i) {
        const Mat rho = detail::random_physical_state(s, rng);
        const Mat out = apply_squash(map, DensityOperator(rho, s.layout())).data;
        rep.tp_residual = std::max(rep.tp_residual, std::abs(out.trace().real() - 1.0));
        rep.stats_residual = std::max(rep.stats_residual, stats_gap(rho));

        // A second state with the same R marginal: an operation on S only.
        const Mat rho2 = detail::act_on_signal_mode(rho, s, u01(rng), rng);
        const Mat out2 = apply_squash(map, DensityOperator(rho2, s.layout())).data;
        const Mat r1 = partial_trace(out, {2, 2}, {1});
        const Mat r2 = partial_trace(out2, {2, 2}, {1});
        rep.ns_residual = std::max(rep.ns_residual, trace_norm(r1 - r2));
    }

    if (rep.completeness_residual > tol || rep.tp_residual > tol) rep.violated += "trace-preservation ";
    if (rep.stats_residual > tol || rep.exhaustive_residual > tol) rep.violated += "statistics ";
    if (rep.ns_residual > tol) rep.violated += "non-signalling ";
    return rep;
}

}  // namespace nsqkd
