#pragma once

#include "linop.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace nsqkd {

struct FockSpace {
    int cutoff = 6;
    int modes = 1;

    int mode_dim() const { return cutoff + 1; }
    int dim() const {
        int d = 1;
        for (int i = 0; i < modes; ++i) d *= mode_dim();
        return d;
    }
    Layout layout() const { return Layout(modes, mode_dim()); }
    int index(int n, int m) const { return n * mode_dim() + m; }
};

struct HonestStatistics {
    double p_corr = 0;
    double p_err = 0;
    double p_bot = 1;

    std::array<double, 3> as_array() const { return {p_corr, p_err, p_bot}; }
    double detected() const { return 1.0 - p_bot; }
};

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)));
}

inline double factorial(int n) { return std::exp(std::lgamma(n + 1.0)); }

struct CoherentState {
    PureState state;
    double tail_mass = 0;
    bool over_budget = false;
};

// Truncated, renormalized coherent state; the discarded Poisson mass is kept.
inline CoherentState coherent_state(cplx alpha, FockSpace space = {}, double tail_budget = 1e-8) {
    if (space.modes != 1) throw std::invalid_argument("coherent_state: single-mode space expected");
    const double mean = std::norm(alpha);
    Vec amp(space.mode_dim());
    double kept = 0;
    for (int n = 0; n <= space.cutoff; ++n) {
        amp(n) = std::exp(-mean / 2) * std::pow(alpha, n) / std::sqrt(factorial(n));
        kept += std::norm(amp(n));
    }
    // 1 - kept loses precision; sum the tail directly instead
    double tail = 0, term = std::exp(-mean) * std::pow(mean, space.cutoff) / factorial(space.cutoff);
    for (int n = space.cutoff + 1; n < space.cutoff + 200; ++n) {
        term *= mean / n;
        tail += term;
        if (term < 1e-30 * std::max(tail, 1e-300)) break;
    }
    amp /= std::sqrt(kept);
    return {{amp, {space.mode_dim()}}, tail, tail > tail_budget};
}

namespace detail {

// Amplitude of |j+k, n+m-j-k> in the expansion of |n,m> through the 50:50 splitter.
inline Mat bs_block_matrix(int total) {
    Mat u = Mat::Zero(total + 1, total + 1);  // u(a, n): input |n, total-n>, output |a, total-a>
    for (int n = 0; n <= total; ++n) {
        const int m = total - n;
        const double norm = std::pow(2.0, -0.5 * total) / std::sqrt(factorial(n) * factorial(m));
        for (int j = 0; j <= n; ++j)
            for (int k = 0; k <= m; ++k) {
                const int a = j + k;
                const double sign = ((m - k) % 2) ? -1.0 : 1.0;
                u(a, n) += norm * binomial(n, j) * binomial(m, k) * sign *
                           std::sqrt(factorial(a) * factorial(total - a));
            }
    }
    return u;
}

}  // namespace detail

// 50:50 beam splitter on the truncated two-mode space. Blocks with total photon
// number <= cutoff are mapped exactly; amplitude leaving the truncation is dropped.
inline Mat beam_splitter_matrix(const FockSpace& space) {
    if (space.modes != 2) throw std::invalid_argument("beam_splitter: two-mode space expected");
    const int d = space.dim();
    Mat b = Mat::Zero(d, d);
    for (int total = 0; total <= 2 * space.cutoff; ++total) {
        const Mat u = detail::bs_block_matrix(total);
        for (int n = 0; n <= total; ++n) {
            const int m = total - n;
            if (n > space.cutoff || m > space.cutoff) continue;
            for (int a = 0; a <= total; ++a) {
                const int c = total - a;
                if (a > space.cutoff || c > space.cutoff) continue;
                b(space.index(a, c), space.index(n, m)) = u(a, n);
            }
        }
    }
    return b;
}

inline PureState beam_splitter(const PureState& in, const FockSpace& space) {
    if (in.layout.size() != 2 || in.layout[0] != in.layout[1] || in.layout[0] != space.mode_dim())
        throw std::invalid_argument("beam_splitter: mode cutoffs do not match");
    return {beam_splitter_matrix(space) * in.amplitudes, in.layout};
}

inline DensityOperator beam_splitter(const DensityOperator& in, const FockSpace& space) {
    if (in.layout.size() != 2 || in.layout[0] != in.layout[1] || in.layout[0] != space.mode_dim())
        throw std::invalid_argument("beam_splitter: mode cutoffs do not match");
    const Mat b = beam_splitter_matrix(space);
    return {b * in.data * b.adjoint(), in.layout, in.trace_hint};
}

// Projector onto two-mode states with at most `cutoff` photons in total.
inline Mat physical_projector(const FockSpace& space) {
    Mat p = Mat::Zero(space.dim(), space.dim());
    for (int n = 0; n <= space.cutoff; ++n)
        for (int m = 0; n + m <= space.cutoff; ++m) p(space.index(n, m), space.index(n, m)) = 1;
    return p;
}

struct DetectorPovm {
    // Raw outcomes in the detector (A,B) frame.
    Mat raw0, raw1, raw_dc, raw_bot;
    // Post-processed outcomes with double clicks split evenly.
    Mat m0, m1, m_bot;
};

inline DetectorPovm detector_povm(const FockSpace& space) {
    if (space.modes != 2) throw std::invalid_argument("detector_povm: two-mode space expected");
    const int d = space.dim();
    DetectorPovm p{Mat::Zero(d, d), Mat::Zero(d, d), Mat::Zero(d, d), Mat::Zero(d, d), {}, {}, {}};
    for (int a = 0; a <= space.cutoff; ++a)
        for (int b = 0; b <= space.cutoff; ++b) {
            const int i = space.index(a, b);
            if (a == 0 && b == 0) p.raw_bot(i, i) = 1;
            else if (b == 0) p.raw0(i, i) = 1;
            else if (a == 0) p.raw1(i, i) = 1;
            else p.raw_dc(i, i) = 1;
        }
    p.m0 = p.raw0 + 0.5 * p.raw_dc;
    p.m1 = p.raw1 + 0.5 * p.raw_dc;
    p.m_bot = p.raw_bot;
    return p;
}

// Post-processed POVM pulled back to the (S,R) input frame of the splitter.
inline std::array<Mat, 3> detector_povm_input_frame(const FockSpace& space) {
    const auto p = detector_povm(space);
    const Mat b = beam_splitter_matrix(space);
    return {b.adjoint() * p.m0 * b, b.adjoint() * p.m1 * b, b.adjoint() * p.m_bot * b};
}

inline cplx apply_loss(cplx alpha, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::domain_error("apply_loss: transmittance outside [0,1]");
    return std::sqrt(eta) * alpha;
}

namespace detail {

inline void check_unit(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error(std::string(what) + " outside [0,1]");
}

inline HonestStatistics split_detected(double p_bot, double qber) {
    return {(1 - p_bot) * (1 - qber), (1 - p_bot) * qber, p_bot};
}

}  // namespace detail

// Signal and reference both see the lossy line, so the splitter output carries
// amplitude sqrt(2 eta) alpha.
inline HonestStatistics honest_statistics_relativistic(double alpha, double eta, double qber) {
    detail::check_unit(eta, "eta");
    detail::check_unit(qber, "qber");
    return detail::split_detected(std::exp(-2 * eta * alpha * alpha), qber);
}

// Delay-line interferometer: two half pulses of amplitude sqrt(eta) alpha / sqrt(2)
// recombine into one port with amplitude sqrt(eta) alpha.
inline HonestStatistics honest_statistics_dps(double alpha, double eta, double qber) {
    detail::check_unit(eta, "eta");
    detail::check_unit(qber, "qber");
    return detail::split_detected(std::exp(-eta * alpha * alpha), qber);
}

// No-click probability of the delay-line interferometer from a full Fock simulation.
inline double dps_no_click_fock(double alpha, double eta, double phase_diff = 0.0, int cutoff = 8) {
    const FockSpace one{cutoff, 1}, two{cutoff, 2};
    const cplx half = apply_loss(alpha, eta) / std::sqrt(2.0);
    const auto early = coherent_state(half, one);
    const auto late = coherent_state(half * std::polar(1.0, phase_diff), one);
    const PureState in{kron(early.state.amplitudes, late.state.amplitudes), two.layout()};
    const auto out = beam_splitter(in, two);
    return std::norm(out.amplitudes(two.index(0, 0)));
}

}  // namespace nsqkd
