#pragma once

#include "entropy.hpp"
#include "optics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nsqkd {

enum class Protocol { relativistic, dps };

inline const char* to_string(Protocol p) { return p == Protocol::relativistic ? "relativistic" : "dps"; }

inline Protocol parse_protocol(const std::string& s) {
    if (s == "rel" || s == "relativistic") return Protocol::relativistic;
    if (s == "dps" || s == "DPS") return Protocol::dps;
    throw std::invalid_argument("unknown protocol '" + s + "'");
}

inline HonestStatistics honest_statistics(Protocol p, double alpha, double eta, double qber) {
    return p == Protocol::relativistic ? honest_statistics_relativistic(alpha, eta, qber)
                                       : honest_statistics_dps(alpha, eta, qber);
}

inline double binary_entropy(double q) {
    if (q <= 0 || q >= 1) return 0;
    return -q * std::log2(q) - (1 - q) * std::log2(1 - q);
}

// Bob's uncertainty about the raw key in the honest run: errors only on clicks.
inline double honest_ec_entropy(const HonestStatistics& p) {
    const double det = p.detected();
    return det > 0 ? det * binary_entropy(p.p_err / det) : 0.0;
}

struct EpsilonBudget {
    double eps_snd = 4e-12;
    double eps_ec = 1e-12;
    double eps_pa = 1e-12;
    double eps_s = 1e-12;
    double eps_comp = 1e-2;
    double eps_ec_com = 5e-3;
    double eps_s_bar = 2.5e-3;

    // Soundness split evenly over EC, PA and the two smoothing terms; half of the
    // completeness budget goes to EC, the other half to parameter estimation.
    static EpsilonBudget split(double snd = 4e-12, double comp = 1e-2) {
        EpsilonBudget b;
        b.eps_snd = snd;
        b.eps_ec = b.eps_pa = b.eps_s = snd / 4;
        b.eps_comp = comp;
        b.eps_ec_com = comp / 2;
        b.eps_s_bar = comp / 4;
        b.validate();
        return b;
    }

    double soundness() const { return eps_ec + eps_pa + 2 * eps_s; }

    void validate() const {
        for (double e : {eps_snd, eps_ec, eps_pa, eps_s, eps_comp, eps_ec_com, eps_s_bar})
            if (!(e > 0 && e < 1)) throw std::domain_error("EpsilonBudget: parameters must lie in (0,1)");
        if (std::abs(soundness() - eps_snd) > 1e-15) throw std::domain_error("EpsilonBudget: soundness terms do not add up");
        if (eps_s_bar >= eps_ec_com) throw std::domain_error("EpsilonBudget: eps_s_bar must be below eps_ec_com");
        if (eps_ec_com >= eps_comp) throw std::domain_error("EpsilonBudget: eps_ec_com must be below eps_comp");
    }
};

struct FiniteSizeParams {
    double n = 1e10;
    double gamma = 0.05;
    double alpha_prime = 1.01;
    int d_A = 3;
    double H_exp = 0;
    double leak_ec = 0;
};

struct SecondOrder {
    double V = 0;
    double K = 0;
    double g_eps = 0;
    double bound = 0;
};

inline void check_alpha_prime(double a) {
    if (!(a > 1 && a < 1.5)) throw std::domain_error("alpha' must lie in (1, 3/2)");
}

// log2(1 / (1 - sqrt(1 - eps^2))) without cancellation for tiny eps.
inline double smoothing_penalty(double eps) {
    return std::log2((1 + std::sqrt(1 - eps * eps)) / (eps * eps));
}

inline SecondOrder eat_second_order(const TradeoffFunction& f, double alpha_prime, double eps_s, double p_omega,
                                    double n, int d_A, double t) {
    check_alpha_prime(alpha_prime);
    SecondOrder s;
    const double r = (alpha_prime - 1) / (2 - alpha_prime);
    s.V = std::log2(2.0 * d_A * d_A + 1) + std::sqrt(2 + f.var_f);
    const double span = 2 * std::log2(d_A) + f.max_f - f.min_sigma_f;
    // ln(2^span + e^2), written to stay finite for large spans
    const double lnarg = span * M_LN2 + std::log1p(std::exp(2 - span * M_LN2));
    s.K = std::pow(2 - alpha_prime, 3) / (6 * std::pow(3 - 2 * alpha_prime, 3) * M_LN2) * std::exp2(r * span) *
          lnarg * lnarg * lnarg;
    s.g_eps = smoothing_penalty(eps_s);
    s.bound = n * t - n * r * (M_LN2 / 2) * s.V * s.V -
              (s.g_eps + alpha_prime * std::log2(1 / p_omega)) / (alpha_prime - 1) - n * r * r * s.K;
    return s;
}

struct KeyLength {
    double bits = 0;  // floored and clamped at 0
    double raw = 0;   // right-hand side before flooring and clamping
    double rate = 0;
    bool aborted = false;
    SecondOrder eat;
};

inline KeyLength key_length(const FiniteSizeParams& fs, const EpsilonBudget& eb, const TradeoffFunction& f) {
    KeyLength k;
    k.eat = eat_second_order(f, fs.alpha_prime, eb.eps_s, 2 * eb.eps_s + eb.eps_pa, fs.n, fs.d_A, fs.H_exp);
    k.raw = k.eat.bound - fs.leak_ec - std::ceil(std::log2(1 / eb.eps_ec)) - 2 * std::log2(1 / eb.eps_pa) + 2;
    k.bits = std::max(0.0, std::floor(k.raw));
    k.aborted = k.bits <= 0;
    k.rate = k.bits / fs.n;
    return k;
}

inline double leak_ec_bound(double n, double h_ajb, double eps_s_bar, double eps_ec_com) {
    if (!(eps_s_bar < eps_ec_com)) throw std::domain_error("leak_ec_bound: eps_s_bar must be below eps_ec_com");
    return n * h_ajb + 2 * std::sqrt(n) * std::log2(7.0) * std::sqrt(std::log2(2 / (eps_s_bar * eps_s_bar))) +
           2 * std::log2(1 / (eps_ec_com - eps_s_bar)) + 4;
}

struct AbortBound {
    double probability = 1;
    bool vacuous = true;
};

inline AbortBound completeness_abort_bound(double n, double delta, const TradeoffFunction& f, double eps_ec_com) {
    if (!(delta > 0)) throw std::domain_error("completeness_abort_bound: delta must be positive");
    const double denom = f.var_f + (f.max_f - f.min_f) * delta / 3;
    const double tail = denom > 0 ? std::exp(-n * (delta * delta / 2) / denom) : 0.0;
    AbortBound b;
    b.probability = eps_ec_com + tail;
    b.vacuous = b.probability >= 1;
    return b;
}

// Smallest delta whose abort bound meets `target` (bisection on a decreasing function).
inline double tune_delta(double n, const TradeoffFunction& f, double eps_ec_com, double target) {
    if (!(target > eps_ec_com)) throw std::domain_error("tune_delta: target must exceed eps_ec_com");
    auto bound = [&](double d) { return completeness_abort_bound(n, d, f, eps_ec_com).probability; };
    double lo = 0, hi = 1e-12;
    while (bound(hi) > target) {
        lo = hi;
        hi *= 2;
        if (hi > 1e12) throw std::runtime_error("tune_delta: no delta reaches the target");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (bound(mid) > target ? lo : hi) = mid;
    }
    return hi;
}

struct AlphaPrimeResult {
    double alpha_prime = 1.01;
    KeyLength key;
};

// Golden section in log(alpha' - 1): the optimum sits close to 1 for large n.
inline AlphaPrimeResult optimize_alpha_prime(FiniteSizeParams fs, const EpsilonBudget& eb, const TradeoffFunction& f,
                                             double lo = 1 + 1e-6, double hi = 1.5 - 1e-6) {
    auto raw_at = [&](double x) {
        fs.alpha_prime = 1 + std::exp(x);
        return key_length(fs, eb, f).raw;
    };
    const auto [x, v] = detail::golden_max(raw_at, std::log(lo - 1), std::log(hi - 1), 1e-9);
    (void)v;
    fs.alpha_prime = 1 + std::exp(x);
    return {fs.alpha_prime, key_length(fs, eb, f)};
}

struct AsymptoticRate {
    Protocol protocol = Protocol::relativistic;
    double alpha = 0, eta = 0, qber = 0;
    double rate = 0;  // clamped at 0
    double raw = 0;
    double entropy = 0;  // certified g(p_hon)
    double leak = 0;
    HonestStatistics stats;
    TradeoffFunction g;
    double gap = 0;
    double ns_residual = 0;
    int evaluations = 0;
};

inline AsymptoticRate asymptotic_rate(double alpha, double eta, double qber, Protocol protocol,
                                      const LambdaOptions& opts = {}) {
    AsymptoticRate r;
    r.protocol = protocol;
    r.alpha = alpha;
    r.eta = eta;
    r.qber = qber;
    r.stats = honest_statistics(protocol, alpha, eta, qber);
    r.leak = honest_ec_entropy(r.stats);
    if (qber >= 0.5) return r;
    const auto lam = optimize_lambda(alpha, 0.0, r.stats.as_array(), opts);
    r.g = lam.g;
    r.entropy = lam.g.eval_g(r.stats.as_array());
    r.raw = r.entropy - r.leak;
    r.rate = std::max(0.0, r.raw);
    r.gap = lam.g.gap;
    r.ns_residual = lam.g.ns_residual;
    r.evaluations = lam.evaluations;
    return r;
}

struct FiniteRate {
    double n = 0;
    double rate = 0;
    double bits = 0;
    double raw_rate = 0;
    double alpha_prime = 0;
    double delta = 0;
    double H_exp = 0;
    double leak_ec = 0;
    double abort_bound = 0;
    HonestStatistics stats;
    TradeoffFunction f;  // lifted
    double gap = 0;
    double ns_residual = 0;
};

namespace detail {

inline FiniteRate finite_from_g(const TradeoffFunction& g, const HonestStatistics& p, double n, double gamma,
                                const EpsilonBudget& eb) {
    FiniteRate r;
    r.n = n;
    r.stats = p;
    r.f = lift_tradeoff(g, gamma);
    r.delta = tune_delta(n, r.f, eb.eps_ec_com, eb.eps_comp);
    r.abort_bound = completeness_abort_bound(n, r.delta, r.f, eb.eps_ec_com).probability;
    r.H_exp = r.f.eval_f(p.as_array()) - r.delta;
    r.leak_ec = leak_ec_bound(n, honest_ec_entropy(p), eb.eps_s_bar, eb.eps_ec_com);
    FiniteSizeParams fs{n, gamma, 1.01, 3, r.H_exp, r.leak_ec};
    const auto ap = optimize_alpha_prime(fs, eb, r.f);
    r.alpha_prime = ap.alpha_prime;
    r.bits = ap.key.bits;
    r.rate = ap.key.rate;
    r.raw_rate = ap.key.raw / n;
    return r;
}

}  // namespace detail

// Finite-size rate with lambda chosen for this n: the EAT penalties depend on the
// spread of f, so the asymptotically best lambda is not the best here.
inline FiniteRate finite_rate(double alpha, double eta, double qber, Protocol protocol, double n, double gamma,
                              const EpsilonBudget& eb = EpsilonBudget::split(), const LambdaOptions& opts = {}) {
    if (!(gamma > 0 && gamma < 1)) throw std::domain_error("finite_rate: gamma outside (0,1)");
    if (!(n >= 1)) throw std::domain_error("finite_rate: n must be positive");
    const auto p = honest_statistics(protocol, alpha, eta, qber);
    const auto lam = optimize_lambda_by(
        alpha, gamma, [&](const TradeoffFunction& g) { return detail::finite_from_g(g, p, n, gamma, eb).raw_rate; },
        opts);
    auto r = detail::finite_from_g(lam.g, p, n, gamma, eb);
    r.gap = lam.g.gap;
    r.ns_residual = lam.g.ns_residual;
    return r;
}

}  // namespace nsqkd
