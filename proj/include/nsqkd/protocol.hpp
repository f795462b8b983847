#pragma once

#include "finitesize.hpp"
#include "random.hpp"

#include <array>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsqkd {

inline constexpr double kSpeedOfLight = 2.99792458e8;

// Exact rational nanoseconds. Sums of a few hundred million timestamps with
// denominators from metre-scale distances stay far inside 128 bits.
class Rational {
public:
    __extension__ using Int = __int128;

    Rational() = default;
    Rational(Int num, Int den = 1) : num_(num), den_(den) {
        if (den_ == 0) throw std::domain_error("Rational: zero denominator");
        normalize();
    }

    // Best approximation with denominator <= max_den (continued fractions).
    static Rational from_double(double x, std::int64_t max_den = 1000000) {
        if (!std::isfinite(x)) throw std::domain_error("Rational: non-finite value");
        const bool neg = x < 0;
        double r = std::abs(x);
        Int p0 = 0, q0 = 1, p1 = 1, q1 = 0;
        for (int it = 0; it < 64; ++it) {
            const double a = std::floor(r);
            if (a > 9e18) break;
            const Int ai = static_cast<Int>(a);
            const Int p2 = ai * p1 + p0, q2 = ai * q1 + q0;
            if (q2 > max_den) break;
            p0 = p1;
            q0 = q1;
            p1 = p2;
            q1 = q2;
            const double frac = r - a;
            if (frac < 1e-15) break;
            r = 1 / frac;
        }
        return {neg ? -p1 : p1, q1};
    }

    Int num() const { return num_; }
    Int den() const { return den_; }
    double to_double() const { return static_cast<double>(static_cast<long double>(num_) / den_); }

    friend Rational operator+(const Rational& a, const Rational& b) {
        const Int g = gcd(a.den_, b.den_);
        return {a.num_ * (b.den_ / g) + b.num_ * (a.den_ / g), a.den_ / g * b.den_};
    }
    friend Rational operator-(const Rational& a, const Rational& b) { return a + Rational(-b.num_, b.den_); }
    friend Rational operator*(const Rational& a, const Rational& b) {
        const Int g1 = gcd(a.num_ < 0 ? -a.num_ : a.num_, b.den_), g2 = gcd(b.num_ < 0 ? -b.num_ : b.num_, a.den_);
        return {(a.num_ / g1) * (b.num_ / g2), (a.den_ / g2) * (b.den_ / g1)};
    }
    friend bool operator<(const Rational& a, const Rational& b) { return a.num_ * b.den_ < b.num_ * a.den_; }
    friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }

    std::string str() const {
        std::string s = to_string(num_);
        if (den_ != 1) s += "/" + to_string(den_);
        return s;
    }

private:
    static Int gcd(Int a, Int b) {
        while (b != 0) {
            const Int t = a % b;
            a = b;
            b = t;
        }
        return a == 0 ? 1 : a;
    }
    static std::string to_string(Int v) {
        if (v == 0) return "0";
        const bool neg = v < 0;
        std::string s;
        for (; v != 0; v /= 10) s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(neg ? -(v % 10) : v % 10)));
        return neg ? "-" + s : s;
    }
    void normalize() {
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const Int g = gcd(num_ < 0 ? -num_ : num_, den_);
        num_ /= g;
        den_ /= g;
    }

    Int num_ = 0;
    Int den_ = 1;
};

struct TimingConfig {
    double d = 0;                 // metres
    double refractive_index = 1;  // of the fibre carrying the signal
    double delta_t = 1e-6;        // seconds
    double c = kSpeedOfLight;

    void validate() const {
        if (!(refractive_index >= 1)) throw std::domain_error("TimingConfig: refractive index below 1");
        if (!(d >= 0)) throw std::domain_error("TimingConfig: negative distance");
        if (!(delta_t > 0)) throw std::domain_error("TimingConfig: delay must be positive");
    }

    // Exact timing quantities in nanoseconds; c is exact in SI units.
    Rational light_time_ns() const { return Rational::from_double(d, 1000) * Rational(1000000000, 299792458); }
    Rational delta_t_ns() const { return Rational::from_double(delta_t * 1e9, 1000000); }
};

inline double timing_min_delay(const TimingConfig& cfg) {
    if (!(cfg.refractive_index >= 1)) throw std::domain_error("timing_min_delay: refractive index below 1");
    return (cfg.refractive_index - 1) * cfg.d / cfg.c;
}

// Spacelike separation of Alice's choice and Bob's detection.
inline bool timing_accept(const Rational& t_a_ns, const Rational& t_b_ns, const TimingConfig& cfg) {
    const Rational two_dt = Rational(2) * cfg.delta_t_ns();
    return t_b_ns - t_a_ns < two_dt + cfg.light_time_ns();
}

// Arrival of the signal through fibre, delayed by delta_t after dispatch.
inline Rational fibre_arrival_ns(const Rational& t_a_ns, const TimingConfig& cfg) {
    return t_a_ns + Rational::from_double(cfg.refractive_index, 1000000) * cfg.light_time_ns() + cfg.delta_t_ns();
}

struct Schedule {
    std::vector<Rational> times_ns;
    double step_seconds = 0;
};

inline Schedule schedule_rounds(const Rational& t_start_ns, const TimingConfig& cfg, std::size_t n_rounds) {
    Schedule s;
    s.step_seconds = 2 * cfg.delta_t;
    const Rational step = Rational(2) * cfg.delta_t_ns();
    s.times_ns.reserve(n_rounds);
    Rational t = t_start_ns;
    for (std::size_t i = 0; i < n_rounds; ++i, t = t + step) s.times_ns.push_back(t);
    return s;
}

// Secret bits per second when each round takes 2 delta_t.
inline double throughput(double rate, const TimingConfig& cfg) {
    if (!(cfg.delta_t > 0)) throw std::domain_error("throughput: delta_t must be positive");
    return rate / (2 * cfg.delta_t);
}

// Raw key symbols: A in {0,1,bot}; announcements J add the empty symbol.
enum class Sym : std::uint8_t { zero = 0, one = 1, bot = 2, empty = 3 };
enum class Ev : std::uint8_t { corr = 0, err = 1, bot = 2, empty = 3 };

inline char sym_char(Sym s) { return "01-_"[static_cast<int>(s)]; }
inline const char* ev_name(Ev e) {
    static constexpr const char* names[] = {"corr", "err", "bot", "empty"};
    return names[static_cast<int>(e)];
}

inline Ev evaluate_round(Sym a, Sym j) {
    switch (j) {
        case Sym::empty: return Ev::empty;
        case Sym::bot: return Ev::bot;
        default: return a == j ? Ev::corr : Ev::err;
    }
}

// f on the full alphabet C = {corr, err, bot, empty}.
inline double eval_f_full(const TradeoffFunction& f, const std::array<double, 4>& freq) {
    return f.f_vertex[0] * freq[0] + f.f_vertex[1] * freq[1] + f.f_vertex[2] * freq[2] + f.f_empty * freq[3];
}

struct RoundRecord {
    std::uint64_t index = 0;
    Sym a = Sym::bot;
    Sym b = Sym::bot;
    bool detected = false;  // I
    bool test = false;      // T
    Sym j = Sym::empty;
    Ev c = Ev::empty;
    Rational t_a, t_b;
};

struct SimConfig {
    Protocol protocol = Protocol::relativistic;
    std::uint64_t n = 100000;
    double alpha = 0.45;
    double eta = 1.0;
    double qber = 0.0;
    double gamma = 0.05;
    std::uint64_t seed = 1;
    TimingConfig timing{};
    const TradeoffFunction* f = nullptr;  // parameter estimation is skipped without one
    double H_exp = 0;
    bool record = false;     // keep per-round records
    bool correct_errors = true;  // honest EC reconciles Bob's key before the hash check
};

struct SimResult {
    std::vector<RoundRecord> rounds;
    std::array<std::uint64_t, 4> counts{};
    std::array<double, 4> freq{};
    std::uint64_t pulses = 0;
    std::uint64_t key_bits = 0;
    std::uint64_t key_errors = 0;
    bool timing_ok = true;
    bool pe_abort = false;
    bool hash_match = true;
    double f_value = 0;

    bool aborted() const { return !timing_ok || pe_abort || !hash_match; }
};

namespace detail {

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Multilinear hash over 64-bit words with odd random multipliers, keeping the top
// 32 bits: a two-universal family up to the usual factor of two.
class KeyHasher {
public:
    explicit KeyHasher(std::uint64_t seed) : rng_(seed) {}

    void push(bool bit) {
        word_ |= static_cast<std::uint64_t>(bit) << fill_;
        if (++fill_ == 64) flush();
    }
    std::uint32_t digest() {
        if (fill_ > 0) flush();
        return static_cast<std::uint32_t>((acc_ + multiplier()) >> 32);
    }

private:
    std::uint64_t multiplier() {
        while (coeffs_.size() <= words_) coeffs_.push_back(rng_() | 1u);
        return coeffs_[words_];
    }
    void flush() {
        acc_ += multiplier() * word_;
        ++words_;
        word_ = 0;
        fill_ = 0;
    }

    Rng rng_;
    std::vector<std::uint64_t> coeffs_;
    std::uint64_t acc_ = 0, word_ = 0;
    std::size_t words_ = 0;
    int fill_ = 0;
};

}  // namespace detail

inline SimResult simulate_honest(const SimConfig& cfg) {
    if (cfg.n > 10000000) throw std::invalid_argument("simulate_honest: at most 10^7 rounds");
    if (!(cfg.gamma > 0 && cfg.gamma <= 1)) throw std::domain_error("simulate_honest: gamma outside (0,1]");
    const auto p = honest_statistics(cfg.protocol, cfg.alpha, cfg.eta, cfg.qber);
    const double p_click = p.detected();
    const double q_click = p_click > 0 ? p.p_err / p_click : 0.0;
    cfg.timing.validate();

    Rng rng(cfg.seed);
    // The hash family is drawn from public randomness shared by both parties.
    const std::uint64_t hash_seed = rng();
    detail::KeyHasher alice(hash_seed), bob(hash_seed);

    SimResult res;
    if (cfg.record) res.rounds.reserve(cfg.n);
    const TimingConfig& tc = cfg.timing;
    const Rational step = Rational(2) * tc.delta_t_ns();
    Rational t_a(0);
    int prev_u = 0;
    if (cfg.protocol == Protocol::dps) {
        prev_u = static_cast<int>(rng() & 1);  // initialization pulse U_0
        ++res.pulses;
    }
    for (std::uint64_t i = 0; i < cfg.n; ++i, t_a = t_a + step) {
        int v;
        if (cfg.protocol == Protocol::dps) {
            const int u = static_cast<int>(rng() & 1);
            v = u ^ prev_u;
            prev_u = u;
            res.pulses += 1;
        } else {
            v = static_cast<int>(rng() & 1);
            res.pulses += 2;
        }
        const bool test = detail::uniform01(rng) < cfg.gamma;
        const bool click = detail::uniform01(rng) < p_click;
        const bool flip = detail::uniform01(rng) < q_click;

        RoundRecord r;
        r.index = i;
        r.detected = click;
        r.test = test;
        r.a = click ? static_cast<Sym>(v) : Sym::bot;
        r.b = click ? static_cast<Sym>(v ^ static_cast<int>(flip)) : Sym::bot;
        r.j = test ? r.b : Sym::empty;
        r.c = evaluate_round(r.a, r.j);
        r.t_a = t_a;
        r.t_b = fibre_arrival_ns(t_a, tc);
        if (!timing_accept(r.t_a, r.t_b, tc)) res.timing_ok = false;

        ++res.counts[static_cast<int>(r.c)];
        if (click && !test) {
            ++res.key_bits;
            const bool a_bit = v != 0;
            const bool b_bit = cfg.correct_errors ? a_bit : r.b == Sym::one;
            res.key_errors += a_bit != (r.b == Sym::one);
            alice.push(a_bit);
            bob.push(b_bit);
        }
        if (cfg.record) res.rounds.push_back(r);
    }
    for (int k = 0; k < 4; ++k) res.freq[k] = static_cast<double>(res.counts[k]) / static_cast<double>(cfg.n);
    res.hash_match = alice.digest() == bob.digest();
    if (cfg.f) {
        res.f_value = eval_f_full(*cfg.f, res.freq);
        res.pe_abort = res.f_value < cfg.H_exp;
    }
    return res;
}

inline void write_transcript_csv(std::ostream& os, const SimResult& res) {
    os << "index,A,B,I,T,J,C,t_A,t_B\n";
    for (const auto& r : res.rounds)
        os << r.index << ',' << sym_char(r.a) << ',' << sym_char(r.b) << ',' << (r.detected ? 1 : 0) << ','
           << (r.test ? 1 : 0) << ',' << sym_char(r.j) << ',' << ev_name(r.c) << ',' << r.t_a.str() << ','
           << r.t_b.str() << '\n';
}

struct Comparison {
    double r_dps = 0;
    double r_rel = 0;
    double r_rel_half = 0;
    double ratio = 0;  // r_dps / (r_rel / 2); infinite when the relativistic rate vanishes
};

// Per-pulse comparison: the relativistic protocol spends two pulses per round.
inline Comparison compare_protocols(const AsymptoticRate& rel, const AsymptoticRate& dps) {
    if (rel.protocol != Protocol::relativistic || dps.protocol != Protocol::dps)
        throw std::invalid_argument("compare_protocols: expected a relativistic and a DPS report");
    if (rel.alpha != dps.alpha || rel.eta != dps.eta || rel.qber != dps.qber)
        throw std::invalid_argument("compare_protocols: parameters do not match");
    Comparison c;
    c.r_dps = dps.rate;
    c.r_rel = rel.rate;
    c.r_rel_half = rel.rate / 2;
    if (c.r_rel_half > 0) c.ratio = c.r_dps / c.r_rel_half;
    else c.ratio = c.r_dps > 0 ? std::numeric_limits<double>::infinity() : 1.0;
    return c;
}

}  // namespace nsqkd
