#pragma once

#include "nsqkd/causal.hpp"
#include "nsqkd/entropy.hpp"
#include "nsqkd/finitesize.hpp"
#include "nsqkd/protocol.hpp"
#include "nsqkd/squash.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace nsqkd::cli {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kSuiteFailure = 3 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    Protocol protocol = Protocol::relativistic;
    double alpha = 0.45;
    bool alpha_auto = false;
    std::vector<double> alpha_grid{0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60};
    std::vector<double> eta{1.0};
    std::vector<double> qber{0.0};
    std::vector<double> n{1e10};
    double gamma = 0.05;
    double eps_snd = 4e-12;
    double eps_comp = 1e-2;
    int cutoff = 6;
    double lambda_box = 10;
    double lambda_tol = 1e-3;
    double lambda_tol_outer = 2e-2;
    double gap_budget = 1e-6;
    std::string output;  // empty: standard output
    std::string format = "csv";
    std::string transcript;
    std::uint64_t seed = 1;
    int workers = 1;
    std::uint64_t rounds = 100000;
    double distance = 0;
    double refractive_index = 1.0;
    double delta_t = 1e-6;
    std::vector<std::string> suite{"squash", "choi", "gradient"};
    int samples = 500;
    double tol = 1e-9;
    bool finite = false;
    bool pe = false;

    LambdaOptions lambda_options() const {
        LambdaOptions o;
        o.box = lambda_box;
        o.tol = lambda_tol;
        o.tol_outer = lambda_tol_outer;
        o.solver.gap_budget = gap_budget;
        return o;
    }
    EpsilonBudget epsilons() const { return EpsilonBudget::split(eps_snd, eps_comp); }
    TimingConfig timing() const {
        TimingConfig t;
        t.d = distance;
        t.refractive_index = refractive_index;
        t.delta_t = delta_t;
        return t;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (item.empty()) throw std::invalid_argument("empty list element");
        out.push_back(item);
    }
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

inline double to_double(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters in '" + s + "'");
    return v;
}

inline long long to_int(const std::string& s) {
    const double v = to_double(s);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw std::invalid_argument("'" + s + "' is not an integer");
    return static_cast<long long>(v);
}

inline std::vector<double> to_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& x : split_list(s)) out.push_back(to_double(x));
    return out;
}

inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::domain_error(what);
}

inline void in_range(double v, double lo, double hi, bool lo_open, bool hi_open, const char* desc) {
    const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
    require(ok, "value " + std::to_string(v) + " outside " + desc);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table{
        {"protocol", [](RunConfig& c, const std::string& v) { c.protocol = parse_protocol(v); }},
        {"alpha",
         [](RunConfig& c, const std::string& v) {
             if (v == "auto") {
                 c.alpha_auto = true;
                 return;
             }
             c.alpha_auto = false;
             c.alpha = to_double(v);
             in_range(c.alpha, 0, 2, true, false, "(0,2]");
         }},
        {"alpha_grid",
         [](RunConfig& c, const std::string& v) {
             c.alpha_grid = to_doubles(v);
             for (double a : c.alpha_grid) in_range(a, 0, 2, true, false, "(0,2]");
         }},
        {"eta",
         [](RunConfig& c, const std::string& v) {
             c.eta = to_doubles(v);
             for (double e : c.eta) in_range(e, 0, 1, true, false, "(0,1]");
         }},
        {"qber",
         [](RunConfig& c, const std::string& v) {
             c.qber = to_doubles(v);
             for (double q : c.qber) in_range(q, 0, 0.5, false, false, "[0,0.5]");
         }},
        {"n",
         [](RunConfig& c, const std::string& v) {
             c.n = to_doubles(v);
             for (double x : c.n) in_range(x, 1, 1e30, false, false, "[1,1e30]");
         }},
        {"gamma",
         [](RunConfig& c, const std::string& v) {
             c.gamma = to_double(v);
             in_range(c.gamma, 0, 1, true, true, "(0,1)");
         }},
        {"eps_snd",
         [](RunConfig& c, const std::string& v) {
             c.eps_snd = to_double(v);
             in_range(c.eps_snd, 0, 1, true, true, "(0,1)");
         }},
        {"eps_comp",
         [](RunConfig& c, const std::string& v) {
             c.eps_comp = to_double(v);
             in_range(c.eps_comp, 0, 1, true, true, "(0,1)");
         }},
        {"cutoff",
         [](RunConfig& c, const std::string& v) {
             const auto x = to_int(v);
             in_range(static_cast<double>(x), 1, 30, false, false, "[1,30]");
             c.cutoff = static_cast<int>(x);
         }},
        {"lambda_box",
         [](RunConfig& c, const std::string& v) {
             c.lambda_box = to_double(v);
             in_range(c.lambda_box, 0, 1e3, true, false, "(0,1000]");
         }},
        {"lambda_tol",
         [](RunConfig& c, const std::string& v) {
             c.lambda_tol = to_double(v);
             in_range(c.lambda_tol, 0, 1, true, false, "(0,1]");
         }},
        {"lambda_tol_outer",
         [](RunConfig& c, const std::string& v) {
             c.lambda_tol_outer = to_double(v);
             in_range(c.lambda_tol_outer, 0, 1, true, false, "(0,1]");
         }},
        {"gap_budget",
         [](RunConfig& c, const std::string& v) {
             c.gap_budget = to_double(v);
             in_range(c.gap_budget, 0, 1, true, false, "(0,1]");
         }},
        {"output", [](RunConfig& c, const std::string& v) { c.output = v; }},
        {"format",
         [](RunConfig& c, const std::string& v) {
             require(v == "csv" || v == "json", "format must be csv or json");
             c.format = v;
         }},
        {"transcript", [](RunConfig& c, const std::string& v) { c.transcript = v; }},
        {"seed",
         [](RunConfig& c, const std::string& v) {
             const auto x = to_int(v);
             require(x >= 0, "seed must be non-negative");
             c.seed = static_cast<std::uint64_t>(x);
         }},
        {"workers",
         [](RunConfig& c, const std::string& v) {
             const auto x = to_int(v);
             in_range(static_cast<double>(x), 1, 1024, false, false, "[1,1024]");
             c.workers = static_cast<int>(x);
         }},
        {"rounds",
         [](RunConfig& c, const std::string& v) {
             const auto x = to_int(v);
             in_range(static_cast<double>(x), 1, 1e7, false, false, "[1,1e7]");
             c.rounds = static_cast<std::uint64_t>(x);
         }},
        {"distance",
         [](RunConfig& c, const std::string& v) {
             c.distance = to_double(v);
             in_range(c.distance, 0, 1e9, false, false, "[0,1e9]");
         }},
        {"refractive_index",
         [](RunConfig& c, const std::string& v) {
             c.refractive_index = to_double(v);
             in_range(c.refractive_index, 1, 10, false, false, "[1,10]");
         }},
        {"delta_t",
         [](RunConfig& c, const std::string& v) {
             c.delta_t = to_double(v);
             in_range(c.delta_t, 0, 1e3, true, false, "(0,1000]");
         }},
        {"suite",
         [](RunConfig& c, const std::string& v) {
             static const std::vector<std::string> known{"squash", "choi", "gradient", "routes", "certificate"};
             c.suite = split_list(v);
             for (const auto& s : c.suite)
                 require(std::find(known.begin(), known.end(), s) != known.end(), "unknown suite '" + s + "'");
         }},
        {"samples",
         [](RunConfig& c, const std::string& v) {
             const auto x = to_int(v);
             in_range(static_cast<double>(x), 1, 1e6, false, false, "[1,1e6]");
             c.samples = static_cast<int>(x);
         }},
        {"tol",
         [](RunConfig& c, const std::string& v) {
             c.tol = to_double(v);
             in_range(c.tol, 0, 1, true, false, "(0,1]");
         }},
    };
    return table;
}

}  // namespace detail

// Applies one key; `where` prefixes error messages (file:line or the flag name).
inline void set_key(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where) {
    const auto& table = detail::setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    try {
        it->second(cfg, value);
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + key + ": " + e.what());
    }
}

inline void parse_config(std::istream& in, RunConfig& cfg, const std::string& name = "<config>") {
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = name + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": missing key");
        if (value.empty()) throw ConfigError(where + ": " + key + ": missing value");
        set_key(cfg, key, value, where);
    }
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    RunConfig cfg;
    parse_config(in, cfg, path);
    return cfg;
}

// ---------------------------------------------------------------------------
// Tables emitted as CSV with a JSON mirror.

using Cell = std::variant<double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    static void write_field(std::ostream& os, const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) {
            os << s;
            return;
        }
        os << '"';
        for (char ch : s) os << (ch == '"' ? "\"\"" : std::string(1, ch));
        os << '"';
    }

    void write_csv(std::ostream& os) const {
        for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
        os << '\n';
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) os << ',';
                if (const auto* d = std::get_if<double>(&r[i])) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.10g", *d);
                    os << buf;
                } else {
                    write_field(os, std::get<std::string>(r[i]));
                }
            }
            os << '\n';
        }
    }

    nlohmann::ordered_json to_json() const {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json o;
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (const auto* d = std::get_if<double>(&r[i])) {
                    if (std::isfinite(*d)) o[columns[i]] = *d;
                    else o[columns[i]] = nullptr;
                } else {
                    o[columns[i]] = std::get<std::string>(r[i]);
                }
            }
            arr.push_back(std::move(o));
        }
        return arr;
    }
};

inline void emit(const Table& t, const RunConfig& cfg, std::ostream& out) {
    if (cfg.output.empty()) {
        if (cfg.format == "json") out << t.to_json().dump(2) << '\n';
        else t.write_csv(out);
        return;
    }
    std::ofstream csv(cfg.output);
    std::ofstream js(cfg.output + ".json");
    if (!csv || !js) throw std::runtime_error("cannot write " + cfg.output);
    t.write_csv(csv);
    js << t.to_json().dump(2) << '\n';
}

// Evaluates fn(i) for i < count on `workers` threads; results keep input order.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, int workers, Fn&& fn) {
    std::vector<T> out(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < count;) {
            try {
                out[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Computations.

inline AsymptoticRate best_asymptotic(const RunConfig& cfg, Protocol p, double eta, double q) {
    if (!cfg.alpha_auto) return asymptotic_rate(cfg.alpha, eta, q, p, cfg.lambda_options());
    AsymptoticRate best;
    bool first = true;
    for (double a : cfg.alpha_grid) {
        auto r = asymptotic_rate(a, eta, q, p, cfg.lambda_options());
        if (first || r.raw > best.raw) best = std::move(r);
        first = false;
    }
    return best;
}

inline FiniteRate best_finite(const RunConfig& cfg, double eta, double q, double n, double* alpha_out) {
    const auto eb = cfg.epsilons();
    const std::vector<double> grid = cfg.alpha_auto ? cfg.alpha_grid : std::vector<double>{cfg.alpha};
    FiniteRate best;
    bool first = true;
    for (double a : grid) {
        auto r = finite_rate(a, eta, q, cfg.protocol, n, cfg.gamma, eb, cfg.lambda_options());
        if (first || r.raw_rate > best.raw_rate) {
            best = std::move(r);
            *alpha_out = a;
        }
        first = false;
    }
    return best;
}

inline double tail_mass(double alpha, int cutoff) { return coherent_state(alpha, {cutoff, 1}).tail_mass; }

inline Table cmd_asymptotic(const RunConfig& cfg) {
    struct Point {
        double eta, q;
    };
    std::vector<Point> pts;
    for (double e : cfg.eta)
        for (double q : cfg.qber) pts.push_back({e, q});
    const auto res = parallel_map<AsymptoticRate>(
        pts.size(), cfg.workers, [&](std::size_t i) { return best_asymptotic(cfg, cfg.protocol, pts[i].eta, pts[i].q); });
    Table t{{"protocol", "alpha", "eta", "q", "rate", "entropy", "leak", "gap", "ns_residual", "lambda_corr",
             "lambda_err", "c", "tail_mass"},
            {}};
    for (const auto& r : res)
        t.rows.push_back({to_string(r.protocol), r.alpha, r.eta, r.qber, r.rate, r.entropy, r.leak, r.gap,
                          r.ns_residual, r.g.lambda[kCorr], r.g.lambda[kErr], r.g.c, tail_mass(r.alpha, cfg.cutoff)});
    return t;
}

inline Table cmd_finite(const RunConfig& cfg) {
    struct Point {
        double eta, q, n;
    };
    std::vector<Point> pts;
    for (double e : cfg.eta)
        for (double q : cfg.qber)
            for (double n : cfg.n) pts.push_back({e, q, n});
    std::vector<double> alphas(pts.size());
    const auto res = parallel_map<FiniteRate>(pts.size(), cfg.workers, [&](std::size_t i) {
        return best_finite(cfg, pts[i].eta, pts[i].q, pts[i].n, &alphas[i]);
    });
    Table t{{"protocol", "alpha", "eta", "q", "n", "rate", "bits", "alpha_prime", "delta", "H_exp", "leak_ec",
             "abort_bound", "gap", "ns_residual", "tail_mass"},
            {}};
    for (std::size_t i = 0; i < res.size(); ++i) {
        const auto& r = res[i];
        t.rows.push_back({to_string(cfg.protocol), alphas[i], pts[i].eta, pts[i].q, r.n, r.rate, r.bits,
                          r.alpha_prime, r.delta, r.H_exp, r.leak_ec, r.abort_bound, r.gap, r.ns_residual,
                          tail_mass(alphas[i], cfg.cutoff)});
    }
    return t;
}

inline Table cmd_sweep_eta(const RunConfig& cfg) {
    const double q = cfg.qber.front();
    if (cfg.finite) {
        const double n = cfg.n.front();
        std::vector<double> alphas(cfg.eta.size());
        const auto res = parallel_map<FiniteRate>(cfg.eta.size(), cfg.workers, [&](std::size_t i) {
            return best_finite(cfg, cfg.eta[i], q, n, &alphas[i]);
        });
        Table t{{"eta", "min_ent", "gap", "ns_residual", "alpha", "n", "q"}, {}};
        for (std::size_t i = 0; i < res.size(); ++i)
            t.rows.push_back({cfg.eta[i], res[i].rate, res[i].gap, res[i].ns_residual, alphas[i], n, q});
        return t;
    }
    const auto res = parallel_map<AsymptoticRate>(cfg.eta.size(), cfg.workers, [&](std::size_t i) {
        return best_asymptotic(cfg, cfg.protocol, cfg.eta[i], q);
    });
    Table t{{"eta", "rate", "gap", "ns_residual", "alpha", "q"}, {}};
    for (const auto& r : res) t.rows.push_back({r.eta, r.rate, r.gap, r.ns_residual, r.alpha, q});
    return t;
}

inline Table cmd_sweep_qber(const RunConfig& cfg) {
    const double eta = cfg.eta.front();
    const auto res = parallel_map<AsymptoticRate>(cfg.qber.size(), cfg.workers, [&](std::size_t i) {
        return best_asymptotic(cfg, cfg.protocol, eta, cfg.qber[i]);
    });
    Table t{{"q", "key_rate", "gap", "ns_residual", "alpha", "eta"}, {}};
    for (const auto& r : res) t.rows.push_back({r.qber, r.rate, r.gap, r.ns_residual, r.alpha, eta});
    return t;
}

inline Table cmd_compare(const RunConfig& cfg) {
    const double q = cfg.qber.front();
    struct Pair {
        AsymptoticRate rel, dps;
    };
    const auto res = parallel_map<Pair>(cfg.eta.size(), cfg.workers, [&](std::size_t i) {
        RunConfig fixed = cfg;
        Pair p{best_asymptotic(fixed, Protocol::relativistic, cfg.eta[i], q), {}};
        // match the amplitude chosen for the relativistic protocol
        fixed.alpha_auto = false;
        fixed.alpha = p.rel.alpha;
        p.dps = best_asymptotic(fixed, Protocol::dps, cfg.eta[i], q);
        return p;
    });
    Table t{{"eta", "r_dps", "r_rel", "r_rel_half", "ratio", "alpha", "q", "gap_rel", "gap_dps", "ns_residual_rel",
             "ns_residual_dps"},
            {}};
    for (const auto& p : res) {
        const auto c = compare_protocols(p.rel, p.dps);
        t.rows.push_back({p.rel.eta, c.r_dps, c.r_rel, c.r_rel_half, c.ratio, p.rel.alpha, q, p.rel.gap, p.dps.gap,
                          p.rel.ns_residual, p.dps.ns_residual});
    }
    return t;
}

inline Table cmd_timing(const RunConfig& cfg) {
    const auto tc = cfg.timing();
    tc.validate();
    const Rational t_a(0);
    const bool accept = timing_accept(t_a, fibre_arrival_ns(t_a, tc), tc);
    Table t{{"distance", "refractive_index", "min_delta_t", "delta_t", "accept", "round_time", "throughput_per_rate"},
            {}};
    t.rows.push_back({tc.d, tc.refractive_index, timing_min_delay(tc), tc.delta_t, std::string(accept ? "1" : "0"),
                      2 * tc.delta_t, throughput(1.0, tc)});
    return t;
}

inline Table cmd_simulate(const RunConfig& cfg) {
    SimConfig sc;
    sc.protocol = cfg.protocol;
    sc.n = cfg.rounds;
    sc.alpha = cfg.alpha;
    sc.eta = cfg.eta.front();
    sc.qber = cfg.qber.front();
    sc.gamma = cfg.gamma;
    sc.seed = cfg.seed;
    sc.timing = cfg.timing();
    sc.record = !cfg.transcript.empty();
    TradeoffFunction f;
    double delta = 0;
    if (cfg.pe) {
        const auto base = asymptotic_rate(cfg.alpha, sc.eta, sc.qber, cfg.protocol, cfg.lambda_options());
        const auto eb = cfg.epsilons();
        f = lift_tradeoff(base.g, cfg.gamma);
        delta = tune_delta(static_cast<double>(sc.n), f, eb.eps_ec_com, eb.eps_comp);
        sc.f = &f;
        sc.H_exp = f.eval_f(base.stats.as_array()) - delta;
    }
    const auto r = simulate_honest(sc);
    if (!cfg.transcript.empty()) {
        std::ofstream os(cfg.transcript);
        if (!os) throw std::runtime_error("cannot write " + cfg.transcript);
        write_transcript_csv(os, r);
    }
    auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
    Table t{{"protocol", "n", "seed", "freq_corr", "freq_err", "freq_bot", "freq_empty", "pulses", "key_bits",
             "key_errors", "timing_ok", "hash_match", "pe_checked", "pe_abort", "f_value", "H_exp", "delta"},
            {}};
    t.rows.push_back({to_string(cfg.protocol), static_cast<double>(sc.n), static_cast<double>(sc.seed), r.freq[0],
                      r.freq[1], r.freq[2], r.freq[3], static_cast<double>(r.pulses), static_cast<double>(r.key_bits),
                      static_cast<double>(r.key_errors), flag(r.timing_ok), flag(r.hash_match), flag(cfg.pe),
                      flag(r.pe_abort), r.f_value, sc.H_exp, delta});
    return t;
}

// ---------------------------------------------------------------------------
// Verification suites.

struct SuiteResult {
    std::string name;
    bool pass = false;
    double residual = 0;
    std::string detail;
};

inline SuiteResult suite_squash(const RunConfig& cfg) {
    const auto rep = verify_squashing(build_squashing_map(cfg.cutoff), cfg.samples, cfg.tol, cfg.seed);
    const double worst = std::max({rep.tp_residual, rep.stats_residual, rep.ns_residual, rep.exhaustive_residual,
                                   rep.completeness_residual});
    return {"squash", rep.ok(), worst, rep.ok() ? "ok" : rep.violated};
}

inline SuiteResult suite_choi(const RunConfig& cfg) {
    const int per_kind = std::max(1, cfg.samples / 4);
    const double tol = std::max(cfg.tol, 1e-8);
    int disagree = 0, wrong = 0, total = 0;
    double worst_ns = 0;
    auto run = [&](const QuantumChannel& ch, int truth) {
        const auto a = check_ns_choi(choi_of_channel(ch), 0, 1, tol);
        const auto b = check_ns_operational(ch, 0, 1, 40, tol, cfg.seed + static_cast<std::uint64_t>(total));
        ++total;
        disagree += a.pass != b.pass;
        if (truth >= 0) wrong += a.pass != (truth == 1);
        if (truth == 1) worst_ns = std::max(worst_ns, a.residual);
    };
    const Mat sw = permutation_matrix({2, 2}, {1, 0});
    for (int s = 0; s < per_kind; ++s) {
        const std::uint64_t seed = cfg.seed * 7919 + static_cast<std::uint64_t>(s);
        run(planted_ns_channel(seed, 2 + s % 3), 1);
        auto sig = planted_ns_channel(seed + 104729);
        for (auto& k : sig.kraus) k = sw * k;
        run(sig, 0);
        run(random_channel({2, 2}, {2, 2}, 1 + s % 4, seed + 3), -1);
        run(random_channel({2, 2}, {2, 2}, 2 + s % 3, seed + 5), -1);
    }
    const bool ok = disagree == 0 && wrong == 0;
    return {"choi", ok, worst_ns,
            std::to_string(total) + " channels, " + std::to_string(disagree) + " disagreements, " +
                std::to_string(wrong) + " against ground truth"};
}

inline SuiteResult suite_gradient(const RunConfig& cfg) {
    Rng rng(cfg.seed);
    double worst = 0;
    const int points = std::min(cfg.samples, 20);
    for (int i = 0; i < points; ++i) {
        const auto a = random_feasible_attack(rng, 0.3);
        const double alpha = 0.3 + 0.3 * nsqkd::detail::uniform01(rng), gamma = 0.2 * nsqkd::detail::uniform01(rng);
        const Stats3 lambda{2 * nsqkd::detail::uniform01(rng) - 1, -3 * nsqkd::detail::uniform01(rng), 0.0};
        const Mat g = objective_gradient(a, alpha, gamma, lambda);
        TradeoffObjective obj(alpha, gamma, lambda);
        Mat dir = random_hermitian(8, rng);
        dir /= hermitian_eig(dir).values.cwiseAbs().maxCoeff();
        const double h = std::min(1e-5, 1e-2 * min_eigenvalue(a.state.data));
        const double fd = (obj.value(a.state.data + h * dir) - obj.value(a.state.data - h * dir)) / (2 * h);
        const double an = (g * dir).trace().real();
        worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-12));
    }
    return {"gradient", worst <= 1e-4, worst, std::to_string(points) + " central-difference checks"};
}

inline SuiteResult suite_routes(const RunConfig& cfg) {
    Rng rng(cfg.seed);
    double worst = 0;
    const int points = std::min(cfg.samples, 50);
    for (int i = 0; i < points; ++i) {
        const auto a = random_feasible_attack(rng, 0.05 + 0.9 * nsqkd::detail::uniform01(rng));
        const double alpha = 0.2 + 0.6 * nsqkd::detail::uniform01(rng);
        worst = std::max(worst, objective(a, alpha, 0.0, {0, 0, 0}, 1.0).route_gap);
    }
    return {"routes", worst <= 1e-8, worst, std::to_string(points) + " random feasible attacks"};
}

inline SuiteResult suite_certificate(const RunConfig& cfg) {
    double worst = -std::numeric_limits<double>::infinity();
    const int points = std::min(cfg.samples, 20);
    for (int i = 0; i < points; ++i) {
        const double alpha = 0.3 + 0.05 * (i % 7), eta = i % 2 ? 1.0 : 0.1, gamma = 0.1 * (i % 3);
        const Stats3 lambda{0.2 + 0.05 * i, -1.0 - 0.3 * i, 0.0};
        const auto r = minimize_tradeoff(alpha, gamma, lambda);
        const int cutoff = std::max(cfg.cutoff, 8);
        const double honest = objective(honest_attack_choi(alpha, eta, cutoff), alpha, gamma, lambda).value;
        worst = std::max(worst, r.c_certified - honest);
    }
    return {"certificate", worst <= 0, worst, std::to_string(points) + " (lambda, alpha, gamma) instances"};
}

inline Table cmd_verify(const RunConfig& cfg, bool& all_pass) {
    static const std::map<std::string, std::function<SuiteResult(const RunConfig&)>> suites{
        {"squash", suite_squash},   {"choi", suite_choi},           {"gradient", suite_gradient},
        {"routes", suite_routes},   {"certificate", suite_certificate},
    };
    Table t{{"suite", "pass", "residual", "detail"}, {}};
    all_pass = true;
    for (const auto& name : cfg.suite) {
        const auto r = suites.at(name)(cfg);
        all_pass = all_pass && r.pass;
        t.rows.push_back({r.name, std::string(r.pass ? "1" : "0"), r.residual, r.detail});
    }
    return t;
}

// ---------------------------------------------------------------------------

inline const char* kWorkersEnv = "NSQKD_WORKERS";

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Certified key rates for relativistic and DPS QKD"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    struct Flag {
        const char* name;
        const char* key;
        const char* help;
    };
    static const std::vector<Flag> flags{
        {"--protocol", "protocol", "rel | dps"},
        {"--alpha", "alpha", "coherent amplitude, or 'auto' for a grid search"},
        {"--alpha-grid", "alpha_grid", "comma list used by --alpha auto"},
        {"--eta", "eta", "transmittance (comma list)"},
        {"--qber", "qber", "bit error rate (comma list)"},
        {"--n", "n", "number of rounds (comma list)"},
        {"--gamma", "gamma", "test-round probability"},
        {"--eps-snd", "eps_snd", "soundness parameter"},
        {"--eps-comp", "eps_comp", "completeness parameter"},
        {"--cutoff", "cutoff", "Fock cutoff"},
        {"--lambda-box", "lambda_box", "search box for the tradeoff slopes"},
        {"--lambda-tol", "lambda_tol", "inner search resolution"},
        {"--lambda-tol-outer", "lambda_tol_outer", "outer search resolution"},
        {"--gap-budget", "gap_budget", "largest acceptable duality gap"},
        {"--output,-o", "output", "CSV path; a .json mirror is written next to it"},
        {"--format", "format", "csv | json when writing to standard output"},
        {"--transcript", "transcript", "per-round CSV written by simulate"},
        {"--seed", "seed", "random seed"},
        {"--workers,-j", "workers", "worker threads (also " "NSQKD_WORKERS" ")"},
        {"--rounds", "rounds", "rounds simulated"},
        {"--distance", "distance", "Alice-Bob distance in metres"},
        {"--refractive-index", "refractive_index", "fibre refractive index"},
        {"--delta-t", "delta_t", "delay in seconds"},
        {"--suite", "suite", "squash, choi, gradient, routes, certificate"},
        {"--samples", "samples", "samples per suite"},
        {"--tol", "tol", "suite tolerance"},
    };

    std::vector<std::pair<std::string, std::string>> given;
    std::string config_path;
    bool finite = false, pe = false;
    const std::vector<std::pair<const char*, const char*>> commands{
        {"asymptotic", "asymptotic key rate per (eta, qber)"},
        {"finite", "finite-size key rate per (eta, qber, n)"},
        {"sweep-eta", "rate against transmittance"},
        {"sweep-qber", "rate against bit error rate"},
        {"verify", "numerical verification suites"},
        {"simulate", "honest Monte-Carlo run"},
        {"timing", "causality and timing budget"},
        {"compare", "DPS against the relativistic protocol per pulse"},
    };
    for (const auto& [name, desc] : commands) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--config,-c", config_path, "key = value configuration file");
        for (const auto& f : flags) {
            const std::string key = f.key;
            sub->add_option_function<std::string>(
                f.name, [&given, key](const std::string& v) { given.emplace_back(key, v); }, f.help);
        }
        if (std::string(name) == "sweep-eta") sub->add_flag("--finite", finite, "finite-size rate at the first n");
        if (std::string(name) == "simulate") sub->add_flag("--pe", pe, "run parameter estimation against a certified f");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kConfigError;
    }

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = load_config(config_path);
        if (const char* env = std::getenv(kWorkersEnv); env && *env) set_key(cfg, "workers", env, kWorkersEnv);
        for (const auto& [key, value] : given) set_key(cfg, key, value, "--" + key);
        cfg.finite = finite;
        cfg.pe = pe;
        cfg.epsilons();
        if (cfg.alpha_auto && app.got_subcommand("simulate"))
            throw ConfigError("simulate: alpha must be a number");
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    }

    try {
        const auto* sub = app.get_subcommands().front();
        const std::string cmd = sub->get_name();
        if (cmd == "verify") {
            bool ok = false;
            emit(cmd_verify(cfg, ok), cfg, out);
            return ok ? kOk : kSuiteFailure;
        }
        Table t;
        if (cmd == "asymptotic") t = cmd_asymptotic(cfg);
        else if (cmd == "finite") t = cmd_finite(cfg);
        else if (cmd == "sweep-eta") t = cmd_sweep_eta(cfg);
        else if (cmd == "sweep-qber") t = cmd_sweep_qber(cfg);
        else if (cmd == "simulate") t = cmd_simulate(cfg);
        else if (cmd == "timing") t = cmd_timing(cfg);
        else t = cmd_compare(cfg);
        emit(t, cfg, out);
        if (cmd == "timing")
            err << "minimum delta_t " << std::setprecision(5) << timing_min_delay(cfg.timing()) << " s\n";
        return kOk;
    } catch (const std::domain_error& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace nsqkd::cli
