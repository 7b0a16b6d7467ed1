// Implementation of the metasim command-line tool: flag/config parsing with a
// per-subcommand parameter registry, deterministic replica scheduling, and
// CSV emission.  See cli.hpp for the user-facing contract.

#include "metasim/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <climits>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <system_error>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "metasim/discrete.hpp"
#include "metasim/nonadiabatic.hpp"
#include "metasim/rayknight.hpp"
#include "metasim/rng.hpp"
#include "metasim/stats.hpp"
#include "metasim/torus.hpp"

namespace metasim {
namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Formatting and CSV output
// ---------------------------------------------------------------------------

// Shortest round-trip representation; locale-independent by construction, so
// outputs are byte-identical across environments.
std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

class CsvWriter {
  public:
    CsvWriter(const fs::path& path, const std::string& header) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open output file " + path.string());
        out_ << header << "\n";
    }
    void row(std::initializer_list<std::string> cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) out_ << ',';
            out_ << c;
            first = false;
        }
        out_ << "\n";
    }

  private:
    std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Value parsing (config files and comma lists)
// ---------------------------------------------------------------------------

std::string trim(std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
}

double parse_double(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    double v = 0.0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
        throw std::runtime_error("key '" + key + "': cannot parse '" + text + "' as a number");
    }
    return v;
}

long long parse_ll(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    long long v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
        throw std::runtime_error("key '" + key + "': cannot parse '" + text + "' as an integer");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    std::uint64_t v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
        throw std::runtime_error("key '" + key + "': cannot parse '" + text +
                                 "' as a nonnegative integer");
    }
    return v;
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    for (const auto& piece : split_commas(text)) out.push_back(parse_double(key, piece));
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
    std::vector<int> out;
    if (trim(text).empty()) return out;
    for (const auto& piece : split_commas(text)) {
        long long v = parse_ll(key, piece);
        if (v < INT_MIN || v > INT_MAX) {
            throw std::runtime_error("key '" + key + "': value out of range");
        }
        out.push_back(static_cast<int>(v));
    }
    return out;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

// ---------------------------------------------------------------------------
// Config file and parameter registry
// ---------------------------------------------------------------------------

// Flat `key = value` lines; blank lines and lines starting with '#' or ';'
// are ignored.  Later duplicates override earlier ones.
std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t.front() == '#' || t.front() == ';') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config file " + path + " line " + std::to_string(lineno) +
                                     ": expected 'key = value'");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw std::runtime_error("config file " + path + " line " + std::to_string(lineno) +
                                     ": empty key");
        }
        kv[key] = value;
    }
    return kv;
}

// One settable parameter: a CLI option plus a string-typed setter/getter so
// config-file values and the sidecar echo go through one code path.
struct ParamEntry {
    std::string key;
    CLI::Option* opt = nullptr;
    bool file_set = false;
    std::function<void(const std::string&)> set;
    std::function<std::string()> show;
};

class ParamRegistry {
  public:
    void add_double(CLI::App* cmd, const std::string& key, double* var, const std::string& desc) {
        ParamEntry e;
        e.key = key;
        e.opt = cmd->add_option("--" + key, *var, desc);
        e.set = [var, key](const std::string& s) { *var = parse_double(key, s); };
        e.show = [var] { return fmt(*var); };
        entries_.push_back(std::move(e));
    }
    void add_int(CLI::App* cmd, const std::string& key, int* var, const std::string& desc) {
        ParamEntry e;
        e.key = key;
        e.opt = cmd->add_option("--" + key, *var, desc);
        e.set = [var, key](const std::string& s) {
            long long v = parse_ll(key, s);
            if (v < INT_MIN || v > INT_MAX) {
                throw std::runtime_error("key '" + key + "': value out of range");
            }
            *var = static_cast<int>(v);
        };
        e.show = [var] { return fmt(*var); };
        entries_.push_back(std::move(e));
    }
    void add_u64(CLI::App* cmd, const std::string& key, std::uint64_t* var,
                 const std::string& desc) {
        ParamEntry e;
        e.key = key;
        e.opt = cmd->add_option("--" + key, *var, desc);
        e.set = [var, key](const std::string& s) { *var = parse_u64(key, s); };
        e.show = [var] { return fmt(*var); };
        entries_.push_back(std::move(e));
    }
    void add_string(CLI::App* cmd, const std::string& key, std::string* var,
                    const std::string& desc) {
        ParamEntry e;
        e.key = key;
        e.opt = cmd->add_option("--" + key, *var, desc);
        e.set = [var](const std::string& s) { *var = trim(s); };
        e.show = [var] { return *var; };
        entries_.push_back(std::move(e));
    }

    ParamEntry* find(const std::string& key) {
        for (auto& e : entries_) {
            if (e.key == key) return &e;
        }
        return nullptr;
    }

    // True when the user supplied the key on the command line or in a file
    // (as opposed to the built-in default applying).
    bool specified(const std::string& key) const {
        for (const auto& e : entries_) {
            if (e.key == key) return e.opt->count() > 0 || e.file_set;
        }
        return false;
    }

    void write_sidecar(std::ostream& os) const {
        for (const auto& e : entries_) os << e.key << " = " << e.show() << "\n";
    }

  private:
    std::vector<ParamEntry> entries_;
};

// ---------------------------------------------------------------------------
// Replica scheduling
// ---------------------------------------------------------------------------

// Runs fn(0..replicas-1), each replica writing into its own slot, so the
// merged result is independent of the thread count and schedule.
template <typename R, typename Fn>
std::vector<R> run_replicas(int replicas, int threads, Fn&& fn) {
    std::vector<R> out(static_cast<std::size_t>(replicas));
    int T = std::min(threads, replicas);
    if (T < 1) T = 1;
    if (T == 1) {
        for (int i = 0; i < replicas; ++i) out[static_cast<std::size_t>(i)] = fn(i);
        return out;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    pool.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < replicas; i += T) out[static_cast<std::size_t>(i)] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> guard(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

struct GlobalOpts {
    std::uint64_t seed = 0;
    int replicas = 1;
    int threads = 1;
    std::string out = ".";
};

// Standard error of a mean over replicas, or of a single time average via
// batch means (falls back to nan when the run is too short to estimate).
double replica_std_err(const std::vector<double>& per_replica_means,
                       const std::vector<double>& seg_values,
                       const std::vector<double>& seg_durations, double horizon, int batches) {
    const std::size_t R = per_replica_means.size();
    if (R >= 2) {
        Moments m = sample_moments(per_replica_means);
        return std::sqrt(m.variance / static_cast<double>(R));
    }
    try {
        double c_hat = batch_means(seg_values, seg_durations, batches);
        return std::sqrt(c_hat / horizon);
    } catch (const std::exception&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

// Normalized weighted histogram density over [lo, hi]; out-of-range samples
// are clamped into the edge bins (matching stats::histogram).
std::vector<double> weighted_density(const WeightedSample& ws, double lo, double hi, int nbins) {
    std::vector<double> dens(static_cast<std::size_t>(nbins), 0.0);
    double total = 0.0;
    for (double w : ws.weights) total += w;
    if (!(total > 0.0) || !(hi > lo)) return dens;
    const double h = (hi - lo) / static_cast<double>(nbins);
    for (std::size_t i = 0; i < ws.values.size(); ++i) {
        int idx = static_cast<int>(std::floor((ws.values[i] - lo) / h));
        idx = std::clamp(idx, 0, nbins - 1);
        dens[static_cast<std::size_t>(idx)] += ws.weights[i];
    }
    for (double& d : dens) d /= total * h;
    return dens;
}

// ---------------------------------------------------------------------------
// torus
// ---------------------------------------------------------------------------

struct TorusCmd {
    int N = 0;  // 0 = use the degree of F
    double gamma = 1.0;
    double beta = 1.0;
    double dt = 1e-3;
    double horizon = 1e5;
    double z0 = 0.0;
    double sample_every = 5.0;
    int grid = 128;
    std::string fcos = "0,1";
    std::string fsin = "0.5,0";
};

void register_torus(CLI::App* cmd, ParamRegistry& reg, TorusCmd& c) {
    reg.add_int(cmd, "N", &c.N, "number of Fourier modes in the bias (0 = degree of F)");
    reg.add_double(cmd, "gamma", &c.gamma, "deposition rate (>= 0; 0 = plain Langevin)");
    reg.add_double(cmd, "beta", &c.beta, "inverse temperature (> 0; inf = noiseless)");
    reg.add_double(cmd, "dt", &c.dt, "Euler-Maruyama step size");
    reg.add_double(cmd, "horizon", &c.horizon, "simulated time");
    reg.add_double(cmd, "z0", &c.z0, "initial angle");
    reg.add_double(cmd, "sample_every", &c.sample_every, "coefficient trace cadence");
    reg.add_int(cmd, "grid", &c.grid, "evaluation grid size for the averaged penalty");
    reg.add_string(cmd, "fcos", &c.fcos, "cosine coefficients a_k of F, comma list (k = 1..)");
    reg.add_string(cmd, "fsin", &c.fsin, "sine coefficients b_k of F, comma list (k = 1..)");
}

void run_torus_cmd(const TorusCmd& c, const GlobalOpts& g, const fs::path& outdir) {
    require(c.N >= 0, "N must be >= 0 (got " + fmt(c.N) + ")");
    require(c.gamma >= 0.0 && std::isfinite(c.gamma),
            "gamma must be finite and >= 0 (got " + fmt(c.gamma) + ")");
    require(c.beta > 0.0, "beta must be > 0 (got " + fmt(c.beta) + ")");
    require(c.dt > 0.0, "dt must be > 0 (got " + fmt(c.dt) + ")");
    require(c.horizon > 0.0, "horizon must be > 0 (got " + fmt(c.horizon) + ")");
    require(c.sample_every > 0.0, "sample_every must be > 0 (got " + fmt(c.sample_every) + ")");
    require(c.grid >= 1, "grid must be >= 1 (got " + fmt(c.grid) + ")");

    std::vector<double> a = parse_double_list("fcos", c.fcos);
    std::vector<double> b = parse_double_list("fsin", c.fsin);
    a.resize(std::max(a.size(), b.size()), 0.0);
    b.resize(a.size(), 0.0);
    TrigPotential F(a, b);

    TorusRunConfig cfg;
    cfg.F = F;
    cfg.N = c.N;
    cfg.gamma = c.gamma;
    cfg.inv_temp = c.beta;
    cfg.dt = c.dt;
    cfg.horizon = c.horizon;
    cfg.sample_every = c.sample_every;
    cfg.z0 = c.z0;
    cfg.grid_size = c.grid;

    auto results = run_replicas<TorusRunResult>(g.replicas, g.threads, [&](int idx) {
        Rng rng = Rng::stream(g.seed, static_cast<std::uint64_t>(idx));
        return run_torus(cfg, rng);
    });

    const double R = static_cast<double>(g.replicas);
    const auto& grid = results[0].grid;
    const auto& target = results[0].target;
    std::vector<double> avg_psi(grid.size(), 0.0);
    for (const auto& r : results) {
        for (std::size_t i = 0; i < grid.size(); ++i) avg_psi[i] += r.avg_psi[i];
    }
    for (double& v : avg_psi) v /= R;
    double sup_gap = 0.0;
    CsvWriter profile(outdir / "torus_profile.csv", "z,avg_psi,minus_F_plus_mean");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        profile.row({fmt(grid[i]), fmt(avg_psi[i]), fmt(target[i])});
        sup_gap = std::max(sup_gap, std::fabs(avg_psi[i] - target[i]));
    }

    const int n_modes = results[0].state.bias.N;
    std::vector<double> avg_a(static_cast<std::size_t>(n_modes), 0.0), avg_b = avg_a,
                        var_a = avg_a, var_b = avg_a;
    std::vector<std::uint64_t> z_hist;
    for (const auto& r : results) {
        std::vector<double> ra = r.state.running_avg_alpha();
        std::vector<double> rb = r.state.running_avg_beta();
        TorusMoments mom = invariant_moments(r.trace);
        if (z_hist.empty()) z_hist.assign(mom.z_hist.size(), 0);
        for (std::size_t i = 0; i < z_hist.size(); ++i) z_hist[i] += mom.z_hist[i];
        for (int k = 0; k < n_modes; ++k) {
            const auto u = static_cast<std::size_t>(k);
            avg_a[u] += ra[u];
            avg_b[u] += rb[u];
            var_a[u] += mom.var_alpha[u];
            var_b[u] += mom.var_beta[u];
        }
    }
    CsvWriter modes(outdir / "torus_modes.csv", "mode,avg_alpha,avg_beta,var_alpha,var_beta");
    for (int k = 0; k < n_modes; ++k) {
        const auto u = static_cast<std::size_t>(k);
        avg_a[u] /= R;
        avg_b[u] /= R;
        var_a[u] /= R;
        var_b[u] /= R;
        modes.row({fmt(k + 1), fmt(avg_a[u]), fmt(avg_b[u]), fmt(var_a[u]), fmt(var_b[u])});
    }

    const double chi2 = chi2_uniform_stat(z_hist);
    CsvWriter summary(outdir / "summary.csv", "metric,value");
    summary.row({"sup_gap", fmt(sup_gap)});
    summary.row({"chi2_z", fmt(chi2)});
    summary.row({"chi2_critical_1pct",
                 fmt(chi2_critical(0.01, static_cast<int>(z_hist.size()) - 1))});
    for (int k = 1; k <= n_modes; ++k) {
        const auto u = static_cast<std::size_t>(k - 1);
        summary.row({"var_alpha_" + fmt(k), fmt(var_a[u])});
        summary.row({"var_beta_" + fmt(k), fmt(var_b[u])});
        summary.row({"var_target_" + fmt(k),
                     fmt(c.gamma / (static_cast<double>(k) * static_cast<double>(k)))});
    }
    summary.row({"horizon", fmt(c.horizon)});
    summary.row({"n_replicas", fmt(g.replicas)});
}

// ---------------------------------------------------------------------------
// discrete
// ---------------------------------------------------------------------------

struct DiscreteCmd {
    int K = 2;
    std::string A;  // empty = flat landscape
    double beta = 1.0;
    double gamma = 1.0;
    double horizon = 1e4;
    int i0 = 0;
    int density_bins = 64;
    int stride = 10;
    int batches = 32;
};

void register_discrete(CLI::App* cmd, ParamRegistry& reg, DiscreteCmd& c) {
    reg.add_int(cmd, "K", &c.K, "number of edges (sites 0..K)");
    reg.add_string(cmd, "A", &c.A, "site values A_0..A_K, comma list (empty = flat)");
    reg.add_double(cmd, "beta", &c.beta, "inverse temperature");
    reg.add_double(cmd, "gamma", &c.gamma, "deposition rate");
    reg.add_double(cmd, "horizon", &c.horizon, "simulated time");
    reg.add_int(cmd, "i0", &c.i0, "initial site");
    reg.add_int(cmd, "density_bins", &c.density_bins, "bins for the empirical density CSV");
    reg.add_int(cmd, "stride", &c.stride, "event-index thinning for the marginal sample");
    reg.add_int(cmd, "batches", &c.batches, "batches for the CLT variance estimate (>= 16)");
}

void run_discrete_cmd(const DiscreteCmd& c, const GlobalOpts& g, const fs::path& outdir,
                      const ParamRegistry& reg) {
    require(c.beta > 0.0 && std::isfinite(c.beta),
            "beta must be positive and finite (got " + fmt(c.beta) + ")");
    require(c.gamma > 0.0 && std::isfinite(c.gamma),
            "gamma must be positive and finite (got " + fmt(c.gamma) + ")");
    require(c.horizon > 0.0, "horizon must be > 0 (got " + fmt(c.horizon) + ")");
    require(c.density_bins >= 1, "density_bins must be >= 1 (got " + fmt(c.density_bins) + ")");
    require(c.stride >= 1, "stride must be >= 1 (got " + fmt(c.stride) + ")");
    require(c.batches >= 16, "batches must be >= 16 (got " + fmt(c.batches) + ")");

    int K = c.K;
    Landscape ls = Landscape::flat(std::max(K, 1));
    if (!trim(c.A).empty()) {
        std::vector<double> site_values = parse_double_list("A", c.A);
        if (reg.specified("K")) {
            require(static_cast<int>(site_values.size()) == K + 1,
                    "A must list K+1 = " + fmt(K + 1) + " site values (got " +
                        fmt(static_cast<int>(site_values.size())) + ")");
        } else {
            K = static_cast<int>(site_values.size()) - 1;
        }
        ls = Landscape(std::move(site_values));
    }
    require(K >= 1, "K must be >= 1 (got " + fmt(K) + ")");
    require(c.i0 >= 0 && c.i0 <= K, "i0 must lie in 0..K (got " + fmt(c.i0) + ")");

    SimParams p;
    p.inv_temp = c.beta;
    p.gamma = c.gamma;
    p.horizon = c.horizon;
    p.seed = g.seed;

    struct Rep {
        std::vector<double> M, c_hat;
        std::vector<WeightedSample> samples;
    };
    auto reps = run_replicas<Rep>(g.replicas, g.threads, [&](int idx) {
        Rng rng = Rng::stream(g.seed, static_cast<std::uint64_t>(idx));
        SimOptions opts;
        opts.log_segments = true;
        Trajectory traj = simulate(ls, PdmpState::start(K, c.i0), p, rng, opts);
        Rep rep;
        for (int k = 1; k <= K; ++k) {
            rep.M.push_back(ergodic_mean_x(traj, k));
            rep.c_hat.push_back(clt_variance(
                traj, p,
                [k](const std::vector<double>& x, int) {
                    return x[static_cast<std::size_t>(k - 1)];
                },
                c.batches));
            rep.samples.push_back(marginal_sample(traj, p, k, c.stride));
        }
        return rep;
    });

    const double R = static_cast<double>(g.replicas);
    CsvWriter means(outdir / "discrete_means.csv", "k,M_t,minus_Aprime,c_k_hat");
    CsvWriter summary(outdir / "summary.csv", "k,M_t,minus_Aprime,abs_gap,std_err,c_k_hat");
    CsvWriter density(outdir / "discrete_density.csv", "k,y,empirical_density,analytic_density");
    for (int k = 1; k <= K; ++k) {
        const auto u = static_cast<std::size_t>(k - 1);
        double M = 0.0, c_hat = 0.0;
        std::vector<double> per_replica;
        WeightedSample pooled;
        for (const auto& rep : reps) {
            M += rep.M[u];
            c_hat += rep.c_hat[u];
            per_replica.push_back(rep.M[u]);
            pooled.values.insert(pooled.values.end(), rep.samples[u].values.begin(),
                                 rep.samples[u].values.end());
            pooled.weights.insert(pooled.weights.end(), rep.samples[u].weights.begin(),
                                  rep.samples[u].weights.end());
        }
        M /= R;
        c_hat /= R;
        const double minus_Aprime = -ls.Aprime(k);
        means.row({fmt(k), fmt(M), fmt(minus_Aprime), fmt(c_hat)});
        double se;
        if (g.replicas >= 2) {
            Moments m = sample_moments(per_replica);
            se = std::sqrt(m.variance / R);
        } else {
            se = std::sqrt(c_hat / c.horizon);
        }
        summary.row({fmt(k), fmt(M), fmt(minus_Aprime), fmt(std::fabs(M - minus_Aprime)),
                     fmt(se), fmt(c_hat)});

        InvariantMarginal im = InvariantMarginal::make(ls, k, p);
        const double lo = -ls.Aprime(k) - im.half_width;
        const double hi = -ls.Aprime(k) + im.half_width;
        std::vector<double> emp = weighted_density(pooled, lo, hi, c.density_bins);
        const double h = (hi - lo) / static_cast<double>(c.density_bins);
        for (int bin = 0; bin < c.density_bins; ++bin) {
            const double y = lo + (static_cast<double>(bin) + 0.5) * h;
            density.row({fmt(k), fmt(y), fmt(emp[static_cast<std::size_t>(bin)]),
                         fmt(im.density(y))});
        }
    }
}

// ---------------------------------------------------------------------------
// rayknight-validate
// ---------------------------------------------------------------------------

struct RkCmd {
    int K = 2;
    int j = 0;
    double r = 1.0;
    double beta = 1.0;
    int i0 = 0;
    double horizon = 1e5;  // safety cap for the direct simulation
};

void register_rk(CLI::App* cmd, ParamRegistry& reg, RkCmd& c) {
    reg.add_int(cmd, "K", &c.K, "number of edges (sites 0..K)");
    reg.add_int(cmd, "j", &c.j, "site whose local time is stopped at r");
    reg.add_double(cmd, "r", &c.r, "local-time target at site j");
    reg.add_double(cmd, "beta", &c.beta, "inverse temperature");
    reg.add_int(cmd, "i0", &c.i0, "initial site of the walker");
    reg.add_double(cmd, "horizon", &c.horizon, "cap on the direct simulation time");
}

void run_rk_cmd(const RkCmd& c, const GlobalOpts& g, const fs::path& outdir) {
    require(c.K >= 1, "K must be >= 1 (got " + fmt(c.K) + ")");
    require(c.j >= 0 && c.j <= c.K, "j must lie in 0..K (got " + fmt(c.j) + ")");
    require(c.r > 0.0, "r must be > 0 (got " + fmt(c.r) + ")");
    require(c.beta > 0.0 && std::isfinite(c.beta),
            "beta must be positive and finite (got " + fmt(c.beta) + ")");
    require(c.i0 >= 0 && c.i0 <= c.K, "i0 must lie in 0..K (got " + fmt(c.i0) + ")");
    require(c.horizon > 0.0, "horizon must be > 0 (got " + fmt(c.horizon) + ")");

    const Landscape ls = Landscape::flat(c.K);
    SimParams p;
    p.inv_temp = c.beta;
    p.gamma = 1.0;
    p.horizon = c.horizon;
    p.seed = g.seed;

    struct Pair {
        LocalTimeProfile direct, walk;
    };
    auto pairs = run_replicas<Pair>(g.replicas, g.threads, [&](int idx) {
        Pair out;
        Rng rng_direct = Rng::stream(g.seed, static_cast<std::uint64_t>(idx));
        SimOptions opts;
        opts.log_segments = true;
        opts.stop_when = [&c](const PdmpState& s) {
            return s.local_times[static_cast<std::size_t>(c.j)] >= c.r;
        };
        Trajectory traj = simulate(ls, PdmpState::start(c.K, c.i0), p, rng_direct, opts);
        out.direct = direct_profile(traj, c.j, c.r);
        Rng rng_walk = Rng::stream(g.seed,
                                   static_cast<std::uint64_t>(g.replicas) +
                                       static_cast<std::uint64_t>(idx));
        out.walk = rk_walk_profile(std::vector<double>(static_cast<std::size_t>(c.K), 0.0),
                                   c.i0, c.j, c.r, c.beta, rng_walk);
        return out;
    });

    CsvWriter profiles(outdir / "rayknight_profiles.csv", "k,source,replica,lambda");
    for (int idx = 0; idx < g.replicas; ++idx) {
        const auto& pr = pairs[static_cast<std::size_t>(idx)];
        for (int k = 0; k <= c.K; ++k) {
            profiles.row({fmt(k), "direct", fmt(idx),
                          fmt(pr.direct.values[static_cast<std::size_t>(k)])});
        }
        for (int k = 0; k <= c.K; ++k) {
            profiles.row({fmt(k), "walk", fmt(idx),
                          fmt(pr.walk.values[static_cast<std::size_t>(k)])});
        }
    }

    CsvWriter summary(outdir / "summary.csv",
                      "k,ks_stat,p_value,ks_critical_1pct,n_direct,n_walk");
    for (int k = 0; k <= c.K; ++k) {
        WeightedSample direct_k, walk_k;
        for (const auto& pr : pairs) {
            direct_k.push(pr.direct.values[static_cast<std::size_t>(k)], 1.0);
            walk_k.push(pr.walk.values[static_cast<std::size_t>(k)], 1.0);
        }
        KsResult ks = ks_two_sample(direct_k, walk_k);
        summary.row({fmt(k), fmt(ks.statistic), fmt(ks.p_value),
                     fmt(ks_critical_two_sample(0.01, ks.n_eff_a, ks.n_eff_b)),
                     fmt(g.replicas), fmt(g.replicas)});
    }
}

// ---------------------------------------------------------------------------
// nonadiabatic-2d
// ---------------------------------------------------------------------------

struct TwoDCmd {
    double gamma = 1.0;
    double beta = 0.02;
    double dt = 1e-4;
    double horizon = 1e3;
    int intervals = 40;
    double x0 = 0.0;
    double y0 = 6.0;
    double burn_in = 0.5;
};

void register_twod(CLI::App* cmd, ParamRegistry& reg, TwoDCmd& c) {
    reg.add_double(cmd, "gamma", &c.gamma, "deposition rate");
    reg.add_double(cmd, "beta", &c.beta, "inverse temperature (reference setup: 0.02)");
    reg.add_double(cmd, "dt", &c.dt, "Euler-Maruyama step size");
    reg.add_double(cmd, "horizon", &c.horizon, "simulated time");
    reg.add_int(cmd, "intervals", &c.intervals, "bias mesh intervals over the circle");
    reg.add_double(cmd, "x0", &c.x0, "initial x");
    reg.add_double(cmd, "y0", &c.y0, "initial y");
    reg.add_double(cmd, "burn_in", &c.burn_in, "fraction of the horizon discarded before averaging");
}

void run_twod_cmd(const TwoDCmd& c, const GlobalOpts& g, const fs::path& outdir) {
    require(c.gamma >= 0.0 && std::isfinite(c.gamma),
            "gamma must be finite and >= 0 (got " + fmt(c.gamma) + ")");
    require(c.beta > 0.0 && std::isfinite(c.beta),
            "beta must be positive and finite (got " + fmt(c.beta) + ")");
    require(c.dt > 0.0, "dt must be > 0 (got " + fmt(c.dt) + ")");
    require(c.horizon > 0.0, "horizon must be > 0 (got " + fmt(c.horizon) + ")");
    require(c.intervals >= 3, "intervals must be >= 3 (got " + fmt(c.intervals) + ")");
    require(c.burn_in >= 0.0 && c.burn_in < 1.0,
            "burn_in must lie in [0, 1) (got " + fmt(c.burn_in) + ")");

    TwoDConfig cfg;
    cfg.gamma = c.gamma;
    cfg.inv_temp = c.beta;
    cfg.dt = c.dt;
    cfg.horizon = c.horizon;
    cfg.mesh_intervals = c.intervals;
    cfg.x0 = c.x0;
    cfg.y0 = c.y0;
    cfg.burn_in_fraction = c.burn_in;

    auto results = run_replicas<TwoDResult>(g.replicas, g.threads, [&](int idx) {
        Rng rng = Rng::stream(g.seed, static_cast<std::uint64_t>(idx));
        return run_2d(cfg, rng);
    });

    const double R = static_cast<double>(g.replicas);
    const auto& nodes = results[0].nodes;
    std::vector<double> avg(nodes.size(), 0.0);
    double gap_mean = 0.0;
    for (const auto& r : results) {
        for (std::size_t i = 0; i < nodes.size(); ++i) avg[i] += r.avg_slope[i];
        gap_mean += r.sup_gap;
    }
    gap_mean /= R;
    double gap_merged = 0.0;
    CsvWriter profile(outdir / "nonadiabatic_profile.csv", "x_node,avg_dpsi_dx,minus_Fprime");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        avg[i] /= R;
        const double target = results[0].minus_fprime[i];
        profile.row({fmt(nodes[i]), fmt(avg[i]), fmt(target)});
        gap_merged = std::max(gap_merged, std::fabs(avg[i] - target));
    }

    CsvWriter summary(outdir / "summary.csv", "metric,value");
    summary.row({"sup_gap_mean", fmt(gap_mean)});
    summary.row({"sup_gap_merged", fmt(gap_merged)});
    summary.row({"averaging_time", fmt(results[0].averaging_time)});
    summary.row({"gamma", fmt(c.gamma)});
    summary.row({"n_replicas", fmt(g.replicas)});
}

// ---------------------------------------------------------------------------
// bins
// ---------------------------------------------------------------------------

struct BinsCmd {
    std::string V = "0,2,2,0.5";
    std::string bins = "0,0,1,1";
    double beta = 1.0;
    double gamma = 1.0;
    double horizon = 1e5;
    int i0 = 0;
    double sample_every = 10.0;
    int lo_bin = 0;
    int hi_bin = -1;
    int batches = 32;
};

void register_bins(CLI::App* cmd, ParamRegistry& reg, BinsCmd& c) {
    reg.add_string(cmd, "V", &c.V, "site potential values V_0..V_K, comma list");
    reg.add_string(cmd, "bins", &c.bins, "bin id per site, comma list (surjective onto 0..B-1)");
    reg.add_double(cmd, "beta", &c.beta, "inverse temperature");
    reg.add_double(cmd, "gamma", &c.gamma, "deposition rate");
    reg.add_double(cmd, "horizon", &c.horizon, "simulated time");
    reg.add_int(cmd, "i0", &c.i0, "initial site");
    reg.add_double(cmd, "sample_every", &c.sample_every, "trace cadence for the X_t CSV");
    reg.add_int(cmd, "lo_bin", &c.lo_bin, "bin subtracted in X_t");
    reg.add_int(cmd, "hi_bin", &c.hi_bin, "bin added in X_t (-1 = last)");
    reg.add_int(cmd, "batches", &c.batches, "batches for the std-error estimate");
}

void run_bins_cmd(const BinsCmd& c, const GlobalOpts& g, const fs::path& outdir) {
    require(c.beta > 0.0 && std::isfinite(c.beta),
            "beta must be positive and finite (got " + fmt(c.beta) + ")");
    require(c.gamma > 0.0 && std::isfinite(c.gamma),
            "gamma must be positive and finite (got " + fmt(c.gamma) + ")");
    require(c.horizon > 0.0, "horizon must be > 0 (got " + fmt(c.horizon) + ")");
    require(c.sample_every > 0.0, "sample_every must be > 0 (got " + fmt(c.sample_every) + ")");
    require(c.batches >= 4, "batches must be >= 4 (got " + fmt(c.batches) + ")");

    BinnedModel model(parse_double_list("V", c.V), parse_int_list("bins", c.bins));
    require(c.i0 >= 0 && c.i0 <= model.K(),
            "i0 must lie in 0..K (got " + fmt(c.i0) + ")");
    SimParams p;
    p.inv_temp = c.beta;
    p.gamma = c.gamma;
    p.horizon = c.horizon;
    p.seed = g.seed;
    BinnedOptions opts;
    opts.i0 = c.i0;
    opts.lo_bin = c.lo_bin;
    opts.hi_bin = c.hi_bin;
    opts.sample_every = c.sample_every;
    opts.record_segments = true;

    auto trajs = run_replicas<BinnedTrajectory>(g.replicas, g.threads, [&](int idx) {
        Rng rng = Rng::stream(g.seed, static_cast<std::uint64_t>(idx));
        return binned_simulate(model, p, rng, opts);
    });

    // The two reference values assume the canonical double-well shape; emit
    // nan columns for other landscapes rather than failing the run.
    double heuristic = std::numeric_limits<double>::quiet_NaN();
    double fe_diff = std::numeric_limits<double>::quiet_NaN();
    try {
        heuristic = binned_heuristic_mean(model, p);
        fe_diff = binned_fe_diff(model, p);
    } catch (const std::exception&) {
    }

    const BinnedTrajectory& lead = trajs[0];
    CsvWriter trace(outdir / "bins_trace.csv", "t,X_t,ergodic_mean,heuristic,fe_diff");
    for (std::size_t i = 0; i < lead.trace_t.size(); ++i) {
        trace.row({fmt(lead.trace_t[i]), fmt(lead.trace_x[i]),
                   fmt(lead.trace_integral[i] / lead.trace_t[i]), fmt(heuristic),
                   fmt(fe_diff)});
    }

    std::vector<double> per_replica;
    std::uint64_t n_events = 0;
    for (const auto& tr : trajs) {
        per_replica.push_back(tr.integral_x / tr.t);
        n_events += tr.n_events;
    }
    double mean = 0.0;
    for (double m : per_replica) mean += m;
    mean /= static_cast<double>(g.replicas);
    const double se = replica_std_err(per_replica, lead.seg_values, lead.seg_durations,
                                      c.horizon, c.batches);

    CsvWriter summary(outdir / "summary.csv", "metric,value");
    summary.row({"ergodic_mean", fmt(mean)});
    summary.row({"std_err", fmt(se)});
    summary.row({"heuristic", fmt(heuristic)});
    summary.row({"fe_diff", fmt(fe_diff)});
    summary.row({"n_events", fmt(n_events)});
    summary.row({"horizon", fmt(c.horizon)});
    summary.row({"n_replicas", fmt(g.replicas)});
}

// ---------------------------------------------------------------------------
// simp
// ---------------------------------------------------------------------------

struct SimpCmd {
    double beta = 1.0;
    double gamma = 1.0;
    double dplus = 1.5;
    double dminus = 2.0;
    double horizon = 1e5;
    double x0 = 0.0;
    int i0 = 0;
    double sample_every = 1.0;
    int grid_bins = 81;
};

void register_simp(CLI::App* cmd, ParamRegistry& reg, SimpCmd& c) {
    reg.add_double(cmd, "beta", &c.beta, "inverse temperature");
    reg.add_double(cmd, "gamma", &c.gamma, "drift speed in the wells");
    reg.add_double(cmd, "dplus", &c.dplus, "right well depth D_+");
    reg.add_double(cmd, "dminus", &c.dminus, "left well depth D_-");
    reg.add_double(cmd, "horizon", &c.horizon, "simulated time");
    reg.add_double(cmd, "x0", &c.x0, "initial x");
    reg.add_int(cmd, "i0", &c.i0, "initial regime (-1, 0 or +1)");
    reg.add_double(cmd, "sample_every", &c.sample_every, "trace cadence");
    reg.add_int(cmd, "grid_bins", &c.grid_bins, "bins of the density comparison CSV");
}

void run_simp_cmd(const SimpCmd& c, const GlobalOpts& g, const fs::path& outdir) {
    require(c.beta > 0.0 && std::isfinite(c.beta),
            "beta must be positive and finite (got " + fmt(c.beta) + ")");
    require(c.gamma > 0.0 && std::isfinite(c.gamma),
            "gamma must be positive and finite (got " + fmt(c.gamma) + ")");
    require(c.dplus > 0.0 && std::isfinite(c.dplus),
            "dplus must be positive and finite (got " + fmt(c.dplus) + ")");
    require(c.dminus > 0.0 && std::isfinite(c.dminus),
            "dminus must be positive and finite (got " + fmt(c.dminus) + ")");
    require(c.horizon > 0.0, "horizon must be > 0 (got " + fmt(c.horizon) + ")");
    require(c.i0 >= -1 && c.i0 <= 1, "i0 must be -1, 0 or +1 (got " + fmt(c.i0) + ")");
    require(c.sample_every > 0.0, "sample_every must be > 0 (got " + fmt(c.sample_every) + ")");
    require(c.grid_bins >= 2, "grid_bins must be >= 2 (got " + fmt(c.grid_bins) + ")");

    SimpParams p;
    p.beta = c.beta;
    p.gamma = c.gamma;
    p.Dplus = c.dplus;
    p.Dminus = c.dminus;
    SimpOptions opts;
    opts.x0 = c.x0;
    opts.i0 = c.i0;
    opts.sample_every = c.sample_every;
    opts.record_segments = true;

    auto trajs = run_replicas<SimpTrajectory>(g.replicas, g.threads, [&](int idx) {
        Rng rng = Rng::stream(g.seed, static_cast<std::uint64_t>(idx));
        return simp_simulate(p, c.horizon, rng, opts);
    });

    SimpDensity dens = SimpDensity::make(p);
    // Plot window: central 1 - 2e-4 mass of the analytic marginal.
    auto cdf_inv = [&dens](double q) {
        double lo = dens.lo(), hi = dens.hi();
        for (int it = 0; it < 200 && hi - lo > 1e-12 * (dens.hi() - dens.lo()); ++it) {
            double mid = 0.5 * (lo + hi);
            (dens.marginal_cdf(mid) < q ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    const double x_lo = cdf_inv(1e-4);
    const double x_hi = cdf_inv(1.0 - 1e-4);

    std::vector<double> pooled;
    std::vector<double> per_replica;
    std::uint64_t n_events = 0;
    for (const auto& tr : trajs) {
        pooled.insert(pooled.end(), tr.trace_x.begin(), tr.trace_x.end());
        per_replica.push_back(tr.integral_x / tr.t);
        n_events += tr.n_events;
    }
    std::vector<std::uint64_t> counts = histogram(pooled, x_lo, x_hi, c.grid_bins);
    const double h = (x_hi - x_lo) / static_cast<double>(c.grid_bins);
    const double n_samples = static_cast<double>(pooled.size());

    CsvWriter density(outdir / "simp_density.csv", "x,mu_minus,mu_zero,mu_plus,empirical");
    for (int bin = 0; bin < c.grid_bins; ++bin) {
        const double x = x_lo + (static_cast<double>(bin) + 0.5) * h;
        const double emp = n_samples > 0.0
                               ? static_cast<double>(counts[static_cast<std::size_t>(bin)]) /
                                     (n_samples * h)
                               : 0.0;
        density.row({fmt(x), fmt(dens.mu_minus(x)), fmt(dens.mu_zero(x)), fmt(dens.mu_plus(x)),
                     fmt(emp)});
    }

    double mean = 0.0;
    for (double m : per_replica) mean += m;
    mean /= static_cast<double>(g.replicas);
    const double se = replica_std_err(per_replica, trajs[0].seg_values, trajs[0].seg_durations,
                                      c.horizon, 32);
    KsResult ks = ks_vs_cdf(WeightedSample::from_values(pooled),
                            [&dens](double x) { return dens.marginal_cdf(x); });

    CsvWriter summary(outdir / "summary.csv", "metric,value");
    summary.row({"sim_mean", fmt(mean)});
    summary.row({"std_err", fmt(se)});
    summary.row({"quad_mean", fmt(simp_mean_quadrature(p))});
    summary.row({"heuristic_mean", fmt(simp_heuristic_mean(p))});
    summary.row({"ks_marginal", fmt(ks.statistic)});
    summary.row({"n_events", fmt(n_events)});
    summary.row({"n_replicas", fmt(g.replicas)});
}

// ---------------------------------------------------------------------------
// Failure record
// ---------------------------------------------------------------------------

void write_failure(const fs::path& outdir, const std::string& subcommand,
                   const std::string& message) {
    std::error_code ec;
    fs::create_directories(outdir, ec);
    std::ofstream f(outdir / "failure.json", std::ios::binary);
    if (!f) return;
    nlohmann::json rec;
    rec["subcommand"] = subcommand;
    rec["error"] = message;
    f << rec.dump(2) << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"metasim: exact simulators and estimators for adaptive-bias dynamics"};
    app.require_subcommand(1);

    GlobalOpts g;
    std::string config_path;
    app.add_option("--config", config_path,
                   "flat 'key = value' parameter file; command-line flags take precedence");

    ParamRegistry globals;
    globals.add_u64(&app, "seed", &g.seed, "base RNG seed; replica i draws from stream (seed, i)");
    globals.add_int(&app, "replicas", &g.replicas, "number of independent replicas");
    globals.add_int(&app, "threads", &g.threads,
                    "worker threads for replicas (outputs do not depend on this)");
    globals.add_string(&app, "out", &g.out, "output directory for CSV artifacts");

    TorusCmd torus_cmd;
    DiscreteCmd discrete_cmd;
    RkCmd rk_cmd;
    TwoDCmd twod_cmd;
    BinsCmd bins_cmd;
    SimpCmd simp_cmd;
    ParamRegistry torus_reg, discrete_reg, rk_reg, twod_reg, bins_reg, simp_reg;

    CLI::App* torus_app =
        app.add_subcommand("torus", "continuous metadynamics on the circle: averaged bias vs -F");
    register_torus(torus_app, torus_reg, torus_cmd);
    CLI::App* discrete_app = app.add_subcommand(
        "discrete", "exact event-driven lattice walker: ergodic means and invariant density");
    register_discrete(discrete_app, discrete_reg, discrete_cmd);
    CLI::App* rk_app = app.add_subcommand(
        "rayknight-validate", "local-time profiles: direct simulation vs spatial Markov walk");
    register_rk(rk_app, rk_reg, rk_cmd);
    CLI::App* twod_app = app.add_subcommand(
        "nonadiabatic-2d", "2D toy system: time-averaged bias slope vs -F'");
    register_twod(twod_app, twod_reg, twod_cmd);
    CLI::App* bins_app = app.add_subcommand(
        "bins", "binned lattice walker: ergodic mean vs heuristic and free-energy difference");
    register_bins(bins_app, bins_reg, bins_cmd);
    CLI::App* simp_app =
        app.add_subcommand("simp", "three-state caricature: simulation vs exact invariant density");
    register_simp(simp_app, simp_reg, simp_cmd);

    for (CLI::App* sub : {torus_app, discrete_app, rk_app, twod_app, bins_app, simp_app}) {
        sub->fallthrough();
    }

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("metasim");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    ParamRegistry* reg = nullptr;
    if (name == "torus") reg = &torus_reg;
    else if (name == "discrete") reg = &discrete_reg;
    else if (name == "rayknight-validate") reg = &rk_reg;
    else if (name == "nonadiabatic-2d") reg = &twod_reg;
    else if (name == "bins") reg = &bins_reg;
    else reg = &simp_reg;

    try {
        if (!config_path.empty()) {
            auto kv = read_config_file(config_path);
            for (const auto& [key, value] : kv) {
                ParamEntry* e = globals.find(key);
                if (!e) e = reg->find(key);
                if (!e) {
                    throw std::runtime_error("unknown config key '" + key + "' for subcommand '" +
                                             name + "'");
                }
                e->file_set = true;
                if (e->opt->count() == 0) e->set(value);
            }
        }
        require(g.replicas >= 1, "replicas must be >= 1 (got " + fmt(g.replicas) + ")");
        require(g.threads >= 1, "threads must be >= 1 (got " + fmt(g.threads) + ")");

        const fs::path outdir(g.out);
        fs::create_directories(outdir);
        {
            std::error_code ec;
            fs::remove(outdir / "failure.json", ec);  // drop stale records
        }
        std::ofstream sidecar(outdir / "effective_config.txt", std::ios::binary);
        if (!sidecar) {
            throw std::runtime_error("cannot write " + (outdir / "effective_config.txt").string());
        }
        sidecar << "# effective configuration for subcommand '" << name << "'\n";
        globals.write_sidecar(sidecar);
        reg->write_sidecar(sidecar);
        sidecar.close();

        if (name == "torus") run_torus_cmd(torus_cmd, g, outdir);
        else if (name == "discrete") run_discrete_cmd(discrete_cmd, g, outdir, *reg);
        else if (name == "rayknight-validate") run_rk_cmd(rk_cmd, g, outdir);
        else if (name == "nonadiabatic-2d") run_twod_cmd(twod_cmd, g, outdir);
        else if (name == "bins") run_bins_cmd(bins_cmd, g, outdir);
        else run_simp_cmd(simp_cmd, g, outdir);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        write_failure(fs::path(g.out), name, ex.what());
        return 1;
    }
    return 0;
}

}  // namespace metasim
