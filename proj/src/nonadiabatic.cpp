#include "metasim/nonadiabatic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "metasim/stats.hpp"

namespace metasim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Reduce an angle to (-pi, pi].
double wrap_x(double x) {
    double w = std::remainder(x, kTwoPi);
    if (w <= -kPi) w += kTwoPi;
    return w;
}

double logaddexp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace

// --- 2D potential -----------------------------------------------------------

double potential_v(double x, double y) {
    double g = y - 3.0 * std::cos(2.0 * x) - 3.0;
    return std::cos(2.0 * x) + 0.05 * g * g + 0.5 * std::sin(x);
}

std::array<double, 2> grad_v(double x, double y) {
    double s2 = std::sin(2.0 * x);
    double g = y - 3.0 * std::cos(2.0 * x) - 3.0;
    return {-2.0 * s2 + 0.6 * s2 * g + 0.5 * std::cos(x), 0.1 * g};
}

double free_energy_f(double x) { return std::cos(2.0 * x) + 0.5 * std::sin(x); }

double free_energy_fprime(double x) {
    return -2.0 * std::sin(2.0 * x) + 0.5 * std::cos(x);
}

// --- Bias mesh --------------------------------------------------------------

BiasMesh::BiasMesh(int intervals) : I_(intervals) {
    if (intervals < 3) throw std::invalid_argument("BiasMesh: need at least 3 intervals");
    eps_ = kTwoPi / static_cast<double>(I_);
    psi_.assign(static_cast<std::size_t>(I_), 0.0);
}

double BiasMesh::node_pos(int j) const {
    return -kPi + static_cast<double>(j + 1) * eps_;
}

namespace {

// Index of the cell [-pi + c eps, -pi + (c+1) eps] containing the wrapped x.
int cell_index(double xw, double eps, int I) {
    int c = static_cast<int>(std::ceil((xw + kPi) / eps)) - 1;
    if (c < 0) c = 0;
    if (c >= I) c = I - 1;
    return c;
}

}  // namespace

double BiasMesh::value(double x) const {
    double xw = wrap_x(x);
    int c = cell_index(xw, eps_, I_);
    int left = (c - 1 + I_) % I_;  // node at the cell's left edge
    double left_pos = -kPi + static_cast<double>(c) * eps_;
    double slope = (psi_[static_cast<std::size_t>(c)] - psi_[static_cast<std::size_t>(left)]) / eps_;
    return psi_[static_cast<std::size_t>(left)] + (xw - left_pos) * slope;
}

double BiasMesh::slope_at(double x) const {
    double xw = wrap_x(x);
    int c = cell_index(xw, eps_, I_);
    int left = (c - 1 + I_) % I_;
    return (psi_[static_cast<std::size_t>(c)] - psi_[static_cast<std::size_t>(left)]) / eps_;
}

double BiasMesh::node_slope(int j) const {
    if (j < 0 || j >= I_) throw std::invalid_argument("BiasMesh::node_slope: node out of range");
    int up = (j + 1) % I_;
    int dn = (j - 1 + I_) % I_;
    return (psi_[static_cast<std::size_t>(up)] - psi_[static_cast<std::size_t>(dn)]) / (2.0 * eps_);
}

void BiasMesh::deposit(double x, double gamma, double dt) {
    if (!(gamma >= 0.0) || !(dt >= 0.0)) {
        throw std::invalid_argument("BiasMesh::deposit: gamma and dt must be >= 0");
    }
    if (gamma == 0.0 || dt == 0.0) return;
    const double amp = gamma * dt / (std::sqrt(kTwoPi) * eps_);
    const double inv2e2 = 1.0 / (2.0 * eps_ * eps_);
    const double xw = wrap_x(x);
    if (I_ >= 17) {
        // Wide circle: nearest periodic image only, nodes within 8 cells.
        // Omitted terms are below e^{-32} ~ 1.3e-14 of the peak.
        int j0 = static_cast<int>(std::llround((xw + kPi) / eps_ - 1.0));
        j0 = ((j0 % I_) + I_) % I_;
        double base = std::remainder(node_pos(j0) - xw, kTwoPi);
        for (int dj = -8; dj <= 8; ++dj) {
            int j = ((j0 + dj) % I_ + I_) % I_;
            double d = base + static_cast<double>(dj) * eps_;
            psi_[static_cast<std::size_t>(j)] += amp * std::exp(-d * d * inv2e2);
        }
    } else {
        // Narrow circle: the Gaussian wraps around, so visit every node and
        // sum periodic images explicitly.
        for (int j = 0; j < I_; ++j) {
            double acc = 0.0;
            for (int m = -3; m <= 3; ++m) {
                double d = node_pos(j) - xw - kTwoPi * static_cast<double>(m);
                acc += std::exp(-d * d * inv2e2);
            }
            psi_[static_cast<std::size_t>(j)] += amp * acc;
        }
    }
}

// --- 2D driver --------------------------------------------------------------

void step_2d(TwoDState& st, const TwoDConfig& cfg, double noise_x, double noise_y,
             bool accumulate) {
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("step_2d: dt must be > 0");
    if (!(cfg.inv_temp > 0.0)) throw std::invalid_argument("step_2d: inv_temp must be > 0");
    auto g = grad_v(st.x, st.y);
    double bias_slope = st.mesh.slope_at(st.x);
    double sigma = std::sqrt(2.0 * cfg.dt / cfg.inv_temp);
    st.x = wrap_x(st.x - (g[0] + bias_slope) * cfg.dt + sigma * noise_x);
    st.y += -g[1] * cfg.dt + sigma * noise_y;
    st.mesh.deposit(st.x, cfg.gamma, cfg.dt);
    st.t += cfg.dt;
    if (accumulate) {
        const int I = st.mesh.intervals();
        if (st.slope_accum.size() != static_cast<std::size_t>(I)) {
            st.slope_accum.assign(static_cast<std::size_t>(I), 0.0);
        }
        const std::vector<double>& psi = st.mesh.values();
        const double inv2e = 1.0 / (2.0 * st.mesh.spacing());
        for (int j = 0; j < I; ++j) {
            int up = j + 1 == I ? 0 : j + 1;
            int dn = j == 0 ? I - 1 : j - 1;
            st.slope_accum[static_cast<std::size_t>(j)] +=
                (psi[static_cast<std::size_t>(up)] - psi[static_cast<std::size_t>(dn)]) * inv2e;
        }
        ++st.accum_count;
    }
}

TwoDResult run_2d(const TwoDConfig& cfg, Rng& rng) {
    if (!(cfg.horizon > 0.0)) throw std::invalid_argument("run_2d: horizon must be > 0");
    if (!(cfg.burn_in_fraction >= 0.0) || !(cfg.burn_in_fraction < 1.0)) {
        throw std::invalid_argument("run_2d: burn_in_fraction must lie in [0, 1)");
    }
    TwoDResult res;
    TwoDState& st = res.state;
    st.mesh = BiasMesh(cfg.mesh_intervals);
    st.x = wrap_x(cfg.x0);
    st.y = cfg.y0;
    st.slope_accum.assign(static_cast<std::size_t>(cfg.mesh_intervals), 0.0);

    const long long steps = std::llround(cfg.horizon / cfg.dt);
    if (steps < 1) throw std::invalid_argument("run_2d: horizon shorter than one step");
    long long burn = std::llround(cfg.burn_in_fraction * static_cast<double>(steps));
    if (burn >= steps) burn = steps - 1;
    for (long long step = 1; step <= steps; ++step) {
        double nx = rng.normal();
        double ny = rng.normal();
        step_2d(st, cfg, nx, ny, step > burn);
    }

    const int I = st.mesh.intervals();
    res.averaging_time = static_cast<double>(st.accum_count) * cfg.dt;
    res.nodes.reserve(static_cast<std::size_t>(I));
    res.avg_slope.reserve(static_cast<std::size_t>(I));
    res.minus_fprime.reserve(static_cast<std::size_t>(I));
    for (int j = 0; j < I; ++j) {
        double node = st.mesh.node_pos(j);
        double avg = st.slope_accum[static_cast<std::size_t>(j)] /
                     static_cast<double>(st.accum_count);
        res.nodes.push_back(node);
        res.avg_slope.push_back(avg);
        res.minus_fprime.push_back(-free_energy_fprime(node));
        double gap = std::fabs(avg + free_energy_fprime(node));
        if (gap > res.sup_gap) res.sup_gap = gap;
    }
    return res;
}

// --- Binned walker ----------------------------------------------------------

BinnedModel::BinnedModel(std::vector<double> site_potential, std::vector<int> bins)
    : V(std::move(site_potential)), bin_of(std::move(bins)) {
    if (V.size() < 2) throw std::invalid_argument("BinnedModel: need at least two sites");
    if (bin_of.size() != V.size()) {
        throw std::invalid_argument("BinnedModel: bin map and potential sizes differ");
    }
    int maxb = -1;
    for (int b : bin_of) {
        if (b < 0) throw std::invalid_argument("BinnedModel: negative bin id");
        maxb = std::max(maxb, b);
    }
    n_bins = maxb + 1;
    std::vector<char> seen(static_cast<std::size_t>(n_bins), 0);
    for (int b : bin_of) seen[static_cast<std::size_t>(b)] = 1;
    for (char s : seen) {
        if (!s) throw std::invalid_argument("BinnedModel: bin ids must cover 0..B");
    }
    incr.resize(V.size() - 1);
    for (std::size_t k = 1; k < V.size(); ++k) incr[k - 1] = V[k] - V[k - 1];
}

BinnedTrajectory binned_simulate(const BinnedModel& model, const SimParams& p, Rng& rng,
                                 const BinnedOptions& opts) {
    p.validate();
    const int K = model.K();
    const int lob = opts.lo_bin;
    const int hib = opts.hi_bin < 0 ? model.n_bins - 1 : opts.hi_bin;
    if (lob < 0 || lob >= model.n_bins || hib < 0 || hib >= model.n_bins || lob == hib) {
        throw std::invalid_argument("binned_simulate: bad lo/hi bins");
    }
    if (opts.i0 < 0 || opts.i0 > K) throw std::invalid_argument("binned_simulate: i0 out of range");

    BinnedTrajectory traj;
    traj.site = opts.i0;
    traj.l.assign(static_cast<std::size_t>(model.n_bins), 0.0);
    const double beta = p.inv_temp;
    const double gamma = p.gamma;
    const double bg = p.inv_temp * p.gamma;

    double next_sample = opts.sample_every;
    std::uint64_t sample_idx = 1;

    while (traj.t < p.horizon) {
        const int k = traj.site;
        const int b = model.bin_of[static_cast<std::size_t>(k)];
        const bool has_left = k > 0;
        const bool has_right = k < K;
        const int bl = has_left ? model.bin_of[static_cast<std::size_t>(k) - 1] : 0;
        const int br = has_right ? model.bin_of[static_cast<std::size_t>(k) + 1] : 0;
        // Log jump rates at the start of the dwell; same shape as the per-site
        // walker with the bin local-time difference in place of the edge value.
        const double log_l =
            has_left ? beta * (gamma * (traj.l[static_cast<std::size_t>(b)] -
                                        traj.l[static_cast<std::size_t>(bl)]) +
                               model.incr[static_cast<std::size_t>(k) - 1])
                     : -kInf;
        const double log_r =
            has_right ? beta * (-(gamma * (traj.l[static_cast<std::size_t>(br)] -
                                           traj.l[static_cast<std::size_t>(b)]) +
                                  model.incr[static_cast<std::size_t>(k)]))
                      : -kInf;
        const bool grow_l = has_left && bl != b;
        const bool grow_r = has_right && br != b;

        EventDraw ev;
        if (has_left && has_right && grow_l != grow_r) {
            // Mixed channel types: no common envelope, so run competing
            // clocks (left drawn first) with each channel's own inversion.
            double el = rng.exponential();
            double er = rng.exponential();
            double dl = grow_l ? std::log1p(bg * el * std::exp(-log_l)) / bg
                               : el * std::exp(-log_l);
            double dr = grow_r ? std::log1p(bg * er * std::exp(-log_r)) / bg
                               : er * std::exp(-log_r);
            ev.dt = std::min(dl, dr);
            ev.direction = dl <= dr ? -1 : +1;
        } else {
            // Single channel, or both channels of one type: shared kernels,
            // with the uniform consumed only when both channels are active.
            double e = rng.exponential();
            double u = (has_left && has_right) ? rng.uniform() : 0.0;
            bool growing = has_left ? grow_l : grow_r;
            ev = growing ? growing_event_from_log_rates(log_l, log_r, bg, e, u)
                         : constant_event_from_log_rates(log_l, log_r, e, u);
        }

        const double remaining = p.horizon - traj.t;
        const bool cut = !(ev.dt < remaining);
        const double dur = cut ? remaining : ev.dt;

        const double slope = (b == hib ? gamma : 0.0) - (b == lob ? gamma : 0.0);
        const double x_start = gamma * (traj.l[static_cast<std::size_t>(hib)] -
                                        traj.l[static_cast<std::size_t>(lob)]);
        const double integral0 = traj.integral_x;
        traj.integral_x = integral0 + dur * x_start + 0.5 * slope * dur * dur;
        if (opts.sample_every > 0.0) {
            const double t_end = traj.t + dur;
            while (next_sample <= t_end) {
                const double ds = next_sample - traj.t;
                traj.trace_t.push_back(next_sample);
                traj.trace_x.push_back(x_start + slope * ds);
                traj.trace_integral.push_back(integral0 + ds * x_start + 0.5 * slope * ds * ds);
                ++sample_idx;
                next_sample = opts.sample_every * static_cast<double>(sample_idx);
            }
        }
        if (opts.record_segments) {
            traj.seg_values.push_back(x_start + 0.5 * slope * dur);
            traj.seg_durations.push_back(dur);
        }
        traj.l[static_cast<std::size_t>(b)] += dur;
        traj.t += dur;
        if (cut) break;
        traj.site += ev.direction;
        ++traj.n_events;
    }
    return traj;
}

namespace {

std::pair<double, double> well_depths(const BinnedModel& model) {
    const int K = model.K();
    if (K < 2) throw std::invalid_argument("binned reference value: need K >= 2");
    double dm = model.V[1] - model.V[0];
    double dp = model.V[static_cast<std::size_t>(K) - 1] - model.V[static_cast<std::size_t>(K)];
    if (!(dm > 0.0) || !(dp > 0.0)) {
        throw std::invalid_argument(
            "binned reference value: V must be a double well (V1 > V0 and V_{K-1} > V_K)");
    }
    return {dm, dp};
}

}  // namespace

double binned_heuristic_mean(const BinnedModel& model, const SimParams& p) {
    auto [dm, dp] = well_depths(model);
    return p.gamma * (std::exp(p.inv_temp * dp) - std::exp(p.inv_temp * dm));
}

double binned_fe_diff(const BinnedModel& model, const SimParams& p) {
    auto [dm, dp] = well_depths(model);
    const double b = p.inv_temp;
    return (std::log1p(std::exp(2.0 * b * dp)) - std::log1p(std::exp(2.0 * b * dm))) /
           (2.0 * b);
}

// --- Three-state model -------------------------------------------------------

void SimpParams::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument("SimpParams: beta must be positive and finite");
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("SimpParams: gamma must be positive and finite");
    }
    if (!(Dplus > 0.0) || !std::isfinite(Dplus) || !(Dminus > 0.0) || !std::isfinite(Dminus)) {
        throw std::invalid_argument("SimpParams: well depths must be positive and finite");
    }
}

double SimpParams::lambda_plus() const { return std::exp(-beta * Dplus); }
double SimpParams::lambda_minus() const { return std::exp(-beta * Dminus); }

SimpTrajectory simp_simulate(const SimpParams& p, double horizon, Rng& rng,
                             const SimpOptions& opts) {
    p.validate();
    if (!(horizon > 0.0)) throw std::invalid_argument("simp_simulate: horizon must be > 0");
    if (opts.i0 < -1 || opts.i0 > 1) {
        throw std::invalid_argument("simp_simulate: i0 must be -1, 0 or +1");
    }
    const double beta = p.beta;
    const double gamma = p.gamma;
    const double lp = p.lambda_plus();
    const double lm = p.lambda_minus();

    SimpTrajectory traj;
    traj.x = opts.x0;
    traj.i = opts.i0;
    double next_sample = opts.sample_every;
    std::uint64_t sample_idx = 1;

    while (traj.t < horizon) {
        double dt;
        int target;
        if (traj.i == 0) {
            // Competing constant rates e^{beta x}/lambda_- (to -) and
            // e^{-beta x}/lambda_+ (to +).
            double log_minus = beta * traj.x + beta * p.Dminus;
            double log_plus = -beta * traj.x + beta * p.Dplus;
            double e = rng.exponential();
            double u = rng.uniform();
            EventDraw ev = constant_event_from_log_rates(log_minus, log_plus, e, u);
            dt = ev.dt;
            target = ev.direction;
        } else {
            dt = rng.exponential() / (traj.i > 0 ? lp : lm);
            target = 0;
        }

        const double remaining = horizon - traj.t;
        const bool cut = !(dt < remaining);
        const double dur = cut ? remaining : dt;
        const double slope = gamma * static_cast<double>(traj.i);
        const double x_start = traj.x;

        traj.integral_x += dur * x_start + 0.5 * slope * dur * dur;
        if (opts.sample_every > 0.0) {
            const double t_end = traj.t + dur;
            while (next_sample <= t_end) {
                traj.trace_t.push_back(next_sample);
                traj.trace_x.push_back(x_start + slope * (next_sample - traj.t));
                ++sample_idx;
                next_sample = opts.sample_every * static_cast<double>(sample_idx);
            }
        }
        if (opts.record_segments) {
            traj.seg_values.push_back(x_start + 0.5 * slope * dur);
            traj.seg_durations.push_back(dur);
        }
        if (opts.record_plus_holdings && traj.i == 1 && !cut) {
            traj.plus_holding_times.push_back(dt);
        }
        traj.x += slope * dur;
        traj.t += dur;
        if (cut) break;
        traj.i = target;
        ++traj.n_events;
    }
    return traj;
}

double SimpDensity::log_mu_plus_unnorm(double x) const {
    const double lp = p_.lambda_plus();
    const double lm = p_.lambda_minus();
    // ln mu_+ = (lambda_-/gamma) x
    //           - (lambda_+ + lambda_-)/(2 beta gamma) ln(lambda_+ e^{2 beta x} + lambda_-)
    const double lse = logaddexp(-p_.beta * p_.Dplus + 2.0 * p_.beta * x, -p_.beta * p_.Dminus);
    return (lm / p_.gamma) * x - (lp + lm) / (2.0 * p_.beta * p_.gamma) * lse;
}

double SimpDensity::log_ratio_zero(double x) const {
    const double lp = p_.lambda_plus();
    const double lm = p_.lambda_minus();
    // mu_0/mu_+ = lambda_+ lambda_- (lambda_+ + lambda_-) /
    //             (lambda_+ e^{beta x} + lambda_- e^{-beta x})
    const double den = logaddexp(-p_.beta * p_.Dplus + p_.beta * x,
                                 -p_.beta * p_.Dminus - p_.beta * x);
    return -p_.beta * p_.Dplus - p_.beta * p_.Dminus + std::log(lp + lm) - den;
}

SimpDensity SimpDensity::make(const SimpParams& p) {
    p.validate();
    SimpDensity d;
    d.p_ = p;
    const double lp = p.lambda_plus();
    const double lm = p.lambda_minus();
    // Peak sits near x0 = (Dplus - Dminus)/2; the tails decay at rates
    // lambda_-/gamma (left) and lambda_+/gamma (right).  40 decay lengths
    // put the truncated tails below 1e-16 of the peak.
    const double center = 0.5 * (p.Dplus - p.Dminus);
    const double reach = 40.0 * p.gamma * std::max(1.0 / lp, 1.0 / lm) + 10.0;
    d.lo_ = center - reach;
    d.hi_ = center + reach;

    auto unnorm = [&d](double x) {
        return std::exp(d.log_mu_plus_unnorm(x)) * (2.0 + std::exp(d.log_ratio_zero(x)));
    };
    double mass = adaptive_quadrature(unnorm, d.lo_, center, 1e-12) +
                  adaptive_quadrature(unnorm, center, d.hi_, 1e-12);
    d.log_norm = std::log(mass);

    // Tabulate the marginal CDF on a uniform grid (composite Simpson per
    // interval); accurate far beyond KS resolution.
    const int n = 16384;
    const double h = (d.hi_ - d.lo_) / static_cast<double>(n);
    d.cdf_x_.resize(static_cast<std::size_t>(n) + 1);
    d.cdf_v_.resize(static_cast<std::size_t>(n) + 1);
    d.cdf_x_[0] = d.lo_;
    d.cdf_v_[0] = 0.0;
    double f_left = unnorm(d.lo_);
    for (int i = 0; i < n; ++i) {
        double x_r = d.lo_ + h * static_cast<double>(i + 1);
        double f_mid = unnorm(x_r - 0.5 * h);
        double f_right = unnorm(x_r);
        d.cdf_x_[static_cast<std::size_t>(i) + 1] = x_r;
        d.cdf_v_[static_cast<std::size_t>(i) + 1] =
            d.cdf_v_[static_cast<std::size_t>(i)] + h / 6.0 * (f_left + 4.0 * f_mid + f_right);
        f_left = f_right;
    }
    const double total = d.cdf_v_.back();
    for (double& v : d.cdf_v_) v /= total;
    return d;
}

double SimpDensity::mu_plus(double x) const {
    return std::exp(log_mu_plus_unnorm(x) - log_norm);
}

double SimpDensity::mu_zero(double x) const {
    return std::exp(log_mu_plus_unnorm(x) - log_norm + log_ratio_zero(x));
}

double SimpDensity::marginal(double x) const {
    return std::exp(log_mu_plus_unnorm(x) - log_norm) * (2.0 + std::exp(log_ratio_zero(x)));
}

double SimpDensity::marginal_cdf(double x) const {
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    auto it = std::upper_bound(cdf_x_.begin(), cdf_x_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - cdf_x_.begin());  // first node > x
    double x0 = cdf_x_[i - 1], x1 = cdf_x_[i];
    double v0 = cdf_v_[i - 1], v1 = cdf_v_[i];
    return v0 + (v1 - v0) * (x - x0) / (x1 - x0);
}

std::array<double, 3> simp_invariant_density(double x, const SimpParams& p) {
    SimpDensity d = SimpDensity::make(p);
    return {d.mu_minus(x), d.mu_zero(x), d.mu_plus(x)};
}

double simp_mean_quadrature(const SimpParams& p) {
    SimpDensity d = SimpDensity::make(p);
    const double center = 0.5 * (p.Dplus - p.Dminus);
    auto f = [&d](double x) { return d.marginal(x); };
    auto xf = [&d](double x) { return x * d.marginal(x); };
    double mass = adaptive_quadrature(f, d.lo(), center, 1e-11) +
                  adaptive_quadrature(f, center, d.hi(), 1e-11);
    double first = adaptive_quadrature(xf, d.lo(), center, 1e-11) +
                   adaptive_quadrature(xf, center, d.hi(), 1e-11);
    return first / mass;
}

double simp_heuristic_mean(const SimpParams& p) {
    return p.gamma * (std::exp(p.beta * p.Dplus) - std::exp(p.beta * p.Dminus));
}

}  // namespace metasim
