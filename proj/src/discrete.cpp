#include "metasim/discrete.hpp"

#include "metasim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metasim {

Landscape::Landscape(std::vector<double> site_values) : A(std::move(site_values)) {
    if (A.size() < 2) throw std::invalid_argument("Landscape: need at least 2 sites");
    incr.resize(A.size() - 1);
    for (std::size_t k = 1; k < A.size(); ++k) incr[k - 1] = A[k] - A[k - 1];
}

Landscape Landscape::flat(int K) {
    if (K < 1) throw std::invalid_argument("Landscape::flat: K < 1");
    return Landscape(std::vector<double>(static_cast<std::size_t>(K) + 1, 0.0));
}

void SimParams::validate() const {
    if (!(inv_temp > 0.0)) throw std::invalid_argument("SimParams: inv_temp must be > 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("SimParams: gamma must be > 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("SimParams: horizon must be > 0");
}

PdmpState PdmpState::start(int K, int i0, std::vector<double> x0_in) {
    if (K < 1) throw std::invalid_argument("PdmpState::start: K < 1");
    if (i0 < 0 || i0 > K) throw std::invalid_argument("PdmpState::start: site out of range");
    PdmpState s;
    if (x0_in.empty()) x0_in.assign(static_cast<std::size_t>(K), 0.0);
    if (x0_in.size() != static_cast<std::size_t>(K))
        throw std::invalid_argument("PdmpState::start: x0 length != K");
    s.x0 = std::move(x0_in);
    s.i = i0;
    s.local_times.assign(static_cast<std::size_t>(K) + 1, 0.0);
    s.integral_x.assign(static_cast<std::size_t>(K), 0.0);
    return s;
}

std::vector<double> PdmpState::xvec(double gamma) const {
    std::vector<double> out(x0.size());
    for (int k = 1; k <= K(); ++k) out[static_cast<std::size_t>(k - 1)] = x(k, gamma);
    return out;
}

namespace {

// Exponents of the two jump rates; -inf marks an inactive channel.
struct LogRates {
    double left;
    double right;
    bool has_left;
    bool has_right;
};

LogRates log_rates(const PdmpState& s, const Landscape& ls, const SimParams& p) {
    LogRates lr{};
    const int K = s.K();
    lr.has_left = s.i > 0;
    lr.has_right = s.i < K;
    lr.left = lr.has_left ? p.inv_temp * (s.x(s.i, p.gamma) + ls.Aprime(s.i))
                          : -std::numeric_limits<double>::infinity();
    lr.right = lr.has_right ? p.inv_temp * (-(s.x(s.i + 1, p.gamma) + ls.Aprime(s.i + 1)))
                            : -std::numeric_limits<double>::infinity();
    return lr;
}

}  // namespace

JumpRates jump_rates(const PdmpState& s, const Landscape& ls, const SimParams& p) {
    if (ls.K() != s.K()) throw std::invalid_argument("jump_rates: landscape/state K mismatch");
    LogRates lr = log_rates(s, ls, p);
    JumpRates r;
    r.has_left = lr.has_left;
    r.has_right = lr.has_right;
    if (lr.has_left) r.left = std::exp(lr.left);
    if (lr.has_right) r.right = std::exp(lr.right);
    return r;
}

EventDraw growing_event_from_log_rates(double log_left, double log_right,
                                       double beta_gamma, double exp_draw,
                                       double unif_draw) {
    const bool has_left = log_left != -std::numeric_limits<double>::infinity();
    const bool has_right = log_right != -std::numeric_limits<double>::infinity();
    // Both active hazards share the envelope exp(beta gamma s) during the
    // dwell, so the total hazard is R0 exp(beta gamma s) and the integrated
    // hazard inverts in closed form.  Scaling by exp(-m) keeps the
    // arithmetic finite for extreme exponents.
    const double m = std::max(log_left, log_right);
    const double sl = has_left ? std::exp(log_left - m) : 0.0;
    const double sr = has_right ? std::exp(log_right - m) : 0.0;
    const double ssum = sl + sr;
    EventDraw ev;
    ev.dt = std::log1p(beta_gamma * exp_draw * std::exp(-m) / ssum) / beta_gamma;
    if (!has_left) {
        ev.direction = +1;
    } else if (!has_right) {
        ev.direction = -1;
    } else {
        // The channel ratio is constant in time: both rates carry the same
        // exponential envelope.
        ev.direction = (unif_draw * ssum < sl) ? -1 : +1;
    }
    return ev;
}

EventDraw constant_event_from_log_rates(double log_left, double log_right,
                                        double exp_draw, double unif_draw) {
    const bool has_left = log_left != -std::numeric_limits<double>::infinity();
    const bool has_right = log_right != -std::numeric_limits<double>::infinity();
    const double m = std::max(log_left, log_right);
    const double sl = has_left ? std::exp(log_left - m) : 0.0;
    const double sr = has_right ? std::exp(log_right - m) : 0.0;
    const double ssum = sl + sr;
    EventDraw ev;
    ev.dt = exp_draw * std::exp(-m) / ssum;
    if (!has_left) {
        ev.direction = +1;
    } else if (!has_right) {
        ev.direction = -1;
    } else {
        ev.direction = (unif_draw * ssum < sl) ? -1 : +1;
    }
    return ev;
}

EventDraw sample_next_event_from_draws(const PdmpState& s, const Landscape& ls,
                                       const SimParams& p, double exp_draw,
                                       double unif_draw) {
    LogRates lr = log_rates(s, ls, p);
    return growing_event_from_log_rates(lr.left, lr.right, p.inv_temp * p.gamma,
                                        exp_draw, unif_draw);
}

EventDraw sample_next_event(const PdmpState& s, const Landscape& ls, const SimParams& p,
                            Rng& rng) {
    const double e = rng.exponential();
    double u = 0.0;
    if (s.i > 0 && s.i < s.K()) u = rng.uniform();
    return sample_next_event_from_draws(s, ls, p, e, u);
}

void advance(PdmpState& s, double dt, const SimParams& p) {
    if (dt < 0.0) throw std::invalid_argument("advance: dt < 0");
    if (dt == 0.0) return;
    const int K = s.K();
    // Exact trapezoids: every x_k is constant over the dwell except x_i
    // (slope +gamma) and x_{i+1} (slope -gamma).
    for (int k = 1; k <= K; ++k)
        s.integral_x[static_cast<std::size_t>(k - 1)] += dt * s.x(k, p.gamma);
    const double quad = 0.5 * p.gamma * dt * dt;
    if (s.i >= 1) s.integral_x[static_cast<std::size_t>(s.i - 1)] += quad;
    if (s.i < K) s.integral_x[static_cast<std::size_t>(s.i)] -= quad;
    s.local_times[static_cast<std::size_t>(s.i)] += dt;
    s.t += dt;
}

Trajectory simulate(const Landscape& ls, PdmpState init, const SimParams& p, Rng& rng,
                    const SimOptions& opts) {
    p.validate();
    if (ls.K() != init.K()) throw std::invalid_argument("simulate: landscape/state K mismatch");
    Trajectory traj;
    traj.i0 = init.i;
    traj.state = std::move(init);
    PdmpState& s = traj.state;
    bool logging = opts.log_segments;
    traj.log_complete = logging;
    if (logging) traj.segments.reserve(1024);

    auto log_segment = [&](int site, double dur) {
        if (!logging) return;
        if (traj.segments.size() >= opts.log_cap) {
            // Too long to keep: only accumulators persist from here on.
            traj.segments.clear();
            traj.segments.shrink_to_fit();
            traj.log_complete = false;
            logging = false;
            return;
        }
        traj.segments.push_back(Segment{site, dur});
    };

    while (s.t < p.horizon) {
        EventDraw ev = sample_next_event(s, ls, p, rng);
        const double remaining = p.horizon - s.t;
        if (!(ev.dt < remaining)) {
            log_segment(s.i, remaining);
            advance(s, remaining, p);
            break;
        }
        log_segment(s.i, ev.dt);
        advance(s, ev.dt, p);
        s.i += ev.direction;
        ++traj.n_events;
        if (opts.on_event) opts.on_event(s);
        if (opts.stop_when && opts.stop_when(s)) break;
    }
    return traj;
}

double ergodic_mean_x(const Trajectory& traj, int k) {
    if (traj.state.t == 0.0) throw std::invalid_argument("ergodic_mean_x: t == 0");
    if (k < 1 || k > traj.state.K())
        throw std::invalid_argument("ergodic_mean_x: k out of range");
    return traj.state.integral_x[static_cast<std::size_t>(k - 1)] / traj.state.t;
}

InvariantMarginal InvariantMarginal::make(const Landscape& ls, int k, const SimParams& p) {
    p.validate();
    if (k < 1 || k > ls.K()) throw std::invalid_argument("InvariantMarginal: k out of range");
    InvariantMarginal im;
    im.Aprime = ls.Aprime(k);
    im.beta = p.inv_temp;
    im.gamma = p.gamma;
    // Half-width where the unnormalized density has dropped below ~1e-18 of
    // its peak: (2/(beta gamma)) (cosh(beta R) - 1) >= 41.5.
    im.half_width = std::acosh(1.0 + 20.75 * p.inv_temp * p.gamma) / p.inv_temp + 1.0 / p.inv_temp;
    im.norm = 1.0;
    const double lo = -im.Aprime - im.half_width;
    const double hi = -im.Aprime + im.half_width;
    im.norm = adaptive_quadrature([&im](double y) { return im.density(y); }, lo, hi, 1e-12);
    return im;
}

double InvariantMarginal::density(double y) const {
    return std::exp(-2.0 / (beta * gamma) * std::cosh(beta * (y + Aprime))) / norm;
}

double InvariantMarginal::cdf(double y) const {
    const double lo = -Aprime - half_width;
    if (y <= lo) return 0.0;
    if (y >= -Aprime + half_width) return 1.0;
    double v = adaptive_quadrature([this](double u) { return density(u); }, lo, y, 1e-10);
    return std::clamp(v, 0.0, 1.0);
}

namespace {

struct EventLogEntry {
    double t;
    int site;
    std::vector<double> x;
};

std::vector<EventLogEntry> run_logged(const Landscape& ls, int i0,
                                      const std::vector<double>& x0, const SimParams& p,
                                      std::uint64_t seed) {
    Rng rng(seed);
    std::vector<EventLogEntry> log;
    SimOptions opts;
    opts.on_event = [&](const PdmpState& s) {
        log.push_back(EventLogEntry{s.t, s.i, s.xvec(p.gamma)});
    };
    simulate(ls, PdmpState::start(ls.K(), i0, x0), p, rng, opts);
    return log;
}

}  // namespace

CouplingReport flatten_equivalence(const Landscape& ls, int i0, const SimParams& p,
                                   std::uint64_t seed) {
    const int K = ls.K();
    // Landscape run from x = 0; flat run from y = A'.
    auto la = run_logged(ls, i0, std::vector<double>(static_cast<std::size_t>(K), 0.0), p, seed);
    auto lf = run_logged(Landscape::flat(K), i0, ls.incr, p, seed);
    CouplingReport rep;
    rep.event_counts_match = la.size() == lf.size();
    rep.n_events = std::min(la.size(), lf.size());
    rep.times_identical = rep.event_counts_match;
    rep.sites_identical = rep.event_counts_match;
    for (std::size_t e = 0; e < rep.n_events; ++e) {
        if (la[e].t != lf[e].t) rep.times_identical = false;
        if (la[e].site != lf[e].site) rep.sites_identical = false;
        for (int k = 1; k <= K; ++k) {
            const auto u = static_cast<std::size_t>(k - 1);
            // Same addition the flat run performs at start-up: X + A' vs Y.
            double dev = std::fabs((la[e].x[u] + ls.incr[u]) - lf[e].x[u]);
            rep.max_abs_dev = std::max(rep.max_abs_dev, dev);
        }
    }
    return rep;
}

CouplingReport gamma_rescale_equivalence(const Landscape& ls, int i0, const SimParams& p,
                                         std::uint64_t seed) {
    const int K = ls.K();
    std::vector<double> scaledA(ls.A.size());
    for (std::size_t j = 0; j < ls.A.size(); ++j) scaledA[j] = ls.A[j] / p.gamma;
    SimParams pr = p;
    pr.inv_temp = p.inv_temp * p.gamma;
    pr.gamma = 1.0;
    auto la = run_logged(ls, i0, std::vector<double>(static_cast<std::size_t>(K), 0.0), p, seed);
    auto lr = run_logged(Landscape(scaledA), i0,
                         std::vector<double>(static_cast<std::size_t>(K), 0.0), pr, seed);
    CouplingReport rep;
    rep.event_counts_match = la.size() == lr.size();
    rep.n_events = std::min(la.size(), lr.size());
    rep.times_identical = rep.event_counts_match;
    rep.sites_identical = rep.event_counts_match;
    for (std::size_t e = 0; e < rep.n_events; ++e) {
        if (la[e].t != lr[e].t) rep.times_identical = false;
        if (la[e].site != lr[e].site) rep.sites_identical = false;
        for (int k = 1; k <= K; ++k) {
            const auto u = static_cast<std::size_t>(k - 1);
            double dev = std::fabs(la[e].x[u] / p.gamma - lr[e].x[u]);
            rep.max_abs_dev = std::max(rep.max_abs_dev, dev);
        }
    }
    return rep;
}

double generator_apply(const SiteFn& f, const std::vector<double>& x, int site,
                       const Landscape& ls, const SimParams& p) {
    const int K = ls.K();
    if (static_cast<int>(x.size()) != K) throw std::invalid_argument("generator_apply: bad x");
    if (site < 0 || site > K) throw std::invalid_argument("generator_apply: bad site");
    double out = 0.0;
    // Drift part: x_site grows, x_{site+1} shrinks, both at speed gamma.
    if (site >= 1) out += p.gamma * f.partial(x, site, site);
    if (site < K) out -= p.gamma * f.partial(x, site, site + 1);
    // Jump part.
    const double fx = f.value(x, site);
    if (site > 0) {
        double rate = std::exp(p.inv_temp * (x[static_cast<std::size_t>(site - 1)] + ls.Aprime(site)));
        out += rate * (f.value(x, site - 1) - fx);
    }
    if (site < K) {
        double rate = std::exp(-p.inv_temp * (x[static_cast<std::size_t>(site)] + ls.Aprime(site + 1)));
        out += rate * (f.value(x, site + 1) - fx);
    }
    return out;
}

double clt_variance(const Trajectory& traj, const SimParams& p,
                    const std::function<double(const std::vector<double>& x, int site)>& f,
                    int batches) {
    if (batches < 16) throw std::invalid_argument("clt_variance: insufficient batches (< 16)");
    if (!traj.log_complete) throw std::invalid_argument("clt_variance: needs a complete segment log");
    // Replay the path; per segment use the midpoint f value, whose rectangle
    // integral equals the exact trapezoid for f linear in x.
    PdmpState s = PdmpState::start(traj.state.K(), traj.i0, traj.state.x0);
    std::vector<double> values, durations;
    values.reserve(traj.segments.size());
    durations.reserve(traj.segments.size());
    for (const Segment& seg : traj.segments) {
        s.i = seg.site;
        PdmpState half = s;
        advance(half, 0.5 * seg.duration, p);
        values.push_back(f(half.xvec(p.gamma), seg.site));
        durations.push_back(seg.duration);
        advance(s, seg.duration, p);
    }
    return batch_means(values, durations, batches);
}

WeightedSample marginal_sample(const Trajectory& traj, const SimParams& p, int k, int stride) {
    if (!traj.log_complete)
        throw std::invalid_argument("marginal_sample: needs a complete segment log");
    if (stride < 1) throw std::invalid_argument("marginal_sample: stride < 1");
    if (k < 1 || k > traj.state.K()) throw std::invalid_argument("marginal_sample: k out of range");
    PdmpState s = PdmpState::start(traj.state.K(), traj.i0, traj.state.x0);
    WeightedSample ws;
    // Resolution of the occupation measure: dwells whose ramp in x is wider
    // than this are split so each slice carries at most this much sweep.
    const double slice_width = 0.05;
    std::size_t idx = 0;
    for (const Segment& seg : traj.segments) {
        s.i = seg.site;
        if (idx % static_cast<std::size_t>(stride) == 0) {
            const double v0 = s.x(k, p.gamma);
            const double rate =
                p.gamma * ((seg.site == k ? 1.0 : 0.0) - (seg.site == k - 1 ? 1.0 : 0.0));
            const double sweep = std::fabs(rate) * seg.duration;
            const int slices = 1 + static_cast<int>(sweep / slice_width);
            const double w = seg.duration / slices;
            for (int j = 0; j < slices; ++j) {
                ws.push(v0 + rate * seg.duration * (2 * j + 1) / (2.0 * slices), w);
            }
        }
        advance(s, seg.duration, p);
        ++idx;
    }
    return ws;
}

}  // namespace metasim
