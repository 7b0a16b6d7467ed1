#include "doctest.h"

#include "metasim/discrete.hpp"
#include "metasim/rng.hpp"
#include "metasim/stats.hpp"

#include <cmath>
#include <vector>

using namespace metasim;

TEST_CASE("landscape: increments and validation") {
    Landscape ls({0.0, 1.0, 1.0, 0.0});
    CHECK(ls.K() == 3);
    CHECK(ls.Aprime(1) == 1.0);
    CHECK(ls.Aprime(2) == 0.0);
    CHECK(ls.Aprime(3) == -1.0);
    CHECK(Landscape::flat(2).Aprime(1) == 0.0);
    CHECK_THROWS_AS(Landscape({1.0}), std::invalid_argument);  // needs K >= 1
}

TEST_CASE("jump_rates: flat interior, edge sites, tilted state") {
    SimParams p;
    Landscape ls = Landscape::flat(2);

    PdmpState mid = PdmpState::start(2, 1);
    JumpRates r = jump_rates(mid, ls, p);
    CHECK(r.has_left);
    CHECK(r.has_right);
    CHECK(r.left == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.right == doctest::Approx(1.0).epsilon(1e-15));

    PdmpState lo = PdmpState::start(2, 0);
    r = jump_rates(lo, ls, p);
    CHECK_FALSE(r.has_left);
    CHECK(r.has_right);

    PdmpState hi = PdmpState::start(2, 2);
    r = jump_rates(hi, ls, p);
    CHECK(r.has_left);
    CHECK_FALSE(r.has_right);

    // x_1 = ln 2 doubles the left rate out of site 1.
    PdmpState tilted = PdmpState::start(1, 1, {std::log(2.0)});
    r = jump_rates(tilted, Landscape::flat(1), p);
    CHECK(r.has_left);
    CHECK_FALSE(r.has_right);
    CHECK(r.left == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("sample_next_event_from_draws: closed-form dwell time") {
    SimParams p;  // beta = gamma = 1
    Landscape ls = Landscape::flat(2);
    PdmpState mid = PdmpState::start(2, 1);
    // Both rates 1 and envelope e^s: integrated hazard 2(e^dt - 1), so the
    // Exp(1) draw E = 2(e - 1) lands exactly at dt = 1.
    EventDraw ev = sample_next_event_from_draws(mid, ls, p, 2.0 * (std::exp(1.0) - 1.0), 0.9);
    CHECK(ev.dt == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ev.direction == +1);  // u = 0.9 >= 1/2
    ev = sample_next_event_from_draws(mid, ls, p, 2.0 * (std::exp(1.0) - 1.0), 0.4999);
    CHECK(ev.direction == -1);  // u < 1/2 picks left on the symmetric state

    // Only one channel at the boundary: direction fixed, uniform ignored.
    PdmpState lo = PdmpState::start(2, 0);
    CHECK(sample_next_event_from_draws(lo, ls, p, 1.0, 0.0).direction == +1);
    CHECK(sample_next_event_from_draws(lo, ls, p, 1.0, 0.999).direction == +1);
    PdmpState hi = PdmpState::start(2, 2);
    CHECK(sample_next_event_from_draws(hi, ls, p, 1.0, 0.999).direction == -1);
}

TEST_CASE("sample_next_event: dwell law matches the analytic CDF") {
    // Asymmetric interior state; the dwell survival has the closed form
    // exp(-(rl + rr) (e^{bg u} - 1) / bg).
    SimParams p;
    p.inv_temp = 1.3;
    p.gamma = 0.7;
    Landscape ls({0.0, 0.2, -0.1});
    PdmpState st = PdmpState::start(2, 1, {0.3, -0.4});
    JumpRates rates = jump_rates(st, ls, p);
    REQUIRE(rates.has_left);
    REQUIRE(rates.has_right);
    const double ssum = rates.left + rates.right;
    const double bg = p.inv_temp * p.gamma;

    Rng rng(21);
    std::vector<double> dts;
    long lefts = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        EventDraw ev = sample_next_event(st, ls, p, rng);
        dts.push_back(ev.dt);
        if (ev.direction == -1) ++lefts;
    }
    auto sample = WeightedSample::from_values(dts);
    KsResult ks = ks_vs_cdf(sample, [&](double u) {
        return u <= 0.0 ? 0.0 : 1.0 - std::exp(-ssum * std::expm1(bg * u) / bg);
    });
    CHECK(ks.statistic < ks_critical_one_sample(0.01, n));

    // Direction probability is rate-proportional and time-independent.
    double p_left = rates.left / ssum;
    double se = std::sqrt(p_left * (1.0 - p_left) / n);
    CHECK(std::fabs(static_cast<double>(lefts) / n - p_left) < 4.0 * se);
}

TEST_CASE("advance: local time, clock and exact integrals") {
    SimParams p;
    p.gamma = 1.0;
    PdmpState st = PdmpState::start(1, 1, {0.5});

    advance(st, 0.0, p);
    CHECK(st.t == 0.0);
    CHECK(st.x(1, p.gamma) == 0.5);

    // Dwell at the right endpoint: x_1 grows at +gamma.
    advance(st, 2.0, p);
    CHECK(st.t == 2.0);
    CHECK(st.local_times[1] == 2.0);
    CHECK(st.x(1, p.gamma) == doctest::Approx(2.5).epsilon(1e-15));
    // Exact trapezoid: dt (x_before + gamma dt / 2) = 2 (0.5 + 1) = 3.
    CHECK(st.integral_x[0] == doctest::Approx(3.0).epsilon(1e-15));

    // Dwell at the left endpoint: x_1 shrinks at -gamma.
    PdmpState st2 = PdmpState::start(1, 0, {0.5});
    advance(st2, 2.0, p);
    CHECK(st2.x(1, p.gamma) == doctest::Approx(-1.5).epsilon(1e-15));
    CHECK(st2.integral_x[0] == doctest::Approx(2.0 * (0.5 - 1.0)).epsilon(1e-14));

    CHECK_THROWS_AS(advance(st, -1.0, p), std::invalid_argument);
}

TEST_CASE("simulate: vanishing horizon, partial segment bookkeeping") {
    SimParams p;
    p.horizon = 1e-12;
    Landscape ls = Landscape::flat(2);
    Rng rng(1);
    SimOptions opts;
    opts.log_segments = true;
    Trajectory traj = simulate(ls, PdmpState::start(2, 1), p, rng, opts);
    CHECK(traj.state.t == doctest::Approx(p.horizon).epsilon(1e-12));
    CHECK(traj.n_events == 0);
    REQUIRE(traj.segments.size() == 1);
    CHECK(traj.segments[0].site == 1);
    CHECK(traj.segments[0].duration == doctest::Approx(p.horizon));
}

TEST_CASE("simulate: local times partition the horizon and respect the speed bound") {
    SimParams p;
    p.horizon = 1e4;
    Landscape ls = Landscape::flat(2);
    Rng rng(2);
    double max_speed_violation = 0.0;
    SimOptions opts;
    opts.on_event = [&](const PdmpState& s) {
        for (int k = 1; k <= s.K(); ++k) {
            double bound = std::fabs(s.x0[static_cast<std::size_t>(k - 1)]) + p.gamma * s.t;
            max_speed_violation =
                std::max(max_speed_violation, std::fabs(s.x(k, p.gamma)) - bound);
        }
    };
    Trajectory traj = simulate(ls, PdmpState::start(2, 0), p, rng, opts);

    double lsum = 0.0;
    for (double l : traj.state.local_times) lsum += l;
    CHECK(std::fabs(lsum - traj.state.t) <= 1e-9 * traj.state.t);
    CHECK(max_speed_violation <= 1e-9);

    // Occupation fractions approach uniformity over the K + 1 sites.
    for (double l : traj.state.local_times)
        CHECK(std::fabs(l / traj.state.t - 1.0 / 3.0) < 0.05);
}

TEST_CASE("simulate: flat two-site walker splits time evenly") {
    SimParams p;
    p.horizon = 1e4;
    Landscape ls = Landscape::flat(1);
    Rng rng(3);
    Trajectory traj = simulate(ls, PdmpState::start(1, 0), p, rng);
    CHECK(std::fabs(traj.state.local_times[0] / traj.state.t - 0.5) < 0.05);
}

TEST_CASE("simulate: stop_when ends the run early") {
    SimParams p;
    p.horizon = 1e6;
    Landscape ls = Landscape::flat(2);
    Rng rng(4);
    SimOptions opts;
    opts.stop_when = [](const PdmpState& s) { return s.local_times[0] >= 2.0; };
    Trajectory traj = simulate(ls, PdmpState::start(2, 0), p, rng, opts);
    CHECK(traj.state.local_times[0] >= 2.0);
    CHECK(traj.state.t < 1e3);  // far below the horizon
    CHECK_FALSE(traj.log_complete);
}

TEST_CASE("ergodic_mean_x: flat is centered, a tilt shifts the mean to -A'") {
    SimParams p;
    p.horizon = 1e4;
    {
        Rng rng(5);
        Trajectory traj = simulate(Landscape::flat(2), PdmpState::start(2, 0), p, rng);
        CHECK(std::fabs(ergodic_mean_x(traj, 1)) < 0.05);
        CHECK(std::fabs(ergodic_mean_x(traj, 2)) < 0.05);
    }
    {
        Rng rng(6);
        Landscape ls({0.0, 1.0});  // A'_1 = 1
        Trajectory traj = simulate(ls, PdmpState::start(1, 0), p, rng);
        CHECK(std::fabs(ergodic_mean_x(traj, 1) + 1.0) < 0.05);
    }
}

TEST_CASE("flatten_equivalence: exact pathwise identity") {
    SimParams p;
    p.horizon = 1e3;
    {
        CouplingReport rep = flatten_equivalence(Landscape::flat(2), 0, p, 7);
        CHECK(rep.event_counts_match);
        CHECK(rep.times_identical);
        CHECK(rep.sites_identical);
        CHECK(rep.max_abs_dev == 0.0);
        CHECK(rep.n_events > 100);
    }
    {
        CouplingReport rep = flatten_equivalence(Landscape({0.0, 1.0, 1.0, 0.0}), 1, p, 8);
        CHECK(rep.event_counts_match);
        CHECK(rep.times_identical);
        CHECK(rep.sites_identical);
        CHECK(rep.max_abs_dev == 0.0);
    }
}

TEST_CASE("gamma_rescale_equivalence: identity at gamma 1, exact at gamma 2") {
    SimParams p;
    p.horizon = 1e3;
    {
        CouplingReport rep = gamma_rescale_equivalence(Landscape::flat(2), 0, p, 9);
        CHECK(rep.times_identical);
        CHECK(rep.max_abs_dev == 0.0);
    }
    {
        SimParams p2 = p;
        p2.gamma = 2.0;
        CouplingReport rep = gamma_rescale_equivalence(Landscape({0.0, 0.5, 0.0}), 1, p2, 10);
        CHECK(rep.event_counts_match);
        CHECK(rep.times_identical);
        CHECK(rep.sites_identical);
        CHECK(rep.max_abs_dev == 0.0);
    }
}

TEST_CASE("invariant_marginal: symmetry about -A', unit mass, mode location") {
    SimParams p;
    p.inv_temp = 1.0;
    p.gamma = 1.0;
    Landscape ls({0.0, 0.7});
    InvariantMarginal m = InvariantMarginal::make(ls, 1, p);
    const double c = -ls.Aprime(1);
    for (double u : {0.1, 0.5, 1.0, 2.0})
        CHECK(m.density(c + u) == doctest::Approx(m.density(c - u)).epsilon(1e-12));
    double mass = adaptive_quadrature([&](double y) { return m.density(y); },
                                      c - m.half_width, c + m.half_width, 1e-12);
    CHECK(std::fabs(mass - 1.0) <= 1e-8);
    CHECK(m.density(c) > m.density(c + 0.3));
    CHECK(m.density(c) > m.density(c - 0.3));
    // CDF: monotone with median at the symmetry point.
    CHECK(m.cdf(c) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(m.cdf(c - 0.5) < m.cdf(c + 0.5));
    CHECK(m.cdf(c + m.half_width) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("marginal_sample: time-weighted marginal matches the invariant law") {
    SimParams p;
    p.horizon = 2e4;
    Landscape ls = Landscape::flat(2);
    Rng rng(11);
    SimOptions opts;
    opts.log_segments = true;
    Trajectory traj = simulate(ls, PdmpState::start(2, 0), p, rng, opts);
    WeightedSample s = marginal_sample(traj, p, 1);
    REQUIRE(s.size() > 1000);
    InvariantMarginal m = InvariantMarginal::make(ls, 1, p);
    KsResult ks = ks_vs_cdf(s, [&](double y) { return m.cdf(y); });
    CHECK(ks.statistic < 0.05);
}

TEST_CASE("generator_apply: constants vanish, coordinate drift is +-gamma") {
    SimParams p;
    p.gamma = 0.7;
    Landscape ls = Landscape::flat(1);
    SiteFn constant{[](const std::vector<double>&, int) { return 3.5; },
                    [](const std::vector<double>&, int, int) { return 0.0; }};
    CHECK(generator_apply(constant, {0.4}, 0, ls, p) == 0.0);
    CHECK(generator_apply(constant, {0.4}, 1, ls, p) == 0.0);

    // f = x_1 ignores the site, so only the drift term survives.
    SiteFn coord{[](const std::vector<double>& x, int) { return x[0]; },
                 [](const std::vector<double>&, int, int k) { return k == 1 ? 1.0 : 0.0; }};
    CHECK(generator_apply(coord, {0.4}, 0, ls, p) == doctest::Approx(-p.gamma).epsilon(1e-15));
    CHECK(generator_apply(coord, {0.4}, 1, ls, p) == doctest::Approx(+p.gamma).epsilon(1e-15));
}

TEST_CASE("generator_apply: site-dependent functions see the jump rates") {
    SimParams p;
    Landscape ls = Landscape::flat(1);
    // f(x, i) = 1{i = 1}: L f(x, 0) = right rate, L f(x, 1) = -left rate.
    SiteFn ind{[](const std::vector<double>&, int site) { return site == 1 ? 1.0 : 0.0; },
               [](const std::vector<double>&, int, int) { return 0.0; }};
    double x1 = 0.3;
    CHECK(generator_apply(ind, {x1}, 0, ls, p) == doctest::Approx(std::exp(-x1)).epsilon(1e-14));
    CHECK(generator_apply(ind, {x1}, 1, ls, p) == doctest::Approx(-std::exp(x1)).epsilon(1e-14));
}

TEST_CASE("generator stationarity: smooth cutoff coordinate integrates to zero") {
    // K = 1 flat: the invariant law is (uniform site) x rho.  For
    // f(x, i) = x exp(-x^2 / 8) (site-independent) the stationarity integral
    // must vanish to quadrature accuracy.
    SimParams p;
    Landscape ls = Landscape::flat(1);
    InvariantMarginal m = InvariantMarginal::make(ls, 1, p);
    SiteFn f{[](const std::vector<double>& x, int) { return x[0] * std::exp(-x[0] * x[0] / 8.0); },
             [](const std::vector<double>& x, int, int) {
                 double g = std::exp(-x[0] * x[0] / 8.0);
                 return g * (1.0 - x[0] * x[0] / 4.0);
             }};
    double total = adaptive_quadrature(
        [&](double y) {
            double lf = generator_apply(f, {y}, 0, ls, p) + generator_apply(f, {y}, 1, ls, p);
            return 0.5 * lf * m.density(y);
        },
        -m.half_width, m.half_width, 1e-12);
    CHECK(std::fabs(total) <= 1e-6);
}

TEST_CASE("clt_variance: zero for constant f, stable under horizon doubling") {
    SimParams p;
    p.horizon = 5e3;
    Landscape ls = Landscape::flat(1);
    auto coord = [](const std::vector<double>& x, int) { return x[0]; };
    auto zero = [](const std::vector<double>&, int) { return 0.0; };

    SimOptions opts;
    opts.log_segments = true;
    Rng rng(12);
    Trajectory t1 = simulate(ls, PdmpState::start(1, 0), p, rng, opts);
    CHECK(clt_variance(t1, p, zero) == 0.0);
    double c1 = clt_variance(t1, p, coord);

    SimParams p2 = p;
    p2.horizon = 1e4;
    Rng rng2(13);
    Trajectory t2 = simulate(ls, PdmpState::start(1, 0), p2, rng2, opts);
    double c2 = clt_variance(t2, p2, coord);
    CHECK(c1 > 0.0);
    CHECK(c2 > 0.0);
    CHECK(c2 < 2.0 * c1);
    CHECK(c2 > 0.5 * c1);

    CHECK_THROWS_AS(clt_variance(t1, p, coord, 8), std::invalid_argument);  // < 16 batches
}

TEST_CASE("clt_variance: agrees with a replica oracle") {
    // Oracle: Var of the ergodic average over T across independent replicas
    // scales as c/T, so T * Var estimates the same constant.
    SimParams p;
    p.horizon = 2e3;
    Landscape ls = Landscape::flat(1);
    auto coord = [](const std::vector<double>& x, int) { return x[0]; };

    std::vector<double> means;
    for (int rep = 0; rep < 256; ++rep) {
        Rng rng(200 + static_cast<std::uint64_t>(rep));
        Trajectory traj = simulate(ls, PdmpState::start(1, 0), p, rng);
        means.push_back(ergodic_mean_x(traj, 1));
    }
    double oracle = p.horizon * sample_moments(means).variance;

    // Average several independent batch-means estimates so the comparison is
    // a ~2 sigma test rather than a coin flip between two noisy estimators.
    SimParams pl = p;
    pl.horizon = 1e5;
    double est = 0.0;
    const int n_runs = 8;
    for (int run = 0; run < n_runs; ++run) {
        SimOptions opts;
        opts.log_segments = true;
        Rng rng(14 + static_cast<std::uint64_t>(run));
        Trajectory longrun = simulate(ls, PdmpState::start(1, 0), pl, rng, opts);
        est += clt_variance(longrun, pl, coord);
    }
    est /= n_runs;
    CHECK(std::fabs(est - oracle) <= 0.25 * oracle);
}

TEST_CASE("params and state validation") {
    SimParams p;
    p.inv_temp = -1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = SimParams{};
    p.gamma = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = SimParams{};
    p.horizon = -2.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK_THROWS_AS(PdmpState::start(2, 5), std::invalid_argument);
    CHECK_THROWS_AS(PdmpState::start(0, 0), std::invalid_argument);
}
