#include "doctest.h"

#include "metasim/discrete.hpp"
#include "metasim/rng.hpp"
#include "metasim/sand.hpp"

#include <cmath>
#include <utility>
#include <vector>

using namespace metasim;

namespace {

// The running example: ten levels with two genuine plateaus.
const std::vector<double> kFigLevels = {3.1, 3.0, 3.2, 1.0, 4.0, 3.8, 2.0, 2.2, 2.1, 2.0};

std::vector<double> random_config(Rng& rng, int K, double amp) {
    std::vector<double> x(static_cast<std::size_t>(K));
    for (double& v : x) v = amp * (2.0 * rng.uniform() - 1.0);
    return x;
}

// Definition-chasing plateau finder: test every candidate site interval
// {l..r-1} directly against the defining predicate (all interior edges small,
// entered by a steep rise or the boundary, left by a steep drop or the
// boundary).  Quadratic and independent of the production scan.
std::vector<std::pair<int, int>> plateaus_brute_force(const std::vector<double>& x,
                                                      const SeparationParams& p) {
    std::vector<std::pair<int, int>> out;
    if (!is_separated(x, p)) return out;
    const int K = static_cast<int>(x.size());
    auto xk = [&](int k) { return x[static_cast<std::size_t>(k - 1)]; };
    for (int l = 0; l <= K; ++l) {
        for (int r = l + 1; r <= K + 1; ++r) {
            bool ok = (l == 0) || xk(l) > p.A * p.t;
            if (ok) ok = (r == K + 1) || xk(r) < -p.A * p.t;
            for (int e = l + 1; ok && e < r; ++e) ok = std::fabs(xk(e)) <= p.a * p.t;
            if (ok) out.emplace_back(l, r);
        }
    }
    return out;
}

// Separated configuration generator: each edge is either small or large with
// a forced large edge, so is_separated always holds.
std::vector<double> random_separated(Rng& rng, int K, const SeparationParams& p) {
    std::vector<double> x(static_cast<std::size_t>(K));
    int forced = static_cast<int>(rng.uniform() * K);
    for (int k = 0; k < K; ++k) {
        bool large = (k == forced) || rng.uniform() < 0.4;
        double mag = large ? p.A * p.t * (1.0 + rng.uniform()) : p.a * p.t * rng.uniform() * 0.99;
        x[static_cast<std::size_t>(k)] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag;
    }
    return x;
}

}  // namespace

TEST_CASE("sand: base values") {
    CHECK(sand(std::vector<double>(5, 0.0)) == 0.0);
    CHECK(sand({}) == 0.0);
    CHECK(sand({2.7}) == doctest::Approx(2.7).epsilon(1e-12));
    CHECK(sand({-2.7}) == doctest::Approx(2.7).epsilon(1e-12));
    // Ten-level example: max 4.0, sum 26.4, so S = 10*4 - 26.4 = 13.6.
    CHECK(sand_from_levels(kFigLevels) == doctest::Approx(13.6).epsilon(1e-12));
    CHECK(sand(Profile::from_levels(kFigLevels).x) == doctest::Approx(13.6).epsilon(1e-9));
}

TEST_CASE("sand: independent of the base level") {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        auto x = random_config(rng, 1 + static_cast<int>(rng.uniform() * 8), 3.0);
        double s0 = sand_from_levels(Profile::from_x(x, 0.0).levels());
        double s1 = sand_from_levels(Profile::from_x(x, 1024.0).levels());
        CHECK(std::fabs(s0 - s1) <= 1e-9);
    }
}

TEST_CASE("sand: nonnegative, zero only at the flat configuration") {
    Rng rng(4);
    for (int rep = 0; rep < 200; ++rep) {
        auto x = random_config(rng, 1 + static_cast<int>(rng.uniform() * 8), 2.0);
        double s = sand(x);
        CHECK(s >= 0.0);
        double linf = 0.0;
        for (double v : x) linf = std::max(linf, std::fabs(v));
        if (linf > 1e-12) CHECK(s > 0.0);
    }
}

TEST_CASE("sand: bounded by K * sum |x_k|") {
    Rng rng(5);
    for (int rep = 0; rep < 10000; ++rep) {
        int K = 1 + static_cast<int>(rng.uniform() * 8);
        auto x = random_config(rng, K, 2.0);
        double sum_abs = 0.0;
        for (double v : x) sum_abs += std::fabs(v);
        CHECK(sand(x) <= K * sum_abs + 1e-12);
    }
}

TEST_CASE("profile round trips") {
    Profile p = Profile::from_levels(kFigLevels);
    auto lv = p.levels();
    REQUIRE(lv.size() == kFigLevels.size());
    for (std::size_t i = 0; i < lv.size(); ++i)
        CHECK(lv[i] == doctest::Approx(kFigLevels[i]).epsilon(1e-12));
    CHECK(p.diffs().size() == kFigLevels.size() - 1);
}

TEST_CASE("is_separated: example, zero and middle band") {
    SeparationParams p{1.0, 0.5, 1.5};
    auto x = Profile::from_levels(kFigLevels).x;
    CHECK(is_separated(x, p));
    CHECK_FALSE(is_separated(std::vector<double>(4, 0.0), p));
    CHECK_FALSE(is_separated({1.0}, p));         // strictly inside (a t, A t]
    CHECK_FALSE(is_separated({3.0, 1.0}, p));    // one large edge cannot rescue a band edge
    CHECK_FALSE(is_separated({0.1, 0.2}, p));    // all small: no large edge at all
    CHECK_THROWS_AS(is_separated(x, SeparationParams{1.0, 2.0, 1.5}), std::invalid_argument);
}

TEST_CASE("plateaus: running example") {
    SeparationParams p{1.0, 0.5, 1.5};
    auto x = Profile::from_levels(kFigLevels).x;
    PlateauResult res = plateaus(x, p);
    CHECK(res.separated);
    REQUIRE(res.intervals.size() == 2);
    CHECK(res.intervals[0] == std::make_pair(0, 3));  // sites {0,1,2}
    CHECK(res.intervals[1] == std::make_pair(4, 6));  // sites {4,5}
}

TEST_CASE("plateaus: single steep rise isolates the top site") {
    SeparationParams p{1.0, 0.5, 1.5};
    PlateauResult res = plateaus({2.0 * p.A * p.t}, p);
    CHECK(res.separated);
    REQUIRE(res.intervals.size() == 1);
    CHECK(res.intervals[0] == std::make_pair(1, 2));  // site {1}
}

TEST_CASE("plateaus: non-separated input reports empty") {
    SeparationParams p{1.0, 0.5, 1.5};
    PlateauResult res = plateaus({1.0, 0.1}, p);
    CHECK_FALSE(res.separated);
    CHECK(res.intervals.empty());
}

TEST_CASE("plateaus: agree with the brute-force enumeration") {
    SeparationParams p{1.0, 0.5, 1.5};
    Rng rng(6);
    int nonempty = 0;
    for (int rep = 0; rep < 10000; ++rep) {
        int K = 1 + static_cast<int>(rng.uniform() * 6);
        auto x = random_separated(rng, K, p);
        REQUIRE(is_separated(x, p));
        auto fast = plateaus(x, p).intervals;
        auto slow = plateaus_brute_force(x, p);
        REQUIRE(fast == slow);
        if (!fast.empty()) ++nonempty;
    }
    CHECK(nonempty > 0);
}

TEST_CASE("lyapunov_w: unit at zero, monotone in chi, exponential bound") {
    CHECK(lyapunov_w(std::vector<double>(3, 0.0), 0.7) == 1.0);
    std::vector<double> x = {1.0, -2.0, 0.5};
    CHECK(lyapunov_w(x, 0.5) < lyapunov_w(x, 1.0));
    Rng rng(8);
    for (int rep = 0; rep < 200; ++rep) {
        int K = 1 + static_cast<int>(rng.uniform() * 5);
        auto y = random_config(rng, K, 2.0);
        double sum_abs = 0.0;
        for (double v : y) sum_abs += std::fabs(v);
        double chi = 0.1 + rng.uniform();
        CHECK(lyapunov_w(y, chi) <= std::exp(chi * K * sum_abs) * (1.0 + 1e-12));
    }
    CHECK_THROWS_AS(lyapunov_w(x, 0.0), std::invalid_argument);
}

TEST_CASE("sand_drift_check: hand-built two-site trajectory") {
    // K = 1, flat start at site 0 with x0 = 0.  Segments chosen so the walker
    // first sits at the max, then below it, then crosses back up.
    Trajectory traj;
    traj.state = PdmpState::start(1, 0, {0.0});
    traj.i0 = 0;
    traj.log_complete = true;
    traj.segments = {{0, 0.7}, {1, 0.3}, {1, 0.8}};
    traj.n_events = 2;
    SandDriftReport rep = sand_drift_check(traj);
    CHECK(rep.max_residual <= 1e-12);
    CHECK(rep.max_m_minus_t <= 1e-12);
    CHECK(rep.final_t == doctest::Approx(1.8).epsilon(1e-12));
    // Site 0 is at the max for its whole dwell; site 1 catches up after a
    // deficit of 0.7, i.e. 0.4 into its second segment.
    CHECK(rep.final_m == doctest::Approx(0.7 + 0.4).epsilon(1e-9));
}

TEST_CASE("sand_drift_check: flat-landscape simulations satisfy the identity") {
    for (int K : {1, 2, 4}) {
        SimParams p;
        p.horizon = 1000.0;
        Landscape ls = Landscape::flat(K);
        Rng rng(100 + static_cast<std::uint64_t>(K));
        SimOptions opts;
        opts.log_segments = true;
        Trajectory traj = simulate(ls, PdmpState::start(K, 0), p, rng, opts);
        REQUIRE(traj.log_complete);
        SandDriftReport rep = sand_drift_check(traj);
        CHECK(rep.max_residual <= 1e-8);
        CHECK(rep.max_m_minus_t <= 1e-12);  // M_t <= t throughout
        CHECK(rep.final_m <= rep.final_t);
        CHECK(rep.final_m > 0.0);
    }
}

TEST_CASE("sand_drift_check: requires a complete log") {
    Trajectory traj;
    traj.state = PdmpState::start(1, 0, {0.0});
    traj.log_complete = false;
    CHECK_THROWS_AS(sand_drift_check(traj), std::invalid_argument);
}
