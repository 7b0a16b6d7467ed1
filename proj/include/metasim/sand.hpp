// Combinatorial geometry of edge-difference configurations.
//
// A configuration x = (x_1..x_K) describes the successive differences of a
// profile l_0..l_K (l_k - l_{k-1} = x_k).  The "computational sand" S(x) is
// the volume needed to fill the profile up to its maximum,
//     S(x) = sum_i (max_j l_j - l_i),
// and is independent of the arbitrary base level l_0.  Configurations whose
// components are all either small (<= a t) or large (> A t) are "separated";
// separated configurations decompose into plateaus: maximal runs of sites
// whose interior edges are small, entered by a steep rise and left by a steep
// drop.  Along a flat-landscape unit-deposition trajectory of the discrete
// walker, S satisfies the exact drift identity
//     S(X_t) = S(x_0) - t + (K+1) M_t,
// where M_t is the time the walker has spent at the running maximum of the
// tilted local-time profile.  sand_drift_check verifies it event by event.

#pragma once

#include "metasim/discrete.hpp"

#include <utility>
#include <vector>

namespace metasim {

// Discrete antiderivative of x: keeps the source differences verbatim so that
// diffs() round-trips exactly; levels() materializes l with the given base.
struct Profile {
    std::vector<double> x;  // length K
    double l0 = 0.0;

    static Profile from_x(std::vector<double> x, double l0 = 0.0) {
        return Profile{std::move(x), l0};
    }
    // Build from explicit levels l_0..l_K (x becomes the successive differences).
    static Profile from_levels(const std::vector<double>& l);

    std::vector<double> levels() const;          // l_0..l_K
    const std::vector<double>& diffs() const { return x; }
};

struct SeparationParams {
    double t = 1.0;
    double a = 0.5;
    double A = 1.5;

    void validate() const;  // requires A > a > 0, t > 0
};

// Computational sand S(x) >= 0.
double sand(const std::vector<double>& x);
double sand_from_levels(const std::vector<double>& l);

// True iff every |x_j| <= a t or |x_j| > A t, with at least one |x_j| > A t.
bool is_separated(const std::vector<double>& x, const SeparationParams& p);

// Plateau enumeration for a separated configuration.  Intervals are site
// ranges {l, ..., r-1} returned as (l, r) pairs, left to right.  For a
// non-separated input the result is empty and `separated` is false.
struct PlateauResult {
    std::vector<std::pair<int, int>> intervals;
    bool separated = false;
};
PlateauResult plateaus(const std::vector<double>& x, const SeparationParams& p);

// W(x) = exp(chi S(x)); requires chi > 0.
double lyapunov_w(const std::vector<double>& x, double chi);

// Replays a logged flat-landscape trajectory (unit deposition rate) and
// checks the drift identity at every event time.  Returns the largest
// absolute residual |S(X_t) - (S(x_0) - t + (K+1) M_t)| together with the
// largest violation of M_t <= t (zero when the bound holds).
struct SandDriftReport {
    double max_residual = 0.0;
    double max_m_minus_t = 0.0;  // max over events of M_t - t (<= 0 when the bound holds)
    double final_m = 0.0;
    double final_t = 0.0;
};
SandDriftReport sand_drift_check(const Trajectory& traj);

}  // namespace metasim
