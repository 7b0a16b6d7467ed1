// Shared statistical and numerical utilities: weighted Kolmogorov-Smirnov
// tests, chi-square uniformity, batch-means variance estimation, adaptive
// Simpson quadrature and small helpers.
//
// All samples coming out of the event-driven simulators are time-weighted
// (value, segment-duration) pairs; the KS machinery therefore works on
// weighted empirical CDFs and reports an effective sample size
// n_eff = (sum w)^2 / sum w^2 for the p-value approximation.  Time-weighted
// PDMP samples are serially dependent, so callers thin by event index
// (stride 10 by default elsewhere) before testing.

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace metasim {

struct WeightedSample {
    std::vector<double> values;
    std::vector<double> weights;

    void push(double v, double w) {
        values.push_back(v);
        weights.push_back(w);
    }
    std::size_t size() const { return values.size(); }

    // Unweighted convenience constructor: every weight 1.
    static WeightedSample from_values(const std::vector<double>& v);
};

struct KsResult {
    double statistic = 0.0;  // sup |F_a - F_b|
    double p_value = 1.0;    // asymptotic approximation using n_eff
    double n_eff_a = 0.0;
    double n_eff_b = 0.0;
};

// Two-sample KS on weighted empirical CDFs.  Throws std::invalid_argument on
// an empty sample or nonpositive total weight.
KsResult ks_two_sample(const WeightedSample& a, const WeightedSample& b);

// One-sample KS of a weighted empirical CDF against an analytic CDF.
KsResult ks_vs_cdf(const WeightedSample& a, const std::function<double(double)>& cdf);

// Critical KS statistic at significance alpha for (effective) sample sizes
// n and m: c(alpha) * sqrt((n+m)/(n m)); for the one-sample case pass m = inf
// via ks_critical_one_sample.
double ks_critical_two_sample(double alpha, double n, double m);
double ks_critical_one_sample(double alpha, double n);

// Pearson chi-square statistic for uniform expected counts.
double chi2_uniform_stat(const std::vector<std::uint64_t>& counts);

// Upper critical value of chi-square with `dof` degrees of freedom at upper
// tail probability alpha (Wilson-Hilferty approximation, good to ~0.1% for
// dof >= 10).
double chi2_critical(double alpha, int dof);

// Batch-means variance scale for an ergodic average.  Input is a series of
// (value, duration) segments interpreted as a piecewise-constant path; the
// total time span is split into `batches` equal windows (segments straddling
// a boundary are split exactly).  Returns T_b * Var(batch means), i.e. the
// constant c such that Var of the time average over horizon t is ~ c/t.
// Throws std::invalid_argument if there are fewer than 4*batches segments.
double batch_means(const std::vector<double>& values,
                   const std::vector<double>& durations,
                   int batches);

// Adaptive Simpson quadrature of f over [a, b] to relative tolerance rel_tol
// (plus a tiny absolute floor so integrals that are exactly zero terminate).
// Throws std::runtime_error if the recursion depth limit is exceeded.
double adaptive_quadrature(const std::function<double(double)>& f, double a, double b,
                           double rel_tol = 1e-10, int max_depth = 60);

// Sample mean and unbiased variance of a plain series.
struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    std::size_t n = 0;
};
Moments sample_moments(const std::vector<double>& xs);

// Histogram of values over [lo, hi) with nbins equal bins; values outside the
// range are clamped into the edge bins.
std::vector<std::uint64_t> histogram(const std::vector<double>& xs, double lo, double hi,
                                     int nbins);

}  // namespace metasim
