#include "metasim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace metasim {

WeightedSample WeightedSample::from_values(const std::vector<double>& v) {
    WeightedSample s;
    s.values = v;
    s.weights.assign(v.size(), 1.0);
    return s;
}

namespace {

struct SortedWeighted {
    std::vector<double> v;  // sorted values
    std::vector<double> w;  // matching weights
    double total = 0.0;
    double n_eff = 0.0;
};

SortedWeighted sort_sample(const WeightedSample& s, const char* who) {
    if (s.values.empty() || s.values.size() != s.weights.size())
        throw std::invalid_argument(std::string(who) + ": empty or mismatched sample");
    std::vector<std::size_t> idx(s.values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t i, std::size_t j) { return s.values[i] < s.values[j]; });
    SortedWeighted out;
    out.v.reserve(idx.size());
    out.w.reserve(idx.size());
    double sw = 0.0, sw2 = 0.0;
    for (std::size_t i : idx) {
        double wi = s.weights[i];
        if (wi < 0.0) throw std::invalid_argument(std::string(who) + ": negative weight");
        out.v.push_back(s.values[i]);
        out.w.push_back(wi);
        sw += wi;
        sw2 += wi * wi;
    }
    if (sw <= 0.0) throw std::invalid_argument(std::string(who) + ": nonpositive total weight");
    out.total = sw;
    out.n_eff = sw * sw / sw2;
    return out;
}

// Asymptotic Kolmogorov tail Q(lambda) = 2 sum_j (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-16) break;
        sign = -sign;
    }
    return std::min(1.0, std::max(0.0, 2.0 * sum));
}

double ks_p_value(double d, double ne) {
    double sq = std::sqrt(ne);
    return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
}

// Acklam's rational approximation to the standard normal quantile.
double normal_quantile(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
    const double plow = 0.02425;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) return -normal_quantile(1.0 - p);
    double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

KsResult ks_two_sample(const WeightedSample& a, const WeightedSample& b) {
    SortedWeighted sa = sort_sample(a, "ks_two_sample(a)");
    SortedWeighted sb = sort_sample(b, "ks_two_sample(b)");
    double ca = 0.0, cb = 0.0, d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < sa.v.size() || j < sb.v.size()) {
        double x;
        if (j >= sb.v.size() || (i < sa.v.size() && sa.v[i] <= sb.v[j]))
            x = sa.v[i];
        else
            x = sb.v[j];
        while (i < sa.v.size() && sa.v[i] == x) ca += sa.w[i++];
        while (j < sb.v.size() && sb.v[j] == x) cb += sb.w[j++];
        d = std::max(d, std::fabs(ca / sa.total - cb / sb.total));
    }
    KsResult r;
    r.statistic = d;
    r.n_eff_a = sa.n_eff;
    r.n_eff_b = sb.n_eff;
    r.p_value = ks_p_value(d, sa.n_eff * sb.n_eff / (sa.n_eff + sb.n_eff));
    return r;
}

KsResult ks_vs_cdf(const WeightedSample& a, const std::function<double(double)>& cdf) {
    SortedWeighted sa = sort_sample(a, "ks_vs_cdf");
    double cum = 0.0, d = 0.0;
    std::size_t i = 0;
    while (i < sa.v.size()) {
        double x = sa.v[i];
        double before = cum / sa.total;
        while (i < sa.v.size() && sa.v[i] == x) cum += sa.w[i++];
        double after = cum / sa.total;
        double fx = cdf(x);
        d = std::max(d, std::max(std::fabs(fx - before), std::fabs(after - fx)));
    }
    KsResult r;
    r.statistic = d;
    r.n_eff_a = sa.n_eff;
    r.n_eff_b = std::numeric_limits<double>::infinity();
    r.p_value = ks_p_value(d, sa.n_eff);
    return r;
}

double ks_critical_two_sample(double alpha, double n, double m) {
    double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c * std::sqrt((n + m) / (n * m));
}

double ks_critical_one_sample(double alpha, double n) {
    double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c / std::sqrt(n);
}

double chi2_uniform_stat(const std::vector<std::uint64_t>& counts) {
    if (counts.empty()) throw std::invalid_argument("chi2_uniform_stat: no bins");
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    double expected = total / static_cast<double>(counts.size());
    if (expected <= 0.0) throw std::invalid_argument("chi2_uniform_stat: empty histogram");
    double stat = 0.0;
    for (auto c : counts) {
        double d = static_cast<double>(c) - expected;
        stat += d * d / expected;
    }
    return stat;
}

double chi2_critical(double alpha, int dof) {
    if (dof < 1) throw std::invalid_argument("chi2_critical: dof < 1");
    double z = normal_quantile(1.0 - alpha);
    double k = static_cast<double>(dof);
    double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
    return k * t * t * t;
}

double batch_means(const std::vector<double>& values, const std::vector<double>& durations,
                   int batches) {
    if (batches < 2) throw std::invalid_argument("batch_means: need at least 2 batches");
    if (values.size() != durations.size())
        throw std::invalid_argument("batch_means: length mismatch");
    if (values.size() < static_cast<std::size_t>(4 * batches))
        throw std::invalid_argument("batch_means: insufficient data (need >= 4 segments per batch)");
    double total = 0.0;
    for (double d : durations) {
        if (d < 0.0) throw std::invalid_argument("batch_means: negative duration");
        total += d;
    }
    if (total <= 0.0) throw std::invalid_argument("batch_means: zero total duration");

    const double tb = total / batches;
    std::vector<double> integral(batches, 0.0);
    int bi = 0;
    double t = 0.0;  // time consumed so far
    for (std::size_t s = 0; s < values.size(); ++s) {
        double remain = durations[s];
        while (remain > 0.0) {
            double boundary = (bi + 1 < batches) ? tb * (bi + 1)
                                                 : std::numeric_limits<double>::infinity();
            double room = boundary - t;
            double take = std::min(remain, room);
            integral[bi] += values[s] * take;
            t += take;
            remain -= take;
            if (remain > 0.0 && bi + 1 < batches) ++bi;
        }
    }
    // Batch means; the final batch absorbs any rounding slack in its width.
    double mean = 0.0;
    std::vector<double> m(batches);
    for (int b = 0; b < batches; ++b) {
        double lo = tb * b;
        double hi = (b + 1 == batches) ? total : tb * (b + 1);
        m[b] = integral[b] / (hi - lo);
        mean += m[b];
    }
    mean /= batches;
    double var = 0.0;
    for (int b = 0; b < batches; ++b) var += (m[b] - mean) * (m[b] - mean);
    var /= (batches - 1);
    return tb * var;
}

namespace {

double simpson(double fa, double fm, double fb, double h) {
    return h / 6.0 * (fa + 4.0 * fm + fb);
}

double adapt(const std::function<double(double)>& f, double a, double b, double fa, double fm,
             double fb, double whole, double eps, int depth) {
    if (depth <= 0) throw std::runtime_error("adaptive_quadrature: depth exceeded");
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson(fa, flm, fm, m - a);
    double right = simpson(fm, frm, fb, b - m);
    double delta = left + right - whole;
    if (std::fabs(delta) <= 15.0 * eps)
        return left + right + delta / 15.0;
    return adapt(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           adapt(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace

double adaptive_quadrature(const std::function<double(double)>& f, double a, double b,
                           double rel_tol, int max_depth) {
    if (!(b > a)) {
        if (b == a) return 0.0;
        return -adaptive_quadrature(f, b, a, rel_tol, max_depth);
    }
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = simpson(fa, fm, fb, b - a);
    // Scale for the tolerance: crude Riemann sum of |f| so that integrals that
    // nearly cancel (odd integrands over symmetric domains) still terminate.
    double scale = 0.0;
    for (int i = 0; i <= 8; ++i) scale += std::fabs(f(a + (b - a) * i / 8.0));
    scale *= (b - a) / 9.0;
    double eps = rel_tol * std::max({std::fabs(whole), scale, 1e-300});
    return adapt(f, a, b, fa, fm, fb, whole, eps, max_depth);
}

Moments sample_moments(const std::vector<double>& xs) {
    Moments mo;
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (double x : xs) {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    mo.mean = mean;
    mo.variance = (n > 1) ? m2 / static_cast<double>(n - 1) : 0.0;
    mo.n = n;
    return mo;
}

std::vector<std::uint64_t> histogram(const std::vector<double>& xs, double lo, double hi,
                                     int nbins) {
    if (nbins < 1 || !(hi > lo)) throw std::invalid_argument("histogram: bad bins/range");
    std::vector<std::uint64_t> counts(nbins, 0);
    for (double x : xs) {
        int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * nbins));
        b = std::clamp(b, 0, nbins - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    return counts;
}

}  // namespace metasim
