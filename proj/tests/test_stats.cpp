#include "doctest.h"

#include "metasim/rng.hpp"
#include "metasim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

using namespace metasim;

namespace {

std::vector<double> uniform_draws(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
    std::vector<double> out(n);
    for (double& v : out) v = lo + (hi - lo) * rng.uniform();
    return out;
}

}  // namespace

TEST_CASE("ks_two_sample: identical samples give statistic zero") {
    auto a = WeightedSample::from_values({0.1, 0.4, 0.4, 0.9, 2.5});
    KsResult r = ks_two_sample(a, a);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value > 0.99);
    CHECK(r.n_eff_a == doctest::Approx(5.0));
}

TEST_CASE("ks_two_sample: rescaling all weights changes nothing") {
    Rng rng(11);
    WeightedSample a, b;
    for (int i = 0; i < 500; ++i) {
        double v = rng.uniform();
        a.push(v, 1.0);
        b.push(v, 7.0);
    }
    KsResult r = ks_two_sample(a, b);
    CHECK(r.statistic == 0.0);
}

TEST_CASE("ks_two_sample: disjoint shift of uniforms is detected at ~0.5") {
    Rng rng(42);
    auto a = WeightedSample::from_values(uniform_draws(rng, 10000, 0.0, 1.0));
    auto b = WeightedSample::from_values(uniform_draws(rng, 10000, 0.5, 1.5));
    KsResult r = ks_two_sample(a, b);
    CHECK(std::fabs(r.statistic - 0.5) < 0.03);
    CHECK(r.p_value < 1e-8);
}

TEST_CASE("ks_two_sample: same-law calibration across 100 seeded repetitions") {
    int accepted = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(1000 + s);
        auto a = WeightedSample::from_values(uniform_draws(rng, 2000));
        auto b = WeightedSample::from_values(uniform_draws(rng, 2000));
        KsResult r = ks_two_sample(a, b);
        if (r.p_value > 0.01) ++accepted;
    }
    CHECK(accepted >= 98);
}

TEST_CASE("ks_two_sample: rejects empty input") {
    WeightedSample empty;
    auto a = WeightedSample::from_values({1.0, 2.0});
    CHECK_THROWS_AS(ks_two_sample(empty, a), std::invalid_argument);
    CHECK_THROWS_AS(ks_two_sample(a, empty), std::invalid_argument);
}

TEST_CASE("ks_vs_cdf: plug-in grid against the uniform CDF") {
    // Midpoint grid: the exact sup distance of the empirical CDF is 1/(2n).
    const int n = 50;
    std::vector<double> vals(n);
    for (int i = 0; i < n; ++i) vals[i] = (i + 0.5) / n;
    auto a = WeightedSample::from_values(vals);
    KsResult r = ks_vs_cdf(a, [](double x) { return std::clamp(x, 0.0, 1.0); });
    CHECK(r.statistic == doctest::Approx(0.5 / n).epsilon(1e-12));
}

TEST_CASE("ks_vs_cdf: standard normal draws pass against their own CDF") {
    Rng rng(7);
    std::vector<double> vals(10000);
    for (double& v : vals) v = rng.normal();
    auto a = WeightedSample::from_values(vals);
    KsResult r = ks_vs_cdf(a, [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); });
    CHECK(r.statistic < ks_critical_one_sample(0.01, 10000));
    CHECK(r.p_value > 0.01);
}

TEST_CASE("ks critical values: closed forms") {
    const double c01 = std::sqrt(-0.5 * std::log(0.005));  // ~1.6276
    CHECK(ks_critical_one_sample(0.01, 400.0) ==
          doctest::Approx(c01 / 20.0).epsilon(1e-9));
    CHECK(ks_critical_two_sample(0.01, 400.0, 400.0) ==
          doctest::Approx(c01 * std::sqrt(2.0 / 400.0)).epsilon(1e-9));
    // Two-sample with one side huge degenerates to the one-sample value.
    CHECK(ks_critical_two_sample(0.01, 400.0, 1e18) ==
          doctest::Approx(ks_critical_one_sample(0.01, 400.0)).epsilon(1e-6));
}

TEST_CASE("chi2_uniform_stat: exact small cases") {
    CHECK(chi2_uniform_stat({5, 5, 5, 5}) == 0.0);
    // Counts (6, 4): expected 5 each, chi2 = (1 + 1)/5.
    CHECK(chi2_uniform_stat({6, 4}) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("chi2_critical: Wilson-Hilferty against known quantiles") {
    CHECK(chi2_critical(0.01, 63) == doctest::Approx(92.01).epsilon(0.01));
    CHECK(chi2_critical(0.05, 10) == doctest::Approx(18.307).epsilon(0.02));
    CHECK(chi2_critical(0.5, 40) == doctest::Approx(39.335).epsilon(0.02));
}

TEST_CASE("adaptive_quadrature: polynomial is exact") {
    double v = adaptive_quadrature([](double x) { return x * x; }, 0.0, 1.0, 1e-12);
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("adaptive_quadrature: exp(-2 cosh x) matches a dense trapezoid") {
    auto f = [](double x) { return std::exp(-2.0 * std::cosh(x)); };
    const double a = -30.0, b = 30.0;
    const std::size_t n = 1000000;
    const double h = (b - a) / static_cast<double>(n);
    double trap = 0.5 * (f(a) + f(b));
    for (std::size_t i = 1; i < n; ++i) trap += f(a + h * static_cast<double>(i));
    trap *= h;
    double adq = adaptive_quadrature(f, a, b, 1e-12);
    CHECK(std::fabs(adq - trap) <= 1e-8 * trap);
}

TEST_CASE("adaptive_quadrature: wrapped Gaussian has unit mass over one period") {
    const double sigma = 0.2;
    const double pi = 3.14159265358979323846;
    auto wrapped = [&](double x) {
        double s = 0.0;
        for (int m = -3; m <= 3; ++m) {
            double u = x + 2.0 * pi * m;
            s += std::exp(-0.5 * u * u / (sigma * sigma));
        }
        return s / (sigma * std::sqrt(2.0 * pi));
    };
    double mass = adaptive_quadrature(wrapped, -pi, pi, 1e-12);
    CHECK(std::fabs(mass - 1.0) <= 1e-10);
}

TEST_CASE("batch_means: constant series has zero variance") {
    std::vector<double> vals(200, 3.0), durs(200, 1.0);
    CHECK(batch_means(vals, durs, 32) == 0.0);
}

TEST_CASE("batch_means: iid normals recover sigma^2 = 1") {
    Rng rng(5);
    const std::size_t n = 100000;
    std::vector<double> vals(n), durs(n, 1.0);
    for (double& v : vals) v = rng.normal();
    double c32 = batch_means(vals, durs, 32);
    CHECK(std::fabs(c32 - 1.0) < 0.25);
    // Batch-count robustness: estimates agree within a factor of two.
    double c16 = batch_means(vals, durs, 16);
    double c64 = batch_means(vals, durs, 64);
    for (double c : {c16, c64}) {
        CHECK(c > 0.5 * c32);
        CHECK(c < 2.0 * c32);
    }
}

TEST_CASE("batch_means: straddling segments are split exactly") {
    // Two long segments of values 0 and 2 over equal times: every batch mean
    // is 0 in the first half and 2 in the second, variance 1, T_b = 5.
    std::vector<double> vals, durs;
    for (int i = 0; i < 80; ++i) {
        vals.push_back(i < 40 ? 0.0 : 2.0);
        durs.push_back(1.0);
    }
    double c = batch_means(vals, durs, 16);
    // 16 batches of length 5: batch means are eight 0s and eight 2s, so
    // Var = (16/15) * 1, scaled by T_b = 5.
    CHECK(c == doctest::Approx(5.0 * 16.0 / 15.0).epsilon(1e-9));
}

TEST_CASE("batch_means: requires enough segments") {
    std::vector<double> vals(60, 1.0), durs(60, 1.0);
    CHECK_THROWS_AS(batch_means(vals, durs, 32), std::invalid_argument);
}

TEST_CASE("sample_moments and histogram basics") {
    Moments m = sample_moments({1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == doctest::Approx(2.5));
    CHECK(m.variance == doctest::Approx(5.0 / 3.0));
    CHECK(m.n == 4);

    auto h = histogram({-5.0, 0.1, 0.6, 0.6, 99.0}, 0.0, 1.0, 2);
    REQUIRE(h.size() == 2);
    CHECK(h[0] == 2);  // -5 clamps into the first bin
    CHECK(h[1] == 3);  // 99 clamps into the last bin
}

TEST_CASE("rng streams: reproducible and mutually decorrelated") {
    Rng a = Rng::stream(7, 3);
    Rng b = Rng::stream(7, 3);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

    Rng s0 = Rng::stream(0, 0);
    Rng s1 = Rng::stream(0, 1);
    const std::size_t n = 10000;
    double su = 0, sv = 0, suu = 0, svv = 0, suv = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double u = s0.uniform(), v = s1.uniform();
        su += u;
        sv += v;
        suu += u * u;
        svv += v * v;
        suv += u * v;
    }
    double mu = su / n, mv = sv / n;
    double rho = (suv / n - mu * mv) /
                 std::sqrt((suu / n - mu * mu) * (svv / n - mv * mv));
    CHECK(std::fabs(rho) < 0.05);
    CHECK(std::fabs(mu - 0.5) < 0.02);
    CHECK(std::fabs(mv - 0.5) < 0.02);
}

TEST_CASE("rng basics: ranges and exponential moments") {
    Rng rng(123);
    double mx = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mx = std::max(mx, u);
    }
    CHECK(mx > 0.99);

    double s = 0.0;
    for (int i = 0; i < 50000; ++i) {
        double e = rng.exponential();
        CHECK(e >= 0.0);
        s += e;
    }
    CHECK(std::fabs(s / 50000 - 1.0) < 0.03);
}
