#include "metasim/sand.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metasim {

Profile Profile::from_levels(const std::vector<double>& l) {
    if (l.empty()) throw std::invalid_argument("Profile::from_levels: empty");
    Profile p;
    p.l0 = l.front();
    p.x.resize(l.size() - 1);
    for (std::size_t k = 1; k < l.size(); ++k) p.x[k - 1] = l[k] - l[k - 1];
    return p;
}

std::vector<double> Profile::levels() const {
    std::vector<double> l(x.size() + 1);
    l[0] = l0;
    for (std::size_t k = 0; k < x.size(); ++k) l[k + 1] = l[k] + x[k];
    return l;
}

void SeparationParams::validate() const {
    if (!(t > 0.0) || !(a > 0.0) || !(A > a))
        throw std::invalid_argument("SeparationParams: need t > 0 and A > a > 0");
}

double sand_from_levels(const std::vector<double>& l) {
    if (l.empty()) throw std::invalid_argument("sand_from_levels: empty profile");
    double mx = *std::max_element(l.begin(), l.end());
    double s = 0.0;
    for (double v : l) s += mx - v;
    return s;
}

double sand(const std::vector<double>& x) {
    return sand_from_levels(Profile::from_x(x).levels());
}

bool is_separated(const std::vector<double>& x, const SeparationParams& p) {
    p.validate();
    bool any_large = false;
    for (double v : x) {
        double m = std::fabs(v);
        if (m > p.A * p.t)
            any_large = true;
        else if (m > p.a * p.t)
            return false;  // forbidden middle band
    }
    return any_large;
}

PlateauResult plateaus(const std::vector<double>& x, const SeparationParams& p) {
    PlateauResult res;
    res.separated = is_separated(x, p);
    if (!res.separated) return res;
    const int K = static_cast<int>(x.size());
    const double at = p.a * p.t;
    const double At = p.A * p.t;
    auto xk = [&](int k) { return x[static_cast<std::size_t>(k - 1)]; };  // k in 1..K

    // Sites split at every edge that is not strictly small; within a
    // separated configuration those are exactly the large edges.  A segment
    // {l..r-1} is a plateau iff its bounding edges (where they exist) are a
    // steep rise on the left and a steep drop on the right.
    int start = 0;  // first site of the current segment
    for (int edge = 1; edge <= K + 1; ++edge) {
        bool cut = (edge == K + 1) || !(std::fabs(xk(edge)) < at);
        if (!cut) continue;
        int l = start, r = edge;  // sites {l..r-1}, bounding edges l and r
        bool left_ok = (l == 0) || xk(l) > At;
        bool right_ok = (r == K + 1) || xk(r) < -At;
        if (left_ok && right_ok) res.intervals.emplace_back(l, r);
        start = edge;
    }
    return res;
}

double lyapunov_w(const std::vector<double>& x, double chi) {
    if (!(chi > 0.0)) throw std::invalid_argument("lyapunov_w: chi must be > 0");
    return std::exp(chi * sand(x));
}

SandDriftReport sand_drift_check(const Trajectory& traj) {
    if (!traj.log_complete)
        throw std::invalid_argument("sand_drift_check: needs a complete segment log");
    const int K = traj.state.K();
    const std::vector<double>& x0 = traj.state.x0;
    const double S0 = sand(x0);

    // Tilted local-time profile L~(j) = L(j) + l0(j); the walker sits "at the
    // max" exactly while its tilted value is the running maximum, and only
    // the current site's value moves (upward, at unit rate).
    std::vector<double> l0 = Profile::from_x(x0).levels();
    std::vector<double> ltilde = l0;
    std::vector<double> L(static_cast<std::size_t>(K) + 1, 0.0);
    std::vector<double> x(static_cast<std::size_t>(K), 0.0);

    SandDriftReport rep;
    double t = 0.0, M = 0.0;
    for (const Segment& seg : traj.segments) {
        const auto i = static_cast<std::size_t>(seg.site);
        double max_others = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= static_cast<std::size_t>(K); ++j)
            if (j != i) max_others = std::max(max_others, ltilde[j]);
        // Time at the max during this segment: the current value rises
        // linearly, so it is either at the max throughout, or reaches the
        // (frozen) other maximum after a deficit delay.  Ties at isolated
        // instants contribute zero time.
        if (ltilde[i] >= max_others) {
            M += seg.duration;
        } else {
            double deficit = max_others - ltilde[i];
            if (seg.duration > deficit) M += seg.duration - deficit;
        }
        ltilde[i] += seg.duration;
        L[i] += seg.duration;
        t += seg.duration;

        for (int k = 1; k <= K; ++k)
            x[static_cast<std::size_t>(k - 1)] =
                x0[static_cast<std::size_t>(k - 1)] +
                (L[static_cast<std::size_t>(k)] - L[static_cast<std::size_t>(k - 1)]);
        double lhs = sand(x);
        double rhs = S0 - t + (K + 1) * M;
        rep.max_residual = std::max(rep.max_residual, std::fabs(lhs - rhs));
        rep.max_m_minus_t = std::max(rep.max_m_minus_t, M - t);
    }
    rep.final_m = M;
    rep.final_t = t;
    return rep;
}

}  // namespace metasim
