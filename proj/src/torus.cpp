#include "metasim/torus.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace metasim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.283185307179586476925286766559;

// One step of the angle-addition recurrence: (cos kz, sin kz) -> (k+1)z.
inline void rotate(double& ck, double& sk, double c1, double s1) {
    double cn = ck * c1 - sk * s1;
    sk = sk * c1 + ck * s1;
    ck = cn;
}

}  // namespace

TrigPotential::TrigPotential(std::vector<double> a, std::vector<double> b, double mean_offset)
    : cos_coeffs(std::move(a)), sin_coeffs(std::move(b)), mean(mean_offset) {
    if (cos_coeffs.size() != sin_coeffs.size()) {
        throw std::invalid_argument("TrigPotential: coefficient vectors must have equal length");
    }
}

double TrigPotential::value(double z) const {
    double c1 = std::cos(z), s1 = std::sin(z);
    double ck = c1, sk = s1;
    double sum = mean;
    for (std::size_t k = 0; k < cos_coeffs.size(); ++k) {
        sum += cos_coeffs[k] * ck + sin_coeffs[k] * sk;
        rotate(ck, sk, c1, s1);
    }
    return sum;
}

double TrigPotential::derivative(double z) const {
    double c1 = std::cos(z), s1 = std::sin(z);
    double ck = c1, sk = s1;
    double sum = 0.0;
    for (std::size_t k = 0; k < cos_coeffs.size(); ++k) {
        double kk = static_cast<double>(k + 1);
        sum += kk * (sin_coeffs[k] * ck - cos_coeffs[k] * sk);
        rotate(ck, sk, c1, s1);
    }
    return sum;
}

int TrigPotential::degree() const {
    for (std::size_t k = cos_coeffs.size(); k > 0; --k) {
        if (cos_coeffs[k - 1] != 0.0 || sin_coeffs[k - 1] != 0.0) return static_cast<int>(k);
    }
    return 0;
}

double FourierBias::value(double z) const {
    double c1 = std::cos(z), s1 = std::sin(z);
    double ck = c1, sk = s1;
    double sum = 0.0;
    for (int k = 0; k < N; ++k) {
        sum += alpha[k] * ck + beta_coef[k] * sk;
        rotate(ck, sk, c1, s1);
    }
    return sum;
}

double FourierBias::grad(double z) const {
    double c1 = std::cos(z), s1 = std::sin(z);
    double ck = c1, sk = s1;
    double sum = 0.0;
    for (int k = 0; k < N; ++k) {
        double kk = static_cast<double>(k + 1);
        sum += kk * (beta_coef[k] * ck - alpha[k] * sk);
        rotate(ck, sk, c1, s1);
    }
    return sum;
}

double bias_value(const FourierBias& bias, double z) { return bias.value(z); }
double bias_grad(const FourierBias& bias, double z) { return bias.grad(z); }

double wrap_angle(double z) {
    double w = std::remainder(z, kTwoPi);  // lands in [-pi, pi]
    if (w >= kPi) w -= kTwoPi;
    return w;
}

TorusState init_from_potential(const TrigPotential& F, int N, double gamma,
                               double inv_temp, double z0, bool allow_violation) {
    if (N < 0) throw std::invalid_argument("init_from_potential: N must be >= 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("init_from_potential: gamma must be finite and >= 0");
    }
    if (!(inv_temp > 0.0)) {  // +inf allowed: the noiseless limit
        throw std::invalid_argument("init_from_potential: inv_temp must be > 0");
    }
    int deg = F.degree();
    if (N < deg && !allow_violation) {
        throw std::invalid_argument(
            "init_from_potential: truncation order below the degree of F "
            "(pass allow_violation to explore this regime)");
    }

    TorusState st;
    st.F = F;
    st.z = wrap_angle(z0);
    st.bias.N = N;
    st.bias.gamma = gamma;
    st.bias.inv_temp = inv_temp;
    st.bias.alpha.assign(static_cast<std::size_t>(N), 0.0);
    st.bias.beta_coef.assign(static_cast<std::size_t>(N), 0.0);
    // Phi_0 = F - mean F; modes beyond N (possible only with allow_violation)
    // are projected away.
    int copy = std::min(N, F.n_modes());
    for (int k = 0; k < copy; ++k) {
        st.bias.alpha[k] = F.cos_coeffs[k];
        st.bias.beta_coef[k] = F.sin_coeffs[k];
    }
    st.integral_alpha.assign(static_cast<std::size_t>(N), 0.0);
    st.integral_beta.assign(static_cast<std::size_t>(N), 0.0);
    return st;
}

void step_em(TorusState& state, double dt, double noise) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_em: dt must be > 0");
    FourierBias& b = state.bias;
    const int N = b.N;
    const double z = state.z;
    const double c1 = std::cos(z), s1 = std::sin(z);

    // Drift -Phi'(z) = sum_k k (alpha_k sin kz - beta_k cos kz).
    double drift = 0.0;
    {
        double ck = c1, sk = s1;
        for (int k = 0; k < N; ++k) {
            drift += static_cast<double>(k + 1) * (b.alpha[k] * sk - b.beta_coef[k] * ck);
            rotate(ck, sk, c1, s1);
        }
    }
    const double noise_scale = std::sqrt(2.0 * dt / b.inv_temp);
    state.z = wrap_angle(z + drift * dt + noise_scale * noise);

    // Deposition at the pre-step angle.
    const double gdt = b.gamma * dt;
    {
        double ck = c1, sk = s1;
        for (int k = 0; k < N; ++k) {
            b.alpha[k] += gdt * ck;
            b.beta_coef[k] += gdt * sk;
            rotate(ck, sk, c1, s1);
        }
    }
    state.t += dt;
    for (int k = 0; k < N; ++k) {
        state.integral_alpha[k] += b.alpha[k] * dt;
        state.integral_beta[k] += b.beta_coef[k] * dt;
    }
}

std::vector<double> TorusState::running_avg_alpha() const {
    if (t == 0.0) throw std::invalid_argument("running_avg_alpha: t == 0");
    std::vector<double> out(integral_alpha);
    for (double& v : out) v /= t;
    return out;
}

std::vector<double> TorusState::running_avg_beta() const {
    if (t == 0.0) throw std::invalid_argument("running_avg_beta: t == 0");
    std::vector<double> out(integral_beta);
    for (double& v : out) v /= t;
    return out;
}

std::vector<double> averaged_penalty(const TorusState& state, const std::vector<double>& grid) {
    if (state.t == 0.0) throw std::invalid_argument("averaged_penalty: t == 0");
    std::vector<double> avg_a = state.running_avg_alpha();
    std::vector<double> avg_b = state.running_avg_beta();
    std::vector<double> out;
    out.reserve(grid.size());
    for (double z : grid) {
        double c1 = std::cos(z), s1 = std::sin(z);
        double ck = c1, sk = s1;
        double phi = 0.0;
        for (std::size_t k = 0; k < avg_a.size(); ++k) {
            phi += avg_a[k] * ck + avg_b[k] * sk;
            rotate(ck, sk, c1, s1);
        }
        out.push_back(phi - state.F.centered(z));
    }
    return out;
}

TorusMoments invariant_moments(const TorusTrace& trace, int z_bins) {
    if (trace.size() < 2) throw std::invalid_argument("invariant_moments: need at least 2 samples");
    if (z_bins < 1) throw std::invalid_argument("invariant_moments: z_bins must be >= 1");
    const std::size_t n = trace.size();
    const std::size_t modes = trace.alpha.empty() ? 0 : trace.alpha[0].size();

    TorusMoments m;
    m.mean_alpha.assign(modes, 0.0);
    m.var_alpha.assign(modes, 0.0);
    m.mean_beta.assign(modes, 0.0);
    m.var_beta.assign(modes, 0.0);
    // Welford per mode.
    for (std::size_t i = 0; i < n; ++i) {
        double cnt = static_cast<double>(i + 1);
        for (std::size_t k = 0; k < modes; ++k) {
            double da = trace.alpha[i][k] - m.mean_alpha[k];
            m.mean_alpha[k] += da / cnt;
            m.var_alpha[k] += da * (trace.alpha[i][k] - m.mean_alpha[k]);
            double db = trace.beta[i][k] - m.mean_beta[k];
            m.mean_beta[k] += db / cnt;
            m.var_beta[k] += db * (trace.beta[i][k] - m.mean_beta[k]);
        }
    }
    for (std::size_t k = 0; k < modes; ++k) {
        m.var_alpha[k] /= static_cast<double>(n - 1);
        m.var_beta[k] /= static_cast<double>(n - 1);
    }

    m.z_hist.assign(static_cast<std::size_t>(z_bins), 0);
    for (double z : trace.zs) {
        double u = (z + kPi) / kTwoPi * static_cast<double>(z_bins);
        int b = static_cast<int>(u);
        if (b < 0) b = 0;
        if (b >= z_bins) b = z_bins - 1;
        ++m.z_hist[static_cast<std::size_t>(b)];
    }
    double expected = static_cast<double>(n) / static_cast<double>(z_bins);
    double chi2 = 0.0;
    for (std::uint64_t c : m.z_hist) {
        double d = static_cast<double>(c) - expected;
        chi2 += d * d / expected;
    }
    m.chi2 = chi2;
    return m;
}

TorusRunResult run_torus(const TorusRunConfig& cfg, Rng& rng) {
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("run_torus: dt must be > 0");
    if (!(cfg.horizon > 0.0)) throw std::invalid_argument("run_torus: horizon must be > 0");
    if (!(cfg.sample_every > 0.0)) {
        throw std::invalid_argument("run_torus: sample_every must be > 0");
    }
    if (cfg.grid_size < 1) throw std::invalid_argument("run_torus: grid_size must be >= 1");

    int N = cfg.N > 0 ? cfg.N : cfg.F.degree();
    TorusRunResult res;
    res.state = init_from_potential(cfg.F, N, cfg.gamma, cfg.inv_temp, cfg.z0,
                                    cfg.allow_violation);

    const long long n_steps = std::llround(cfg.horizon / cfg.dt);
    const long long stride =
        std::max(1LL, std::llround(cfg.sample_every / cfg.dt));
    res.trace.ts.reserve(static_cast<std::size_t>(n_steps / stride + 1));

    for (long long step = 1; step <= n_steps; ++step) {
        step_em(res.state, cfg.dt, rng.normal());
        if (step % stride == 0) {
            res.trace.ts.push_back(res.state.t);
            res.trace.zs.push_back(res.state.z);
            res.trace.alpha.push_back(res.state.bias.alpha);
            res.trace.beta.push_back(res.state.bias.beta_coef);
        }
    }

    res.grid.reserve(static_cast<std::size_t>(cfg.grid_size));
    for (int g = 0; g < cfg.grid_size; ++g) {
        res.grid.push_back(-kPi + kTwoPi * static_cast<double>(g) /
                                      static_cast<double>(cfg.grid_size));
    }
    res.avg_psi = averaged_penalty(res.state, res.grid);
    res.target.reserve(res.grid.size());
    res.sup_gap = 0.0;
    for (std::size_t g = 0; g < res.grid.size(); ++g) {
        res.target.push_back(-res.state.F.centered(res.grid[g]));
        double gap = std::fabs(res.avg_psi[g] - res.target[g]);
        if (gap > res.sup_gap) res.sup_gap = gap;
    }
    return res;
}

}  // namespace metasim
