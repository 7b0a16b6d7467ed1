// Adiabatic metadynamics on the one-dimensional torus.
//
// The collective variable Z diffuses on [-pi, pi) under the combined
// potential Phi_t(z) = sum_k alpha_k(t) cos(kz) + beta_k(t) sin(kz), while
// the coefficients themselves grow by depositing a bump at the current
// position:
//
//     dZ      = -Phi_t'(Z) dt + sqrt(2/beta) dB
//     dalpha_k =  gamma cos(k Z) dt,     dbeta_k = gamma sin(k Z) dt.
//
// Starting the coefficients at the Fourier expansion of the physical
// potential F (which must be a trigonometric polynomial of degree <= N)
// folds the force -F' into the bias, so no separate force term appears in
// the integrator.  The pair (Z, coefficients) is ergodic: in equilibrium Z
// is uniform on the torus and alpha_k, beta_k are independent centered
// Gaussians with variance gamma / k^2 (stationarity of the product measure
// balances the deposition against the angle drift mode by mode, which fixes
// exactly that variance).  Consequently the time-averaged bias
// converges to a constant, i.e. the averaged penalty
// Psi_t = Phi_t - (F - mean F) flattens F:
//
//     (1/t) int_0^t Psi_s(z) ds  ->  -F(z) + mean F.
//
// This header supplies the Fourier types, an Euler-Maruyama stepper with
// exact torus wrapping, and a driver that records coefficient traces and
// the sup-norm gap between the averaged penalty and its limit.

#pragma once

#include <cstdint>
#include <vector>

#include "metasim/rng.hpp"

namespace metasim {

// Trigonometric polynomial F(z) = mean + sum_k (a_k cos kz + b_k sin kz).
struct TrigPotential {
    std::vector<double> cos_coeffs;  // a_k, k = 1..size
    std::vector<double> sin_coeffs;  // b_k, same length
    double mean = 0.0;               // constant offset (the torus average of F)

    TrigPotential() = default;
    TrigPotential(std::vector<double> a, std::vector<double> b, double mean_offset = 0.0);

    double value(double z) const;
    double derivative(double z) const;
    double centered(double z) const { return value(z) - mean; }
    // Largest k with a nonzero coefficient (0 for a constant).
    int degree() const;
    int n_modes() const { return static_cast<int>(cos_coeffs.size()); }
};

// The evolving bias Phi(z) = sum_{k=1..N} alpha_k cos kz + beta_k sin kz.
// There is no constant mode, so the torus mean of Phi is exactly zero.
struct FourierBias {
    int N = 0;
    std::vector<double> alpha;
    std::vector<double> beta_coef;
    double gamma = 1.0;     // deposition rate (>= 0; zero freezes the bias)
    double inv_temp = 1.0;  // beta (> 0; +inf gives the noiseless limit)

    double value(double z) const;
    double grad(double z) const;
};

double bias_value(const FourierBias& bias, double z);
double bias_grad(const FourierBias& bias, double z);

// Reduce an angle to [-pi, pi).
double wrap_angle(double z);

struct TorusState {
    double z = 0.0;
    FourierBias bias;
    TrigPotential F;  // the potential folded into the initial coefficients
    double t = 0.0;
    // Left-endpoint time integrals of the coefficient paths; running averages
    // are these divided by t.
    std::vector<double> integral_alpha, integral_beta;

    std::vector<double> running_avg_alpha() const;  // requires t > 0
    std::vector<double> running_avg_beta() const;
};

// Build the initial state: alpha/beta start at the Fourier coefficients of F
// so that Phi_0 = F - mean F.  Throws if N < degree(F) unless allow_violation
// is set (exploratory runs outside the flattening hypothesis).
TorusState init_from_potential(const TrigPotential& F, int N, double gamma,
                               double inv_temp, double z0 = 0.0,
                               bool allow_violation = false);

// One Euler-Maruyama step with the supplied standard normal draw.  The drift
// and the deposition both use the pre-step angle; the running averages use
// the post-step coefficients.  Throws on dt <= 0.
void step_em(TorusState& state, double dt, double noise);

// (1/t) int_0^t Psi_s(z) ds on the grid, using
// Psi_t = Phi_t - (F - mean F).  Throws if t == 0.
std::vector<double> averaged_penalty(const TorusState& state, const std::vector<double>& grid);

// Periodic samples of the coefficient vector (one row per sample time).
struct TorusTrace {
    std::vector<double> ts, zs;
    std::vector<std::vector<double>> alpha, beta;  // row i = coefficients at ts[i]
    std::size_t size() const { return ts.size(); }
};

struct TorusMoments {
    std::vector<double> mean_alpha, var_alpha, mean_beta, var_beta;
    std::vector<std::uint64_t> z_hist;  // counts over equal bins of [-pi, pi)
    double chi2 = 0.0;                  // chi-square statistic of z_hist vs uniform
};

// Sample moments per mode and a uniformity statistic for Z.  Requires at
// least two samples.
TorusMoments invariant_moments(const TorusTrace& trace, int z_bins = 64);

struct TorusRunConfig {
    TrigPotential F;
    int N = 0;              // 0 = use degree of F
    double gamma = 1.0;
    double inv_temp = 1.0;
    double dt = 1e-3;
    double horizon = 1e5;
    double sample_every = 5.0;  // coefficient trace cadence (simulated time)
    double z0 = 0.0;
    int grid_size = 128;
    bool allow_violation = false;
};

struct TorusRunResult {
    TorusState state;
    TorusTrace trace;
    std::vector<double> grid;      // evaluation angles
    std::vector<double> avg_psi;   // averaged penalty on the grid
    std::vector<double> target;    // -F + mean F on the grid
    double sup_gap = 0.0;          // max_j |avg_psi_j - target_j|
};

TorusRunResult run_torus(const TorusRunConfig& cfg, Rng& rng);

}  // namespace metasim
