// Non-adiabatic metadynamics: three related studies of what the bias learns
// when the collective variable is *not* averaged out.
//
// 1. A two-dimensional toy system (x on the circle, y real) with
//    V(x, y) = cos 2x + 0.05 (y - 3 cos 2x - 3)^2 + 0.5 sin x.
//    The free energy along x is F(x) = cos 2x + 0.5 sin x (the y-marginal is
//    Gaussian with x-independent width).  Metadynamics deposits Gaussians of
//    width equal to the mesh spacing onto a periodic piecewise-affine bias
//    Psi, and the time-averaged bias slope is compared against -F'.  The
//    smaller the deposition rate gamma, the closer the match.
//
// 2. A binned variant of the lattice walker (discrete.hpp): sites are grouped
//    into bins and the bias is deposited per bin, so the jump rates read the
//    local-time differences of bins rather than sites.  With one bin per site
//    this is exactly the original walker; with two coarse bins on a double
//    well the time-averaged bin difference X_t = gamma (l(+) - l(-)) settles
//    near gamma (1/lambda_+ - 1/lambda_-) -- not at the free-energy
//    difference (1/2beta) ln((1 + lambda_+^{-2})/(1 + lambda_-^{-2})).
//
// 3. A three-state caricature (-, 0, +) of the binned model that is exactly
//    solvable: x drifts at +-gamma in the wells, waits at the saddle, and
//    the invariant density mu is explicit.  Simulation, quadrature of mu and
//    the closed-form asymptotics cross-validate each other.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "metasim/discrete.hpp"
#include "metasim/rng.hpp"

namespace metasim {

// --- 2D potential -----------------------------------------------------------

double potential_v(double x, double y);
std::array<double, 2> grad_v(double x, double y);
// Free energy of the x-marginal and its derivative.
double free_energy_f(double x);
double free_energy_fprime(double x);

// --- Periodic piecewise-affine bias mesh ------------------------------------

// Nodes sit at -pi + (j+1) eps for j = 0..I-1 with eps = 2 pi / I, so the
// last node is at pi and the mesh covers (-pi, pi] periodically.
class BiasMesh {
 public:
  explicit BiasMesh(int intervals = 40);

  int intervals() const { return I_; }
  double spacing() const { return eps_; }
  double node_pos(int j) const;
  double node_value(int j) const { return psi_[static_cast<std::size_t>(j)]; }
  const std::vector<double>& values() const { return psi_; }

  // Piecewise-affine periodic interpolation.
  double value(double x) const;
  // Slope of the cell containing x (constant per cell).
  double slope_at(double x) const;
  // Slope attributed to a node: mean of the two adjacent cell slopes, i.e.
  // the centered difference (psi_{j+1} - psi_{j-1}) / (2 eps).
  double node_slope(int j) const;

  // Add gamma dt (2 pi eps^2)^{-1/2} exp(-(node - x - 2 pi m)^2 / (2 eps^2))
  // to every node, summed over periodic images m.  Images and far-away nodes
  // whose relative contribution is below 1e-12 are skipped.
  void deposit(double x, double gamma, double dt);

 private:
  int I_;
  double eps_;
  std::vector<double> psi_;
};

// --- 2D metadynamics driver --------------------------------------------------

struct TwoDConfig {
  double gamma = 1.0;
  double inv_temp = 0.02;  // beta; the reference setup uses beta^{-1} = 50
  double dt = 1e-4;
  double horizon = 1e3;    // the full-length experiment uses 1e4
  int mesh_intervals = 40;
  double x0 = 0.0;
  double y0 = 6.0;
  // Slope averaging starts after this fraction of the horizon, discarding
  // the filling transient.
  double burn_in_fraction = 0.5;
};

struct TwoDState {
  double x = 0.0;  // wrapped to (-pi, pi]
  double y = 0.0;
  double t = 0.0;
  BiasMesh mesh{40};
  std::vector<double> slope_accum;  // per-node sums of node_slope
  std::uint64_t accum_count = 0;
};

// One Euler-Maruyama step with the supplied standard normal draws: drift
// -(dV/dx + dPsi/dx) and -dV/dy, noise scale sqrt(2 dt / beta) on both
// coordinates, deposition at the post-step position.  When `accumulate` is
// set the per-node slopes are added to the running sums.
void step_2d(TwoDState& st, const TwoDConfig& cfg, double noise_x, double noise_y,
             bool accumulate);

struct TwoDResult {
  std::vector<double> nodes;         // node positions
  std::vector<double> avg_slope;     // time-averaged dPsi/dx per node
  std::vector<double> minus_fprime;  // -F' at the nodes
  double sup_gap = 0.0;              // max_j |avg_slope_j + F'(node_j)|
  TwoDState state;                   // final state (mesh included)
  double averaging_time = 0.0;       // simulated time covered by the average
};

TwoDResult run_2d(const TwoDConfig& cfg, Rng& rng);

// --- Binned lattice walker ---------------------------------------------------

// Sites 0..K with potential values V_k, partitioned into bins by `bin_of`
// (surjective onto 0..n_bins-1).  While the walker sits at site k only the
// local time l of bin(k) grows (at unit speed); the jump rates are
//   left:  exp(+beta (gamma [l(bin(k)) - l(bin(k-1))] + V_k - V_{k-1}))
//   right: exp(-beta (gamma [l(bin(k+1)) - l(bin(k))] + V_{k+1} - V_k)).
// A channel whose neighbour shares the current bin has a constant rate
// during the dwell; otherwise the rate carries the envelope
// exp(beta gamma s), exactly as in the per-site walker.  Sampling uses the
// shared closed-form kernels from discrete.hpp, so with identity binning a
// run is bit-for-bit identical to simulate() under common random numbers.
struct BinnedModel {
  std::vector<double> V;     // site potentials, length K+1
  std::vector<double> incr;  // V_k - V_{k-1}, length K
  std::vector<int> bin_of;   // site -> bin
  int n_bins = 0;

  BinnedModel(std::vector<double> site_potential, std::vector<int> bins);
  int K() const { return static_cast<int>(V.size()) - 1; }
};

struct BinnedOptions {
  int i0 = 0;
  int lo_bin = 0;   // X_t = gamma (l(hi_bin) - l(lo_bin))
  int hi_bin = -1;  // -1 = last bin
  double sample_every = 1.0;  // trace cadence; <= 0 disables the trace
  bool record_segments = true;
};

struct BinnedTrajectory {
  int site = 0;
  double t = 0.0;
  std::vector<double> l;       // per-bin local times
  double integral_x = 0.0;     // exact running integral of X
  std::uint64_t n_events = 0;
  std::vector<double> trace_t, trace_x;
  std::vector<double> trace_integral;  // exact integral of X up to each trace time
  // Per-dwell midpoint values and durations of X, for batch-means errors.
  std::vector<double> seg_values, seg_durations;
};

BinnedTrajectory binned_simulate(const BinnedModel& model, const SimParams& p, Rng& rng,
                                 const BinnedOptions& opts = {});

// The two reference values for the canonical double well (V[0] and V[K] the
// well bottoms, V[1] and V[K-1] the saddle edges): the cycle heuristic
// gamma (1/lambda_+ - 1/lambda_-) and the free-energy difference
// (1/2beta) ln((1 + lambda_+^{-2})/(1 + lambda_-^{-2})), with
// lambda_+- = exp(-beta D_+-), D_- = V[1] - V[0], D_+ = V[K-1] - V[K].
double binned_heuristic_mean(const BinnedModel& model, const SimParams& p);
double binned_fe_diff(const BinnedModel& model, const SimParams& p);

// --- Three-state model -------------------------------------------------------

struct SimpParams {
  double beta = 1.0;
  double gamma = 1.0;
  double Dplus = 1.5;
  double Dminus = 2.0;

  void validate() const;
  double lambda_plus() const;   // exp(-beta Dplus)
  double lambda_minus() const;  // exp(-beta Dminus)
};

struct SimpOptions {
  double x0 = 0.0;
  int i0 = 0;  // -1, 0, +1
  double sample_every = 1.0;
  bool record_segments = true;
  bool record_plus_holdings = false;  // completed holding times at i = +
};

struct SimpTrajectory {
  double x = 0.0;
  int i = 0;
  double t = 0.0;
  double integral_x = 0.0;
  std::uint64_t n_events = 0;
  std::vector<double> trace_t, trace_x;
  std::vector<double> seg_values, seg_durations;
  std::vector<double> plus_holding_times;
};

// Exact event-driven simulation: in the wells x drifts at +-gamma and the
// exit rate lambda_+- is constant; at the saddle x is frozen and the two
// exits compete with constant rates e^{beta x}/lambda_- and
// e^{-beta x}/lambda_+.
SimpTrajectory simp_simulate(const SimpParams& p, double horizon, Rng& rng,
                             const SimpOptions& opts = {});

// Invariant density, normalized so the total mass over i and x is one.
// mu_+ is computed in log space from its closed form; mu_- = mu_+ and
// mu_0 = lambda_+ lambda_- (lambda_+ + lambda_-) mu_+ /
//        (lambda_+ e^{beta x} + lambda_- e^{-beta x}).
class SimpDensity {
 public:
  static SimpDensity make(const SimpParams& p);

  double mu_plus(double x) const;
  double mu_minus(double x) const { return mu_plus(x); }
  double mu_zero(double x) const;
  double marginal(double x) const;  // mu_- + mu_0 + mu_+
  double marginal_cdf(double x) const;
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  SimpParams p_;
  double lo_ = 0.0, hi_ = 0.0;  // support truncation for quadrature
  double log_norm = 0.0;        // log of the total unnormalized mass
  std::vector<double> cdf_x_, cdf_v_;  // tabulated marginal CDF

  double log_mu_plus_unnorm(double x) const;
  double log_ratio_zero(double x) const;  // log(mu_0 / mu_+)
};

// Convenience wrapper: (mu_-, mu_0, mu_+) at x.  Builds the normalization on
// every call; use SimpDensity directly for repeated evaluation.
std::array<double, 3> simp_invariant_density(double x, const SimpParams& p);

// Mean of x under the invariant measure, by adaptive quadrature over the
// truncated support.
double simp_mean_quadrature(const SimpParams& p);

// The asymptotic value the mean approaches for well-separated wells:
// gamma (e^{beta Dplus} - e^{beta Dminus}) = gamma (1/lambda_+ - 1/lambda_-).
double simp_heuristic_mean(const SimpParams& p);

}  // namespace metasim
