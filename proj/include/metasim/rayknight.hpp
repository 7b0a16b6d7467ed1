// Local-time profiles of the lattice walker via an auxiliary jump process.
//
// Fix an edge {k-1, k} of the flat-landscape walker (gamma = 1).  Watch the
// edge difference X(k) = x0(k) + L(k) - L(k-1) only while the walker sits at
// site k-1, i.e. reparametrise it by the local time of site k-1.  The
// resulting process eta^-_k drifts down at unit speed and jumps upward at
// rate exp(-beta y): a jump corresponds to one complete excursion of the
// walker to the right of k-1, and the landing point has the law q(y, .)
// below.  Processes attached to different edges are independent, which turns
// the local-time profile frozen at an inverse local time
//
//     T_{j,r} = inf{ t : L_t(j) >= r },      Lambda_{j,r}(k) = L_{T_{j,r}}(k)
//
// into a spatial Markov walk in k: starting from Lambda(j) = r, each step
// right is Lambda(k) = Lambda(k-1) + eta^-_k(Lambda(k-1)) - x0(k), and each
// step left uses the mirror process eta^+_k run for time Lambda(k).
//
// This header provides:
//   * the jump kernel q (survival function and exact sampler),
//   * EtaProcess, an exact event-driven simulator for eta,
//   * extract_eta_minus, which reads eta^-_k off a logged walker trajectory,
//   * direct_profile / rk_walk_profile, the two ways of producing
//     Lambda_{j,r} whose laws must agree,
//   * the piecewise Lyapunov function W_s for eta together with numerical
//     evaluation of H W_s, used to certify geometric ergodicity.
//
// Everything here is for the flat landscape with unit deposition rate; the
// general walker lives in discrete.hpp.

#pragma once

#include <cstddef>
#include <vector>

#include "metasim/discrete.hpp"
#include "metasim/rng.hpp"

namespace metasim {

// --- Jump kernel q(y, .) ---------------------------------------------------
//
// q(y, z) dz = 1{z >= y} e^{beta z} exp(-(e^{beta z} - e^{beta y}) / beta) dz
// is the law of the edge difference after one excursion that starts at y.
// Its survival function is available in closed form and the quantile is
// explicit, so sampling is exact and monotone in y for a fixed uniform draw.

// P(Z > x) for Z ~ q(y, .).  Equals 1 for x <= y.
double q_survival(double y, double x, double beta);

// Quantile transform: the sample whose survival probability is u in (0, 1].
// Overflow-safe for |beta * y| up to several hundred; always returns >= y.
double q_sample_from_u(double y, double beta, double u);

// Draw Z ~ q(y, .) using one uniform from `rng`.
double q_sample(double y, double beta, Rng& rng);

// --- The auxiliary process eta --------------------------------------------
//
// Between jumps eta decreases at unit speed; from state y it jumps after an
// integrated hazard int_0^u e^{-beta (y - v)} dv reaches an Exp(1) draw, and
// the landing point is q(current state, .).  The process is Markov, so
// advance_to may be called repeatedly with increasing targets; each call
// consumes exactly one Exp(1) draw per candidate jump plus one uniform per
// realised jump.

// Time until the first jump when starting from y, given the Exp(1) draw e.
// Solves (e^{beta u} - 1) e^{-beta y} / beta = e for u; exact and
// overflow-safe on both tails.
double eta_first_jump_time(double y, double beta, double e);

class EtaProcess {
 public:
  // Start from the deterministic point y0.
  static EtaProcess at_point(double y0, double beta);
  // Start from a draw of q(anchor, .).
  static EtaProcess from_q(double anchor, double beta, Rng& rng);

  // Advance the internal clock to s_target (>= current clock).
  void advance_to(double s_target, Rng& rng);

  double value() const { return y_; }
  double clock() const { return s_; }
  std::uint64_t jump_count() const { return jumps_; }

 private:
  EtaProcess(double y0, double beta) : y_(y0), beta_(beta) {}

  double y_ = 0.0;
  double s_ = 0.0;
  double beta_ = 1.0;
  std::uint64_t jumps_ = 0;
};

// Invariant law of eta: density proportional to exp(-(2/beta) cosh(beta x)).
// This is the flat-landscape edge marginal, so we reuse that machinery.
InvariantMarginal eta_invariant_law(double beta);

// --- Reading eta off a walker trajectory ----------------------------------

// One piece of the reconstructed path: either a downward drift segment of
// the given clock duration, or an instantaneous upward jump of size `delta`
// (the time the walker spent at site k during the excursion).  `value_after`
// is the edge difference at the end of the piece; drift segments additionally
// freeze the opposing local time so eval() can reproduce interior values with
// the exact arithmetic of the simulator.
struct EtaPathNode {
  bool is_jump = false;
  double delta = 0.0;        // clock duration (drift) or jump size (jump)
  double l_k_frozen = 0.0;   // L(k) during a drift segment
  double value_after = 0.0;
};

struct EtaMinusPath {
  bool activated = false;  // walker visited site k-1 at least once
  double y0 = 0.0;         // value at clock 0 (first arrival at k-1)
  double x0k = 0.0;        // landscape offset x0(k) used in reconstruction
  double gamma = 1.0;
  double total_clock = 0.0;
  std::vector<EtaPathNode> nodes;

  // Right-continuous evaluation at clock s in [0, total_clock].  Interior
  // points of drift segments are computed with the same floating-point
  // expression the walker uses for X(k), so values at matching clocks agree
  // bit for bit with a replay of the underlying trajectory.
  double eval(double s) const;
};

// Reconstruct eta^-_k from a fully logged trajectory.  Requires
// traj.log_complete and 1 <= k <= K.  A trajectory that never visits k-1
// yields activated = false and an empty path.
EtaMinusPath extract_eta_minus(const Trajectory& traj, int k, const SimParams& params);

// --- Local-time profiles at inverse local times ----------------------------

struct LocalTimeProfile {
  int j = 0;
  double r = 0.0;
  std::vector<double> values;  // Lambda(0..K)
  double stop_time = 0.0;      // T_{j,r}; only set by direct_profile
};

// Replay a fully logged trajectory until L(j) first reaches r and return the
// frozen local-time profile.  values[j] == r exactly (stopping rule); throws
// std::runtime_error if the horizon ends before the target is reached.
LocalTimeProfile direct_profile(const Trajectory& traj, int j, double r);

// Generate Lambda_{j,r} directly as the spatial Markov walk, without
// simulating the walker.  x0 holds the initial edge differences x0(1..K)
// (size K); i0 is the walker's initial site.  Exact simulation: each
// coordinate is produced by running the appropriate eta process for the
// already-known adjacent value.  Local times are nonnegative by
// construction; values that land within 1e-9 below zero (floating-point
// cancellation) are clamped to zero, anything lower throws.
LocalTimeProfile rk_walk_profile(const std::vector<double>& x0, int i0, int j,
                                 double r, double beta, Rng& rng);

// --- Lyapunov function for eta ---------------------------------------------
//
// W_s equals 2 left of -s-1, equals 1 on [-s, s], grows like e^{2(x-s)} to
// the right, and interpolates smoothly (cubic, C^1) on [-s-1, -s].  For s
// large enough it satisfies H W_s <= -W_s outside a compact set, which is
// the drift condition behind geometric ergodicity of eta.

double wh_lyapunov(double x, double s);
double wh_lyapunov_deriv(double x, double s);

// (H W_s)(x): drift term plus the jump expectation, the latter evaluated by
// adaptive quadrature after the substitution w = (e^{beta z} - e^{beta x})/beta,
// which maps the jump law to Exp(1).  Accurate to ~1e-9 relative.
double wh_generator_apply(double x, double s, double beta);

// E[W_s(G)] where P(G >= x) = exp(-e^{beta x} / beta).  The drift proof needs
// this to be <= 4/3 for the chosen s.
double wh_gumbel_expectation(double s, double beta);

struct WhDriftReport {
  double s = 0.0;
  double beta = 1.0;
  double c = 0.0;            // largest |x| on the grid where HW <= -W fails
  int n_checked = 0;
  int n_failed = 0;          // grid points with HW > -W (all inside [-c, c])
  bool holds_outside = true; // HW <= -W at every grid point with |x| > c
  double gumbel_expectation = 0.0;
};

// Scan [lo, hi] with the given step and report where the drift inequality
// H W_s <= -W_s holds.
WhDriftReport wh_drift_scan(double s, double beta, double lo = -50.0,
                            double hi = 50.0, double step = 0.25);

}  // namespace metasim
