// Discrete-state self-interacting walker with continuous bias deposition.
//
// A walker lives on sites {0..K}.  The edge differences x_k (k = 1..K) encode
// the accumulated bias across edge (k-1, k): while the walker sits at site i
// it deposits at rate gamma, which makes x_i grow at speed gamma and x_{i+1}
// shrink at speed gamma.  From site i it jumps
//     left  (i > 0) at rate exp(+beta (x_i     + A'_i)),
//     right (i < K) at rate exp(-beta (x_{i+1} + A'_{i+1})),
// where A'_k are the increments of the free-energy profile A.  Both active
// hazards grow as exp(beta gamma s) during a dwell, so the next event time has
// a closed-form inverse (no discretization, no thinning) and the jump
// direction has a time-independent probability; the simulation is exact.
//
// Bookkeeping convention: the per-site occupation times L_t(k) are the
// primary accumulators and x is recomputed on demand as
//     x_k = x0_k + gamma (L(k) - L(k-1)).
// This makes the identity between x and the local times hold to the last bit
// at every event, which the distributional-identity tests (flatten and
// gamma-rescale couplings under common random numbers) rely on.

#pragma once

#include "metasim/rng.hpp"
#include "metasim/stats.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace metasim {

struct Landscape {
    std::vector<double> A;     // site values A_0..A_K
    std::vector<double> incr;  // increments A'_k = A_k - A_{k-1}, k = 1..K

    explicit Landscape(std::vector<double> site_values);
    static Landscape flat(int K);

    int K() const { return static_cast<int>(incr.size()); }
    double Aprime(int k) const { return incr[static_cast<std::size_t>(k - 1)]; }  // k in 1..K
};

struct SimParams {
    double inv_temp = 1.0;  // beta
    double gamma = 1.0;     // deposition rate
    double horizon = 1e4;
    std::uint64_t seed = 0;

    void validate() const;  // throws on nonpositive beta/gamma/horizon
};

struct PdmpState {
    int i = 0;       // current site
    double t = 0.0;  // clock
    std::vector<double> x0;           // initial edge differences (length K)
    std::vector<double> local_times;  // L_t(0..K)
    std::vector<double> integral_x;   // exact running integral of X_s(k), length K

    static PdmpState start(int K, int i0, std::vector<double> x0 = {});

    int K() const { return static_cast<int>(x0.size()); }

    // Edge difference x_k for k in 1..K.  Computed from the local times so the
    // bookkeeping identity is exact by construction.
    double x(int k, double gamma) const {
        const auto u = static_cast<std::size_t>(k);
        return x0[u - 1] + gamma * (local_times[u] - local_times[u - 1]);
    }
    std::vector<double> xvec(double gamma) const;
};

struct JumpRates {
    double left = 0.0;   // valid iff has_left
    double right = 0.0;  // valid iff has_right
    bool has_left = false;
    bool has_right = false;
};
JumpRates jump_rates(const PdmpState& s, const Landscape& ls, const SimParams& p);

// Next-event sample.  direction is -1 (left) or +1 (right).
struct EventDraw {
    double dt = 0.0;
    int direction = 0;
};
// Closed-form event kernels for a pair of jump channels, given the log of
// each channel's rate at the start of the dwell (-infinity marks an inactive
// channel).  "Growing" channels share the envelope exp(beta gamma s) during
// the dwell; "constant" channels do not move.  In both cases the channel
// ratio is constant in time, so one Exp(1) draw fixes the event time and one
// uniform (consumed only when both channels are active) picks the direction.
// The binned walker reuses these kernels so that coupled runs agree bit for
// bit with simulate().
EventDraw growing_event_from_log_rates(double log_left, double log_right,
                                       double beta_gamma, double exp_draw,
                                       double unif_draw);
EventDraw constant_event_from_log_rates(double log_left, double log_right,
                                        double exp_draw, double unif_draw);

// Deterministic core: exp_draw ~ Exp(1); unif_draw is consumed only when both
// jump channels are active.
EventDraw sample_next_event_from_draws(const PdmpState& s, const Landscape& ls,
                                       const SimParams& p, double exp_draw, double unif_draw);
EventDraw sample_next_event(const PdmpState& s, const Landscape& ls, const SimParams& p,
                            Rng& rng);

// Deterministic dwell: advances local time at the current site, the clock and
// the exact per-edge integrals (x is piecewise linear, so the trapezoid rule
// is exact).  Throws on dt < 0.
void advance(PdmpState& s, double dt, const SimParams& p);

struct Segment {
    int site = 0;
    double duration = 0.0;
};

struct Trajectory {
    PdmpState state;  // final state (retains x0)
    int i0 = 0;
    std::vector<Segment> segments;  // includes the final partial segment when logged
    bool log_complete = false;
    std::uint64_t n_events = 0;
};

struct SimOptions {
    bool log_segments = false;
    std::size_t log_cap = 1000000;  // beyond this many segments only accumulators persist
    // Called after every jump with the post-jump state.
    std::function<void(const PdmpState&)> on_event;
    // Checked after every jump; returning true ends the run early.  Useful to
    // stop once a local time has passed a target without paying for the full
    // horizon.
    std::function<bool(const PdmpState&)> stop_when;
};

// Event loop until t >= horizon; the final partial segment is advanced by
// exactly horizon - t_last without a jump.
Trajectory simulate(const Landscape& ls, PdmpState init, const SimParams& p, Rng& rng,
                    const SimOptions& opts = {});

// M_t(k) = integral_x(k)/t.  Throws if t == 0.
double ergodic_mean_x(const Trajectory& traj, int k);

// Normalized invariant one-coordinate density of X(k):
//   rho(y) proportional to exp(-(2/(beta gamma)) cosh(beta (y + A'_k))).
struct InvariantMarginal {
    double Aprime = 0.0;
    double beta = 1.0;
    double gamma = 1.0;
    double norm = 1.0;   // normalization constant (integral of the unnormalized density)
    double half_width = 0.0;  // integration half-width used for norm/cdf

    static InvariantMarginal make(const Landscape& ls, int k, const SimParams& p);
    double density(double y) const;
    double cdf(double y) const;  // by quadrature from the left cutoff
};

// Common random number couplings turning the distributional identities into
// pathwise ones.  Both report the maximal pathwise deviation at event times;
// the identities are exact, so the expected deviation is exactly zero.
struct CouplingReport {
    std::uint64_t n_events = 0;
    double max_abs_dev = 0.0;   // max_k |relation residual| over events
    bool times_identical = false;
    bool sites_identical = false;
    bool event_counts_match = false;
};
// Run with landscape A started from x = 0 versus flat run started from y = A';
// the coupled paths satisfy X_t + A' = Y_t at every event.
CouplingReport flatten_equivalence(const Landscape& ls, int i0, const SimParams& p,
                                   std::uint64_t seed);
// Run at (A, beta, gamma) versus (A/gamma, beta*gamma, 1); the coupled paths
// satisfy X_t / gamma = X~_t.  Exact to the bit when gamma is a power of two.
CouplingReport gamma_rescale_equivalence(const Landscape& ls, int i0, const SimParams& p,
                                         std::uint64_t seed);

// Smooth per-site test function with analytic partials, for generator checks.
struct SiteFn {
    std::function<double(const std::vector<double>& x, int site)> value;
    // Partial derivative with respect to x_k, k in 1..K.
    std::function<double(const std::vector<double>& x, int site, int k)> partial;
};

// Literal evaluation of the generator at (x, site).
double generator_apply(const SiteFn& f, const std::vector<double>& x, int site,
                       const Landscape& ls, const SimParams& p);

// Batch-means estimate of the asymptotic variance constant c_f for the
// ergodic average of f along the trajectory (requires a complete segment log).
// Throws std::invalid_argument for batches < 16 or insufficient data.
double clt_variance(const Trajectory& traj, const SimParams& p,
                    const std::function<double(const std::vector<double>& x, int site)>& f,
                    int batches = 32);

// Time-weighted sample of X(k) over the logged segments, approximating the
// occupation measure (1/t) int 1{X_s(k) in .} ds.  During a dwell at site
// k-1 or k the coordinate sweeps a linear ramp, so the dwell's weight is
// spread uniformly over the ramp by slicing it into sub-segments no wider
// than 0.05 in x; a single point mass at the dwell midpoint would leave an
// O(ramp^2) bias in the empirical CDF that does not vanish with the horizon.
// `stride` thins whole dwells by event index to reduce serial dependence.
// Requires a complete segment log.
WeightedSample marginal_sample(const Trajectory& traj, const SimParams& p, int k,
                               int stride = 10);

}  // namespace metasim
