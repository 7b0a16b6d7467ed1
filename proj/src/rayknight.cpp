#include "metasim/rayknight.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metasim/stats.hpp"

namespace metasim {

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("beta must be positive and finite");
  }
}

}  // namespace

// --- Jump kernel -----------------------------------------------------------

double q_survival(double y, double x, double beta) {
  check_beta(beta);
  double d = x - y;
  if (!(d > 0.0)) return 1.0;  // includes x <= y and NaN-free ordering
  double by = beta * y;
  double mass;  // integrated hazard between y and x
  if (by < -700.0) {
    // e^{beta y} underflows; the lower limit contributes nothing.
    mass = std::exp(beta * x) / beta;
  } else {
    double g = beta * d;
    double t = (g > 700.0) ? std::exp(g) : std::expm1(g);
    mass = std::exp(by) * t / beta;  // may overflow to +inf: survival 0
  }
  return std::exp(-mass);
}

double q_sample_from_u(double y, double beta, double u) {
  check_beta(beta);
  if (!(u > 0.0) || u > 1.0) {
    throw std::invalid_argument("q_sample_from_u: u must lie in (0, 1]");
  }
  double w = -std::log(u);  // Exp(1) integrated hazard to match
  if (w == 0.0) return y;
  // Solve e^{beta z} = e^{beta y} + beta w for z.
  double by = beta * y;
  double z;
  if (by > 0.0) {
    z = y + std::log1p(beta * w * std::exp(-by)) / beta;
  } else {
    z = std::log(std::exp(by) + beta * w) / beta;
  }
  return std::max(z, y);
}

double q_sample(double y, double beta, Rng& rng) {
  return q_sample_from_u(y, beta, rng.uniform_pos());
}

// --- The auxiliary process -------------------------------------------------

double eta_first_jump_time(double y, double beta, double e) {
  check_beta(beta);
  if (!(e >= 0.0)) throw std::invalid_argument("eta_first_jump_time: e must be >= 0");
  if (e == 0.0) return 0.0;
  // Integrated hazard after time u is e^{-beta y} (e^{beta u} - 1) / beta.
  double by = beta * y;
  double u;
  if (by > 0.0) {
    u = y + std::log(beta * e + std::exp(-by)) / beta;
  } else {
    u = std::log1p(beta * e * std::exp(by)) / beta;
  }
  return std::max(u, 0.0);
}

EtaProcess EtaProcess::at_point(double y0, double beta) {
  check_beta(beta);
  return EtaProcess(y0, beta);
}

EtaProcess EtaProcess::from_q(double anchor, double beta, Rng& rng) {
  check_beta(beta);
  return EtaProcess(q_sample(anchor, beta, rng), beta);
}

void EtaProcess::advance_to(double s_target, Rng& rng) {
  if (!(s_target >= s_)) {
    throw std::invalid_argument("EtaProcess::advance_to: clock cannot move backwards");
  }
  if (s_target == s_) return;
  for (;;) {
    double e = rng.exponential();
    double u = eta_first_jump_time(y_, beta_, e);
    double remaining = s_target - s_;
    if (!(u < remaining)) {  // next jump falls beyond the window
      y_ -= remaining;
      s_ = s_target;
      return;
    }
    s_ += u;
    y_ -= u;
    y_ = q_sample(y_, beta_, rng);
    ++jumps_;
  }
}

InvariantMarginal eta_invariant_law(double beta) {
  check_beta(beta);
  SimParams p;
  p.inv_temp = beta;
  p.gamma = 1.0;
  return InvariantMarginal::make(Landscape::flat(1), 1, p);
}

// --- Extraction from a logged trajectory -----------------------------------

EtaMinusPath extract_eta_minus(const Trajectory& traj, int k, const SimParams& params) {
  if (!traj.log_complete) {
    throw std::invalid_argument("extract_eta_minus: trajectory log is incomplete");
  }
  int K = traj.state.K();
  if (k < 1 || k > K) throw std::invalid_argument("extract_eta_minus: k out of range");

  const double gamma = params.gamma;
  EtaMinusPath path;
  path.gamma = gamma;
  path.x0k = traj.state.x0[static_cast<std::size_t>(k) - 1];

  std::vector<double> L(static_cast<std::size_t>(K) + 1, 0.0);
  double pending = 0.0;  // walker time spent at site k since last visit to k-1
  auto xk_now = [&]() { return path.x0k + gamma * (L[k] - L[k - 1]); };

  for (const Segment& seg : traj.segments) {
    if (seg.site == k - 1) {
      if (!path.activated) {
        // First arrival: everything accumulated so far is the starting value.
        path.activated = true;
        path.y0 = xk_now();
        pending = 0.0;
      } else if (pending != 0.0) {
        // The completed excursion to the right lands the process upward.
        path.nodes.push_back({true, pending, 0.0, xk_now()});
        pending = 0.0;
      }
      double lk_frozen = L[k];
      L[k - 1] += seg.duration;
      path.total_clock += seg.duration;  // mirrors the L(k-1) accumulation
      path.nodes.push_back({false, seg.duration, lk_frozen, xk_now()});
    } else {
      if (seg.site == k && path.activated) pending += gamma * seg.duration;
      L[seg.site] += seg.duration;
    }
  }
  return path;
}

double EtaMinusPath::eval(double s) const {
  if (!activated) {
    throw std::logic_error("EtaMinusPath::eval: walker never reached site k-1");
  }
  if (!(s >= 0.0)) throw std::invalid_argument("EtaMinusPath::eval: clock must be >= 0");
  double v = y0;
  double s_acc = 0.0;
  for (const EtaPathNode& node : nodes) {
    if (node.is_jump) {
      v = node.value_after;  // instantaneous, right-continuous
      continue;
    }
    if (s < s_acc + node.delta) {
      // Reproduce the simulator's arithmetic: advance L(k-1) from its value
      // at the segment start (== s_acc) by the partial duration.
      double l_now = s_acc + (s - s_acc);
      return x0k + gamma * (node.l_k_frozen - l_now);
    }
    s_acc += node.delta;
    v = node.value_after;
  }
  return v;  // s at or beyond the recorded horizon
}

// --- Local-time profiles ---------------------------------------------------

LocalTimeProfile direct_profile(const Trajectory& traj, int j, double r) {
  if (!traj.log_complete) {
    throw std::invalid_argument("direct_profile: trajectory log is incomplete");
  }
  int K = traj.state.K();
  if (j < 0 || j > K) throw std::invalid_argument("direct_profile: j out of range");
  if (!(r >= 0.0)) throw std::invalid_argument("direct_profile: r must be >= 0");

  std::vector<double> L(static_cast<std::size_t>(K) + 1, 0.0);
  double t = 0.0;
  if (r == 0.0) return {j, r, L, 0.0};

  for (const Segment& seg : traj.segments) {
    if (seg.site == j && L[j] + seg.duration >= r) {
      double partial = r - L[j];
      L[j] += partial;
      LocalTimeProfile out{j, r, L, t + partial};
      out.values[j] = r;  // stopping rule: the target is hit exactly
      return out;
    }
    L[seg.site] += seg.duration;
    t += seg.duration;
  }
  throw std::runtime_error("direct_profile: local time target not reached before horizon");
}

namespace {

double clamp_local_time(double lam) {
  if (lam >= 0.0) return lam;
  if (lam >= -1e-9) return 0.0;  // cancellation residue
  throw std::runtime_error("rk_walk_profile: negative local time");
}

}  // namespace

LocalTimeProfile rk_walk_profile(const std::vector<double>& x0, int i0, int j,
                                 double r, double beta, Rng& rng) {
  check_beta(beta);
  int K = static_cast<int>(x0.size());
  if (K < 1) throw std::invalid_argument("rk_walk_profile: need at least one edge");
  if (j < 0 || j > K) throw std::invalid_argument("rk_walk_profile: j out of range");
  if (i0 < 0 || i0 > K) throw std::invalid_argument("rk_walk_profile: i0 out of range");
  if (!(r >= 0.0)) throw std::invalid_argument("rk_walk_profile: r must be >= 0");

  std::vector<double> values(static_cast<std::size_t>(K) + 1, 0.0);
  values[j] = r;
  // Rightward: each edge difference at the stopping time is the eta^- process
  // of that edge run for the already-known local time of its left endpoint.
  for (int k = j + 1; k <= K; ++k) {
    double x0k = x0[static_cast<std::size_t>(k) - 1];
    EtaProcess eta = (i0 < k) ? EtaProcess::at_point(x0k, beta)
                              : EtaProcess::from_q(x0k, beta, rng);
    eta.advance_to(values[k - 1], rng);
    values[k] = clamp_local_time(values[k - 1] + eta.value() - x0k);
  }
  // Leftward: mirror construction with eta^+ (the sign-flipped edge).
  for (int k = j; k >= 1; --k) {
    double x0k = x0[static_cast<std::size_t>(k) - 1];
    EtaProcess eta = (i0 >= k) ? EtaProcess::at_point(-x0k, beta)
                               : EtaProcess::from_q(-x0k, beta, rng);
    eta.advance_to(values[k], rng);
    values[k - 1] = clamp_local_time(values[k] + eta.value() + x0k);
  }
  return {j, r, values, 0.0};
}

// --- Lyapunov function -----------------------------------------------------

namespace {

void check_s(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw std::invalid_argument("Lyapunov scale s must be positive and finite");
  }
}

}  // namespace

double wh_lyapunov(double x, double s) {
  check_s(s);
  if (x <= -s - 1.0) return 2.0;
  if (x < -s) {
    double u = x + s + 1.0;  // in (0, 1)
    return 2.0 - u * u * (3.0 - 2.0 * u);
  }
  if (x <= s) return 1.0;
  return std::exp(2.0 * (x - s));
}

double wh_lyapunov_deriv(double x, double s) {
  check_s(s);
  if (x <= -s - 1.0) return 0.0;
  if (x < -s) {
    double u = x + s + 1.0;
    return -6.0 * u * (1.0 - u);
  }
  if (x < s) return 0.0;
  return 2.0 * std::exp(2.0 * (x - s));  // right derivative at the kink x = s
}

double wh_generator_apply(double x, double s, double beta) {
  check_s(s);
  check_beta(beta);
  if (!std::isfinite(x)) throw std::invalid_argument("wh_generator_apply: x must be finite");

  const double wx = wh_lyapunov(x, s);
  const double ebx = std::exp(-beta * x);
  // Substituting w = (e^{beta z} - e^{beta x}) / beta turns the jump integral
  // into an expectation against Exp(1); the landing point is
  //   z(w) = x + log1p(beta w e^{-beta x}) / beta.
  auto integrand = [&](double w) {
    double u = beta * w * ebx;
    if (x >= s) {
      // Both x and the landing point z >= x sit in the exponential piece, so
      // W(z) - W(x) = e^{2(x-s)} (e^{2(z-x)} - 1).  Evaluate it through
      // expm1/log1p: the direct subtraction loses all precision once
      // z - x ~ w e^{-beta x} drops below the ulp of W(x).
      return std::exp(-w) * std::exp(2.0 * (x - s)) *
             std::expm1(2.0 * std::log1p(u) / beta);
    }
    double z = x + std::log1p(u) / beta;
    return std::exp(-w) * (wh_lyapunov(z, s) - wx);
  };

  // Split at the images of the kinks of W so the quadrature sees smooth pieces.
  const double w_max = 45.0;  // Exp(1) tail beyond this is ~3e-20
  std::vector<double> cuts{0.0};
  for (double b : {-s - 1.0, -s, s}) {
    double wb = (std::exp(beta * b) - std::exp(beta * x)) / beta;
    if (wb > 0.0 && wb < w_max) cuts.push_back(wb);
  }
  cuts.push_back(w_max);
  std::sort(cuts.begin(), cuts.end());

  double jump = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    jump += adaptive_quadrature(integrand, cuts[i], cuts[i + 1], 1e-10);
  }
  return -wh_lyapunov_deriv(x, s) + ebx * jump;
}

double wh_gumbel_expectation(double s, double beta) {
  check_s(s);
  check_beta(beta);
  // If v ~ Exp(1) then G = ln(beta v) / beta has the law with survival
  // P(G >= x) = exp(-e^{beta x} / beta); W is bounded near v = 0, so the
  // integrand is smooth there despite the logarithm.
  auto integrand = [&](double v) {
    double y = std::log(beta * v) / beta;
    return std::exp(-v) * wh_lyapunov(y, s);
  };
  const double v_max = 45.0;
  std::vector<double> cuts{0.0};
  for (double b : {-s - 1.0, -s, s}) {
    double vb = std::exp(beta * b) / beta;
    if (vb > 0.0 && vb < v_max) cuts.push_back(vb);
  }
  cuts.push_back(v_max);
  std::sort(cuts.begin(), cuts.end());

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += adaptive_quadrature(integrand, cuts[i], cuts[i + 1], 1e-10);
  }
  return total;
}

WhDriftReport wh_drift_scan(double s, double beta, double lo, double hi, double step) {
  check_s(s);
  check_beta(beta);
  if (!(step > 0.0) || !(lo < hi)) {
    throw std::invalid_argument("wh_drift_scan: need step > 0 and lo < hi");
  }
  WhDriftReport report;
  report.s = s;
  report.beta = beta;
  report.gumbel_expectation = wh_gumbel_expectation(s, beta);

  int n = static_cast<int>(std::floor((hi - lo) / step + 0.5)) + 1;
  std::vector<double> xs;
  std::vector<bool> ok;
  xs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = lo + static_cast<double>(i) * step;
    if (x > hi + 1e-12) break;
    double w = wh_lyapunov(x, s);
    double h = wh_generator_apply(x, s, beta);
    // Tiny slack absorbs quadrature error at points where the inequality is
    // close to an equality.
    bool holds = h <= -w + 1e-7 * std::max({1.0, std::fabs(w), std::fabs(h)});
    xs.push_back(x);
    ok.push_back(holds);
    ++report.n_checked;
    if (!holds) {
      ++report.n_failed;
      report.c = std::max(report.c, std::fabs(x));
    }
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::fabs(xs[i]) > report.c && !ok[i]) report.holds_outside = false;
  }
  return report;
}

}  // namespace metasim
