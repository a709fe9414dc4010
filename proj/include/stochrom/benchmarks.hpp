#pragma once

// Test problems: the periodic central-difference semi-discretization of the
// stochastic cubic Schrodinger equation, and the Kubo oscillator with its
// closed-form strong and mean solutions.

#include "stochrom/integrators.hpp"
#include "stochrom/paths.hpp"
#include "stochrom/sde.hpp"

namespace stochrom {

struct NLSConfig {
  std::size_t N = 256;
  double x_max = 60.0;
  double eps = 1.0;
  double beta = 0.0;
  double c = 1.0;    // soliton speed
  double x_c = 30.0;  // soliton centre

  double dx() const { return x_max / static_cast<double>(N); }
  void validate() const;
};

// u = (q_1..q_N, p_1..p_N), psi_j = q_j + i p_j at x_j = (j-1) dx.
//   H = sum_j (q_{j+1}-q_j)^2/(2dx^2) + (p_{j+1}-p_j)^2/(2dx^2) - eps/4 (q_j^2+p_j^2)^2
//   h = -beta/2 sum_j (q_j^2 + p_j^2)
// grad H = L u + a_N(u) with L = blockdiag(-D2, -D2) and
// a_N = -eps (q^2+p^2) (q, p); grad h = -beta u.
HamiltonianSDESystem build_nls_system(const NLSConfig& cfg);

Vec nls_mesh(const NLSConfig& cfg);
// q_j = sqrt2 sech(x_j - x_c) cos(c/2 (x_j - x_c)), p_j likewise with sin.
Vec soliton_initial_condition(const NLSConfig& cfg);
// sqrt2 sech of (x_j - x_c - c t) wrapped into [-x_max/2, x_max/2). eps must be 1.
Vec soliton_modulus_oracle(const NLSConfig& cfg, double t);
// |psi_j| of a state u = (q, p).
Vec nls_modulus(const VecIn& u);

// Relative discrete L2 error at one time (rectangle rule in x). NaN when the
// reference norm vanishes.
double nls_error_e1(const VecIn& u, const VecIn& u_ref, double dx);
// Relative discrete L2 error over space and time (left-endpoint rectangles in
// t, so the last row is not weighted).
double nls_error_e2(const RowMat& states, const RowMat& ref, double dx, double dt);

struct KuboConfig {
  double beta = 0.0;
  double q0 = 0.0;
  double p0 = 1.0;
};

// H = (p^2 + q^2)/2, h = beta H; separable, m = 1.
HamiltonianSDESystem kubo_system(const KuboConfig& cfg);
Vec kubo_initial_condition(const KuboConfig& cfg);
// (q, p) at time t given W(t).
Vec kubo_exact_state(const KuboConfig& cfg, double t, double W);
Trajectory kubo_exact(const KuboConfig& cfg, const WienerPath& path, std::size_t column = 0);
// E[q], E[p] at time t.
Vec kubo_exact_mean(const KuboConfig& cfg, double t);

}  // namespace stochrom
