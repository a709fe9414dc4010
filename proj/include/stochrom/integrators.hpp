#pragma once

// Stochastic time integrators (Stratonovich): explicit Heun, explicit R2,
// implicit midpoint and Stormer-Verlet, plus trajectory diagnostics.
//
// R2 tableau (frozen): stage nodes c = (0, 2/3), weights (1/4, 3/4), the same
// coefficients for drift and diffusion:
//   U2 = u + 2/3 (a(u) dt + sum b_nu(u) dW^nu)
//   u' = u + dt (a(u)/4 + 3 a(U2)/4) + sum dW^nu (b_nu(u)/4 + 3 b_nu(U2)/4)
//
// Implicit stages are solved by fixed-point iteration started from the
// current state; the iteration stops when successive iterates differ by at
// most fp_tol * max(1, |iterate|_inf) in the max norm.

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "stochrom/paths.hpp"
#include "stochrom/sde.hpp"

namespace stochrom {

enum class Method { heun, r2, midpoint, stormer_verlet, exact };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct SolverSettings {
  double fp_tol = 1e-13;
  std::size_t fp_max_iter = 500;
  void validate() const;
};

class NonConvergence : public NumericalError {
 public:
  NonConvergence(std::size_t iterations, double residual);
  std::size_t iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

struct Trajectory {
  TimeGrid grid;
  RowMat states;  // (completed steps + 1) x dim; row 0 is the initial condition
  Method method = Method::exact;

  std::size_t dim() const { return static_cast<std::size_t>(states.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(states.rows()); }
  Vec state(std::size_t i) const { return states.row(static_cast<Eigen::Index>(i)).transpose(); }
};

struct IntegrationFailure {
  enum class Kind { divergence, nonconvergence } kind;
  std::size_t step = 0;  // index of the step that failed (0-based)
  std::size_t iterations = 0;
  double residual = 0.0;
  std::string message;
};

struct IntegrationResult {
  Trajectory trajectory;
  std::optional<IntegrationFailure> failure;
  bool ok() const { return !failure.has_value(); }
};

// Single steps. Fixed-point iteration counts are reported through `iterations`
// when non-null (sum over implicit stages).
Vec heun_step(const SDESystem& sys, const VecIn& u, double dt, const VecIn& dW);
Vec r2_step(const SDESystem& sys, const VecIn& u, double dt, const VecIn& dW);
Vec midpoint_step(const SDESystem& sys, const VecIn& u, double dt, const VecIn& dW,
                  const SolverSettings& settings, std::size_t* iterations = nullptr);
// u = (q, p). Explicit when sys.separable is set.
Vec stormer_verlet_step(const HamiltonianSDESystem& sys, const VecIn& u, double dt, const VecIn& dW,
                        const SolverSettings& settings, std::size_t* iterations = nullptr);

IntegrationResult integrate(const SDESystem& sys, Method method, const VecIn& u0, const WienerPath& path,
                            const SolverSettings& settings = {});
IntegrationResult integrate(const HamiltonianSDESystem& sys, Method method, const VecIn& u0,
                            const WienerPath& path, const SolverSettings& settings = {});

// Streaming variant for runs too large to store: increments come from
// `next_increment`, and `observe(step, state)` sees every state including the
// initial one (step 0). Returns the failure, if any.
using IncrementSource = std::function<void(VecOut dW)>;
using StateObserver = std::function<void(std::size_t step, const VecIn& state)>;
std::optional<IntegrationFailure> integrate_streaming(const HamiltonianSDESystem& sys, Method method,
                                                      const VecIn& u0, const TimeGrid& grid,
                                                      const IncrementSource& next_increment,
                                                      const StateObserver& observe,
                                                      const SolverSettings& settings = {});
std::optional<IntegrationFailure> integrate_streaming(const SDESystem& sys, Method method, const VecIn& u0,
                                                      const TimeGrid& grid,
                                                      const IncrementSource& next_increment,
                                                      const StateObserver& observe,
                                                      const SolverSettings& settings = {});

// H along a trajectory of a Hamiltonian system.
Vec energy_trace(const HamiltonianSDESystem& sys, const Trajectory& traj);
// |H(t) - H(0)| / |H(0)|.
Vec relative_energy_error(const Vec& trace);

// Least-squares slope of values against times.
double linear_trend_slope(const Vec& times, const Vec& values);

// |D^T J D - J|_F for the central-difference Jacobian D of one step at u.
double jacobian_symplecticity_defect(const HamiltonianSDESystem& sys, Method method, const VecIn& u,
                                     double dt, const VecIn& dW, const SolverSettings& settings = {});

}  // namespace stochrom
