#include "stochrom/integrators.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "stochrom/kernels.hpp"

namespace stochrom {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::heun: return "heun";
    case Method::r2: return "r2";
    case Method::midpoint: return "midpoint";
    case Method::stormer_verlet: return "stormer_verlet";
    case Method::exact: return "exact";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::heun, Method::r2, Method::midpoint, Method::stormer_verlet, Method::exact})
    if (method_name(m) == name) return m;
  throw PreconditionError("unknown method '" + std::string(name) + "'");
}

void SolverSettings::validate() const {
  require(fp_tol > 0.0 && std::isfinite(fp_tol), "solver settings: fp_tol must be positive");
  require(fp_max_iter >= 1, "solver settings: fp_max_iter must be at least 1");
}

NonConvergence::NonConvergence(std::size_t iterations, double residual)
    : NumericalError("fixed-point iteration did not converge after " + std::to_string(iterations) +
                     " iterations (residual " + std::to_string(residual) + ")"),
      iterations_(iterations),
      residual_(residual) {}

namespace {

double max_diff(const Vec& a, const Vec& b) {
  return kernels::active().max_abs_diff(static_cast<std::size_t>(a.size()), a.data(), b.data());
}

bool converged(double diff, const Vec& x, double tol) {
  return diff <= tol * std::max(1.0, x.lpNorm<Eigen::Infinity>());
}

class SdeStepper {
 public:
  explicit SdeStepper(const SDESystem& sys)
      : sys_(sys), a0_(dim()), a2_(dim()), n0_(dim()), n2_(dim()), u2_(dim()), mid_(dim()), next_(dim()) {}

  void heun(const VecIn& u, double dt, const VecIn& dW, Vec& out) {
    sys_.drift(u, a0_);
    sys_.eval_noise(u, dW, n0_);
    u2_ = u + a0_ * dt + n0_;
    sys_.drift(u2_, a2_);
    sys_.eval_noise(u2_, dW, n2_);
    out = u + (0.5 * (a0_ + a2_)) * dt + 0.5 * (n0_ + n2_);
  }

  void r2(const VecIn& u, double dt, const VecIn& dW, Vec& out) {
    sys_.drift(u, a0_);
    sys_.eval_noise(u, dW, n0_);
    u2_ = u + (2.0 / 3.0) * (a0_ * dt + n0_);
    sys_.drift(u2_, a2_);
    sys_.eval_noise(u2_, dW, n2_);
    out = u + dt * (0.25 * a0_ + 0.75 * a2_) + (0.25 * n0_ + 0.75 * n2_);
  }

  std::size_t midpoint(const VecIn& u, double dt, const VecIn& dW, const SolverSettings& s, Vec& out) {
    out = u;
    double diff = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= s.fp_max_iter; ++it) {
      mid_ = 0.5 * (u + out);
      sys_.drift(mid_, a0_);
      sys_.eval_noise(mid_, dW, n0_);
      next_ = u + a0_ * dt + n0_;
      diff = max_diff(next_, out);
      out.swap(next_);
      if (std::isnan(diff)) throw NonConvergence(it, diff);
      if (converged(diff, out, s.fp_tol)) return it;
    }
    throw NonConvergence(s.fp_max_iter, diff);
  }

 private:
  Eigen::Index dim() const { return static_cast<Eigen::Index>(sys_.dim); }

  const SDESystem& sys_;
  Vec a0_, a2_, n0_, n2_, u2_, mid_, next_;
};

class VerletStepper {
 public:
  explicit VerletStepper(const HamiltonianSDESystem& sys)
      : sys_(sys),
        n_(static_cast<Eigen::Index>(sys.n_dof)),
        x_(2 * n_),
        g_(2 * n_),
        gH_(2 * n_),
        gh_(2 * n_),
        lambda_(n_),
        next_(n_),
        q1_(n_),
        gp0_(n_) {
    require(!sys.forcing, "stormer_verlet: forced systems are not supported; use midpoint");
  }

  std::size_t step(const VecIn& u, double dt, const VecIn& dW, const SolverSettings& s, Vec& out) {
    const auto q = u.head(n_);
    const auto p = u.tail(n_);
    std::size_t iterations = 0;

    // Internal momentum stage.
    if (sys_.separable) {
      x_ = u;
      eval(dt, dW);
      lambda_ = p - 0.5 * g_.head(n_);
    } else {
      lambda_ = p;
      iterations += solve([&] {
        x_.head(n_) = q;
        x_.tail(n_) = lambda_;
        eval(dt, dW);
        next_ = p - 0.5 * g_.head(n_);
      }, lambda_, s);
    }

    x_.head(n_) = q;
    x_.tail(n_) = lambda_;
    eval(dt, dW);
    gp0_ = g_.tail(n_);
    q1_ = q + gp0_;
    if (!sys_.separable) {
      iterations += solve([&] {
        x_.head(n_) = q1_;
        x_.tail(n_) = lambda_;
        eval(dt, dW);
        next_ = q + 0.5 * gp0_ + 0.5 * g_.tail(n_);
      }, q1_, s);
    }

    x_.head(n_) = q1_;
    x_.tail(n_) = lambda_;
    eval(dt, dW);
    out.resize(2 * n_);
    out.head(n_) = q1_;
    out.tail(n_) = lambda_ - 0.5 * g_.head(n_);
    return iterations;
  }

 private:
  // g = grad H(x) dt + sum_nu dW^nu grad h_nu(x)
  void eval(double dt, const VecIn& dW) {
    sys_.grad_H(x_, gH_);
    sys_.eval_grad_h_combined(x_, dW, gh_);
    g_ = gH_ * dt + gh_;
  }

  template <class Update>
  std::size_t solve(Update update, Vec& iterate, const SolverSettings& s) {
    double diff = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= s.fp_max_iter; ++it) {
      update();
      diff = max_diff(next_, iterate);
      iterate.swap(next_);
      if (std::isnan(diff)) throw NonConvergence(it, diff);
      if (converged(diff, iterate, s.fp_tol)) return it;
    }
    throw NonConvergence(s.fp_max_iter, diff);
  }

  const HamiltonianSDESystem& sys_;
  Eigen::Index n_;
  Vec x_, g_, gH_, gh_, lambda_, next_, q1_, gp0_;
};

using StepFn = std::function<std::size_t(const VecIn& u, double dt, const VecIn& dW, Vec& out)>;

std::optional<IntegrationFailure> run(std::size_t m, const VecIn& u0, const TimeGrid& grid,
                                      const IncrementSource& next_increment, const StateObserver& observe,
                                      const StepFn& step) {
  grid.validate();
  Vec u = u0;
  Vec out(u0.size());
  Vec dW(static_cast<Eigen::Index>(m));
  observe(0, u);
  for (std::size_t i = 0; i < grid.n_steps; ++i) {
    next_increment(dW);
    try {
      step(u, grid.dt, dW, out);
    } catch (const NonConvergence& e) {
      return IntegrationFailure{IntegrationFailure::Kind::nonconvergence, i, e.iterations(), e.residual(),
                                "step " + std::to_string(i) + ": " + e.what()};
    }
    if (!out.allFinite()) {
      return IntegrationFailure{IntegrationFailure::Kind::divergence, i, 0, 0.0,
                                "non-finite state produced at step " + std::to_string(i)};
    }
    u.swap(out);
    observe(i + 1, u);
  }
  return std::nullopt;
}

StepFn sde_step_fn(const SDESystem& sys, Method method, const SolverSettings& settings) {
  auto stepper = std::make_shared<SdeStepper>(sys);
  switch (method) {
    case Method::heun:
      return [stepper](const VecIn& u, double dt, const VecIn& dW, Vec& out) {
        stepper->heun(u, dt, dW, out);
        return std::size_t{0};
      };
    case Method::r2:
      return [stepper](const VecIn& u, double dt, const VecIn& dW, Vec& out) {
        stepper->r2(u, dt, dW, out);
        return std::size_t{0};
      };
    case Method::midpoint:
      return [stepper, settings](const VecIn& u, double dt, const VecIn& dW, Vec& out) {
        return stepper->midpoint(u, dt, dW, settings, out);
      };
    default:
      throw PreconditionError("method '" + std::string(method_name(method)) +
                              "' needs a Hamiltonian system or is not a time stepper");
  }
}

IntegrationResult integrate_with(std::size_t dim, Method method, const VecIn& u0, const WienerPath& path,
                                 const StepFn& step, std::size_t m) {
  require(static_cast<std::size_t>(u0.size()) == dim, "integrate: initial condition dimension mismatch");
  require(path.m() == m, "integrate: path noise dimension must equal the system's m");
  const TimeGrid& grid = path.grid();
  IntegrationResult result;
  result.trajectory.grid = grid;
  result.trajectory.method = method;
  result.trajectory.states.resize(static_cast<Eigen::Index>(grid.n_steps + 1), static_cast<Eigen::Index>(dim));
  std::size_t next_row = 0;
  std::size_t last = 0;
  auto source = [&](VecOut dW) { dW = path.increments().row(static_cast<Eigen::Index>(next_row++)).transpose(); };
  auto observe = [&](std::size_t i, const VecIn& u) {
    result.trajectory.states.row(static_cast<Eigen::Index>(i)) = u.transpose();
    last = i;
  };
  result.failure = run(m, u0, grid, source, observe, step);
  if (result.failure)
    result.trajectory.states.conservativeResize(static_cast<Eigen::Index>(last + 1), Eigen::NoChange);
  return result;
}

}  // namespace

Vec heun_step(const SDESystem& sys, const VecIn& u, double dt, const VecIn& dW) {
  require(static_cast<std::size_t>(u.size()) == sys.dim && static_cast<std::size_t>(dW.size()) == sys.m,
          "heun_step: dimension mismatch");
  SdeStepper s(sys);
  Vec out;
  s.heun(u, dt, dW, out);
  return out;
}

Vec r2_step(const SDESystem& sys, const VecIn& u, double dt, const VecIn& dW) {
  require(static_cast<std::size_t>(u.size()) == sys.dim && static_cast<std::size_t>(dW.size()) == sys.m,
          "r2_step: dimension mismatch");
  SdeStepper s(sys);
  Vec out;
  s.r2(u, dt, dW, out);
  return out;
}

Vec midpoint_step(const SDESystem& sys, const VecIn& u, double dt, const VecIn& dW,
                  const SolverSettings& settings, std::size_t* iterations) {
  require(static_cast<std::size_t>(u.size()) == sys.dim && static_cast<std::size_t>(dW.size()) == sys.m,
          "midpoint_step: dimension mismatch");
  settings.validate();
  SdeStepper s(sys);
  Vec out;
  const std::size_t it = s.midpoint(u, dt, dW, settings, out);
  if (iterations) *iterations = it;
  return out;
}

Vec stormer_verlet_step(const HamiltonianSDESystem& sys, const VecIn& u, double dt, const VecIn& dW,
                        const SolverSettings& settings, std::size_t* iterations) {
  require(static_cast<std::size_t>(u.size()) == sys.dim() && static_cast<std::size_t>(dW.size()) == sys.m,
          "stormer_verlet_step: dimension mismatch");
  settings.validate();
  VerletStepper s(sys);
  Vec out;
  const std::size_t it = s.step(u, dt, dW, settings, out);
  if (iterations) *iterations = it;
  return out;
}

IntegrationResult integrate(const SDESystem& sys, Method method, const VecIn& u0, const WienerPath& path,
                            const SolverSettings& settings) {
  sys.validate();
  settings.validate();
  return integrate_with(sys.dim, method, u0, path, sde_step_fn(sys, method, settings), sys.m);
}

namespace {
struct HamiltonianStep {
  std::shared_ptr<SDESystem> sde;  // keeps the converted system alive for the stepper
  StepFn fn;
};

HamiltonianStep hamiltonian_step_fn(const HamiltonianSDESystem& sys, Method method,
                                    const SolverSettings& settings) {
  HamiltonianStep out;
  if (method == Method::stormer_verlet) {
    auto stepper = std::make_shared<VerletStepper>(sys);
    out.fn = [stepper, settings](const VecIn& u, double dt, const VecIn& dW, Vec& o) {
      return stepper->step(u, dt, dW, settings, o);
    };
  } else {
    out.sde = std::make_shared<SDESystem>(to_sde(sys));
    auto inner = sde_step_fn(*out.sde, method, settings);
    auto keep = out.sde;
    out.fn = [inner, keep](const VecIn& u, double dt, const VecIn& dW, Vec& o) { return inner(u, dt, dW, o); };
  }
  return out;
}
}  // namespace

IntegrationResult integrate(const HamiltonianSDESystem& sys, Method method, const VecIn& u0,
                            const WienerPath& path, const SolverSettings& settings) {
  sys.validate();
  settings.validate();
  const HamiltonianStep step = hamiltonian_step_fn(sys, method, settings);
  return integrate_with(sys.dim(), method, u0, path, step.fn, sys.m);
}

std::optional<IntegrationFailure> integrate_streaming(const HamiltonianSDESystem& sys, Method method,
                                                      const VecIn& u0, const TimeGrid& grid,
                                                      const IncrementSource& next_increment,
                                                      const StateObserver& observe,
                                                      const SolverSettings& settings) {
  sys.validate();
  settings.validate();
  require(static_cast<std::size_t>(u0.size()) == sys.dim(), "integrate: initial condition dimension mismatch");
  const HamiltonianStep step = hamiltonian_step_fn(sys, method, settings);
  return run(sys.m, u0, grid, next_increment, observe, step.fn);
}

std::optional<IntegrationFailure> integrate_streaming(const SDESystem& sys, Method method, const VecIn& u0,
                                                      const TimeGrid& grid,
                                                      const IncrementSource& next_increment,
                                                      const StateObserver& observe,
                                                      const SolverSettings& settings) {
  sys.validate();
  settings.validate();
  require(static_cast<std::size_t>(u0.size()) == sys.dim, "integrate: initial condition dimension mismatch");
  return run(sys.m, u0, grid, next_increment, observe, sde_step_fn(sys, method, settings));
}

Vec energy_trace(const HamiltonianSDESystem& sys, const Trajectory& traj) {
  require(traj.dim() == sys.dim(), "energy_trace: trajectory dimension must be 2 n_dof");
  Vec e(static_cast<Eigen::Index>(traj.rows()));
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = sys.H(traj.states.row(i).transpose());
  return e;
}

Vec relative_energy_error(const Vec& trace) {
  require(trace.size() >= 1, "relative_energy_error: empty trace");
  const double h0 = trace(0);
  return (trace.array() - h0).abs() / std::fabs(h0);
}

double linear_trend_slope(const Vec& times, const Vec& values) {
  require(times.size() == values.size() && times.size() >= 2, "linear_trend_slope: need two or more points");
  const double tm = times.mean();
  const double vm = values.mean();
  const double num = ((times.array() - tm) * (values.array() - vm)).sum();
  const double den = (times.array() - tm).square().sum();
  return num / den;
}

double jacobian_symplecticity_defect(const HamiltonianSDESystem& sys, Method method, const VecIn& u,
                                     double dt, const VecIn& dW, const SolverSettings& settings) {
  require(method == Method::midpoint || method == Method::stormer_verlet || method == Method::heun ||
              method == Method::r2,
          "jacobian_symplecticity_defect: unsupported method");
  const std::size_t dim = sys.dim();
  require(static_cast<std::size_t>(u.size()) == dim, "jacobian_symplecticity_defect: state dimension mismatch");
  std::function<Vec(const Vec&)> map;
  std::shared_ptr<SDESystem> sde;
  if (method == Method::stormer_verlet) {
    map = [&](const Vec& x) { return stormer_verlet_step(sys, x, dt, dW, settings); };
  } else {
    sde = std::make_shared<SDESystem>(to_sde(sys));
    map = [&, sde](const Vec& x) -> Vec {
      switch (method) {
        case Method::heun: return heun_step(*sde, x, dt, dW);
        case Method::r2: return r2_step(*sde, x, dt, dW);
        default: return midpoint_step(*sde, x, dt, dW, settings);
      }
    };
  }
  const Vec base = u;
  const double h = 1e-6 * (1.0 + base.lpNorm<Eigen::Infinity>());
  Mat D(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  Vec x = base;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(dim); ++i) {
    x(i) = base(i) + h;
    const Vec fp = map(x);
    x(i) = base(i) - h;
    const Vec fm = map(x);
    x(i) = base(i);
    D.col(i) = (fp - fm) / (2.0 * h);
  }
  const Mat J = canonical_j(sys.n_dof);
  return (D.transpose() * J * D - J).norm();
}

}  // namespace stochrom
