#pragma once

// Stratonovich SDE and stochastic Hamiltonian system definitions.
//
//   du = a(u) dt + sum_nu b_nu(u) o dW^nu
//   dq =  dH/dp dt + sum_nu dh_nu/dp o dW^nu
//   dp = -dH/dq dt - sum_nu dh_nu/dq o dW^nu  (+ forcing F dt + f_nu o dW^nu)
//
// Hamiltonian states are stored as u = (q, p) with q = u.head(n), p = u.tail(n).
// Evaluators write into caller-provided storage; systems are immutable bundles
// of evaluators and can be shared across threads as long as the evaluators are.

#include <functional>
#include <optional>
#include <vector>

#include "stochrom/types.hpp"

namespace stochrom {

using FieldFn = std::function<void(const VecIn& u, VecOut out)>;
using IndexedFieldFn = std::function<void(const VecIn& u, std::size_t nu, VecOut out)>;
// out = sum_nu b_nu(u) dW^nu (or sum_nu dW^nu grad h_nu(u)).
using NoiseFn = std::function<void(const VecIn& u, const VecIn& dW, VecOut out)>;
using ScalarFn = std::function<double(const VecIn& u)>;
using IndexedScalarFn = std::function<double(const VecIn& u, std::size_t nu)>;
using ComponentFn = std::function<double(const VecIn& u, std::size_t i)>;
using DependencyFn = std::function<std::vector<std::size_t>(std::size_t i)>;

// f(u) = L u + nonlinear(u).
struct LinearSplit {
  SpMat L;
  FieldFn nonlinear;
  // Entry i of nonlinear(u); must agree with nonlinear() exactly.
  ComponentFn nonlinear_component;
  // Optional: state indices read by nonlinear_component(., i). Lets reduced
  // models lift only the rows they need.
  DependencyFn component_dependencies;

  bool has_nonlinear() const { return static_cast<bool>(nonlinear); }
};

struct SDESystem {
  std::size_t dim = 0;
  std::size_t m = 0;
  FieldFn drift;
  IndexedFieldFn diffusion;
  // Optional fast path for the combined noise term; falls back to diffusion().
  NoiseFn noise;
  std::optional<LinearSplit> drift_split;
  std::vector<LinearSplit> diffusion_splits;  // empty, or one per noise term

  void eval_drift(const VecIn& u, VecOut out) const { drift(u, out); }
  void eval_noise(const VecIn& u, const VecIn& dW, VecOut out) const;
  Vec drift_at(const VecIn& u) const;
  Vec diffusion_at(const VecIn& u, std::size_t nu) const;
  void validate() const;
};

struct Forcing {
  // F(q, p) and f_nu(q, p), each of length n_dof; act on the p equation.
  FieldFn F;
  IndexedFieldFn f;
};

struct HamiltonianSDESystem {
  std::size_t n_dof = 0;
  std::size_t m = 0;
  ScalarFn H;
  FieldFn grad_H;  // (dH/dq, dH/dp), length 2 n_dof
  IndexedScalarFn h;
  IndexedFieldFn grad_h;
  // Optional fast path: out = sum_nu dW^nu grad h_nu(u).
  NoiseFn grad_h_combined;
  bool separable = false;
  std::optional<LinearSplit> H_split;  // grad H = L u + a_N(u)
  std::vector<LinearSplit> h_splits;   // empty, or one per noise term
  std::optional<Forcing> forcing;

  std::size_t dim() const { return 2 * n_dof; }
  Vec grad_H_at(const VecIn& u) const;
  Vec grad_h_at(const VecIn& u, std::size_t nu) const;
  void eval_grad_h_combined(const VecIn& u, const VecIn& dW, VecOut out) const;
  void validate() const;
};

// Drift J grad H (+ forcing) and diffusion J grad h_nu (+ f_nu). Gradient
// splits become drift/diffusion splits with L -> J L and a_N -> J a_N.
SDESystem to_sde(const HamiltonianSDESystem& sys);

// {H, h_nu}(u) = sum_i dH/dq_i dh/dp_i - dH/dp_i dh/dq_i.
double poisson_bracket(const HamiltonianSDESystem& sys, const VecIn& u, std::size_t nu);

// Largest relative deviation between grad_H (and every grad_h_nu) and central
// differences of H (h_nu) with relative step `step`, over the given states.
double gradient_check(const HamiltonianSDESystem& sys, const std::vector<Vec>& states,
                      double step = 1e-5);

// Largest change of dH/dq under a p perturbation and of dH/dp under a q
// perturbation (same for every h_nu). Zero for separable systems.
double separability_defect(const HamiltonianSDESystem& sys, const std::vector<Vec>& states,
                           double perturbation = 1e-3);

// max over states of |a(u) - (L u + a_N(u))|_inf / (1 + |a(u)|_inf).
double split_defect(const SDESystem& sys, const std::vector<Vec>& states);

}  // namespace stochrom
