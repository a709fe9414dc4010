#pragma once

// Run configuration for the offline/online pipeline.
//
// Flat key=value text, '#' comments. Schema version 1:
//
//   config_version      1
//   problem             nls | kubo | stacked-kubo            (required)
//   nls.N nls.x_max nls.c nls.x_c                            mesh and soliton
//   nls.beta nls.eps                                         reference parameters
//   kubo.beta kubo.q0 kubo.p0                                reference parameters
//   kubo.M                                                   paths (stacked-kubo)
//   t0 dt n_steps                                            (dt, n_steps required)
//   seed stream_id                                           (seed required)
//   method training_method reference_method                  heun | r2 | midpoint | stormer_verlet
//   reduction           none | pod | psd
//   k                   basis size; 0 picks by energy_threshold
//   energy_threshold    in (0, 1]
//   deim                interpolation size; 0 disables, auto picks k (pod) or 2k (psd)
//   training            nls: "beta:eps,beta:eps,..."; kubo: "beta,beta,..."
//   training_source     full | exact (exact: Kubo closed form)
//   stride              snapshot stride
//   output_stride       trajectory output stride
//   save_training       true | false
//   slice_times         comma-separated times for solution slices (nls)
//   fp_tol fp_max_iter
//   output_dir                                               (required)

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stochrom/benchmarks.hpp"
#include "stochrom/integrators.hpp"
#include "stochrom/matrix_io.hpp"

namespace stochrom {

enum class Problem { nls, kubo, stacked_kubo };
enum class Reduction { none, pod, psd };
enum class TrainingSource { full, exact };

std::string_view problem_name(Problem p);
std::string_view reduction_name(Reduction r);

struct TrainingPair {
  double beta = 0.0;
  double eps = 1.0;
};

struct RunConfig {
  static constexpr int kVersion = 1;

  Problem problem = Problem::nls;
  NLSConfig nls;
  KuboConfig kubo;
  std::size_t M = 1;
  TimeGrid grid;
  RngSpec rng;
  Method method = Method::midpoint;
  Method training_method = Method::midpoint;
  Method reference_method = Method::midpoint;
  Reduction reduction = Reduction::none;
  std::size_t k = 0;
  double energy_threshold = 0.9999;
  std::size_t deim = 0;
  bool deim_auto = false;
  std::vector<TrainingPair> training;
  TrainingSource training_source = TrainingSource::full;
  std::size_t stride = 10;
  std::size_t output_stride = 1;
  bool save_training = false;
  std::vector<double> slice_times;
  SolverSettings solver;
  std::filesystem::path output_dir;

  bool uses_deim() const { return deim_auto || deim > 0; }
  // Noise dimension of the configured problem.
  std::size_t noise_dim() const { return problem == Problem::stacked_kubo ? M : 1; }
  void validate() const;
  // Every key in schema order with normalized values.
  KeyValues to_key_values() const;
  // FNV-1a of the canonical key=value text without output_dir.
  std::string hash() const;
};

const std::vector<std::string>& config_keys();

// Rejects unknown and duplicate keys; validates the result.
RunConfig config_from_key_values(const KeyValues& kv);
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace stochrom
