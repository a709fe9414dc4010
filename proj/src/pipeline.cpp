#include "stochrom/pipeline.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "stochrom/deim.hpp"
#include "stochrom/monte_carlo.hpp"
#include "stochrom/reduction.hpp"

namespace stochrom {

namespace fs = std::filesystem;

namespace {

constexpr const char* kWiener = "wiener.spmr";
constexpr const char* kBasis = "basis.spmr";
constexpr const char* kSpectrum = "spectrum.spmr";
constexpr const char* kDeimBasis = "deim_basis.spmr";
constexpr const char* kDeimSpectrum = "deim_spectrum.spmr";
constexpr const char* kDeimIndices = "deim_indices.spmr";
constexpr const char* kTrajectory = "trajectory.spmr";
constexpr const char* kReduced = "reduced_trajectory.spmr";
constexpr const char* kReference = "reference_trajectory.spmr";
constexpr const char* kEnergy = "energy.spmr";
constexpr const char* kErrors = "errors.spmr";
constexpr const char* kManifestOffline = "manifest_offline.txt";
constexpr const char* kManifestOnline = "manifest_online.txt";
constexpr const char* kManifestMc = "manifest_mc.txt";

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

// Files written by one command, with checksums for the manifest.
class ArtifactSet {
 public:
  explicit ArtifactSet(fs::path dir) : dir_(std::move(dir)) {}

  fs::path path(const std::string& name) const { return dir_ / name; }

  void matrix(const std::string& name, const Mat& m, MatrixKind kind) { text(name, encode_matrix(m, kind)); }

  void text(const std::string& name, const std::string& bytes) {
    write_file_atomic(path(name), bytes);
    record(name, bytes);
  }

  void wiener(const std::string& name, const WienerPath& w) {
    write_wiener(path(name), w);
    record(name, read_file(path(name)));
    record(name + ".meta", read_file(path(name + ".meta")));
  }

  void remove_all() {
    for (const auto& [name, sum] : sums_) {
      std::error_code ec;
      fs::remove(path(name), ec);
    }
    sums_.clear();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : sums_) out.push_back(e.first);
    return out;
  }

  void append_checksums(KeyValues& kv) const {
    for (const auto& [name, sum] : sums_) kv.emplace_back("artifact." + name, sum);
  }

 private:
  void record(const std::string& name, const std::string& bytes) { sums_.emplace_back(name, hex64(fnv1a64(bytes))); }

  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> sums_;
};

KeyValues manifest_head(const RunConfig& cfg, const char* command) {
  return {{"tool", "stochrom"},
          {"command", command},
          {"manifest_version", "1"},
          {"config_hash", cfg.hash()},
          {"seed", std::to_string(cfg.rng.seed)},
          {"stream_id", std::to_string(cfg.rng.stream_id)}};
}

void append_config(KeyValues& kv, const RunConfig& cfg) {
  for (auto& [k, v] : cfg.to_key_values())
    if (k != "output_dir") kv.emplace_back("config." + k, v);
}

std::string lookup(const KeyValues& kv, const std::string& key, const fs::path& where) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw IoError(where.string() + ": missing entry '" + key + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

Mat to_mat(const RowMat& r) { return Mat(r); }

// States of one run kept every `stride` steps.
struct Recorded {
  RowMat states;
  std::vector<std::size_t> steps;
  std::optional<IntegrationFailure> failure;
};

template <class System>
Recorded run_recorded(const System& sys, Method method, const VecIn& u0, const WienerPath& path, std::size_t stride,
                      const SolverSettings& settings) {
  const TimeGrid& grid = path.grid();
  const std::size_t n_keep = grid.n_steps / stride + 1;
  Recorded rec;
  rec.states.resize(idx(n_keep), u0.size());
  std::size_t row = 0;
  std::size_t next = 0;
  auto source = [&](VecOut dW) { dW = path.increments().row(idx(next++)).transpose(); };
  auto observe = [&](std::size_t step, const VecIn& u) {
    if (step % stride != 0) return;
    rec.states.row(idx(row++)) = u.transpose();
    rec.steps.push_back(step);
  };
  rec.failure = integrate_streaming(sys, method, u0, grid, source, observe, settings);
  rec.states.conservativeResize(idx(row), Eigen::NoChange);
  return rec;
}

RowMat every_nth_row(const RowMat& m, std::size_t stride) {
  RowMat out((m.rows() + idx(stride) - 1) / idx(stride), m.cols());
  for (Index i = 0; i < out.rows(); ++i) out.row(i) = m.row(i * idx(stride));
  return out;
}

// Stacked Kubo layouts: interleaved (q1, p1, q2, p2, ...) for the generic
// stacked SDE, phase-split (Q_1..Q_M, P_1..P_M) for the stacked Hamiltonian.
Vec phase_to_interleaved(const VecIn& u, std::size_t M) {
  Vec out(u.size());
  for (Index nu = 0; nu < idx(M); ++nu) {
    out(2 * nu) = u(nu);
    out(2 * nu + 1) = u(idx(M) + nu);
  }
  return out;
}

Vec tiled_initial(const KuboConfig& k, std::size_t M, bool phase) {
  Vec u(idx(2 * M));
  for (Index nu = 0; nu < idx(M); ++nu) {
    if (phase) {
      u(nu) = k.q0;
      u(idx(M) + nu) = k.p0;
    } else {
      u(2 * nu) = k.q0;
      u(2 * nu + 1) = k.p0;
    }
  }
  return u;
}

NLSConfig nls_with(const NLSConfig& base, const TrainingPair& tp) {
  NLSConfig c = base;
  c.beta = tp.beta;
  c.eps = tp.eps;
  return c;
}

KuboConfig kubo_with(const KuboConfig& base, double beta) {
  KuboConfig k = base;
  k.beta = beta;
  return k;
}

std::string describe(const RunConfig& cfg, const TrainingPair& tp) {
  if (cfg.problem == Problem::nls) return "beta=" + format_double(tp.beta) + ", eps=" + format_double(tp.eps);
  return "beta=" + format_double(tp.beta);
}

std::size_t full_dim(const RunConfig& cfg) {
  switch (cfg.problem) {
    case Problem::nls: return 2 * cfg.nls.N;
    case Problem::kubo: return 2;
    case Problem::stacked_kubo: return 2 * cfg.M;
  }
  return 0;
}

struct TrainingOutput {
  std::vector<Mat> sampled;    // dim x r_i, layout of the requested reduction
  std::vector<Mat> nonlinear;  // deim snapshots
  std::vector<RowMat> saved;   // full trajectories when save_training is set
};

TrainingOutput run_training(const RunConfig& cfg, const WienerPath& path) {
  TrainingOutput out;
  const bool phase = cfg.reduction == Reduction::psd;
  const std::size_t record_stride = cfg.save_training ? 1 : cfg.stride;
  const std::size_t sample_stride = cfg.save_training ? cfg.stride : 1;

  auto keep = [&](RowMat rows) {
    if (cfg.save_training) out.saved.push_back(rows);
    return Mat(every_nth_row(rows, sample_stride).transpose());
  };
  auto fail = [&](const TrainingPair& tp, const IntegrationFailure& f) {
    throw NumericalError("training run (" + describe(cfg, tp) + ") failed: " + f.message);
  };

  for (const TrainingPair& tp : cfg.training) {
    if (cfg.problem == Problem::nls) {
      const NLSConfig nc = nls_with(cfg.nls, tp);
      const HamiltonianSDESystem sys = build_nls_system(nc);
      Recorded rec = run_recorded(sys, cfg.training_method, soliton_initial_condition(nc), path, record_stride,
                                  cfg.solver);
      if (rec.failure) fail(tp, *rec.failure);
      Mat X = keep(std::move(rec.states));
      if (cfg.uses_deim()) {
        if (phase) {
          out.nonlinear.push_back(map_columns(X, sys.H_split->nonlinear, sys.dim()));
        } else {
          const SDESystem sde = to_sde(sys);
          out.nonlinear.push_back(map_columns(X, sde.drift_split->nonlinear, sde.dim));
        }
      }
      out.sampled.push_back(std::move(X));
      continue;
    }

    const KuboConfig kc = kubo_with(cfg.kubo, tp.beta);
    const std::size_t M = cfg.noise_dim();
    RowMat rows;
    if (cfg.training_source == TrainingSource::exact) {
      std::vector<Vec> W;
      for (std::size_t nu = 0; nu < M; ++nu) W.push_back(path.running_sum(nu));
      const std::size_t n_nodes = path.grid().n_steps / record_stride + 1;
      rows.resize(idx(n_nodes), idx(2 * M));
      for (std::size_t r = 0; r < n_nodes; ++r) {
        const std::size_t s = r * record_stride;
        const double t = static_cast<double>(s) * path.grid().dt;
        for (std::size_t nu = 0; nu < M; ++nu) {
          const Vec x = kubo_exact_state(kc, t, W[nu](idx(s)));
          rows(idx(r), idx(nu)) = x(0);
          rows(idx(r), idx(M + nu)) = x(1);
        }
      }
    } else {
      const HamiltonianSDESystem sys = M == 1 ? kubo_system(kc) : stack_hamiltonian(kubo_system(kc), M);
      Recorded rec = run_recorded(sys, cfg.training_method, tiled_initial(kc, M, true), path, record_stride,
                                  cfg.solver);
      if (rec.failure) fail(tp, *rec.failure);
      rows = std::move(rec.states);
    }
    if (!phase)
      for (Index r = 0; r < rows.rows(); ++r) rows.row(r) = phase_to_interleaved(rows.row(r).transpose(), M).transpose();
    out.sampled.push_back(keep(std::move(rows)));
  }
  return out;
}

std::size_t choose_rank(const RunConfig& cfg, const SnapshotMatrix& snaps) {
  if (cfg.k > 0) return cfg.k;
  return select_rank_energy(truncated_svd(snaps, 1).all_sigma, cfg.energy_threshold);
}

WienerPath load_or_generate_path(const RunConfig& cfg) {
  const fs::path p = cfg.output_dir / kWiener;
  if (!fs::exists(p)) return generate_wiener(cfg.rng, cfg.grid, cfg.noise_dim());
  WienerPath w = read_wiener(p);
  const TimeGrid& g = w.grid();
  if (g.t0 != cfg.grid.t0 || g.dt != cfg.grid.dt || g.n_steps != cfg.grid.n_steps || w.m() != cfg.noise_dim() ||
      w.rng().seed != cfg.rng.seed || w.rng().stream_id != cfg.rng.stream_id)
    throw PreconditionError(p.string() + ": Wiener sample does not match the configured grid, noise dimension or seed");
  return w;
}

// ---- CSV bundle ----

void write_csv_bundle(const RunConfig& cfg, ArtifactSet& out) {
  const fs::path dir = cfg.output_dir;
  auto need = [&](const char* name) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) throw IoError("missing artifact: " + p.string());
    return p;
  };

  if (cfg.reduction != Reduction::none) {
    const Mat s = read_matrix(need(kSpectrum), MatrixKind::spectrum);
    CsvTable t{{"index", "sigma"}, {}};
    for (Index i = 0; i < s.rows(); ++i) t.rows.push_back({static_cast<double>(i + 1), s(i, 0)});
    out.text("spectrum.csv", format_csv(t));
  }

  const Mat e = read_matrix(need(kEnergy), MatrixKind::generic);
  require(e.cols() == 3, "energy artifact must have columns t, H, relerr");
  CsvTable et{{"t", "H", "relerr"}, {}};
  for (Index i = 0; i < e.rows(); ++i) et.rows.push_back({e(i, 0), e(i, 1), e(i, 2)});
  out.text("energy.csv", format_csv(et));

  const Mat er = read_matrix(need(kErrors), MatrixKind::generic);
  CsvTable rt;
  rt.header = cfg.problem == Problem::nls ? std::vector<std::string>{"t", "e1"}
                                          : std::vector<std::string>{"t", "E1", "E2", "E3"};
  require(er.cols() == static_cast<Index>(rt.header.size()), "errors artifact has the wrong column count");
  for (Index i = 0; i < er.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(er.cols()));
    for (Index j = 0; j < er.cols(); ++j) row[static_cast<std::size_t>(j)] = er(i, j);
    rt.rows.push_back(std::move(row));
  }
  out.text("errors.csv", format_csv(rt));

  if (cfg.problem == Problem::nls && !cfg.slice_times.empty()) {
    const Mat traj = read_matrix(need(kTrajectory), MatrixKind::trajectory);
    const Mat ref = read_matrix(need(kReference), MatrixKind::trajectory);
    const Vec x = nls_mesh(cfg.nls);
    const double dt_out = cfg.grid.dt * static_cast<double>(cfg.output_stride);
    CsvTable st;
    st.header.push_back("x");
    std::vector<Vec> cols;
    for (double t : cfg.slice_times) {
      const auto row = static_cast<Index>(std::llround((t - cfg.grid.t0) / dt_out));
      const std::string tag = format_double(t);
      st.header.push_back("abs_psi_t" + tag);
      st.header.push_back("abs_psi_ref_t" + tag);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      cols.push_back(row < traj.rows() ? nls_modulus(traj.row(row).transpose()) : Vec::Constant(x.size(), nan));
      cols.push_back(row < ref.rows() ? nls_modulus(ref.row(row).transpose()) : Vec::Constant(x.size(), nan));
    }
    for (Index j = 0; j < x.size(); ++j) {
      std::vector<double> r{x(j)};
      for (const Vec& c : cols) r.push_back(c(j));
      st.rows.push_back(std::move(r));
    }
    out.text("solution_slice.csv", format_csv(st));
  }
}

// ---- online ----

struct OnlineResult {
  RowMat reduced;                 // reduced states (empty for reduction none)
  std::vector<RowMat> lifted;     // per path, stored nodes x base dim
  std::vector<RowMat> reference;  // per path
  RowMat lifted_stacked;          // natural layout of the full state
  RowMat reference_stacked;
  Vec energy;
  std::optional<IntegrationFailure> failure;
  std::size_t reduced_dim = 0;
};

PODBasis load_pod(const RunConfig& cfg, std::size_t n) {
  PODBasis b;
  b.U = read_matrix(cfg.output_dir / kBasis, MatrixKind::basis);
  b.sigma_record = read_matrix(cfg.output_dir / kSpectrum, MatrixKind::spectrum).col(0);
  require(b.n() == n, "basis artifact has " + std::to_string(b.n()) + " rows, configured model needs " + std::to_string(n));
  require(cfg.k == 0 || b.k() == cfg.k, "basis artifact has " + std::to_string(b.k()) + " columns, config asks for k=" +
                                            std::to_string(cfg.k));
  return b;
}

PSDBasis load_psd(const RunConfig& cfg, std::size_t n_dof) {
  PSDBasis b;
  b.Phi = read_matrix(cfg.output_dir / kBasis, MatrixKind::basis);
  b.sigma_record = read_matrix(cfg.output_dir / kSpectrum, MatrixKind::spectrum).col(0);
  require(b.n_dof() == n_dof, "basis artifact has " + std::to_string(b.n_dof()) + " rows, configured model needs " +
                                  std::to_string(n_dof));
  require(cfg.k == 0 || b.k() == cfg.k, "basis artifact has " + std::to_string(b.k()) + " columns, config asks for k=" +
                                            std::to_string(cfg.k));
  return b;
}

DeimOperator load_deim(const RunConfig& cfg, const Mat& projector, const LinearSplit& split) {
  Mat Psi = read_matrix(cfg.output_dir / kDeimBasis, MatrixKind::basis);
  Vec sigma = read_matrix(cfg.output_dir / kDeimSpectrum, MatrixKind::spectrum).col(0);
  const Mat stored = read_matrix(cfg.output_dir / kDeimIndices, MatrixKind::generic);
  require(Psi.rows() == projector.rows() && (cfg.deim_auto || Psi.cols() == idx(cfg.deim)),
          "DEIM basis artifact does not match the configured model or deim size");
  DeimOperator op = deim_from_basis(std::move(Psi), std::move(sigma), projector, split);
  require(stored.size() == idx(op.k_bar()), "DEIM index artifact has the wrong length");
  for (std::size_t i = 0; i < op.k_bar(); ++i)
    if (stored(idx(i), 0) != static_cast<double>(op.indices[i]))
      throw IoError("DEIM index artifact disagrees with the stored DEIM basis");
  return op;
}

RowMat lift_rows(const RowMat& reduced, const Mat& projector) { return reduced * projector.transpose(); }

OnlineResult online_nls(const RunConfig& cfg, const WienerPath& path) {
  OnlineResult r;
  const HamiltonianSDESystem full = build_nls_system(cfg.nls);
  const Vec u0 = soliton_initial_condition(cfg.nls);
  const std::size_t st = cfg.output_stride;

  Recorded ref = run_recorded(full, cfg.reference_method, u0, path, st, cfg.solver);
  if (ref.failure) throw NumericalError("reference run failed: " + ref.failure->message);
  r.reference_stacked = std::move(ref.states);

  Recorded run;
  if (cfg.reduction == Reduction::none) {
    run = run_recorded(full, cfg.method, u0, path, st, cfg.solver);
    r.lifted_stacked = run.states;
    r.reduced_dim = full.dim();
  } else if (cfg.reduction == Reduction::pod) {
    const PODBasis basis = load_pod(cfg, full.dim());
    const SDESystem sde = to_sde(full);
    const SDESystem red = cfg.uses_deim() ? reduce_sde_pod_deim(sde, basis, load_deim(cfg, basis.U, *sde.drift_split))
                                       : reduce_sde_pod(sde, basis);
    run = run_recorded(red, cfg.method, restrict_pod(basis, u0), path, st, cfg.solver);
    r.lifted_stacked = lift_rows(run.states, basis.U);
    r.reduced = std::move(run.states);
    r.reduced_dim = basis.k();
  } else {
    const PSDBasis basis = load_psd(cfg, full.n_dof);
    const HamiltonianSDESystem red =
        cfg.uses_deim() ? reduce_hamiltonian_psd_sdeim(full, basis, load_deim(cfg, basis.A(), *full.H_split))
                     : reduce_hamiltonian_psd(full, basis);
    run = run_recorded(red, cfg.method, restrict_psd(basis, u0), path, st, cfg.solver);
    r.lifted_stacked = lift_rows(run.states, basis.A());
    r.reduced = std::move(run.states);
    r.reduced_dim = 2 * basis.k();
  }
  r.failure = run.failure;
  r.energy.resize(r.lifted_stacked.rows());
  for (Index i = 0; i < r.lifted_stacked.rows(); ++i) r.energy(i) = full.H(r.lifted_stacked.row(i).transpose());
  return r;
}

// Kubo and stacked Kubo; per-path states are (q, p) rows.
OnlineResult online_kubo(const RunConfig& cfg, const WienerPath& path) {
  OnlineResult r;
  const std::size_t M = cfg.noise_dim();
  const std::size_t st = cfg.output_stride;
  const HamiltonianSDESystem base = kubo_system(cfg.kubo);
  const Vec u_phase = tiled_initial(cfg.kubo, M, true);
  const Vec u_inter = tiled_initial(cfg.kubo, M, false);

  Recorded run;
  // per stored row: lifted phase-split full state
  RowMat lifted_phase;
  if (cfg.reduction == Reduction::none) {
    const HamiltonianSDESystem sys = M == 1 ? base : stack_hamiltonian(base, M);
    run = run_recorded(sys, cfg.method, u_phase, path, st, cfg.solver);
    lifted_phase = run.states;
    r.reduced_dim = 2 * M;
  } else if (cfg.reduction == Reduction::pod) {
    const PODBasis basis = load_pod(cfg, 2 * M);
    const SDESystem base_sde = to_sde(base);
    const SDESystem red = M == 1 ? reduce_sde_pod(base_sde, basis)
                                 : block_reduced_sde(base_sde, BlockBasis::split(basis.U, 2));
    run = run_recorded(red, cfg.method, restrict_pod(basis, u_inter), path, st, cfg.solver);
    const RowMat inter = lift_rows(run.states, basis.U);
    lifted_phase.resize(inter.rows(), idx(2 * M));
    for (Index i = 0; i < inter.rows(); ++i)
      for (Index nu = 0; nu < idx(M); ++nu) {
        lifted_phase(i, nu) = inter(i, 2 * nu);
        lifted_phase(i, idx(M) + nu) = inter(i, 2 * nu + 1);
      }
    r.reduced = std::move(run.states);
    r.reduced_dim = basis.k();
  } else {
    const PSDBasis basis = load_psd(cfg, M);
    const HamiltonianSDESystem red = M == 1 ? reduce_hamiltonian_psd(base, basis)
                                            : block_reduced_hamiltonian(base, BlockBasis::split(basis.Phi, 1));
    run = run_recorded(red, cfg.method, restrict_psd(basis, u_phase), path, st, cfg.solver);
    lifted_phase = lift_rows(run.states, basis.A());
    r.reduced = std::move(run.states);
    r.reduced_dim = 2 * basis.k();
  }
  r.failure = run.failure;

  const Index rows = lifted_phase.rows();
  const double dt_out = cfg.grid.dt * static_cast<double>(st);
  r.lifted.assign(M, RowMat(rows, 2));
  r.reference.assign(M, RowMat(rows, 2));
  r.energy.resize(rows);
  r.lifted_stacked.resize(rows, idx(2 * M));
  r.reference_stacked.resize(rows, idx(2 * M));
  std::vector<double> h(M);
  for (std::size_t nu = 0; nu < M; ++nu) {
    const Vec W = path.running_sum(nu);
    for (Index i = 0; i < rows; ++i) {
      r.lifted[nu](i, 0) = lifted_phase(i, idx(nu));
      r.lifted[nu](i, 1) = lifted_phase(i, idx(M + nu));
      const Vec x = kubo_exact_state(cfg.kubo, static_cast<double>(i) * dt_out, W(i * idx(st)));
      r.reference[nu].row(i) = x.transpose();
    }
  }
  for (Index i = 0; i < rows; ++i) {
    for (std::size_t nu = 0; nu < M; ++nu) {
      r.lifted_stacked.row(i).segment(idx(2 * nu), 2) = r.lifted[nu].row(i);
      r.reference_stacked.row(i).segment(idx(2 * nu), 2) = r.reference[nu].row(i);
      h[nu] = base.H(r.lifted[nu].row(i).transpose());
    }
    r.energy(i) = pairwise_sum(h.data(), M) / static_cast<double>(M);
  }
  return r;
}

Mat energy_table(const Vec& energy, double t0, double dt_out) {
  const Vec rel = energy.size() ? relative_energy_error(energy) : Vec();
  Mat e(energy.size(), 3);
  for (Index i = 0; i < energy.size(); ++i) {
    e(i, 0) = t0 + static_cast<double>(i) * dt_out;
    e(i, 1) = energy(i);
    e(i, 2) = rel(i);
  }
  return e;
}

}  // namespace

KeyValues read_manifest(const fs::path& path) { return parse_key_values(read_file(path)); }

CommandOutcome cmd_offline(const RunConfig& cfg) {
  cfg.validate();
  require(!cfg.training.empty(), "offline: training list is empty");
  require(cfg.reduction != Reduction::none, "offline: reduction must be pod or psd");
  ensure_dir(cfg.output_dir);

  const WienerPath path = generate_wiener(cfg.rng, cfg.grid, cfg.noise_dim());
  TrainingOutput training = run_training(cfg, path);

  const SnapshotLayout layout = cfg.reduction == Reduction::psd ? SnapshotLayout::phase_split : SnapshotLayout::generic;
  const SnapshotMatrix snaps = make_snapshots(training.sampled, layout);
  const std::size_t k = choose_rank(cfg, snaps);

  CommandOutcome outcome;
  Mat basis, spectrum, projector;
  if (cfg.reduction == Reduction::pod) {
    PODBasis b = build_pod(snaps, k);
    basis = b.U;
    spectrum = b.sigma_record;
    projector = b.U;
    outcome.reduced_dim = b.k();
  } else {
    PSDBasis b = build_psd_cotangent_lift(snaps, k);
    basis = b.Phi;
    spectrum = b.sigma_record;
    projector = b.A();
    outcome.reduced_dim = 2 * b.k();
  }

  std::optional<DeimOperator> deim;
  if (cfg.uses_deim()) {
    const std::size_t k_bar = cfg.deim_auto ? outcome.reduced_dim : cfg.deim;
    const HamiltonianSDESystem ref = build_nls_system(cfg.nls);
    const SnapshotMatrix nl = make_snapshots(training.nonlinear, SnapshotLayout::generic);
    if (cfg.reduction == Reduction::pod) {
      const SDESystem sde = to_sde(ref);
      deim = build_deim(nl, k_bar, projector, *sde.drift_split);
    } else {
      deim = build_deim(nl, k_bar, projector, *ref.H_split);
    }
  }

  ArtifactSet out(cfg.output_dir);
  try {
    out.wiener(kWiener, path);
    out.matrix(kBasis, basis, MatrixKind::basis);
    out.matrix(kSpectrum, spectrum, MatrixKind::spectrum);
    if (deim) {
      Mat ind(idx(deim->k_bar()), 1);
      for (std::size_t i = 0; i < deim->k_bar(); ++i) ind(idx(i), 0) = static_cast<double>(deim->indices[i]);
      out.matrix(kDeimBasis, deim->Psi, MatrixKind::basis);
      out.matrix(kDeimSpectrum, deim->sigma_record, MatrixKind::spectrum);
      out.matrix(kDeimIndices, ind, MatrixKind::generic);
    }
    for (std::size_t i = 0; i < training.saved.size(); ++i)
      out.matrix("training_" + std::to_string(i) + ".spmr", to_mat(training.saved[i]), MatrixKind::trajectory);

    KeyValues m = manifest_head(cfg, "offline");
    m.emplace_back("status", "ok");
    m.emplace_back("full_dim", std::to_string(full_dim(cfg)));
    m.emplace_back("k", std::to_string(k));
    m.emplace_back("reduced_dim", std::to_string(outcome.reduced_dim));
    m.emplace_back("snapshot_columns", std::to_string(snaps.cols()));
    if (deim) m.emplace_back("deim_condition", format_double(deim->condition));
    append_config(m, cfg);
    out.append_checksums(m);
    write_file_atomic(cfg.output_dir / kManifestOffline, format_key_values(m));
  } catch (...) {
    out.remove_all();
    throw;
  }
  outcome.artifacts = out.names();
  outcome.artifacts.push_back(kManifestOffline);
  return outcome;
}

CommandOutcome cmd_online(const RunConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.output_dir);
  const WienerPath path = load_or_generate_path(cfg);
  OnlineResult r = cfg.problem == Problem::nls ? online_nls(cfg, path) : online_kubo(cfg, path);

  const double dt_out = cfg.grid.dt * static_cast<double>(cfg.output_stride);
  const Index rows = r.lifted_stacked.rows();
  Mat errors;
  KeyValues summary;
  if (cfg.problem == Problem::nls) {
    const double dx = cfg.nls.dx();
    errors.resize(rows, 2);
    for (Index i = 0; i < rows; ++i) {
      errors(i, 0) = cfg.grid.t0 + static_cast<double>(i) * dt_out;
      errors(i, 1) = nls_error_e1(r.lifted_stacked.row(i).transpose(), r.reference_stacked.row(i).transpose(), dx);
    }
    if (rows >= 2)
      summary.emplace_back("e2", format_double(nls_error_e2(r.lifted_stacked, r.reference_stacked.topRows(rows), dx,
                                                            dt_out)));
  } else {
    std::vector<RowMat> ref_cut;
    for (const RowMat& m : r.reference) ref_cut.push_back(m.topRows(rows));
    const ErrorTraces et = error_metrics(r.lifted, ref_cut, 0);
    errors.resize(rows, 4);
    for (Index i = 0; i < rows; ++i) {
      errors(i, 0) = cfg.grid.t0 + static_cast<double>(i) * dt_out;
      errors(i, 1) = et.E1(i);
      errors(i, 2) = et.E2(i);
      errors(i, 3) = et.E3(i);
    }
  }
  const Mat energy = energy_table(r.energy, cfg.grid.t0, dt_out);
  if (rows > 0) {
    double max_rel = 0.0;
    for (Index i = 0; i < rows; ++i) max_rel = std::max(max_rel, energy(i, 2));
    summary.emplace_back("max_relative_energy_error", format_double(max_rel));
    summary.emplace_back("final_relative_energy_error", format_double(energy(rows - 1, 2)));
  }

  ArtifactSet out(cfg.output_dir);
  out.matrix(kTrajectory, to_mat(r.lifted_stacked), MatrixKind::trajectory);
  if (r.reduced.size()) out.matrix(kReduced, to_mat(r.reduced), MatrixKind::trajectory);
  if (cfg.problem == Problem::nls) out.matrix(kReference, to_mat(r.reference_stacked), MatrixKind::trajectory);
  out.matrix(kEnergy, energy, MatrixKind::generic);
  out.matrix(kErrors, errors, MatrixKind::generic);
  write_csv_bundle(cfg, out);

  KeyValues m = manifest_head(cfg, "online");
  if (r.failure) {
    m.emplace_back("status", "failed");
    m.emplace_back("failure_kind",
                   r.failure->kind == IntegrationFailure::Kind::divergence ? "divergence" : "nonconvergence");
    m.emplace_back("failure_step", std::to_string(r.failure->step));
    m.emplace_back("failure_time", format_double(cfg.grid.node(r.failure->step)));
  } else {
    m.emplace_back("status", "ok");
  }
  m.emplace_back("full_dim", std::to_string(full_dim(cfg)));
  m.emplace_back("reduced_dim", std::to_string(r.reduced_dim));
  m.emplace_back("stored_rows", std::to_string(rows));
  for (auto& e : summary) m.push_back(e);
  append_config(m, cfg);
  out.append_checksums(m);
  write_file_atomic(cfg.output_dir / kManifestOnline, format_key_values(m));

  CommandOutcome outcome;
  outcome.failure = r.failure;
  outcome.reduced_dim = r.reduced_dim;
  outcome.artifacts = out.names();
  outcome.artifacts.push_back(kManifestOnline);
  return outcome;
}

CommandOutcome cmd_report(const fs::path& dir) {
  const fs::path mpath = dir / kManifestOnline;
  if (!fs::exists(mpath)) throw IoError("missing artifact: " + mpath.string());
  const KeyValues manifest = read_manifest(mpath);
  KeyValues cfg_kv;
  for (const auto& [k, v] : manifest)
    if (k.rfind("config.", 0) == 0) cfg_kv.emplace_back(k.substr(7), v);
  cfg_kv.emplace_back("output_dir", dir.string());
  const RunConfig cfg = config_from_key_values(cfg_kv);
  if (lookup(manifest, "config_hash", mpath) != cfg.hash())
    throw IoError(mpath.string() + ": config hash does not match the recorded settings");
  ArtifactSet out(dir);
  write_csv_bundle(cfg, out);
  CommandOutcome outcome;
  outcome.artifacts = out.names();
  outcome.reduced_dim = std::stoull(lookup(manifest, "reduced_dim", mpath));
  return outcome;
}

CommandOutcome cmd_mc(const RunConfig& cfg) {
  cfg.validate();
  require(cfg.problem == Problem::stacked_kubo || cfg.problem == Problem::kubo, "mc: problem must be kubo or stacked-kubo");
  require(cfg.reduction == Reduction::none, "mc: runs the full stacked system (reduction none)");
  ensure_dir(cfg.output_dir);

  const std::size_t M = cfg.noise_dim();
  const HamiltonianSDESystem base = kubo_system(cfg.kubo);
  const HamiltonianSDESystem sys = M == 1 ? base : stack_hamiltonian(base, M);
  const Vec u0 = tiled_initial(cfg.kubo, M, true);
  const double H0 = base.H(kubo_initial_condition(cfg.kubo));

  WienerStream stream(cfg.rng, cfg.grid, M);
  Vec W = Vec::Zero(idx(M));
  auto source = [&](VecOut dW) {
    stream.next(dW);
    W += dW;
  };

  CsvTable table;
  table.header = {"t", "mean_q", "mean_p", "exact_mean_q", "exact_mean_p", "E1", "E2", "E3", "mean_H_relerr"};
  std::vector<double> q(M), p(M), eq(M), ep(M), d2(M), r2(M), hv(M);
  auto observe = [&](std::size_t step, const VecIn& u) {
    if (step % cfg.output_stride != 0) return;
    const double t = static_cast<double>(step) * cfg.grid.dt;
    for (std::size_t nu = 0; nu < M; ++nu) {
      q[nu] = u(idx(nu));
      p[nu] = u(idx(M + nu));
      const Vec x = kubo_exact_state(cfg.kubo, t, W(idx(nu)));
      eq[nu] = x(0);
      ep[nu] = x(1);
      d2[nu] = (q[nu] - x(0)) * (q[nu] - x(0)) + (p[nu] - x(1)) * (p[nu] - x(1));
      r2[nu] = x(0) * x(0) + x(1) * x(1);
      hv[nu] = 0.5 * (q[nu] * q[nu] + p[nu] * p[nu]);
    }
    const double inv = 1.0 / static_cast<double>(M);
    const double mq = pairwise_sum(q.data(), M) * inv, mp = pairwise_sum(p.data(), M) * inv;
    const double xq = pairwise_sum(eq.data(), M) * inv, xp = pairwise_sum(ep.data(), M) * inv;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double den1 = r2[0];
    const double den2 = pairwise_sum(r2.data(), M) * inv;
    const double den3 = xq * xq + xp * xp;
    const double E1 = den1 < 1e-30 ? nan : std::sqrt(d2[0] / den1);
    const double E2 = den2 < 1e-30 ? nan : std::sqrt(pairwise_sum(d2.data(), M) * inv / den2);
    const double E3 = den3 < 1e-30 ? nan : std::sqrt(((mq - xq) * (mq - xq) + (mp - xp) * (mp - xp)) / den3);
    const double mh = pairwise_sum(hv.data(), M) * inv;
    table.rows.push_back({cfg.grid.t0 + t, mq, mp, xq, xp, E1, E2, E3, std::abs(mh - H0) / std::abs(H0)});
  };
  const auto failure = integrate_streaming(sys, cfg.method, u0, cfg.grid, source, observe, cfg.solver);

  ArtifactSet out(cfg.output_dir);
  out.text("mc.csv", format_csv(table));
  KeyValues m = manifest_head(cfg, "mc");
  m.emplace_back("status", failure ? "failed" : "ok");
  if (failure) m.emplace_back("failure_step", std::to_string(failure->step));
  m.emplace_back("paths", std::to_string(M));
  append_config(m, cfg);
  out.append_checksums(m);
  write_file_atomic(cfg.output_dir / kManifestMc, format_key_values(m));

  CommandOutcome outcome;
  outcome.failure = failure;
  outcome.reduced_dim = 2 * M;
  outcome.artifacts = out.names();
  outcome.artifacts.push_back(kManifestMc);
  return outcome;
}

}  // namespace stochrom
