#pragma once

// Offline/online workflow behind the command-line tool.
//
// offline  training runs -> basis.spmr, spectrum.spmr, [deim_basis.spmr,
//          deim_spectrum.spmr, deim_indices.spmr], wiener.spmr(+.meta),
//          [training_<i>.spmr], manifest_offline.txt
// online   reduced (or full) run on the stored Wiener sample ->
//          trajectory.spmr, [reduced_trajectory.spmr, reference_trajectory.spmr],
//          energy.spmr, errors.spmr, CSV bundle, manifest_online.txt
// report   regenerates the CSV bundle from online artifacts
// mc       streamed ensemble run of the full stacked Kubo system -> mc.csv,
//          manifest_mc.txt
//
// Manifests hold the config hash, the seed, every config value except
// output_dir and an FNV-1a checksum per artifact; no timestamps, so repeated
// runs produce identical bytes.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stochrom/config.hpp"

namespace stochrom {

struct CommandOutcome {
  std::vector<std::string> artifacts;  // file names relative to output_dir
  std::optional<IntegrationFailure> failure;
  std::size_t reduced_dim = 0;
  bool ok() const { return !failure.has_value(); }
};

// Throws PreconditionError / IoError on invalid input and NumericalError when a
// training run fails (after removing what this call wrote).
CommandOutcome cmd_offline(const RunConfig& cfg);
// A diverging run is not an exception: partial outputs are written and the
// failure is returned (and recorded in the manifest).
CommandOutcome cmd_online(const RunConfig& cfg);
CommandOutcome cmd_report(const std::filesystem::path& dir);
CommandOutcome cmd_mc(const RunConfig& cfg);

// Manifest entries as written (key order preserved).
KeyValues read_manifest(const std::filesystem::path& path);

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

}  // namespace stochrom
