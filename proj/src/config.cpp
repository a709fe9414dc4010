#include "stochrom/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

namespace stochrom {

namespace {

std::size_t parse_count(const std::string& key, std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw PreconditionError(key + ": expected a non-negative integer, got '" + std::string(s) + "'");
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, std::string_view s) {
  double v = 0.0;
  try {
    v = parse_double(s);
  } catch (const PreconditionError&) {
    throw PreconditionError(key + ": expected a number, got '" + std::string(s) + "'");
  }
  if (!std::isfinite(v)) throw PreconditionError(key + ": value must be finite");
  return v;
}

bool parse_bool(const std::string& key, std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw PreconditionError(key + ": expected true or false");
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    std::string_view item = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Method parse_step_method(const std::string& key, std::string_view s) {
  const Method m = parse_method(s);
  require(m != Method::exact, key + ": 'exact' is not a time stepper");
  return m;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

}  // namespace

std::string_view problem_name(Problem p) {
  switch (p) {
    case Problem::nls: return "nls";
    case Problem::kubo: return "kubo";
    case Problem::stacked_kubo: return "stacked-kubo";
  }
  return "unknown";
}

std::string_view reduction_name(Reduction r) {
  switch (r) {
    case Reduction::none: return "none";
    case Reduction::pod: return "pod";
    case Reduction::psd: return "psd";
  }
  return "unknown";
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "config_version", "problem",     "nls.N",           "nls.x_max",        "nls.c",
      "nls.x_c",        "nls.beta",    "nls.eps",         "kubo.beta",        "kubo.q0",
      "kubo.p0",        "kubo.M",      "t0",              "dt",               "n_steps",
      "seed",           "stream_id",   "method",          "training_method",  "reference_method",
      "reduction",      "k",           "energy_threshold", "deim",            "training",
      "training_source", "stride",     "output_stride",   "save_training",    "slice_times",
      "fp_tol",         "fp_max_iter", "output_dir"};
  return keys;
}

void RunConfig::validate() const {
  nls.validate();
  require(std::isfinite(kubo.beta) && std::isfinite(kubo.q0) && std::isfinite(kubo.p0),
          "kubo: parameters must be finite");
  require(M >= 1, "kubo.M must be at least 1");
  require(problem == Problem::stacked_kubo || M == 1, "kubo.M applies to stacked-kubo only");
  grid.validate();
  solver.validate();
  require(stride >= 1, "stride must be at least 1");
  require(output_stride >= 1, "output_stride must be at least 1");
  require(energy_threshold > 0.0 && energy_threshold <= 1.0, "energy_threshold must lie in (0, 1]");
  require(!output_dir.empty(), "output_dir is required");
  if (reduction == Reduction::pod)
    require(method != Method::stormer_verlet, "method stormer_verlet needs a Hamiltonian reduced model (reduction psd)");
  require(!(deim_auto && deim > 0), "deim: either a size or auto");
  if (uses_deim()) {
    require(reduction != Reduction::none, "deim requires reduction pod or psd");
    require(problem == Problem::nls, "deim requires a problem with a nonlinear term (nls)");
  }
  if (training_source == TrainingSource::exact)
    require(problem != Problem::nls, "training_source exact is available for kubo problems only");
  for (const auto& tp : training)
    require(std::isfinite(tp.beta) && std::isfinite(tp.eps), "training: values must be finite");
  if (problem != Problem::nls)
    for (const auto& tp : training) require(tp.eps == 1.0, "training: kubo entries take a beta value only");
  for (double t : slice_times)
    require(t >= grid.t0 && t <= grid.t_end(), "slice_times must lie within [t0, t0 + n_steps dt]");
  require(problem == Problem::nls || slice_times.empty(), "slice_times applies to nls only");
}

KeyValues RunConfig::to_key_values() const {
  std::vector<std::string> tr;
  for (const auto& tp : training)
    tr.push_back(problem == Problem::nls ? format_double(tp.beta) + ":" + format_double(tp.eps)
                                         : format_double(tp.beta));
  std::vector<std::string> st;
  for (double t : slice_times) st.push_back(format_double(t));
  return {{"config_version", std::to_string(kVersion)},
          {"problem", std::string(problem_name(problem))},
          {"nls.N", std::to_string(nls.N)},
          {"nls.x_max", format_double(nls.x_max)},
          {"nls.c", format_double(nls.c)},
          {"nls.x_c", format_double(nls.x_c)},
          {"nls.beta", format_double(nls.beta)},
          {"nls.eps", format_double(nls.eps)},
          {"kubo.beta", format_double(kubo.beta)},
          {"kubo.q0", format_double(kubo.q0)},
          {"kubo.p0", format_double(kubo.p0)},
          {"kubo.M", std::to_string(M)},
          {"t0", format_double(grid.t0)},
          {"dt", format_double(grid.dt)},
          {"n_steps", std::to_string(grid.n_steps)},
          {"seed", std::to_string(rng.seed)},
          {"stream_id", std::to_string(rng.stream_id)},
          {"method", std::string(method_name(method))},
          {"training_method", std::string(method_name(training_method))},
          {"reference_method", std::string(method_name(reference_method))},
          {"reduction", std::string(reduction_name(reduction))},
          {"k", std::to_string(k)},
          {"energy_threshold", format_double(energy_threshold)},
          {"deim", deim_auto ? std::string("auto") : std::to_string(deim)},
          {"training", join(tr)},
          {"training_source", training_source == TrainingSource::exact ? "exact" : "full"},
          {"stride", std::to_string(stride)},
          {"output_stride", std::to_string(output_stride)},
          {"save_training", save_training ? "true" : "false"},
          {"slice_times", join(st)},
          {"fp_tol", format_double(solver.fp_tol)},
          {"fp_max_iter", std::to_string(solver.fp_max_iter)},
          {"output_dir", output_dir.string()}};
}

std::string RunConfig::hash() const {
  KeyValues kv = to_key_values();
  std::erase_if(kv, [](const auto& e) { return e.first == "output_dir"; });
  return hex64(fnv1a64(format_key_values(kv)));
}

RunConfig config_from_key_values(const KeyValues& kv) {
  std::map<std::string, std::string> given;
  const auto& keys = config_keys();
  for (const auto& [k, v] : kv) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw PreconditionError("unknown config key '" + k + "'");
    if (!given.emplace(k, v).second) throw PreconditionError("duplicate config key '" + k + "'");
  }
  for (const char* req : {"problem", "dt", "n_steps", "seed", "output_dir"})
    if (!given.count(req)) throw PreconditionError(std::string("missing required config key '") + req + "'");

  RunConfig c;
  auto has = [&](const std::string& k) { return given.count(k) > 0; };
  auto str = [&](const std::string& k) -> const std::string& { return given.at(k); };

  if (has("config_version")) {
    const std::size_t v = parse_count("config_version", str("config_version"));
    require(v == static_cast<std::size_t>(RunConfig::kVersion),
            "config_version " + std::to_string(v) + " is not supported (expected 1)");
  }
  const std::string& prob = str("problem");
  if (prob == "nls") c.problem = Problem::nls;
  else if (prob == "kubo") c.problem = Problem::kubo;
  else if (prob == "stacked-kubo") c.problem = Problem::stacked_kubo;
  else throw PreconditionError("problem: expected nls, kubo or stacked-kubo, got '" + prob + "'");

  if (has("nls.N")) c.nls.N = parse_count("nls.N", str("nls.N"));
  if (has("nls.x_max")) c.nls.x_max = parse_real("nls.x_max", str("nls.x_max"));
  if (has("nls.c")) c.nls.c = parse_real("nls.c", str("nls.c"));
  if (has("nls.x_c")) c.nls.x_c = parse_real("nls.x_c", str("nls.x_c"));
  if (has("nls.beta")) c.nls.beta = parse_real("nls.beta", str("nls.beta"));
  if (has("nls.eps")) c.nls.eps = parse_real("nls.eps", str("nls.eps"));
  if (has("kubo.beta")) c.kubo.beta = parse_real("kubo.beta", str("kubo.beta"));
  if (has("kubo.q0")) c.kubo.q0 = parse_real("kubo.q0", str("kubo.q0"));
  if (has("kubo.p0")) c.kubo.p0 = parse_real("kubo.p0", str("kubo.p0"));
  if (has("kubo.M")) c.M = parse_count("kubo.M", str("kubo.M"));

  c.grid.t0 = has("t0") ? parse_real("t0", str("t0")) : 0.0;
  c.grid.dt = parse_real("dt", str("dt"));
  c.grid.n_steps = parse_count("n_steps", str("n_steps"));
  c.rng.seed = parse_count("seed", str("seed"));
  if (has("stream_id")) c.rng.stream_id = parse_count("stream_id", str("stream_id"));

  if (has("method")) c.method = parse_step_method("method", str("method"));
  if (has("training_method")) c.training_method = parse_step_method("training_method", str("training_method"));
  if (has("reference_method")) c.reference_method = parse_step_method("reference_method", str("reference_method"));

  if (has("reduction")) {
    const std::string& r = str("reduction");
    if (r == "none") c.reduction = Reduction::none;
    else if (r == "pod") c.reduction = Reduction::pod;
    else if (r == "psd") c.reduction = Reduction::psd;
    else throw PreconditionError("reduction: expected none, pod or psd, got '" + r + "'");
  }
  if (has("k")) c.k = parse_count("k", str("k"));
  if (has("energy_threshold")) c.energy_threshold = parse_real("energy_threshold", str("energy_threshold"));
  if (has("deim")) {
    if (str("deim") == "auto") c.deim_auto = true;
    else c.deim = parse_count("deim", str("deim"));
  }

  if (has("training")) {
    for (std::string_view item : split_list(str("training"))) {
      require(!item.empty(), "training: empty entry");
      TrainingPair tp;
      const std::size_t colon = item.find(':');
      if (colon == std::string_view::npos) {
        require(c.problem != Problem::nls, "training: nls entries must be beta:eps pairs");
        tp.beta = parse_real("training", item);
      } else {
        require(c.problem == Problem::nls, "training: kubo entries take a beta value only");
        tp.beta = parse_real("training", item.substr(0, colon));
        tp.eps = parse_real("training", item.substr(colon + 1));
      }
      c.training.push_back(tp);
    }
  }
  if (has("training_source")) {
    const std::string& s = str("training_source");
    if (s == "full") c.training_source = TrainingSource::full;
    else if (s == "exact") c.training_source = TrainingSource::exact;
    else throw PreconditionError("training_source: expected full or exact");
  }
  if (has("stride")) c.stride = parse_count("stride", str("stride"));
  if (has("output_stride")) c.output_stride = parse_count("output_stride", str("output_stride"));
  if (has("save_training")) c.save_training = parse_bool("save_training", str("save_training"));
  if (has("slice_times"))
    for (std::string_view item : split_list(str("slice_times"))) c.slice_times.push_back(parse_real("slice_times", item));
  if (has("fp_tol")) c.solver.fp_tol = parse_real("fp_tol", str("fp_tol"));
  if (has("fp_max_iter")) c.solver.fp_max_iter = parse_count("fp_max_iter", str("fp_max_iter"));
  c.output_dir = str("output_dir");

  c.validate();
  return c;
}

RunConfig parse_config(std::string_view text) { return config_from_key_values(parse_key_values(text)); }

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

}  // namespace stochrom
