// stochrom: offline/online reduced-order workflow.
//
//   stochrom offline --config run.cfg [--key value ...]
//   stochrom online  --config run.cfg [--key value ...]
//   stochrom report  --dir out/
//   stochrom mc      --config run.cfg [--key value ...]
//
// Every config key is also a flag (--dt 0.01, --nls.N 64, ...); flags override
// the file. Exit status: 0 success, 2 invalid input, 3 numerical failure.

#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "stochrom/pipeline.hpp"

namespace {

using namespace stochrom;

struct VerbArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_config_flags(CLI::App* cmd, VerbArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value run configuration file");
  for (const std::string& key : config_keys()) {
    if (key == "config_version") continue;
    cmd->add_option_function<std::string>(
        "--" + key, [&args, key](const std::string& v) { args.overrides[key] = v; }, "overrides config key " + key);
  }
}

RunConfig resolve(const VerbArgs& args) {
  KeyValues kv;
  if (!args.config_path.empty()) kv = parse_key_values(read_file(args.config_path));
  for (const auto& [k, v] : args.overrides) {
    bool replaced = false;
    for (auto& e : kv)
      if (e.first == k) {
        e.second = v;
        replaced = true;
      }
    if (!replaced) kv.emplace_back(k, v);
  }
  return config_from_key_values(kv);
}

int finish(const CommandOutcome& out, const char* verb) {
  for (const auto& a : out.artifacts) std::cout << a << "\n";
  if (!out.ok()) {
    std::cerr << "stochrom " << verb << ": run stopped early: " << out.failure->message << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-order models for stochastic Hamiltonian systems"};
  app.require_subcommand(1);

  VerbArgs offline_args, online_args, mc_args;
  std::string report_dir;
  CLI::App* offline = app.add_subcommand("offline", "training runs and basis construction");
  CLI::App* online = app.add_subcommand("online", "reduced run against the stored artifacts");
  CLI::App* report = app.add_subcommand("report", "CSV bundle from online artifacts");
  CLI::App* mc = app.add_subcommand("mc", "streamed ensemble run of the stacked Kubo system");
  add_config_flags(offline, offline_args);
  add_config_flags(online, online_args);
  add_config_flags(mc, mc_args);
  report->add_option("--dir", report_dir, "output directory of an online run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  const char* verb = app.get_subcommands().front()->get_name().c_str();
  try {
    if (offline->parsed()) return finish(cmd_offline(resolve(offline_args)), verb);
    if (online->parsed()) return finish(cmd_online(resolve(online_args)), verb);
    if (mc->parsed()) return finish(cmd_mc(resolve(mc_args)), verb);
    return finish(cmd_report(report_dir), verb);
  } catch (const PreconditionError& e) {
    std::cerr << "stochrom " << verb << ": invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "stochrom " << verb << ": " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "stochrom " << verb << ": numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
