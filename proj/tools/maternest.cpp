// Command-line driver for the experiments.
//
//   maternest <command> [--config FILE] [--out FILE] [--set key=value ...]
//
// Exit status: 0 when every check passes, 1 when a check fails, 2 for usage
// or configuration errors.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maternest/experiments.hpp"

namespace ex = maternest::experiments;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<int> threads;
  std::string seed_list;
  std::optional<std::size_t> d;
  std::optional<double> nu0;
  std::string schedule;
  std::vector<std::string> sets;
  bool inject_fault = false;
};

ex::ExperimentConfig build_config(const std::string& command, const Options& o) {
  ex::KeyValues file_kv;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ex::ConfigError("cannot open config file '" + o.config + "'");
    file_kv = ex::parse_key_values(in);
    auto it = file_kv.find("experiment");
    if (it != file_kv.end() && it->second != command) {
      throw ex::ConfigError("config file is for '" + it->second + "', not '" + command + "'");
    }
  }
  ex::KeyValues cli_kv;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ex::ConfigError("--set expects key=value, got '" + s + "'");
    cli_kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (o.threads) cli_kv["threads"] = std::to_string(*o.threads);
  if (!o.seed_list.empty()) cli_kv["seeds"] = o.seed_list;
  if (o.d) cli_kv["d"] = std::to_string(*o.d);
  if (o.nu0) cli_kv["nu0"] = ex::fmt(*o.nu0);
  if (!o.schedule.empty()) cli_kv["schedule"] = o.schedule;
  if (o.inject_fault) cli_kv["inject_fault"] = "true";
  if (!o.out.empty()) cli_kv["output"] = o.out;

  // The dimension picks the defaults, so resolve it first.
  std::size_t d = 1;
  for (const auto* kv : {&file_kv, &cli_kv}) {
    auto it = kv->find("d");
    if (it != kv->end()) {
      ex::ExperimentConfig probe;
      ex::apply_key_values(probe, {{"d", it->second}});
      d = probe.d;
    }
  }
  ex::ExperimentConfig cfg = ex::default_config(command, d);
  ex::apply_key_values(cfg, file_kv);
  ex::apply_key_values(cfg, cli_kv);
  cfg.experiment = command;
  cfg.validate();
  return cfg;
}

int execute(const std::string& command, const Options& o) {
  ex::ExperimentConfig cfg;
  try {
    cfg = build_config(command, o);
  } catch (const ex::ConfigError& e) {
    std::cerr << "maternest: " << e.what() << '\n';
    return 2;
  }
  ex::Outcome outcome;
  try {
    outcome = ex::run(cfg);
  } catch (const ex::ConfigError& e) {
    std::cerr << "maternest: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "maternest: " << command << " aborted: " << e.what() << '\n';
    return 1;
  }

  // The summary goes to stdout; when the CSV shares it, summary lines are
  // written as '#' comments after the table.
  const bool csv_on_stdout = cfg.output_path.empty() || cfg.output_path == "-";
  const std::string lead = csv_on_stdout ? "# " : "";
  if (csv_on_stdout) {
    ex::write_csv(std::cout, outcome.table);
  } else {
    std::ofstream out(cfg.output_path);
    if (!out) {
      std::cerr << "maternest: cannot write '" << cfg.output_path << "'\n";
      return 2;
    }
    ex::write_csv(out, outcome.table);
  }
  for (const auto& line : outcome.summary) std::cout << lead << line << '\n';
  for (const auto& c : outcome.checks) {
    std::cout << lead << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
  }
  return outcome.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smoothness estimation experiments for Matérn Gaussian processes"};
  app.require_subcommand(1);
  Options o;
  std::string chosen;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"verify-identities", "check the exact posterior identities"},
      {"variance-decay", "decay of the maximal posterior variance"},
      {"non-undersmoothing", "ML and CV smoothness estimates along nested designs"},
      {"logdet-growth", "growth of the kernel log-determinant"},
      {"convergence", "sup-norm error of misspecified posterior means"},
      {"gaussian-scale-probe", "length-scale estimates under a Gaussian kernel"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "key=value configuration file");
    sub->add_option("--out", o.out, "CSV output path (default stdout)");
    sub->add_option("--threads", o.threads, "worker threads");
    sub->add_option("--seed-list", o.seed_list, "comma-separated seeds");
    sub->add_option("--d", o.d, "input dimension");
    sub->add_option("--nu0", o.nu0, "smoothness of the data-generating process");
    sub->add_option("--schedule", o.schedule, "comma-separated prefix sizes");
    sub->add_option("--set", o.sets, "override a configuration key (key=value)");
    if (name == "verify-identities") {
      sub->add_flag("--inject-fault", o.inject_fault, "perturb the kernel to exercise failure reporting");
    }
    sub->callback([&chosen, n = name] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return execute(chosen, o);
}
