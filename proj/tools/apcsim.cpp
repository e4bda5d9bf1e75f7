#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apcsim/experiments.h"
#include "apcsim/scenario.h"

namespace fs = std::filesystem;
using namespace apcsim;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> policy;
  std::optional<double> theta;
  bool dump_cache = false;
  std::vector<UserId> exclude_users;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--output-dir", o.output_dir, "Directory for output files");
  cmd->add_option("--seed-override", o.seed,
                  "Replace all seeds with N, N+1, N+2");
}

void add_scenario_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--policy", o.policy,
                  "prefix_caching, user_isolation or selective_isolation");
  cmd->add_option("--theta", o.theta, "Activation threshold in [0, 1]");
  cmd->add_flag("--dump-cache", o.dump_cache, "Write cache_dump.jsonl");
  cmd->add_option("--exclude-user", o.exclude_users,
                  "Leave a user out of the excluding summary (repeatable)");
}

ScenarioConfig load_with(const std::string& path, const Overrides& o) {
  ScenarioConfig c = load_config(path);
  if (o.seed) {
    apply_seed_override(c, *o.seed);
  }
  if (o.output_dir) {
    c.output_dir = *o.output_dir;
  }
  if (o.policy) {
    const auto kind = parse_policy_kind(*o.policy);
    if (!kind) {
      throw ConfigError("policy.kind", "unknown policy '" + *o.policy + "'");
    }
    c.policy.kind = *kind;
  }
  if (o.theta) {
    c.policy.activator.theta = *o.theta;
  }
  if (o.dump_cache) {
    c.dump_cache = true;
  }
  if (!o.exclude_users.empty()) {
    c.exclude_users = o.exclude_users;
  }
  validate(c);
  return c;
}

int cmd_run(const std::string& path, const Overrides& o) {
  const ScenarioConfig c = load_with(path, o);
  const ScenarioResult r = run_scenario(c);
  for (const fs::path& p : write_outputs(c, r, c.output_dir)) {
    std::cout << p.string() << '\n';
  }
  std::cout << summary_json(c, r).dump(2) << '\n';
  return 0;
}

int cmd_attack(const std::string& path, const Overrides& o) {
  const ScenarioConfig c = load_with(path, o);
  const AttackReport report = run_attack(c);
  fs::create_directories(c.output_dir);
  {
    std::ofstream out(fs::path(c.output_dir) / "attack_report.json",
                      std::ios::binary | std::ios::trunc);
    out << to_json(report).dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(c.output_dir) / "attack.csv",
                      std::ios::binary | std::ios::trunc);
    out.precision(17);
    write_attack_csv(out, report);
  }
  for (const AttackRun& run : report.runs) {
    std::cout << to_string(run.policy) << ": " << run.verdict;
    if (run.note) {
      std::cout << " (" << *run.note << ')';
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_sweep(const std::string& path, const Overrides& o,
              const std::vector<double>& thetas) {
  const ScenarioConfig c = load_with(path, o);
  const std::vector<ThetaPoint> points = run_theta_sweep(c, thetas);
  fs::create_directories(c.output_dir);
  const fs::path csv = fs::path(c.output_dir) / "sweep.csv";
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  out.precision(17);
  out << "theta,hit_rate,ttft_mean_ms,ttft_p50_ms,ttft_p99_ms\n";
  for (const ThetaPoint& p : points) {
    out << p.theta << ',' << p.summary.hit_rate << ',' << p.summary.ttft.mean_ms
        << ',' << p.summary.ttft.p50_ms << ',' << p.summary.ttft.p99_ms << '\n';
    std::cout << "theta=" << p.theta << " hit_rate=" << p.summary.hit_rate
              << " ttft_mean_ms=" << p.summary.ttft.mean_ms << '\n';
  }
  std::cout << csv.string() << '\n';
  return 0;
}

int cmd_generate(const std::string& path, const Overrides& o,
                 const std::string& output) {
  const ScenarioConfig c = load_with(path, o);
  const std::vector<Request> reqs = build_requests(c);
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + output);
  }
  write_requests_jsonl(out, reqs);
  std::cout << reqs.size() << " requests -> " << output << '\n';
  return 0;
}

void report_config_error(const std::string& field, const std::string& message) {
  const nlohmann::json err = {
      {"error", "config_error"}, {"field", field}, {"message", message}};
  std::cerr << err.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-tenant prefix-cache serving simulator"};
  app.require_subcommand(1);

  Overrides o;
  std::string config_path;

  auto* run = app.add_subcommand("run", "Run one scenario and write its traces");
  run->add_option("config", config_path, "Scenario config (JSON)")->required();
  add_common(run, o);
  add_scenario_flags(run, o);

  auto* attack = app.add_subcommand(
      "attack", "Replay a probing attack under prefix caching and isolation");
  attack->add_option("config", config_path, "Scenario config (JSON)")->required();
  add_common(attack, o);
  add_scenario_flags(attack, o);

  std::vector<double> thetas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                0.6, 0.7, 0.8, 0.9, 1.0};
  auto* sweep = app.add_subcommand("sweep", "Sweep the activation threshold");
  sweep->add_option("config", config_path, "Scenario config (JSON)")->required();
  sweep->add_option("--thetas", thetas, "Thresholds to run")->delimiter(',');
  add_common(sweep, o);
  add_scenario_flags(sweep, o);

  std::string preset_name;
  auto* preset = app.add_subcommand("preset", "Run a canned experiment");
  std::string names;
  for (const std::string& n : preset_names()) {
    names += (names.empty() ? "" : ", ") + n;
  }
  // unknown names surface as a config error from run_preset
  preset->add_option("name", preset_name, "One of: " + names)->required();
  add_common(preset, o);

  std::string gen_output = "requests.jsonl";
  auto* generate = app.add_subcommand(
      "generate", "Write the scenario's request stream as JSON lines");
  generate->add_option("config", config_path, "Scenario config (JSON)")->required();
  generate->add_option("-o,--output", gen_output, "Output file");
  add_common(generate, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return cmd_run(config_path, o);
    }
    if (*attack) {
      return cmd_attack(config_path, o);
    }
    if (*sweep) {
      return cmd_sweep(config_path, o, thetas);
    }
    if (*generate) {
      return cmd_generate(config_path, o, gen_output);
    }
    if (*preset) {
      for (const fs::path& p :
           run_preset(preset_name, o.output_dir.value_or("out"), o.seed)) {
        std::cout << p.string() << '\n';
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    report_config_error(e.field(), e.what());
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    report_config_error("config", e.what());
    return kExitConfig;
  } catch (const InvariantBreach& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::logic_error& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
