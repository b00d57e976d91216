// smartlab_cli: run scenarios and presets, sweep override grids, check oracles.

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smartlab/metrics.hpp"
#include "smartlab/oracle.hpp"
#include "smartlab/scenario.hpp"
#include "smartlab/simulation.hpp"

extern char** environ;

namespace fs = std::filesystem;
using smartlab::json;

namespace {

struct RunOptions {
  std::string scenario;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string gateway_dir;
  std::optional<double> duration;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_preset_positional) {
  cmd->add_option("--scenario", o.scenario, "Scenario JSON file");
  auto* p = cmd->add_option("--preset", o.preset, "Shipped preset (tc1, tc2, tc3)");
  if (with_preset_positional) cmd->add_option("name", o.preset, "Preset name")->excludes(p);
  cmd->add_option("--set", o.sets, "Override a dotted path, k=v (repeatable)")->take_all();
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--gateway-dir", o.gateway_dir, "Exchange directory for an external process");
  cmd->add_option("--duration", o.duration, "Simulated seconds")->check(CLI::NonNegativeNumber);
}

json resolve_document(const RunOptions& o) {
  if (o.scenario.empty() == o.preset.empty()) {
    throw CLI::ValidationError("exactly one of --scenario or --preset is required");
  }
  json doc = o.preset.empty() ? smartlab::read_json_file(o.scenario) : smartlab::preset_document(o.preset);
  for (const auto& s : o.sets) smartlab::apply_override(doc, s);
  if (o.seed) doc["seed"] = *o.seed;
  if (o.duration) doc["duration_s"] = *o.duration;
  if (!o.gateway_dir.empty()) doc["gateway"]["dir"] = o.gateway_dir;
  return doc;
}

int do_run(const RunOptions& o) {
  const auto scenario = smartlab::scenario_from_json(resolve_document(o));
  const auto result = smartlab::run_scenario(scenario);
  smartlab::export_metrics(result, scenario, o.out);
  std::cout << smartlab::summarize(result).dump(2) << "\n";
  return 0;
}

// Parses "path=v1,v2,v3" into one override string per value.
std::vector<std::string> expand_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--grid expects path=v1,v2,...");
  const std::string key = spec.substr(0, eq);
  std::vector<std::string> out;
  std::string rest = spec.substr(eq + 1);
  std::size_t start = 0;
  while (true) {
    const auto comma = rest.find(',', start);
    out.push_back(key + "=" + rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

pid_t spawn_point(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/proc/self/exe", &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw smartlab::Error(smartlab::Errc::io_error, std::string("posix_spawn: ") + std::strerror(rc));
  return pid;
}

int do_sweep(const RunOptions& o, const std::vector<std::string>& grid, int jobs) {
  // Cartesian product, last axis varying fastest.
  std::vector<std::vector<std::string>> points{{}};
  for (const auto& axis : grid) {
    const auto values = expand_axis(axis);
    std::vector<std::vector<std::string>> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  fs::create_directories(o.out);

  std::vector<std::vector<std::string>> commands;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<std::string> args{"smartlab_cli", "run", "--out", (fs::path(o.out) / ("point_" + std::to_string(i))).string()};
    if (!o.scenario.empty()) args.insert(args.end(), {"--scenario", o.scenario});
    if (!o.preset.empty()) args.insert(args.end(), {"--preset", o.preset});
    for (const auto& s : o.sets) args.insert(args.end(), {"--set", s});
    for (const auto& s : points[i]) args.insert(args.end(), {"--set", s});
    if (o.seed) args.insert(args.end(), {"--seed", std::to_string(*o.seed)});
    if (o.duration) args.insert(args.end(), {"--duration", smartlab::detail::fmt(*o.duration)});
    if (!o.gateway_dir.empty()) args.insert(args.end(), {"--gateway-dir", o.gateway_dir});
    commands.push_back(std::move(args));
  }

  std::vector<int> status(points.size(), -1);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < points.size(); ++i) queue.push_back(i);
  std::map<pid_t, std::size_t> running;
  while (!queue.empty() || !running.empty()) {
    while (!queue.empty() && static_cast<int>(running.size()) < jobs) {
      const std::size_t i = queue.front();
      queue.pop_front();
      running[spawn_point(commands[i])] = i;
    }
    int ws = 0;
    const pid_t done = waitpid(-1, &ws, 0);
    if (done < 0) break;
    auto it = running.find(done);
    if (it == running.end()) continue;
    status[it->second] = WIFEXITED(ws) ? WEXITSTATUS(ws) : 128;
    running.erase(it);
  }

  std::string index = "point,overrides,exit_code,miss_fraction,mismatch_fraction,tracking_error,accepted_bids\n";
  int failures = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::string ov;
    for (const auto& s : points[i]) ov += (ov.empty() ? "" : ";") + s;
    index += std::to_string(i) + ",\"" + ov + "\"," + std::to_string(status[i]);
    if (status[i] == 0) {
      const auto sum = smartlab::read_json_file(fs::path(o.out) / ("point_" + std::to_string(i)) / "summary.json");
      for (const char* k : {"miss_fraction", "mismatch_fraction", "tracking_error", "accepted_bids"}) {
        index += ",";
        if (!sum[k].is_null()) index += sum[k].dump();
      }
    } else {
      ++failures;
      index += ",,,,";
    }
    index += "\n";
  }
  smartlab::write_text(fs::path(o.out) / "sweep.csv", index);
  std::cout << points.size() << " points, " << failures << " failed; index at "
            << (fs::path(o.out) / "sweep.csv").string() << "\n";
  return failures == 0 ? 0 : 1;
}

// Input: {"network": {...}, "injections_mw": {bus: MW}, "bids": [...],
//         "imbalance_kw": x, "unit_kw": 0.5}. Any part may be omitted.
int do_oracle(const std::string& input) {
  const json in = smartlab::read_json_file(input);
  json out = json::object();
  bool agree = true;
  if (!in.contains("network")) throw smartlab::ParseError(0, "oracle input needs a network");
  const auto net = smartlab::network_from_json(in["network"]);
  std::vector<double> inj(net.bus_count(), 0.0);
  if (in.contains("injections_mw")) {
    // Omitted buses inject nothing.
    std::map<std::string, double> given;
    for (const auto& b : net.buses()) given[b.bus_id] = 0.0;
    for (const auto& [id, v] : in["injections_mw"].items()) {
      net.bus_index(id);
      given[id] = v.get<double>();
    }
    inj = smartlab::grid::injection_vector(net, given);
  }

  const auto fast = smartlab::grid::dc_power_flow(net, inj);
  const auto dense = smartlab::oracle::dense_power_flow(net, inj);
  double max_rel = 0.0;
  for (std::size_t l = 0; l < fast.size(); ++l) {
    max_rel = std::max(max_rel, std::abs(fast[l] - dense[l]) / std::max(1.0, std::abs(dense[l])));
  }
  const auto balance = smartlab::grid::bus_net_outflow(net, fast);
  double max_imbalance = 0.0;
  for (std::size_t b = 0; b < balance.size(); ++b) {
    if (b != net.slack_index()) max_imbalance = std::max(max_imbalance, std::abs(balance[b] - inj[b]));
  }
  out["power_flow"] = {{"flows_mw", fast},
                       {"dense_flows_mw", dense},
                       {"max_rel_diff", max_rel},
                       {"max_nodal_mismatch_mw", max_imbalance},
                       {"agree", max_rel <= 1e-9}};
  agree = agree && max_rel <= 1e-9;

  if (in.contains("bids")) {
    std::vector<smartlab::market::Bid> bids;
    for (const auto& b : in["bids"]) bids.push_back(smartlab::detail::bid_from_json(b));
    const auto book = smartlab::market::collect_bids(std::move(bids), 0, net);
    const double imbalance = in.value("imbalance_kw", 0.0);
    const auto r = smartlab::market::clear_market(book, imbalance, net, inj);
    const auto best = smartlab::oracle::exact_market_optimum(book, imbalance, in.value("unit_kw", 0.5));
    const bool congested = r.total_curtailed_kw() > 0;
    const bool prefix = smartlab::oracle::is_merit_prefix(r, book);
    const bool equal = r.merit_cost() == best.cost;
    out["market"] = {{"clearing_cost", r.merit_cost()}, {"optimum_cost", best.cost},
                     {"accepted_kw", r.total_accepted_kw()}, {"optimum_kw", best.covered_kw},
                     {"congested", congested}, {"merit_prefix", prefix}, {"cost_equal", equal}};
    // Curtailment may legitimately depart from the unconstrained optimum.
    if (!congested) agree = agree && equal && prefix;
  }
  out["agree"] = agree;
  std::cout << out.dump(2) << "\n";
  return agree ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop flexibility market co-simulation"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run a scenario file or preset");
  add_run_options(run, run_opts, false);

  RunOptions preset_opts;
  auto* preset = app.add_subcommand("preset", "Run a shipped preset by name");
  add_run_options(preset, preset_opts, true);
  bool list = false;
  preset->add_flag("--list", list, "List preset names");

  RunOptions sweep_opts;
  std::vector<std::string> grid;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run every point of a Cartesian override grid");
  add_run_options(sweep, sweep_opts, false);
  sweep->add_option("--grid", grid, "Axis as path=v1,v2,... (repeatable)")->required()->take_all();
  sweep->add_option("--jobs,-j", jobs, "Concurrent processes")->check(CLI::PositiveNumber)->capture_default_str();

  std::string oracle_input;
  auto* oracle = app.add_subcommand("oracle", "Compare solvers against the reference oracles");
  oracle->add_option("input", oracle_input, "Oracle input JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return do_run(run_opts);
    if (*preset) {
      if (list) {
        for (const auto& n : smartlab::preset_names()) std::cout << n << "\n";
        return 0;
      }
      return do_run(preset_opts);
    }
    if (*sweep) return do_sweep(sweep_opts, grid, jobs);
    if (*oracle) return do_oracle(oracle_input);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
