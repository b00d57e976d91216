#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smartlab/gateway.hpp"
#include "smartlab/scenario.hpp"
#include "smartlab/simulation.hpp"

namespace smartlab {

namespace detail {

inline std::string fmt(double v) { return gateway::detail::fixed6(v); }

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline std::string outcome_name(const netem::DeliveryOutcome& o) {
  if (o.dropped) return "dropped";
  if (o.missed_deadline()) return "late";
  return "delivered";
}

}  // namespace detail

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "row_kind",      "cycle",          "time_s",           "imbalance_kw",      "accepted_bids", "accepted_kw",
      "uncovered_kw",  "curtailed_kw",   "price_up",         "price_down",        "target_kw",     "setpoint_kw",
      "output_kw",     "scheduled_kw",   "slack_residual_kw", "delta_f_pu",       "agc_kw",        "activation_kw",
      "measured_delta_kw", "heaters_on", "line_violations",  "max_line_loading",  "msg_id",        "flow",
      "sent_at",       "deliver_at",     "outcome"};
  return cols;
}

/// metrics.csv: one "cycle" row per control cycle followed by one "netem"
/// row per datagram sent during it. Per-device outputs trail as out:<id>.
inline std::string format_metrics_csv(const RunResult& r) {
  const auto& cols = metrics_columns();
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  for (const auto& id : r.device_ids) out += ",out:" + id;
  out += '\n';
  const std::size_t blank_devices = r.device_ids.size();
  using detail::fmt;
  for (const auto& c : r.cycles) {
    std::vector<std::string> f = {"cycle",
                                  std::to_string(c.cycle),
                                  fmt(c.time_s),
                                  fmt(c.imbalance_kw),
                                  std::to_string(c.accepted_bids),
                                  fmt(c.accepted_kw),
                                  fmt(c.uncovered_kw),
                                  fmt(c.curtailed_kw),
                                  fmt(c.price_up),
                                  fmt(c.price_down),
                                  fmt(c.target_kw),
                                  fmt(c.setpoint_kw),
                                  fmt(c.output_kw),
                                  fmt(c.scheduled_kw),
                                  fmt(c.slack_residual_kw),
                                  fmt(c.delta_f_pu),
                                  fmt(c.agc_kw),
                                  fmt(c.activation_kw),
                                  fmt(c.measured_delta_kw),
                                  std::to_string(c.heaters_on),
                                  std::to_string(c.line_violations),
                                  fmt(c.max_line_loading),
                                  "",
                                  "",
                                  "",
                                  "",
                                  ""};
    for (double v : c.device_outputs_kw) f.push_back(fmt(v));
    for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
    out += '\n';
    for (std::size_t d = c.datagram_begin; d < c.datagram_end; ++d) {
      const auto& o = r.datagrams[d];
      out += "netem," + std::to_string(c.cycle) + "," + fmt(c.time_s);
      out += std::string(cols.size() - 8, ',');
      out += "," + o.msg_id + "," + o.flow + "," + fmt(o.sent_at) + "," + (o.dropped ? "" : fmt(o.deliver_at)) + "," +
             detail::outcome_name(o);
      out += std::string(blank_devices, ',');
      out += '\n';
    }
  }
  return out;
}

/// Mean relative gap between measured DMS output and target over cycles with
/// a positive target.
inline double tracking_error(const RunResult& r) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : r.cycles) {
    if (c.target_kw > 0) {
      sum += std::abs(c.output_kw - c.target_kw) / c.target_kw;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline json summarize(const RunResult& r) {
  json j;
  j["scenario"] = r.scenario_name;
  j["seed"] = r.seed;
  j["cycles"] = r.cycles.size();
  double accepted = 0, uncovered = 0, curtailed = 0, max_df = 0, max_residual = 0;
  int bids = 0, violations = 0;
  for (const auto& c : r.cycles) {
    accepted += c.accepted_kw;
    uncovered += c.uncovered_kw;
    curtailed += c.curtailed_kw;
    bids += c.accepted_bids;
    violations += c.line_violations;
    max_df = std::max(max_df, std::abs(c.delta_f_pu));
    max_residual = std::max(max_residual, std::abs(c.slack_residual_kw));
  }
  j["accepted_bids"] = bids;
  j["accepted_kw_total"] = accepted;
  j["uncovered_kw_total"] = uncovered;
  j["curtailed_kw_total"] = curtailed;
  j["line_violation_cycles"] = violations;
  j["max_abs_slack_residual_kw"] = max_residual;

  std::size_t with_deadline = 0, delivered = 0, dropped = 0, missed = 0;
  for (const auto& o : r.datagrams) {
    if (o.dropped) {
      ++dropped;
    } else {
      ++delivered;
    }
    if (o.deadline_at) {
      ++with_deadline;
      if (o.missed_deadline()) ++missed;
    }
  }
  j["datagrams"] = r.datagrams.size();
  j["delivered"] = delivered;
  j["dropped"] = dropped;
  j["deadline_datagrams"] = with_deadline;
  j["deadline_missed"] = missed;
  j["miss_fraction"] = with_deadline ? static_cast<double>(missed) / static_cast<double>(with_deadline) : 0.0;

  if (r.has_pool && !r.response.records.empty()) {
    j["mismatch_fraction"] = aggregation::response_mismatch(r.response);
    const auto act = aggregation::activated_rounds(r.response);
    j["activated_rounds"] = act.records.size();
    j["mismatch_fraction_activated"] =
        act.records.empty() ? json(nullptr) : json(aggregation::response_mismatch(act));
    j["response_tracking_error"] = aggregation::response_tracking_error(r.response);
  } else {
    j["mismatch_fraction"] = nullptr;
    j["activated_rounds"] = 0;
    j["mismatch_fraction_activated"] = nullptr;
    j["response_tracking_error"] = nullptr;
  }
  j["tracking_error"] = r.has_dms ? json(tracking_error(r)) : json(nullptr);
  j["max_abs_delta_f_pu"] = max_df;
  j["final_delta_f_pu"] = r.cycles.empty() ? 0.0 : r.cycles.back().delta_f_pu;
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) { gateway::write_atomic(p, text); }

/// Writes metrics.csv, summary.json, scenario.json and the figure tables
/// that apply to this run into `out_dir`.
inline void export_metrics(const RunResult& r, const Scenario& s, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create '" + out_dir.string() + "': " + ec.message());
  using detail::fmt;
  write_text(out_dir / "metrics.csv", format_metrics_csv(r));
  write_text(out_dir / "summary.json", summarize(r).dump(2) + "\n");
  write_text(out_dir / "scenario.json", scenario_to_json(s).dump(2) + "\n");

  if (r.has_dms) {
    std::string t = "time_s,target_kw,setpoint_kw,output_kw\n";
    for (const auto& c : r.cycles) {
      t += fmt(c.time_s) + "," + fmt(c.target_kw) + "," + fmt(c.setpoint_kw) + "," + fmt(c.output_kw) + "\n";
    }
    write_text(out_dir / "fig3_setpoint_vs_output.csv", t);
  }
  bool any_deadline = false;
  for (const auto& o : r.datagrams) any_deadline |= o.deadline_at.has_value();
  if (any_deadline) {
    std::string t = "msg_id,sent_at,deadline_at,deliver_at,latency_s,outcome\n";
    for (const auto& o : r.datagrams) {
      if (!o.deadline_at) continue;
      t += o.msg_id + "," + fmt(o.sent_at) + "," + fmt(*o.deadline_at) + "," + (o.dropped ? "" : fmt(o.deliver_at)) +
           "," + (o.dropped ? "" : fmt(o.deliver_at - o.sent_at)) + "," + detail::outcome_name(o) + "\n";
    }
    write_text(out_dir / "fig4_deadline.csv", t);
  }
  if (r.has_pool) {
    std::string t = "cycle,time_s,activation_kw,measured_delta_kw,heaters_on,observed\n";
    for (std::size_t i = 0; i < r.response.records.size() && i < r.cycles.size(); ++i) {
      const auto& rec = r.response.records[i];
      const auto& c = r.cycles[i];
      t += std::to_string(c.cycle) + "," + fmt(c.time_s) + "," + fmt(rec.activation_kw) + "," +
           fmt(rec.measured_delta_kw) + "," + std::to_string(c.heaters_on) + "," +
           (aggregation::response_observed(rec) ? "1" : "0") + "\n";
    }
    write_text(out_dir / "fig6_activation_vs_state.csv", t);
  }
}

}  // namespace smartlab
