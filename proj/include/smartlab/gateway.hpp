#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "smartlab/error.hpp"

namespace smartlab::gateway {

// File exchange with an external process, one pair of files per round:
//
//   in_<k>.csv  + in_<k>.ready    written by the external side
//   out_<k>.csv + out_<k>.ready   written by the simulator
//
// A data file is only read after its marker exists, and markers are only
// created after the data file is complete.

inline constexpr std::string_view kInputHeader = "device_id,p_avail_kw,p_min_kw,p_max_kw,bid_price_eur_mwh,bid_qty_kw";
inline constexpr std::string_view kResultHeader = "device_id,setpoint_kw,accepted_qty_kw,clearing_price_eur_mwh,round_index";

struct InputRecord {
  std::string device_id;
  double p_avail_kw = 0.0;
  double p_min_kw = 0.0;
  double p_max_kw = 0.0;
  double bid_price_eur_mwh = 0.0;
  double bid_qty_kw = 0.0;

  bool operator==(const InputRecord&) const = default;
};

struct ResultRecord {
  std::string device_id;
  double setpoint_kw = 0.0;
  double accepted_qty_kw = 0.0;
  double clearing_price_eur_mwh = 0.0;
  int round_index = 0;

  bool operator==(const ResultRecord&) const = default;
};

namespace fs = std::filesystem;

inline fs::path input_path(const fs::path& dir, int round) { return dir / ("in_" + std::to_string(round) + ".csv"); }
inline fs::path input_marker(const fs::path& dir, int round) { return dir / ("in_" + std::to_string(round) + ".ready"); }
inline fs::path output_path(const fs::path& dir, int round) { return dir / ("out_" + std::to_string(round) + ".csv"); }
inline fs::path output_marker(const fs::path& dir, int round) { return dir / ("out_" + std::to_string(round) + ".ready"); }

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_number(std::string_view field, std::size_t line, const char* column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') {
    throw ParseError(line, std::string("non-numeric ") + column);
  }
  auto [ptr, ec] = std::from_chars(first, last, value, std::chars_format::fixed | std::chars_format::scientific);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ParseError(line, std::string("non-numeric ") + column + " '" + std::string(field) + "'");
  }
  return value;
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace detail

inline std::vector<InputRecord> parse_input_file(std::string_view bytes) {
  std::vector<std::string_view> lines = detail::split(bytes, '\n');
  if (!lines.empty() && lines.back().empty() && lines.size() > 1) lines.pop_back();
  if (lines.empty() || lines.front() != kInputHeader) {
    throw ParseError(1, "expected header '" + std::string(kInputHeader) + "'");
  }
  std::vector<InputRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = detail::split(lines[i], ',');
    if (fields.size() != 6) {
      throw ParseError(line_no, "expected 6 columns, found " + std::to_string(fields.size()));
    }
    InputRecord r;
    r.device_id = std::string(fields[0]);
    if (r.device_id.empty()) throw ParseError(line_no, "empty device_id");
    r.p_avail_kw = detail::parse_number(fields[1], line_no, "p_avail_kw");
    r.p_min_kw = detail::parse_number(fields[2], line_no, "p_min_kw");
    r.p_max_kw = detail::parse_number(fields[3], line_no, "p_max_kw");
    r.bid_price_eur_mwh = detail::parse_number(fields[4], line_no, "bid_price_eur_mwh");
    r.bid_qty_kw = detail::parse_number(fields[5], line_no, "bid_qty_kw");
    if (!(r.p_min_kw <= r.p_avail_kw && r.p_avail_kw <= r.p_max_kw)) {
      throw ParseError(line_no, "requires p_min_kw <= p_avail_kw <= p_max_kw");
    }
    if (r.bid_qty_kw < 0) throw ParseError(line_no, "bid_qty_kw must be non-negative");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string format_results(const std::vector<ResultRecord>& records) {
  std::string out(kResultHeader);
  out += '\n';
  for (const auto& r : records) {
    out += r.device_id;
    out += ',' + detail::fixed6(r.setpoint_kw);
    out += ',' + detail::fixed6(r.accepted_qty_kw);
    out += ',' + detail::fixed6(r.clearing_price_eur_mwh);
    out += ',' + std::to_string(r.round_index);
    out += '\n';
  }
  return out;
}

/// Writes `content` to `target` through a temporary sibling and a rename so
/// that readers never see a partial file.
inline void write_atomic(const fs::path& target, const std::string& content) {
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(Errc::io_error, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(Errc::io_error, "rename to " + target.string() + " failed: " + ec.message());
}

inline void write_results_file(const fs::path& dir, int round_index, const std::vector<ResultRecord>& records) {
  write_atomic(output_path(dir, round_index), format_results(records));
  write_atomic(output_marker(dir, round_index), "");
}

/// Blocks until round `round_index`'s input and marker exist, polling at
/// `poll` intervals, then parses the input. Only wall time passes here.
inline std::vector<InputRecord> wait_for_input(const fs::path& dir, int round_index, double timeout_s,
                                               std::chrono::milliseconds poll = std::chrono::milliseconds(200)) {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(timeout_s));
  const fs::path marker = input_marker(dir, round_index);
  const fs::path data = input_path(dir, round_index);
  for (;;) {
    if (fs::exists(marker)) {
      if (!fs::exists(data)) {
        throw ParseError(0, "marker " + marker.filename().string() + " present without " + data.filename().string());
      }
      return parse_input_file(read_file(data));
    }
    if (clock::now() >= deadline) {
      throw Error(Errc::timeout, "no input for round " + std::to_string(round_index) + " after " +
                                     std::to_string(timeout_s) + " s");
    }
    std::this_thread::sleep_for(poll);
  }
}

}  // namespace smartlab::gateway
