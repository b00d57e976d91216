#include "catch_amalgamated.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "smartlab/gateway.hpp"

using namespace smartlab;
using namespace smartlab::gateway;
using namespace std::chrono_literals;
using Catch::Approx;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("smartlab_gw_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_plain(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

const std::string kOneRecord = std::string(kInputHeader) + "\npv1,4000,0,5000,45.5,1000\n";

// Minimal CSV reader independent of the gateway code.
std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("parse a single record") {
  const auto recs = parse_input_file(kOneRecord);
  REQUIRE(recs.size() == 1);
  REQUIRE(recs[0].device_id == "pv1");
  REQUIRE(recs[0].p_avail_kw == 4000.0);
  REQUIRE(recs[0].p_min_kw == 0.0);
  REQUIRE(recs[0].p_max_kw == 5000.0);
  REQUIRE(recs[0].bid_price_eur_mwh == 45.5);
  REQUIRE(recs[0].bid_qty_kw == 1000.0);
}

TEST_CASE("header only is a valid empty file") {
  REQUIRE(parse_input_file(std::string(kInputHeader) + "\n").empty());
  REQUIRE(parse_input_file(kInputHeader).empty());
}

TEST_CASE("parse errors carry the line number") {
  auto line_of = [](const std::string& text) {
    try {
      parse_input_file(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  const std::string h = std::string(kInputHeader) + "\n";
  REQUIRE(line_of(h + "pv1,4000,0,5000,45,1\npv2,6000,0,5000,45,1\n") == 3);
  REQUIRE(line_of(h + "pv1,abc,0,5000,45,1\n") == 2);
  REQUIRE(line_of(h + "pv1,4000,0,5000,45\n") == 2);
  REQUIRE(line_of(h + "pv1,4000,0,5000,45,-1\n") == 2);
  REQUIRE(line_of(h + "pv1,+4000,0,5000,45,1\n") == 2);
  REQUIRE(line_of(h + "pv1,nan,0,5000,45,1\n") == 2);
  REQUIRE(line_of("wrong,header\n") == 1);
}

TEST_CASE("empty result list writes a header and a marker") {
  TempDir d;
  write_results_file(d.path, 0, {});
  REQUIRE(read_file(output_path(d.path, 0)) == std::string(kResultHeader) + "\n");
  REQUIRE(fs::exists(output_marker(d.path, 0)));
}

TEST_CASE("results file matches the golden bytes") {
  TempDir d;
  write_results_file(d.path, 7, {{"pv_lab", 3250.5, 1250.0, 42.125, 7}});
  REQUIRE(read_file(output_path(d.path, 7)) == read_file(fs::path(SMARTLAB_TEST_DATA_DIR) / "golden" / "out_7.csv"));
  REQUIRE_FALSE(fs::exists(output_path(d.path, 7).string() + ".tmp"));
}

TEST_CASE("negative zero is normalised") {
  REQUIRE(format_results({{"d", -0.0, -1e-9, 0.0, 1}}) ==
          std::string(kResultHeader) + "\nd,0.000000,0.000000,0.000000,1\n");
}

TEST_CASE("write then read round trip") {
  std::vector<ResultRecord> recs{{"a", 1234.5678901, 0.25, 51.000001, 3}, {"b", -12.0000004, 0.0, 0.0, 3}};
  const auto rows = read_csv(format_results(recs));
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    REQUIRE(rows[i + 1][0] == recs[i].device_id);
    REQUIRE(std::abs(std::strtod(rows[i + 1][1].c_str(), nullptr) - recs[i].setpoint_kw) <= 1e-6);
    REQUIRE(std::abs(std::strtod(rows[i + 1][2].c_str(), nullptr) - recs[i].accepted_qty_kw) <= 1e-6);
    REQUIRE(std::abs(std::strtod(rows[i + 1][3].c_str(), nullptr) - recs[i].clearing_price_eur_mwh) <= 1e-6);
    REQUIRE(std::stoi(rows[i + 1][4]) == recs[i].round_index);
  }
}

TEST_CASE("pre-existing files are read immediately") {
  TempDir d;
  write_plain(input_path(d.path, 2), kOneRecord);
  write_plain(input_marker(d.path, 2), "");
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE(wait_for_input(d.path, 2, 5.0).size() == 1);
  REQUIRE(std::chrono::steady_clock::now() - t0 < 1s);
}

TEST_CASE("data before marker: the reader waits for the marker") {
  TempDir d;
  std::chrono::steady_clock::time_point marker_at;
  std::thread writer([&] {
    write_plain(input_path(d.path, 1), kOneRecord);
    std::this_thread::sleep_for(300ms);
    marker_at = std::chrono::steady_clock::now();
    write_plain(input_marker(d.path, 1), "");
  });
  const auto recs = wait_for_input(d.path, 1, 10.0, 20ms);
  const auto returned = std::chrono::steady_clock::now();
  writer.join();
  REQUIRE(recs.size() == 1);
  REQUIRE(returned >= marker_at);
}

TEST_CASE("marker before data is a protocol violation") {
  TempDir d;
  std::thread writer([&] {
    write_plain(input_marker(d.path, 4), "");
    std::this_thread::sleep_for(500ms);
    write_plain(input_path(d.path, 4), kOneRecord);
  });
  std::this_thread::sleep_for(50ms);
  try {
    wait_for_input(d.path, 4, 10.0, 20ms);
    writer.join();
    FAIL("expected ParseError");
  } catch (const ParseError&) {
    writer.join();
  }
}

TEST_CASE("missing input times out") {
  TempDir d;
  try {
    wait_for_input(d.path, 9, 0.1, 20ms);
    FAIL("expected Timeout");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::timeout);
  }
}
