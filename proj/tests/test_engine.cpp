#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "core/engine.hpp"
#include "core/rng.hpp"

using namespace gfp;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind;
  }
  return ErrorKind::Runtime;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / "gfperc_test_engine" / leaf;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

// CSV text with the wall_ms column (always last) blanked out
std::string strip_wall(const std::string& csv) {
  std::string out;
  for (const std::string& line : split_lines(csv)) {
    const size_t pos = line.rfind(',');
    out += line.substr(0, pos);
    out += '\n';
  }
  return out;
}

json coin_estimate_cfg(const std::string& out_dir) {
  return json{{"command", "estimate"},
              {"detector", {{"name", "coin"}, {"p", 0.5}}},
              {"n", 50},
              {"seed", 9},
              {"out", out_dir}};
}

}  // namespace

TEST_CASE("config hash tracks semantics, not workers or output paths") {
  json a{{"command", "estimate"},
         {"detector", {{"name", "coin"}, {"p", 0.5}}},
         {"n", 100}};
  const std::string ha = config_hash_hex(a);
  CHECK(ha.size() == 16);
  CHECK(config_hash_hex(a) == ha);

  json b = a;
  b["workers"] = 7;
  b["out"] = "/somewhere/else";
  b["run_dir"] = "also/ignored";
  CHECK(config_hash_hex(b) == ha);

  json c = a;
  c["n"] = 101;
  CHECK(config_hash_hex(c) != ha);
  json d = a;
  d["detector"]["p"] = 0.25;
  CHECK(config_hash_hex(d) != ha);
}

TEST_CASE("run_config rejects unknown commands and bad configs") {
  CHECK(kind_of([] { run_config(json::object()); }) == ErrorKind::Config);
  CHECK(kind_of([] { run_config({{"command", "bogus"}}); }) == ErrorKind::Config);
  CHECK(kind_of([] { run_config(json::array()); }) == ErrorKind::Config);

  json summary;
  CHECK(run_config_catching({{"command", "bogus"}}, &summary) == 2);
  CHECK(summary.contains("error"));
  CHECK(summary.at("exit") == 2);
}

TEST_CASE("estimate command writes a complete, reloadable run directory") {
  const fs::path dir = fresh_dir("estimate_run");
  const json cfg = coin_estimate_cfg(dir.string());

  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("command") == "estimate");
  CHECK(summary.at("n") == 50);
  CHECK(summary.at("computed") == 50);
  CHECK(summary.at("resumed") == false);
  CHECK(summary.at("binary") == true);

  CHECK(fs::exists(dir / "config.json"));
  CHECK(fs::exists(dir / "record.json"));
  CHECK(fs::exists(dir / "values.jsonl"));
  CHECK(fs::exists(dir / "result.csv"));
  CHECK(fs::is_directory(dir / "shards"));

  const json record = load_json_file((dir / "record.json").string());
  CHECK(record.at("status") == "done");
  CHECK(record.at("command") == "estimate");
  CHECK(record.at("config_hash") == config_hash_hex(cfg));
  CHECK(record.contains("finished_at"));

  const auto lines = split_lines(read_file((dir / "values.jsonl").string()));
  REQUIRE(lines.size() == 50);
  for (size_t i = 0; i < lines.size(); ++i) {
    const json row = json::parse(lines[i]);
    CHECK(row.at("replicate") == (int64_t)i);
    CHECK(row.at("seed") == derive_seed(9, i, 0));
    const double v = row.at("value").get<double>();
    CHECK((v == 0.0 || v == 1.0));
  }

  const auto csv = split_lines(read_file((dir / "result.csv").string()));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == kEstimateCsvHeader);
  CHECK(csv[1].rfind("coin,", 0) == 0);

  // identical invocation with more workers reproduces the result bit for bit
  const fs::path dir2 = fresh_dir("estimate_run_w3");
  json cfg2 = cfg;
  cfg2["out"] = dir2.string();
  cfg2["workers"] = 3;
  json summary2;
  REQUIRE(run_config_catching(cfg2, &summary2) == 0);
  CHECK(strip_wall(read_file((dir2 / "result.csv").string())) ==
        strip_wall(read_file((dir / "result.csv").string())));
  CHECK(config_hash_hex(cfg2) == config_hash_hex(cfg));
}

TEST_CASE("resume completes a partial run and reproduces the full result") {
  const fs::path dir = fresh_dir("resume_run");
  const json cfg = coin_estimate_cfg(dir.string());

  REQUIRE(run_config_catching(cfg, nullptr) == 0);
  const std::string full_values = read_file((dir / "values.jsonl").string());
  const std::string full_csv = read_file((dir / "result.csv").string());

  // simulate an interrupted run: partial merge file with a torn final line,
  // no shards, record still "running"
  const auto lines = split_lines(full_values);
  std::string partial;
  for (size_t i = 0; i < 20; ++i) partial += lines[i] + "\n";
  partial += "{\"replicate\": 49, \"val";  // torn write
  {
    std::ofstream out(dir / "values.jsonl", std::ios::trunc);
    out << partial;
  }
  fs::remove_all(dir / "shards");
  fs::remove(dir / "result.csv");
  {
    const json cfg_stored = load_json_file((dir / "config.json").string());
    json rec{{"config_hash", config_hash_hex(cfg_stored)},
             {"command", "estimate"},
             {"n", 50},
             {"status", "running"},
             {"started_at", "2026-01-01T00:00:00Z"}};
    std::ofstream out(dir / "record.json", std::ios::trunc);
    out << rec.dump(2) << "\n";
  }

  json summary;
  REQUIRE(run_config_catching({{"command", "resume"}, {"run_dir", dir.string()}},
                              &summary) == 0);
  CHECK(summary.at("command") == "estimate");
  CHECK(summary.at("resume_of") == dir.string());
  CHECK(summary.at("resumed") == true);
  CHECK(summary.at("computed") == 30);

  CHECK(read_file((dir / "values.jsonl").string()) == full_values);
  CHECK(strip_wall(read_file((dir / "result.csv").string())) ==
        strip_wall(full_csv));

  // resuming a finished run is a no-op
  json again;
  REQUIRE(run_config_catching({{"command", "resume"}, {"run_dir", dir.string()}},
                              &again) == 0);
  CHECK(again.at("command") == "resume");
  CHECK(again.at("noop") == true);

  // editing the stored config invalidates the record
  {
    json tampered = load_json_file((dir / "config.json").string());
    tampered["n"] = 60;
    std::ofstream out(dir / "config.json", std::ios::trunc);
    out << tampered.dump(2) << "\n";
  }
  json bad;
  CHECK(run_config_catching({{"command", "resume"}, {"run_dir", dir.string()}},
                            &bad) == 2);
  CHECK(bad.contains("error"));

  CHECK(kind_of([] {
          run_config({{"command", "resume"}, {"run_dir", "/nonexistent/xyzzy"}});
        }) == ErrorKind::Config);
  CHECK(kind_of([] { run_config({{"command", "resume"}}); }) == ErrorKind::Config);
}

TEST_CASE("sweep command records the level curve and its value streams") {
  const fs::path dir = fresh_dir("sweep_run");
  const json cfg{{"command", "sweep"},
                 {"detector", {{"name", "gauss_threshold"}, {"level", 0.0}}},
                 {"levels", {-1.0, 0.0, 1.0}},
                 {"n", 400},
                 {"seed", 3},
                 {"out", dir.string()}};
  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("command") == "sweep");
  CHECK(summary.at("common_rng") == true);
  CHECK(summary.at("monotone_checked") == true);
  CHECK(summary.at("per_realization_monotone") == true);
  const auto p = summary.at("p_hat");
  REQUIRE(p.size() == 3);
  CHECK(p[0].get<double>() > p[1].get<double>());
  CHECK(p[1].get<double>() > p[2].get<double>());

  const auto csv = split_lines(read_file((dir / "result.csv").string()));
  REQUIRE(csv.size() == 4);
  CHECK(csv[0] == kEstimateCsvHeader);
  for (int l = 0; l < 3; ++l) {
    CHECK(fs::exists(dir / ("values_" + std::to_string(l) + ".jsonl")));
    const auto rows =
        split_lines(read_file((dir / ("values_" + std::to_string(l) + ".jsonl")).string()));
    CHECK(rows.size() == 400);
  }

  CHECK(kind_of([&] {
          json c = cfg;
          c["levels"] = json::array();
          run_config(c);
        }) == ErrorKind::Config);
}

TEST_CASE("bisect command reports the bracket and the refined level") {
  const json cfg{{"command", "bisect"},
                 {"detector", {{"name", "gauss_threshold"}, {"level", 0.0}}},
                 {"target", 0.5},
                 {"bracket", {-0.5, 0.5}},
                 {"tol", 0.1},
                 {"n", 200},
                 {"n_cap", 800},
                 {"seed", 5}};
  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("command") == "bisect");
  const double l_hat = summary.at("l_hat").get<double>();
  const double lo = summary.at("lo").get<double>();
  const double hi = summary.at("hi").get<double>();
  CHECK(lo <= l_hat);
  CHECK(l_hat <= hi);
  CHECK(hi - lo <= 0.1 + 1e-12);
  CHECK(std::abs(l_hat) < 0.25);
  CHECK(summary.at("iterations").get<int>() >= 1);
  CHECK(summary.at("csv").get<std::string>().find("gauss_threshold") !=
        std::string::npos);

  CHECK(kind_of([&] {
          json c = cfg;
          c["bracket"] = {2.0, 3.0};
          run_config(c);
        }) == ErrorKind::Config);
}

TEST_CASE("sample command writes field, mask and labels files") {
  const fs::path dir = fresh_dir("sample_out");
  const std::string out = (dir / "field.fgrid").string();
  const json cfg{{"command", "sample"},
                 {"sampler",
                  {{"kind", "convolution"},
                   {"box", Box::square(0, 2).to_json()},
                   {"h", 0.5},
                   {"kernel", {{"family", "bargmann_fock"}, {"dim", 2}}}}},
                 {"seed", 4},
                 {"level", 0.0},
                 {"out", out}};
  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("command") == "sample");
  CHECK(summary.at("dim") == 2);
  CHECK(summary.at("nodes") == 25);
  CHECK(summary.at("seed_used") == derive_seed(4, 0, 0));
  REQUIRE(summary.contains("components"));

  REQUIRE(fs::exists(out));
  const FieldSample f = load_fgrid(out);
  CHECK(f.grid.dim == 2);
  CHECK(f.grid.num_nodes() == 25);

  const std::string mask_path = summary.at("mask_out").get<std::string>();
  REQUIRE(fs::exists(mask_path));
  const FieldSample m = load_fgrid(mask_path);
  int ones = 0;
  for (double v : m.values) {
    CHECK((v == 0.0 || v == 1.0));
    ones += v == 1.0 ? 1 : 0;
  }
  CHECK(ones == (int)std::count_if(f.values.begin(), f.values.end(),
                                   [](double v) { return v >= 0.0; }));
  CHECK(summary.at("components").get<int64_t>() >= (ones > 0 ? 1 : 0));
  CHECK(fs::exists(summary.at("labels_out").get<std::string>()));

  CHECK(kind_of([] { run_config({{"command", "sample"}}); }) == ErrorKind::Config);
  CHECK(kind_of([&] {
          json c = cfg;
          c.erase("out");
          run_config(c);
        }) == ErrorKind::Config);
}

TEST_CASE("estimate auto-derives the sampler from the detector geometry") {
  // square crossing with only level and R given: box, kernel and padding
  // all come from the detector
  const json cfg{{"command", "estimate"},
                 {"detector", {{"name", "crossing"}, {"level", 0.0}, {"R", 10.0}}},
                 {"n", 16},
                 {"seed", 2}};
  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("n") == 16);
  const double p = summary.at("p_hat").get<double>();
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  const std::string csv = summary.at("csv").get<std::string>();
  CHECK(csv.find("crossing,") != std::string::npos);
  CHECK(csv.find(",inf,") != std::string::npos);  // untruncated kernel column

  // field-free detector resolves to the synthetic null sampler
  json coin{{"command", "estimate"},
            {"detector", {{"name", "coin"}, {"p", 0.25}}},
            {"n", 64},
            {"seed", 1}};
  json s2;
  REQUIRE(run_config_catching(coin, &s2) == 0);
  CHECK(s2.at("binary") == true);

  // truncation radius cannot be "auto" without a detector R to scale from
  json bad = coin;
  bad["detector"] = {{"name", "crossing"}, {"level", 0.0}, {"R", 8.0}};
  bad["sampler"] = {{"kind", "convolution"}, {"r", "auto"}};
  CHECK(kind_of([&] { run_config(bad); }) == ErrorKind::Config);
}

TEST_CASE("validate duality: per-realization complementarity on small grids") {
  const json cfg{{"command", "validate"}, {"suite", "duality"},
                 {"n", 25},              {"R", 4.0},
                 {"h", 0.5},             {"seed", 2}};
  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("suite") == "duality");
  CHECK(summary.at("violations") == 0);
  CHECK(summary.at("gate_pass") == true);
  const double pc = summary.at("p_cross").get<double>();
  const double pd = summary.at("p_dual_complement").get<double>();
  CHECK(pc == doctest::Approx(1.0 - pd).epsilon(1e-12));

  CHECK(kind_of([] {
          run_config({{"command", "validate"}, {"suite", "nope"}});
        }) == ErrorKind::Config);
}

TEST_CASE("renorm verify through the engine: caps hold and trace is written") {
  const fs::path dir = fresh_dir("renorm_run");
  const json cfg{{"command", "renorm"}, {"sub", "verify"},
                 {"lambda", 10000000000.0}, {"rho", 2},
                 {"sigma", 1000},       {"d", 2},
                 {"q0", "qbar"},        {"nmax", 20},
                 {"out", dir.string()}};
  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("all_ok") == true);
  CHECK(summary.at("gate_pass") == true);
  CHECK(summary.at("first_fail") == -1);
  CHECK(summary.at("trace").at("steps").size() == 21);
  CHECK(fs::exists(dir / "trace.csv"));
  const auto lines = split_lines(read_file((dir / "trace.csv").string()));
  REQUIRE(lines.size() == 22);
  CHECK(lines[0] == "n,h_ratio,u,u_over_cap,ok");
  // every data row ends with u_over_cap exactly 1 and ok
  for (size_t i = 1; i < lines.size(); ++i)
    CHECK(lines[i].substr(lines[i].size() - 6) == ",1.0,1");

  // q0 above the hypothesis cap is refused
  json bad = cfg;
  bad.erase("out");
  bad["q0"] = 1.0;  // q0bar is far below 1
  CHECK(kind_of([&] { run_config(bad); }) == ErrorKind::Config);
}

TEST_CASE("renorm simulate through the engine: no geometric counterexamples") {
  const json cfg{{"command", "renorm"}, {"sub", "simulate"},
                 {"lambda", 50},        {"rho", 2},
                 {"sigma", 1},          {"d", 2},
                 {"n", 1},              {"trials", 4},
                 {"pairs", 3},          {"p_g0", 0.9999992},
                 {"p_h", 0.95},         {"seed", 21}};
  json summary;
  REQUIRE(run_config_catching(cfg, &summary) == 0);
  CHECK(summary.at("sub") == "simulate");
  CHECK(summary.at("gate_pass") == true);
  CHECK(summary.at("counterexamples").empty());
  CHECK(summary.at("trials") == 4);
  CHECK(summary.at("g_holds").get<int64_t>() >= 1);
  CHECK(summary.at("pairs_checked").get<int64_t>() ==
        3 * summary.at("g_holds").get<int64_t>());

  // the synthetic lattice needs the geometric margin
  json bad = cfg;
  bad["lambda"] = 2;
  CHECK(kind_of([&] { run_config(bad); }) == ErrorKind::Config);
}

TEST_CASE("csv row formatting: quoting, sentinel columns, exact header") {
  CHECK(std::string(kEstimateCsvHeader) ==
        "detector,params_json,level,R,r,h,n,p_hat,ci_lo,ci_hi,seed,wall_ms");
  CHECK(csv_quote("a\"b") == "\"a\"\"b\"");
  CHECK(csv_number(json()) == "");
  CHECK(csv_number(json(true)) == "1");
  CHECK(csv_number(json(0.5)) == "0.5");

  Estimate e;
  e.p_hat = 0.5;
  e.ci_lo = 0.25;
  e.ci_hi = 0.75;
  e.n = 7;
  e.seed = 3;
  e.wall_ms = 1.5;

  // field-free detector: level/R/r/h columns all empty
  const json coin{{"name", "coin"}, {"p", 0.25}};
  const std::string row1 = estimate_csv_row(coin, json{{"kind", "null"}}, e);
  CHECK(row1.rfind("coin,\"{\"\"p\"\":0.25}\",,,,,7,", 0) == 0);

  // convolution sampler with an untruncated kernel reports r = inf
  const json det{{"name", "crossing"}, {"level", 0.25}, {"R", 10.0}};
  const json sampler{{"kind", "convolution"},
                     {"h", 0.5},
                     {"kernel", {{"family", "bargmann_fock"}, {"r", nullptr}}}};
  const std::string row2 = estimate_csv_row(det, sampler, e);
  CHECK(row2.find(",0.25,10.0,inf,0.5,7,") != std::string::npos);

  // a finite truncation radius passes through numerically
  json sampler_r = sampler;
  sampler_r["kernel"]["r"] = 6.0;
  CHECK(estimate_csv_row(det, sampler_r, e).find(",6.0,0.5,") !=
        std::string::npos);
}

TEST_CASE("load_json_file: malformed inputs are config errors") {
  const fs::path dir = fresh_dir("json_io");
  fs::create_directories(dir);
  const fs::path good = dir / "good.json";
  const fs::path bad = dir / "bad.json";
  {
    std::ofstream g(good);
    g << "{\"a\": 1}\n";
    std::ofstream b(bad);
    b << "{\"a\": \n";
  }
  CHECK(load_json_file(good.string()).at("a") == 1);
  CHECK(kind_of([&] { load_json_file(bad.string()); }) == ErrorKind::Config);
  CHECK(kind_of([&] { load_json_file((dir / "missing.json").string()); }) ==
        ErrorKind::Config);
}
