#include "engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "excursion.hpp"
#include "kernel.hpp"
#include "rng.hpp"

namespace gfp {

namespace sfs = std::filesystem;

namespace {

double now_ms() {
  return (double)std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
             .count() /
         1000.0;
}

std::string iso_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tmv{};
  gmtime_r(&t, &tmv);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tmv);
  return buf;
}

double jnum(const json& c, const char* key, double dflt) {
  if (!c.contains(key) || c.at(key).is_null()) return dflt;
  require_config(c.at(key).is_number(), std::string(key) + " must be a number");
  return c.at(key).get<double>();
}

int64_t jint(const json& c, const char* key, int64_t dflt) {
  if (!c.contains(key) || c.at(key).is_null()) return dflt;
  require_config(c.at(key).is_number(), std::string(key) + " must be a number");
  const double v = c.at(key).get<double>();
  require_config(std::abs(v - std::round(v)) < 1e-9,
                 std::string(key) + " must be an integer");
  return (int64_t)std::llround(v);
}

uint64_t jseed(const json& c, const char* key, uint64_t dflt) {
  if (!c.contains(key) || c.at(key).is_null()) return dflt;
  require_config(c.at(key).is_number(), std::string(key) + " must be a number");
  return c.at(key).get<uint64_t>();
}

std::string jstr(const json& c, const char* key, const std::string& dflt) {
  if (!c.contains(key) || c.at(key).is_null()) return dflt;
  require_config(c.at(key).is_string(), std::string(key) + " must be a string");
  return c.at(key).get<std::string>();
}

json detector_params(const json& det_cfg) {
  json p = det_cfg;
  p.erase("name");
  return p;
}

// ---------------------------------------------------------------------------
// sampler resolution: detectors know their geometry, so box / truncation /
// coupling defaults can be derived instead of spelled out in every config

bool field_free_detector(const std::string& name) {
  return name == "good_pair" || name == "const" || name == "coin" ||
         name == "gauss_threshold";
}

json auto_box_for(const json& det) {
  const std::string name = det.value("name", std::string());
  auto num = [&](const char* k, double dflt) {
    return det.contains(k) && det.at(k).is_number() ? det.at(k).get<double>()
                                                    : dflt;
  };
  if (name == "crossing") {
    if (det.contains("box")) return det.at("box");
    const double R = num("R", 0);
    if (R <= 0) return json();
    const double aspect = num("aspect", 1.0);
    if (det.contains("slab_height") && !det.at("slab_height").is_null()) {
      Box b;
      b.dim = 3;
      b.lo = {0, 0, 0};
      b.hi = {aspect * R, R, num("slab_height", 1.0)};
      return b.to_json();
    }
    return Box::rect(0, aspect * R, 0, R).to_json();
  }
  if (name == "annulus") {
    double cx = 0, cy = 0;
    if (det.contains("center") && det.at("center").is_array()) {
      cx = det.at("center")[0].get<double>();
      cy = det.at("center")[1].get<double>();
    }
    const double r2 = num("r_outer", 0);
    if (r2 <= 0) return json();
    return Box::rect(cx - r2, cx + r2, cy - r2, cy + r2).to_json();
  }
  if (name == "orthogonal_squares") {
    const double r = num("r", 0);
    return r > 0 ? Box::cube(3, 0, r).to_json() : json();
  }
  if (name == "contact_points") {
    const double R = num("R", 0);
    return R > 0 ? Box::rect(-3 * R, 3 * R, -3 * R, 3 * R).to_json() : json();
  }
  if (name == "uniqueness_in_slab" || name == "sprouts" ||
      name == "good_point") {
    const double R = num("R", 0);
    if (R <= 0) return json();
    const double a = num("a", 0.5);
    Box b;
    b.dim = 3;
    if (name == "good_point" &&
        det.value("variant", std::string("planar")) == "faces") {
      std::array<double, 3> c{0, 0, 0};
      if (det.contains("center") && det.at("center").is_array())
        for (int k = 0; k < 3; ++k) c[(size_t)k] = det.at("center")[(size_t)k].get<double>();
      for (int k = 0; k < 3; ++k) {
        b.lo[(size_t)k] = c[(size_t)k] - R / 2;
        b.hi[(size_t)k] = c[(size_t)k] + R / 2;
      }
      return b.to_json();
    }
    double cx = 0, cy = 0;
    if (det.contains("center") && det.at("center").is_array()) {
      cx = det.at("center")[0].get<double>();
      cy = det.at("center")[1].get<double>();
    }
    const double half = name == "sprouts" ? 2 * R : 4 * R;
    const double top = name == "sprouts" ? std::pow(R, a * a) : std::pow(R, a);
    b.lo = {cx - half, cy - half, 0};
    b.hi = {cx + half, cy + half, top};
    return b.to_json();
  }
  return json();
}

json resolve_sampler(json s, const json& det) {
  if (s.is_null()) s = json::object();
  require_config(s.is_object(), "sampler: must be an object");
  const std::string name = det.value("name", std::string());
  if (!s.contains("kind")) {
    if (field_free_detector(name)) {
      s["kind"] = "null";
      return s;
    }
    s["kind"] = "convolution";
  }
  if (s.at("kind") == "null") return s;
  if (!s.contains("box") || s.at("box").is_null()) {
    const json box = auto_box_for(det);
    require_config(!box.is_null(),
                   "sampler.box: required (cannot be derived for detector '" +
                       name + "')");
    s["box"] = box;
  }
  const int dim = (int)s.at("box").at("lo").size();
  if (s.at("kind") == "convolution" && !s.contains("kernel"))
    s["kernel"] = json{{"family", "bargmann_fock"}, {"dim", dim}};
  const bool auto_r = !s.contains("r") || (s.at("r").is_string() &&
                                           s.at("r") == json("auto"));
  if (s.at("kind") == "convolution" && auto_r) {
    const bool gamma_family = name == "uniqueness_in_slab" ||
                              name == "sprouts" || name == "good_point";
    if (gamma_family && det.contains("R")) {
      // truncation radius r = max(R^gamma, r_q)
      const double R = det.at("R").get<double>();
      const double gamma = det.value("gamma", 0.2);
      const TruncatedKernel probe(KernelSpec::from_json(s.at("kernel")), kInf);
      s["r"] = std::max(std::pow(R, gamma), probe.r_q());
    } else if (s.contains("r") && s.at("r").is_string()) {
      fail_config("sampler.r: \"auto\" needs a detector carrying R (and "
                  "optionally gamma)");
    }
  }
  if (name == "good_point" && !s.contains("coupled")) s["coupled"] = true;
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  atomic_write_file(path, text);
}

}  // namespace

json load_json_file(const std::string& path) {
  const std::string bytes = read_file(path);
  json j = json::parse(bytes, nullptr, false);
  require_config(!j.is_discarded(), path + ": malformed JSON");
  return j;
}

// ---------------------------------------------------------------------------
// config hashing (semantic content only)

std::string config_hash_hex(json cfg) {
  if (cfg.is_object()) {
    cfg.erase("workers");
    cfg.erase("out");
    cfg.erase("run_dir");
  }
  const std::string s = cfg.dump();
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV plumbing

const char* kEstimateCsvHeader =
    "detector,params_json,level,R,r,h,n,p_hat,ci_lo,ci_hi,seed,wall_ms";

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string csv_number(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  }
  return v.dump();
}

std::string estimate_csv_row(const json& det_cfg, const json& sampler_cfg,
                             const Estimate& e) {
  const std::string name = det_cfg.value("name", std::string(""));
  json r_field;
  json h_field;
  if (sampler_cfg.is_object()) {
    if (sampler_cfg.contains("h")) h_field = sampler_cfg.at("h");
    if (sampler_cfg.value("kind", std::string()) == "convolution") {
      if (sampler_cfg.contains("kernel") && sampler_cfg.at("kernel").contains("r"))
        r_field = sampler_cfg.at("kernel").at("r");
      if (r_field.is_null()) r_field = "inf";
    }
  }
  std::ostringstream os;
  os << name << ',' << csv_quote(detector_params(det_cfg).dump()) << ','
     << (det_cfg.contains("level") ? csv_number(det_cfg.at("level")) : "") << ','
     << (det_cfg.contains("R") ? csv_number(det_cfg.at("R")) : "") << ','
     << csv_number(r_field) << ',' << csv_number(h_field) << ',' << e.n << ','
     << csv_number(json(e.p_hat)) << ',' << csv_number(json(e.ci_lo)) << ','
     << csv_number(json(e.ci_hi)) << ',' << e.seed << ','
     << csv_number(json(e.wall_ms));
  return os.str();
}

// ---------------------------------------------------------------------------
// run directories

namespace {

void write_record(const std::string& dir, const std::string& chash,
                  const std::string& command, int64_t n,
                  const std::string& status, const std::string& started_at) {
  json rec{{"config_hash", chash}, {"command", command},     {"n", n},
           {"status", status},     {"started_at", started_at}};
  if (status == "done") rec["finished_at"] = iso_now();
  write_text(dir + "/record.json", rec.dump(2) + "\n");
}

// Creates or re-opens a run directory; rejects a directory created for a
// different config (hash over the semantic fields).
std::string open_run_dir(const std::string& dir, const json& cfg,
                         std::string* started_at) {
  sfs::create_directories(dir);
  const std::string chash = config_hash_hex(cfg);
  const std::string cfg_path = dir + "/config.json";
  if (sfs::exists(cfg_path)) {
    const json existing = load_json_file(cfg_path);
    require_config(config_hash_hex(existing) == chash,
                   dir + "/config.json: run dir holds a different config "
                         "(hash mismatch)");
  } else {
    write_text(cfg_path, cfg.dump(2) + "\n");
  }
  *started_at = iso_now();
  const std::string rec_path = dir + "/record.json";
  if (sfs::exists(rec_path)) {
    const json rec = load_json_file(rec_path);
    require_config(rec.value("config_hash", std::string()) == chash,
                   dir + "/record.json: hash mismatch");
    if (rec.contains("started_at")) *started_at = rec["started_at"];
  }
  return chash;
}

struct DirRun {
  Estimate est;
  int64_t computed = 0;  // replicates evaluated in this invocation
  bool resumed = false;  // pre-existing replicates were found
};

// Replicate loop with per-worker shard streaming; completes any replicates
// missing from values.jsonl / shards and reduces in fixed replicate order.
DirRun run_estimate_dir(const std::string& dir, const Detector& det,
                        const SamplerConfig& sampler, int64_t n,
                        uint64_t master, int workers_req) {
  sfs::create_directories(dir + "/shards");

  std::vector<char> have((size_t)n, 0);
  std::vector<double> vals((size_t)n, 0.0);
  std::vector<uint64_t> seeds((size_t)n, 0);
  int64_t found = 0;
  auto ingest = [&](const sfs::path& p) {
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json row = json::parse(line, nullptr, false);
      if (row.is_discarded() || !row.is_object()) continue;  // torn write
      if (!row.contains("replicate") || !row.contains("value")) continue;
      const int64_t i = row["replicate"].get<int64_t>();
      if (i < 0 || i >= n) continue;
      if (!have[(size_t)i]) {
        have[(size_t)i] = 1;
        ++found;
      }
      vals[(size_t)i] = row["value"].get<double>();
      seeds[(size_t)i] = row.value("seed", (uint64_t)0);
    }
  };
  if (sfs::exists(dir + "/values.jsonl")) ingest(dir + "/values.jsonl");
  std::vector<sfs::path> shard_paths;
  for (const auto& e : sfs::directory_iterator(dir + "/shards"))
    if (e.path().extension() == ".jsonl") shard_paths.push_back(e.path());
  std::sort(shard_paths.begin(), shard_paths.end());
  for (const auto& p : shard_paths) ingest(p);

  std::vector<int64_t> missing;
  for (int64_t i = 0; i < n; ++i)
    if (!have[(size_t)i]) missing.push_back(i);

  const double t0 = now_ms();
  if (!missing.empty()) {
    int workers = resolve_workers(workers_req);
    const char* benv = std::getenv("GFPERC_MEM_BUDGET_BYTES");
    const int64_t budget = benv ? std::atoll(benv) : ((int64_t)8 << 30);
    const int64_t bytes = std::max<int64_t>(1, sampler.approx_bytes_per_sample());
    workers = (int)std::min<int64_t>(
        workers, std::max<int64_t>(1, budget / std::max<int64_t>(1, bytes)));
    workers = (int)std::min<int64_t>(workers, (int64_t)missing.size());

    std::atomic<int64_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve((size_t)workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        std::ofstream shard(dir + "/shards/worker_" + std::to_string(w) + ".jsonl",
                            std::ios::app);
        try {
          for (;;) {
            const int64_t t = next.fetch_add(1);
            if (t >= (int64_t)missing.size() || abort.load()) return;
            const int64_t i = missing[(size_t)t];
            const FieldSample f = sampler.sample(master, i);
            const double v = det.evaluate(f);
            vals[(size_t)i] = v;
            seeds[(size_t)i] = f.seed;
            const json row{{"replicate", i}, {"seed", f.seed}, {"value", v}};
            shard << row.dump() << '\n';
            shard.flush();  // line-granular durability for kill/resume
          }
        } catch (...) {
          {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!err) err = std::current_exception();
          }
          abort.store(true);
        }
      });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }
  const double wall = now_ms() - t0;

  std::string merged;
  for (int64_t i = 0; i < n; ++i) {
    const json row{{"replicate", i}, {"seed", seeds[(size_t)i]},
                   {"value", vals[(size_t)i]}};
    merged += row.dump();
    merged += '\n';
  }
  write_text(dir + "/values.jsonl", merged);

  DirRun out;
  out.est = reduce_values(std::move(vals), master, wall);
  out.computed = (int64_t)missing.size();
  out.resumed = found > 0;
  return out;
}

// ---------------------------------------------------------------------------
// commands

json cmd_sample(const json& cfg) {
  require_config(cfg.contains("sampler"), "sample.sampler: missing");
  json sj = cfg.at("sampler");
  require_config(sj.is_object(), "sampler: must be an object");
  // same defaults as the detector-driven path: convolution + BF kernel
  if (!sj.contains("kind")) sj["kind"] = "convolution";
  if (sj.at("kind") == "convolution" && !sj.contains("kernel") &&
      sj.contains("box") && sj.at("box").is_object() &&
      sj.at("box").contains("lo") && sj.at("box").at("lo").is_array())
    sj["kernel"] = json{{"family", "bargmann_fock"},
                        {"dim", (int)sj.at("box").at("lo").size()}};
  const SamplerConfig sampler = SamplerConfig::parse(sj);
  require_config(sampler.kind != "null", "sample.sampler: nothing to write for the null sampler");
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int64_t replicate = jint(cfg, "replicate", 0);
  const std::string out = jstr(cfg, "out", "");
  require_config(!out.empty(), "sample.out: output path required");

  const FieldSample f = sampler.sample(seed, replicate);
  if (const auto dir = sfs::path(out).parent_path(); !dir.empty())
    sfs::create_directories(dir);
  save_fgrid(out, f);

  json summary{{"command", "sample"}, {"out", out},
               {"dim", f.grid.dim},   {"nodes", f.grid.num_nodes()},
               {"seed", seed},        {"seed_used", f.seed},
               {"coupled", f.has_coupled()}};

  if (cfg.contains("level") && !cfg.at("level").is_null()) {
    const double level = jnum(cfg, "level", 0.0);
    const bool complement = cfg.value("complement", false);
    const std::string cs =
        jstr(cfg, "connectivity", complement ? "face_diagonal" : "face");
    Connectivity conn = Connectivity::FaceOnly;
    if (cs == "face_diagonal") conn = Connectivity::FaceAndDiagonal;
    else require_config(cs == "face", "sample.connectivity: face or face_diagonal");

    std::string base = out;
    if (base.size() > 6 && base.substr(base.size() - 6) == ".fgrid")
      base = base.substr(0, base.size() - 6);
    const std::string mask_out = jstr(cfg, "mask_out", base + ".mask.fgrid");
    const std::string labels_out = jstr(cfg, "labels_out", base + ".labels.fgrid");

    const ExcursionMask mask = threshold(f, level, conn, complement);
    const ComponentLabeling lab = label_components(mask);

    FieldSample m;
    m.grid = f.grid;
    m.seed = f.seed;
    m.provenance = f.provenance;
    m.values.resize(mask.in.size());
    for (size_t i = 0; i < mask.in.size(); ++i)
      m.values[i] = mask.in[i] ? 1.0 : 0.0;
    save_fgrid(mask_out, m, level);

    json extra{{"level", level}, {"seed", f.seed}};
    if (f.provenance.contains("kernel")) extra["kernel"] = f.provenance["kernel"];
    save_labels_fgrid(labels_out, f.grid, lab.labels, extra);

    summary["level"] = level;
    summary["components"] = lab.stats.size();
    summary["mask_out"] = mask_out;
    summary["labels_out"] = labels_out;
  }
  return summary;
}

json cmd_estimate(const json& cfg) {
  require_config(cfg.contains("detector"), "estimate.detector: missing");
  const json det_cfg = cfg.at("detector");
  const auto det = make_detector(det_cfg);
  const SamplerConfig sampler =
      SamplerConfig::parse(resolve_sampler(cfg.value("sampler", json()), det_cfg));
  const int64_t n = jint(cfg, "n", 1000);
  require_config(n >= 1, "estimate.n: must be >= 1");
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);
  const std::string dir = jstr(cfg, "out", "");

  Estimate est;
  int64_t computed = n;
  bool resumed = false;
  std::string chash;
  if (!dir.empty()) {
    std::string started_at;
    chash = open_run_dir(dir, cfg, &started_at);
    write_record(dir, chash, "estimate", n, "running", started_at);
    DirRun rr = run_estimate_dir(dir, *det, sampler, n, seed, workers);
    est = std::move(rr.est);
    computed = rr.computed;
    resumed = rr.resumed;
  } else {
    est = run_mc(*det, sampler, n, seed, workers);
  }

  const std::string csv = std::string(kEstimateCsvHeader) + "\n" +
                          estimate_csv_row(det->describe(), sampler.cfg, est) +
                          "\n";
  if (!dir.empty()) {
    write_text(dir + "/result.csv", csv);
    write_record(dir, chash, "estimate", n, "done", iso_now());
  }

  json summary{{"command", "estimate"},
               {"detector", det->describe()},
               {"n", est.n},
               {"p_hat", est.p_hat},
               {"ci_lo", est.ci_lo},
               {"ci_hi", est.ci_hi},
               {"binary", est.binary},
               {"seed", seed},
               {"wall_ms", est.wall_ms},
               {"computed", computed},
               {"resumed", resumed},
               {"csv", csv}};
  if (!dir.empty()) summary["out"] = dir;
  return summary;
}

json cmd_sweep(const json& cfg) {
  require_config(cfg.contains("detector"), "sweep.detector: missing");
  const json det_cfg = cfg.at("detector");
  const SamplerConfig sampler =
      SamplerConfig::parse(resolve_sampler(cfg.value("sampler", json()), det_cfg));
  require_config(cfg.contains("levels") && cfg.at("levels").is_array() &&
                     !cfg.at("levels").empty(),
                 "sweep.levels: nonempty array required");
  std::vector<double> levels;
  for (const auto& l : cfg.at("levels")) {
    require_config(l.is_number(), "sweep.levels: entries must be numbers");
    levels.push_back(l.get<double>());
  }
  const int64_t n = jint(cfg, "n", 1000);
  require_config(n >= 1, "sweep.n: must be >= 1");
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);
  const bool common_rng = cfg.value("common_rng", true);
  const std::string dir = jstr(cfg, "out", "");

  std::string chash, started_at;
  if (!dir.empty()) {
    chash = open_run_dir(dir, cfg, &started_at);
    write_record(dir, chash, "sweep", n, "running", started_at);
  }

  const LevelCurve curve =
      sweep_levels(det_cfg, sampler, levels, n, seed, workers, common_rng);

  std::string csv = std::string(kEstimateCsvHeader) + "\n";
  json p_hats = json::array();
  for (size_t l = 0; l < curve.levels.size(); ++l) {
    json at_level = det_cfg;
    at_level["level"] = curve.levels[l];
    const auto det = make_detector(at_level);
    csv += estimate_csv_row(det->describe(), sampler.cfg, curve.estimates[l]);
    csv += '\n';
    p_hats.push_back(curve.estimates[l].p_hat);
  }

  if (!dir.empty()) {
    write_text(dir + "/result.csv", csv);
    for (size_t l = 0; l < curve.levels.size(); ++l) {
      std::string lines;
      const Estimate& e = curve.estimates[l];
      for (int64_t i = 0; i < e.n; ++i) {
        const json row{{"replicate", i},
                       {"seed", derive_seed(e.seed, (uint64_t)i, 0)},
                       {"value", e.values[(size_t)i]}};
        lines += row.dump();
        lines += '\n';
      }
      write_text(dir + "/values_" + std::to_string(l) + ".jsonl", lines);
    }
    write_record(dir, chash, "sweep", n, "done", started_at);
  }

  json summary{{"command", "sweep"},
               {"levels", curve.levels},
               {"p_hat", p_hats},
               {"n", n},
               {"seed", seed},
               {"common_rng", curve.common_rng},
               {"monotone_checked", curve.monotone_checked},
               {"per_realization_monotone", curve.per_realization_monotone},
               {"csv", csv}};
  if (!dir.empty()) summary["out"] = dir;
  return summary;
}

json cmd_bisect(const json& cfg) {
  require_config(cfg.contains("detector"), "bisect.detector: missing");
  const json det_cfg = cfg.at("detector");
  const SamplerConfig sampler =
      SamplerConfig::parse(resolve_sampler(cfg.value("sampler", json()), det_cfg));
  const double target = jnum(cfg, "target", 0.5);
  require_config(target > 0 && target < 1, "bisect.target: must be in (0,1)");
  double lo = -0.5, hi = 0.5;
  if (cfg.contains("bracket")) {
    const auto& b = cfg.at("bracket");
    require_config(b.is_array() && b.size() == 2 && b[0].is_number() &&
                       b[1].is_number(),
                   "bisect.bracket: [lo, hi] numbers required");
    lo = b[0].get<double>();
    hi = b[1].get<double>();
  }
  const double tol = jnum(cfg, "tol", 0.02);
  require_config(tol > 0, "bisect.tol: must be positive");
  const int64_t n0 = jint(cfg, "n", 1000);
  require_config(n0 >= 1, "bisect.n: must be >= 1");
  const int64_t n_cap = jint(cfg, "n_cap", 1 << 20);
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);
  const std::string dir = jstr(cfg, "out", "");

  std::string chash, started_at;
  if (!dir.empty()) {
    chash = open_run_dir(dir, cfg, &started_at);
    write_record(dir, chash, "bisect", n0, "running", started_at);
  }

  const BisectionResult res = bisect_level(det_cfg, sampler, target, lo, hi,
                                           tol, n0, seed, workers, n_cap);

  std::string csv = std::string(kEstimateCsvHeader) + "\n";
  for (const auto& [level, est] : res.steps) {
    json at_level = det_cfg;
    at_level["level"] = level;
    const auto det = make_detector(at_level);
    csv += estimate_csv_row(det->describe(), sampler.cfg, est);
    csv += '\n';
  }

  if (!dir.empty()) {
    write_text(dir + "/result.csv", csv);
    write_record(dir, chash, "bisect", n0, "done", started_at);
  }

  json summary{{"command", "bisect"}, {"l_hat", res.l_hat},
               {"lo", res.lo},        {"hi", res.hi},
               {"target", res.target}, {"iterations", res.iterations},
               {"n_final", res.n_final}, {"seed", seed},
               {"csv", csv}};
  if (!dir.empty()) summary["out"] = dir;
  return summary;
}

// ---------------------------------------------------------------------------
// validate suites

json default_bf_sampler(const Box& box, double h, const json& r) {
  json s{{"kind", "convolution"},
         {"kernel", {{"family", "bargmann_fock"}, {"dim", box.dim}}},
         {"box", box.to_json()},
         {"h", h}};
  s["r"] = r;
  return s;
}

// mean of f(a)f(b) over replicates
struct CovProduct final : Detector {
  std::array<double, 2> a_, b_;
  json canon_;
  CovProduct(std::array<double, 2> a, std::array<double, 2> b) : a_(a), b_(b) {
    canon_ = {{"name", "cov_product"}, {"a", json::array({a[0], a[1]})},
              {"b", json::array({b[0], b[1]})}};
  }
  double evaluate(const FieldSample& f) const override {
    const GridGeometry& g = f.grid;
    const int64_t ia = g.index_of(0, a_[0]), ja = g.index_of(1, a_[1]);
    const int64_t ib = g.index_of(0, b_[0]), jb = g.index_of(1, b_[1]);
    return f.values[(size_t)g.lin(ia, ja)] * f.values[(size_t)g.lin(ib, jb)];
  }
  bool binary() const override { return false; }
  json describe() const override { return canon_; }
};

json validate_covariance(const json& cfg) {
  const int64_t n = jint(cfg, "n", 2000);
  const double h = jnum(cfg, "h", 0.25);
  const double r = jnum(cfg, "r", 8.0);
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);
  const std::vector<double> lags{0.0, 0.5, 1.0, 2.0};

  const SamplerConfig sampler =
      SamplerConfig::parse(default_bf_sampler(Box::square(0, 3), h, json(r)));
  std::vector<CovProduct> dets;
  dets.reserve(lags.size());
  for (double lag : lags)
    dets.emplace_back(std::array<double, 2>{0.5, 0.5},
                      std::array<double, 2>{0.5 + lag, 0.5});
  std::vector<const Detector*> ptrs;
  for (const auto& d : dets) ptrs.push_back(&d);
  const auto ests = run_mc_multi(ptrs, sampler, n, seed, workers);

  std::string csv = "lag,empirical,exact,se,tol,pass\n";
  bool pass = true;
  json rows = json::array();
  for (size_t k = 0; k < lags.size(); ++k) {
    const double exact = std::exp(-0.5 * lags[k] * lags[k]);
    const double se = (ests[k].ci_hi - ests[k].ci_lo) / (2 * kZ95);
    const double tol = 3 * se + 0.02;
    const bool ok = std::abs(ests[k].p_hat - exact) <= tol;
    pass = pass && ok;
    csv += csv_number(json(lags[k])) + "," + csv_number(json(ests[k].p_hat)) +
           "," + csv_number(json(exact)) + "," + csv_number(json(se)) + "," +
           csv_number(json(tol)) + "," + (ok ? "1" : "0") + "\n";
    rows.push_back({{"lag", lags[k]},
                    {"empirical", ests[k].p_hat},
                    {"exact", exact},
                    {"se", se},
                    {"tol", tol},
                    {"pass", ok}});
  }
  return json{{"suite", "covariance"}, {"rows", rows},
              {"n", n},                {"csv", csv},
              {"gate_pass", pass}};
}

json validate_duality(const json& cfg) {
  const int64_t n = jint(cfg, "n", 500);
  const double R = jnum(cfg, "R", 10.0);
  const double h = jnum(cfg, "h", 0.25);
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);

  const SamplerConfig sampler = SamplerConfig::parse(
      default_bf_sampler(Box::square(0, R), h, json(std::max(8.0, R))));
  const json a_cfg{{"name", "crossing"}, {"level", 0.0}, {"R", R}};
  const json b_cfg{{"name", "crossing"}, {"level", 0.0}, {"R", R},
                   {"from", "bottom"},   {"to", "top"},  {"complement", true}};
  const auto a = make_detector(a_cfg);
  const auto b = make_detector(b_cfg);
  const auto ests = run_mc_multi({a.get(), b.get()}, sampler, n, seed, workers);

  int64_t violations = 0;
  for (int64_t i = 0; i < n; ++i)
    if (ests[0].values[(size_t)i] + ests[1].values[(size_t)i] != 1.0)
      ++violations;
  const bool pass = violations == 0;

  std::string csv = std::string(kEstimateCsvHeader) + "\n" +
                    estimate_csv_row(a->describe(), sampler.cfg, ests[0]) +
                    "\n" +
                    estimate_csv_row(b->describe(), sampler.cfg, ests[1]) +
                    "\n";
  return json{{"suite", "duality"},
              {"n", n},
              {"violations", violations},
              {"p_cross", ests[0].p_hat},
              {"p_dual_complement", ests[1].p_hat},
              {"csv", csv},
              {"gate_pass", pass}};
}

json validate_fkg(const json& cfg) {
  const int64_t n = jint(cfg, "n", 1500);
  const double h = jnum(cfg, "h", 0.25);
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);
  const double R = jnum(cfg, "R", 8.0);

  struct Pair {
    const char* tag;
    json a, b, sampler;
  };
  const json box_a{{"lo", {0.0, 0.0}}, {"hi", {2 * R, 0.75 * R}}};
  const json box_b{{"lo", {0.0, 1.25 * R}}, {"hi", {2 * R, 2 * R}}};
  const json over_a{{"lo", {0.0, 0.0}}, {"hi", {R, R}}};
  const json over_b{{"lo", {0.5 * R, 0.0}}, {"hi", {1.5 * R, R}}};
  std::vector<Pair> pairs;
  pairs.push_back({"disjoint_parallel",
                   {{"name", "crossing"}, {"level", 0.0}, {"box", box_a}},
                   {{"name", "crossing"}, {"level", 0.0}, {"box", box_b}},
                   default_bf_sampler(Box::square(0, 2 * R), h, json(8.0))});
  pairs.push_back({"identical",
                   {{"name", "crossing"}, {"level", 0.0}, {"R", R}},
                   {{"name", "crossing"}, {"level", 0.0}, {"R", R}},
                   default_bf_sampler(Box::square(0, R), h, json(8.0))});
  pairs.push_back({"crossing_circuit",
                   {{"name", "crossing"}, {"level", 0.0}, {"R", R}},
                   {{"name", "annulus"},
                    {"mode", "circuit"},
                    {"level", 0.0},
                    {"center", {R / 2, R / 2}},
                    {"r_inner", R / 4},
                    {"r_outer", R / 2}},
                   default_bf_sampler(Box::square(0, R), h, json(8.0))});
  pairs.push_back({"horizontal_vertical",
                   {{"name", "crossing"}, {"level", 0.0}, {"R", R}},
                   {{"name", "crossing"},
                    {"level", 0.0},
                    {"R", R},
                    {"from", "bottom"},
                    {"to", "top"}},
                   default_bf_sampler(Box::square(0, R), h, json(8.0))});
  pairs.push_back({"overlapping",
                   {{"name", "crossing"}, {"level", 0.0}, {"box", over_a}},
                   {{"name", "crossing"}, {"level", 0.0}, {"box", over_b}},
                   default_bf_sampler(Box::rect(0, 1.5 * R, 0, R), h, json(8.0))});

  std::string csv = "pair,cov,se,ci_lo,ci_hi,p_a,p_b,n,pass\n";
  json rows = json::array();
  bool pass = true;
  int pair_index = 0;
  for (const auto& p : pairs) {
    const SamplerConfig sampler = SamplerConfig::parse(p.sampler);
    const FkgResult r = fkg_check(p.a, p.b, sampler, n,
                                  derive_seed(seed, (uint64_t)pair_index, 7),
                                  workers);
    pass = pass && r.pass;
    csv += std::string(p.tag) + "," + csv_number(json(r.cov)) + "," +
           csv_number(json(r.se)) + "," + csv_number(json(r.ci_lo)) + "," +
           csv_number(json(r.ci_hi)) + "," + csv_number(json(r.p_a)) + "," +
           csv_number(json(r.p_b)) + "," + std::to_string(r.n) + "," +
           (r.pass ? "1" : "0") + "\n";
    rows.push_back({{"pair", p.tag}, {"cov", r.cov}, {"se", r.se},
                    {"p_a", r.p_a},  {"p_b", r.p_b}, {"pass", r.pass}});
    ++pair_index;
  }

  // far-separated boxes under a short truncation radius: supports disjoint,
  // so the true covariance is exactly 0
  {
    const json far_a{{"lo", {0.0, 0.0}}, {"hi", {R, R}}};
    const json far_b{{"lo", {R + 12.0, 0.0}}, {"hi", {2 * R + 12.0, R}}};
    const SamplerConfig sampler = SamplerConfig::parse(default_bf_sampler(
        Box::rect(0, 2 * R + 12.0, 0, R), h, json(4.0)));
    const FkgResult r = fkg_check(
        json{{"name", "crossing"}, {"level", 0.0}, {"box", far_a}},
        json{{"name", "crossing"}, {"level", 0.0}, {"box", far_b}}, sampler, n,
        derive_seed(seed, 99, 7), workers);
    const bool ok = std::abs(r.cov) <= 3 * r.se;
    pass = pass && ok;
    csv += std::string("far_separated,") + csv_number(json(r.cov)) + "," +
           csv_number(json(r.se)) + "," + csv_number(json(r.ci_lo)) + "," +
           csv_number(json(r.ci_hi)) + "," + csv_number(json(r.p_a)) + "," +
           csv_number(json(r.p_b)) + "," + std::to_string(r.n) + "," +
           (ok ? "1" : "0") + "\n";
    rows.push_back({{"pair", "far_separated"}, {"cov", r.cov},
                    {"se", r.se},              {"pass", ok}});
  }

  return json{{"suite", "fkg"}, {"rows", rows}, {"n", n},
              {"csv", csv},     {"gate_pass", pass}};
}

json validate_truncation(const json& cfg) {
  const int64_t n = jint(cfg, "n", 200);
  const double h = jnum(cfg, "h", 0.25);
  const double box_radius = jnum(cfg, "box_radius", 8.0);
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);

  KernelSpec spec;
  spec.family = KernelFamily::BargmannFock;
  spec.dim = 2;

  const std::vector<double> radii{4.0, 6.0, 8.0};
  auto rows = truncation_check(spec, box_radius, radii, h, n, seed, workers);
  // r beyond twice the grid diameter: coupling makes the sup-norm exactly 0
  const double diam = std::hypot(2 * box_radius, 2 * box_radius);
  const double r_zero = std::ceil(2 * diam + 1);
  auto zero_rows = truncation_check(spec, box_radius, {r_zero}, h,
                                    std::min<int64_t>(n, 20), seed, workers);
  rows.push_back(zero_rows[0]);

  std::string csv = "r,median,q95,sigma_r,threshold,exceed,exact_zero\n";
  json jrows = json::array();
  bool pass = true;
  for (size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    csv += csv_number(json(r.r)) + "," + csv_number(json(r.median)) + "," +
           csv_number(json(r.q95)) + "," + csv_number(json(r.sigma_r)) + "," +
           csv_number(json(r.threshold)) + "," + csv_number(json(r.exceed)) +
           "," + (r.exact_zero ? "1" : "0") + "\n";
    jrows.push_back({{"r", r.r},
                     {"median", r.median},
                     {"q95", r.q95},
                     {"sigma_r", r.sigma_r},
                     {"threshold", r.threshold},
                     {"exceed", r.exceed},
                     {"exact_zero", r.exact_zero}});
  }
  for (size_t k = 1; k < radii.size(); ++k)
    pass = pass && rows[k].median < rows[k - 1].median;
  pass = pass && rows.back().exact_zero;
  for (size_t k = 0; k < radii.size(); ++k) pass = pass && rows[k].exceed <= 0.05;

  return json{{"suite", "truncation"}, {"rows", jrows}, {"n", n},
              {"csv", csv},            {"gate_pass", pass}};
}

json validate_sprinkling(const json& cfg) {
  const int64_t n = jint(cfg, "n", 1500);
  const double h = jnum(cfg, "h", 0.25);
  const double t = jnum(cfg, "t", 0.05);
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);

  auto run_at = [&](double R, double tt) {
    const SamplerConfig sampler = SamplerConfig::parse(
        default_bf_sampler(Box::square(0, R), h, json(8.0)));
    const json det{{"name", "crossing"}, {"level", 0.0}, {"R", R}};
    return sprinkling_check(det, sampler, tt, n, seed, workers);
  };

  const SprinklingResult zero = run_at(10.0, 0.0);
  const SprinklingResult s10 = run_at(10.0, t);
  const SprinklingResult s20 = run_at(20.0, t);
  const SprinklingResult sat = run_at(10.0, 10.0);

  const double c10 = s10.diff / (t * 10.0);
  const double c20 = s20.diff / (t * 20.0);
  // the R=10 difference against the bound with C fitted at R=20
  const double bound10 = c20 * t * 10.0 + 3 * s10.diff_se;

  bool pass = zero.diff == 0.0;
  pass = pass && s10.diff <= bound10;
  pass = pass && sat.diff >= 0.0 && sat.diff <= 1.0;

  std::string csv = "R,t,p_base,p_shift,diff,diff_se,fitted_C,bound,pass\n";
  auto row = [&](double R, const SprinklingResult& s, double fitted,
                 double bound, bool ok) {
    csv += csv_number(json(R)) + "," + csv_number(json(s.t)) + "," +
           csv_number(json(s.p_base)) + "," + csv_number(json(s.p_shift)) +
           "," + csv_number(json(s.diff)) + "," + csv_number(json(s.diff_se)) +
           "," + csv_number(json(fitted)) + "," + csv_number(json(bound)) +
           "," + (ok ? "1" : "0") + "\n";
  };
  row(10, zero, 0.0, 0.0, zero.diff == 0.0);
  row(10, s10, c10, bound10, s10.diff <= bound10);
  row(20, s20, c20, c20 * t * 20.0 + 3 * s20.diff_se, true);
  row(10, sat, sat.diff / (10.0 * 10.0), 1.0, sat.diff <= 1.0);

  return json{{"suite", "sprinkling"},
              {"t", t},
              {"diff_t0", zero.diff},
              {"diff_R10", s10.diff},
              {"diff_R20", s20.diff},
              {"fitted_C_R10", c10},
              {"fitted_C_R20", c20},
              {"n", n},
              {"csv", csv},
              {"gate_pass", pass}};
}

json validate_kacrice(const json& cfg) {
  const int64_t n = jint(cfg, "n", 400);
  const uint64_t seed = jseed(cfg, "seed", 1);
  const int workers = (int)jint(cfg, "workers", 0);

  KernelSpec spec;
  spec.family = KernelFamily::BargmannFock;
  spec.dim = 2;

  const KacRiceResult main = kac_rice_check(spec, kInf, 0.0, n, seed, workers);
  const KacRiceResult low =
      kac_rice_check(spec, kInf, -1e9, std::min<int64_t>(n, 50), seed, workers);
  const KacRiceResult high =
      kac_rice_check(spec, kInf, 1e9, std::min<int64_t>(n, 50), seed, workers);

  const bool pass = main.pass && low.mc_mean == 1.0 && high.mc_mean == 0.0;

  std::string csv = "level,mc_mean,mc_se,bound,n,pass\n";
  auto row = [&](double level, const KacRiceResult& r, bool ok) {
    csv += csv_number(json(level)) + "," + csv_number(json(r.mc_mean)) + "," +
           csv_number(json(r.mc_se)) + "," + csv_number(json(r.bound)) + "," +
           std::to_string(r.n) + "," + (ok ? "1" : "0") + "\n";
  };
  row(0.0, main, main.pass);
  row(-1e9, low, low.mc_mean == 1.0);
  row(1e9, high, high.mc_mean == 0.0);

  return json{{"suite", "kacrice"},
              {"mc_mean", main.mc_mean},
              {"mc_se", main.mc_se},
              {"bound", main.bound},
              {"n", n},
              {"csv", csv},
              {"gate_pass", pass}};
}

json cmd_validate(const json& cfg) {
  const std::string suite = jstr(cfg, "suite", "");
  json summary;
  if (suite == "covariance") summary = validate_covariance(cfg);
  else if (suite == "fkg") summary = validate_fkg(cfg);
  else if (suite == "truncation") summary = validate_truncation(cfg);
  else if (suite == "sprinkling") summary = validate_sprinkling(cfg);
  else if (suite == "kacrice") summary = validate_kacrice(cfg);
  else if (suite == "duality") summary = validate_duality(cfg);
  else
    fail_config("validate.suite: expected one of covariance, fkg, truncation, "
                "sprinkling, kacrice, duality");
  summary["command"] = "validate";

  const std::string dir = jstr(cfg, "out", "");
  if (!dir.empty()) {
    std::string started_at;
    const std::string chash = open_run_dir(dir, cfg, &started_at);
    write_text(dir + "/" + suite + ".csv", summary.value("csv", std::string()));
    write_record(dir, chash, "validate", jint(cfg, "n", 0), "done", started_at);
    summary["out"] = dir;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// renorm commands

RenormScheme scheme_from(const json& cfg) {
  RenormScheme s;
  s.lambda = jint(cfg, "lambda", 2);
  s.rho = jint(cfg, "rho", 1);
  s.sigma = jint(cfg, "sigma", 1);
  s.d = (int)jint(cfg, "d", 2);
  s.validate();
  return s;
}

json cmd_renorm(const json& cfg) {
  const std::string sub = jstr(cfg, "sub", "verify");
  const RenormScheme s = scheme_from(cfg);
  const std::string dir = jstr(cfg, "out", "");

  if (sub == "verify") {
    const int nmax = (int)jint(cfg, "nmax", 20);
    const double q0bar =
        1.0 / (4.0 * std::pow(3.0 * (double)s.rho * (double)s.lambda, 2 * s.d));
    double q0_ratio = 1.0;
    if (cfg.contains("q0") && cfg.at("q0").is_string()) {
      require_config(cfg.at("q0").get<std::string>() == "qbar",
                     "renorm.q0: number or the string \"qbar\"");
    } else if (cfg.contains("q0") && !cfg.at("q0").is_null()) {
      q0_ratio = jnum(cfg, "q0", q0bar) / q0bar;
    }
    HBoundSpec hb;
    const std::string hmode = jstr(cfg, "hmode", "cap");
    if (hmode == "cap") hb.mode = HMode::Cap;
    else if (hmode == "eps") {
      hb.mode = HMode::Eps;
      hb.R = jnum(cfg, "R", 0.0);
      require_config(hb.R > 0, "renorm.R: eps mode needs R > 0");
    } else {
      fail_config("renorm.hmode: cap or eps");
    }

    const RecursionTrace tr = verify_recursion(s, q0_ratio, hb, nmax);

    std::string csv = "n,h_ratio,u,u_over_cap,ok\n";
    for (const auto& st : tr.steps)
      csv += std::to_string(st.n) + "," + csv_number(json(st.h_ratio)) + "," +
             csv_number(json(st.u)) + "," + csv_number(json(st.u_over_cap)) +
             "," + (st.ok ? "1" : "0") + "\n";

    json summary{{"command", "renorm"}, {"sub", "verify"},
                 {"q0bar", q0bar},      {"all_ok", tr.all_ok},
                 {"first_fail", tr.first_fail},
                 {"trace", tr.to_json()},
                 {"csv", csv},
                 {"gate_pass", tr.all_ok}};
    if (hb.mode == HMode::Eps && cfg.contains("gamma") && cfg.contains("beta")) {
      const EpsBounds eb =
          make_h_bounds(hb.R, jnum(cfg, "gamma", 0.2), jnum(cfg, "beta", 0.0),
                        s.d, s.lambda);
      summary["eps_bounds"] = {{"e", eb.e},
                               {"sum_bound", eb.sum_bound},
                               {"budget", eb.budget},
                               {"ok", eb.ok},
                               {"minimal_R", eb.minimal_R}};
    }
    if (!dir.empty()) {
      std::string started_at;
      const std::string chash = open_run_dir(dir, cfg, &started_at);
      write_text(dir + "/trace.csv", csv);
      write_record(dir, chash, "renorm", nmax, "done", started_at);
      summary["out"] = dir;
    }
    return summary;
  }

  require_config(sub == "simulate", "renorm.sub: verify or simulate");
  const int n = (int)jint(cfg, "n", 1);
  require_config(n >= 1, "renorm.n: must be >= 1");
  const int64_t trials = jint(cfg, "trials", 50);
  require_config(trials >= 1, "renorm.trials: must be >= 1");
  const int64_t pairs = jint(cfg, "pairs", 5);
  const double p_g0 = jnum(cfg, "p_g0", 0.9999992);
  std::vector<double> p_h{0.95};
  if (cfg.contains("p_h") && !cfg.at("p_h").is_null()) {
    p_h.clear();
    if (cfg.at("p_h").is_number()) {
      p_h.push_back(cfg.at("p_h").get<double>());
    } else {
      require_config(cfg.at("p_h").is_array(), "renorm.p_h: number or array");
      for (const auto& v : cfg.at("p_h")) p_h.push_back(v.get<double>());
    }
  }
  const uint64_t seed = jseed(cfg, "seed", 1);
  require_config(s.geometry_ok(),
                 "renorm scheme: simulate needs lambda*rho >= 100*sigma and "
                 "rho >= 2");

  const int64_t bound = s.rho * s.L(n);
  const double need = 10.0 * (double)s.sigma * (double)s.L(n - 1);
  const int64_t steps = (int64_t)std::ceil(need * std::sqrt(2.0)) + 1;
  require_config(2 * bound >= steps + 1,
                 "renorm scheme: region too small for marked sets of the "
                 "required diameter");

  auto marked_set = [&](CounterRng& rng, uint64_t& w) {
    std::array<int64_t, 3> cur{0, 0, 0};
    for (int k = 0; k < s.d; ++k) {
      const int64_t span = 2 * bound - steps;
      cur[(size_t)k] =
          -bound + (int64_t)(rng.word_at(w++) % (uint64_t)(span + 1));
    }
    std::vector<std::array<int64_t, 3>> out{cur};
    for (int64_t t = 0; t < steps; ++t) {
      cur[(size_t)(rng.word_at(w++) % (uint64_t)s.d)] += 1;
      out.push_back(cur);
    }
    return out;
  };

  int64_t g_holds = 0, pairs_checked = 0;
  json counterexamples = json::array();
  for (int64_t t = 0; t < trials; ++t) {
    const uint64_t lat_seed = derive_seed(seed, (uint64_t)t, 0xB1ACC);
    const BlackLattice lat(s, n, p_g0, p_h, lat_seed);
    const BlackMap map = materialize_black(lat, n);
    const bool g = n == 1 ? g1_from_map(lat, map)
                          : lat.g_event(n, {0, 0, 0});
    if (!g) continue;
    ++g_holds;
    CounterRng rng(derive_seed(seed, (uint64_t)t, 0x5E75));
    uint64_t w = 0;
    for (int64_t p = 0; p < pairs; ++p) {
      const auto s1 = marked_set(rng, w);
      const auto s2 = marked_set(rng, w);
      ++pairs_checked;
      if (!check_geometry(lat, n, s1, s2, &map)) {
        json ce{{"trial", t}, {"pair", p}, {"lattice_seed", lat_seed}};
        json js1 = json::array(), js2 = json::array();
        for (const auto& x : s1) js1.push_back({x[0], x[1], x[2]});
        for (const auto& x : s2) js2.push_back({x[0], x[1], x[2]});
        ce["s1"] = js1;
        ce["s2"] = js2;
        counterexamples.push_back(ce);
      }
    }
  }

  json summary{{"command", "renorm"},
               {"sub", "simulate"},
               {"trials", trials},
               {"g_holds", g_holds},
               {"pairs_checked", pairs_checked},
               {"counterexamples", counterexamples},
               {"seed", seed},
               {"gate_pass", counterexamples.empty()}};
  if (!dir.empty()) {
    std::string started_at;
    const std::string chash = open_run_dir(dir, cfg, &started_at);
    write_text(dir + "/counterexamples.json", counterexamples.dump(2) + "\n");
    write_record(dir, chash, "renorm", trials, "done", started_at);
    summary["out"] = dir;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// resume

json cmd_resume(const json& cfg) {
  const std::string dir = jstr(cfg, "run_dir", jstr(cfg, "out", ""));
  require_config(!dir.empty(), "resume.run_dir: required");
  require_config(sfs::exists(dir + "/config.json"),
                 dir + "/config.json: not found");
  require_config(sfs::exists(dir + "/record.json"),
                 dir + "/record.json: not found (no RunRecord)");
  json stored = load_json_file(dir + "/config.json");
  const json record = load_json_file(dir + "/record.json");
  require_config(
      record.value("config_hash", std::string()) == config_hash_hex(stored),
      dir + ": config.json was edited after the run started (hash mismatch)");

  if (record.value("status", std::string()) == "done" &&
      sfs::exists(dir + "/result.csv")) {
    return json{{"command", "resume"}, {"out", dir}, {"status", "done"},
                {"noop", true}};
  }
  if (record.value("status", std::string()) == "done") {
    return json{{"command", "resume"}, {"out", dir}, {"status", "done"},
                {"noop", true}};
  }
  stored["out"] = dir;
  json summary = run_config(stored);
  summary["resume_of"] = dir;
  return summary;
}

}  // namespace

// ---------------------------------------------------------------------------

json run_config(const json& cfg) {
  require_config(cfg.is_object(), "config: must be a JSON object");
  const std::string cmd = jstr(cfg, "command", "");
  if (cmd == "sample") return cmd_sample(cfg);
  if (cmd == "estimate") return cmd_estimate(cfg);
  if (cmd == "sweep") return cmd_sweep(cfg);
  if (cmd == "bisect") return cmd_bisect(cfg);
  if (cmd == "validate") return cmd_validate(cfg);
  if (cmd == "renorm") return cmd_renorm(cfg);
  if (cmd == "resume") return cmd_resume(cfg);
  fail_config("config.command: expected one of sample, estimate, sweep, "
              "bisect, validate, renorm, resume");
}

int run_config_catching(const json& cfg, json* summary) {
  try {
    json s = run_config(cfg);
    int code = 0;
    if (s.is_object() && s.contains("gate_pass") &&
        !s.at("gate_pass").get<bool>())
      code = 4;
    if (summary) *summary = std::move(s);
    return code;
  } catch (const Error& e) {
    if (summary) *summary = json{{"error", e.what()}, {"exit", (int)e.kind}};
    return (int)e.kind;
  } catch (const std::exception& e) {
    if (summary) *summary = json{{"error", e.what()}, {"exit", 5}};
    return 5;
  }
}

}  // namespace gfp
