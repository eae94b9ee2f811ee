// gfperc — command-line front end.
//
// This binary is a thin shell over the C API in gfperc.h: every subcommand
// assembles a JSON config (file first, then flag overrides) and hands it to
// gfp_run().  All numerics live behind the shared library.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gfperc.h"

using nlohmann::json;

namespace {

[[noreturn]] void die(const std::string& msg) {
  std::cerr << "gfperc: " << msg << std::endl;
  std::exit(GFP_E_CONFIG);
}

json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) die("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) die("config: " + path + " is not valid JSON");
  if (!j.is_object()) die("config: " + path + " must hold a JSON object");
  return j;
}

std::vector<double> split_doubles(const std::string& s, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      while (pos < tok.size() && std::isspace((unsigned char)tok[pos])) ++pos;
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (...) {
      die(std::string(flag) + ": '" + tok + "' is not a number");
    }
  }
  if (out.empty()) die(std::string(flag) + ": empty list");
  return out;
}

json box_from_flag(const std::string& s) {
  const std::vector<double> v = split_doubles(s, "--box");
  if (v.size() != 4 && v.size() != 6)
    die("--box: expected lo0,hi0,lo1,hi1[,lo2,hi2]");
  json lo = json::array(), hi = json::array();
  for (size_t k = 0; k < v.size(); k += 2) {
    lo.push_back(v[k]);
    hi.push_back(v[k + 1]);
  }
  return json{{"lo", lo}, {"hi", hi}};
}

// Flags shared by every field-sampling command.  A value lands in the config
// only when its flag was actually given, so file-provided settings win by
// default and explicit flags override them.
struct SamplerFlags {
  std::string kind;
  std::string kernel;
  std::string box;
  std::string r;  // number, "inf", or "auto"
  double h = 0.25;
  double pad = 0;
  bool coupled = false;
  int num_waves = 0;
  int degree_cap = 0;

  void attach(CLI::App* sub) {
    sub->add_option("--sampler", kind,
                    "sampler kind: convolution|series|plane_wave|null");
    sub->add_option("--kernel", kernel, "kernel family (bargmann_fock)");
    sub->add_option("--box", box, "sampling box lo0,hi0,lo1,hi1[,lo2,hi2]");
    sub->add_option("--h", h, "grid mesh (default 0.25)");
    sub->add_option("--r", r, "truncation radius: number, 'inf', or 'auto'");
    sub->add_flag("--coupled", coupled,
                  "also carry the untruncated field on the same noise");
    sub->add_option("--pad", pad, "periodization pad (>= kernel support)");
    sub->add_option("--num-waves", num_waves, "plane-wave sampler wave count");
    sub->add_option("--degree-cap", degree_cap, "series sampler degree cap");
  }

  void apply(const CLI::App* sub, json& cfg) const {
    json s = cfg.contains("sampler") && cfg.at("sampler").is_object()
                 ? cfg.at("sampler")
                 : json::object();
    bool touched = cfg.contains("sampler");
    auto set = [&](const char* flag, const char* key, const json& v) {
      if (sub->count(flag)) {
        s[key] = v;
        touched = true;
      }
    };
    set("--sampler", "kind", kind);
    set("--h", "h", h);
    set("--pad", "pad", pad);
    set("--coupled", "coupled", coupled);
    set("--num-waves", "num_waves", num_waves);
    set("--degree-cap", "degree_cap", degree_cap);
    if (sub->count("--box")) {
      s["box"] = box_from_flag(box);
      touched = true;
    }
    if (sub->count("--kernel")) {
      int dim = 2;
      if (s.contains("box") && s.at("box").is_object())
        dim = (int)s.at("box").at("lo").size();
      s["kernel"] = json{{"family", kernel}, {"dim", dim}};
      touched = true;
    }
    if (sub->count("--r")) {
      if (r == "inf")
        s["r"] = nullptr;
      else if (r == "auto")
        s["r"] = "auto";
      else {
        try {
          s["r"] = std::stod(r);
        } catch (...) {
          die("--r: expected a number, 'inf', or 'auto'");
        }
      }
      touched = true;
    }
    if (touched) cfg["sampler"] = s;
  }
};

// Detector selection shared by estimate/sweep/bisect: positional name, an
// optional JSON blob, and shortcuts for the two knobs used constantly.
struct DetectorFlags {
  std::string name;
  std::string params;
  double level = 0;
  double R = 0;

  void attach(CLI::App* sub) {
    sub->add_option("detector", name, "detector name (crossing, annulus, ...)");
    sub->add_option("--params", params, "extra detector parameters as JSON");
    sub->add_option("--level", level, "excursion level");
    sub->add_option("--R", R, "detector scale R");
  }

  void apply(const CLI::App* sub, json& cfg) const {
    json d = cfg.contains("detector") && cfg.at("detector").is_object()
                 ? cfg.at("detector")
                 : json::object();
    if (sub->count("detector")) d["name"] = name;
    if (sub->count("--params")) {
      const json p = json::parse(params, nullptr, false);
      if (p.is_discarded() || !p.is_object())
        die("--params: expected a JSON object");
      for (auto it = p.begin(); it != p.end(); ++it) d[it.key()] = it.value();
    }
    if (sub->count("--level")) d["level"] = level;
    if (sub->count("--R")) d["R"] = R;
    if (!d.empty()) cfg["detector"] = d;
  }
};

int run_config(const json& cfg) {
  char* summary = nullptr;
  const gfp_status rc = gfp_run(cfg.dump().c_str(), &summary);
  if (summary) {
    std::cout << summary << std::endl;
    gfp_free_string(summary);
  }
  if (rc != GFP_OK) {
    const char* err = gfp_last_error();
    if (err && *err) std::cerr << "gfperc: " << err << std::endl;
  }
  return (int)rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-field percolation toolkit"};
  app.require_subcommand(1);
  // long-only help: the short -h would shadow the --h mesh option below
  app.set_help_flag("--help", "print help and exit");
  app.set_version_flag("--version", []() { return std::string(gfp_version()); });

  // `exit_code` carries the result out of subcommand callbacks.
  int exit_code = 0;
  auto finish = [&](json& cfg, const char* command) {
    cfg["command"] = command;
    exit_code = run_config(cfg);
  };

  // Every subcommand honors --config FILE with flags taking precedence.
  auto common = [&](CLI::App* sub, std::string* config_path, uint64_t* seed,
                    int64_t* workers, std::string* out) {
    sub->add_option("--config", *config_path, "JSON config file (flags win)");
    if (seed) sub->add_option("--seed", *seed, "master seed");
    if (workers)
      sub->add_option("--workers", *workers,
                      "worker threads (default: GFPERC_WORKERS or hardware)");
    if (out) sub->add_option("--out", *out, "output path / run directory");
  };
  auto base_config = [](const std::string& path) {
    return path.empty() ? json::object() : load_config_file(path);
  };

  // -------------------------------------------------------------- sample
  {
    auto* sub = app.add_subcommand("sample", "draw one field and save .fgrid");
    auto* st = new SamplerFlags();
    st->attach(sub);
    auto* cfgp = new std::string();
    auto* seed = new uint64_t(1);
    auto* out = new std::string();
    auto* rep = new int64_t(0);
    auto* level = new double(0);
    auto* conn = new std::string();
    auto* complement = new bool(false);
    auto* mask_out = new std::string();
    auto* labels_out = new std::string();
    common(sub, cfgp, seed, nullptr, out);
    sub->add_option("--replicate", *rep, "replicate index (default 0)");
    sub->add_option("--level", *level, "also write excursion mask and labels");
    sub->add_flag("--complement", *complement, "threshold the complement set");
    sub->add_option("--connectivity", *conn, "face|face_diagonal");
    sub->add_option("--mask-out", *mask_out, "mask output path");
    sub->add_option("--labels-out", *labels_out, "labels output path");
    sub->callback([=, &finish]() {
      json cfg = base_config(*cfgp);
      st->apply(sub, cfg);
      if (sub->count("--seed")) cfg["seed"] = *seed;
      if (sub->count("--out")) cfg["out"] = *out;
      if (sub->count("--replicate")) cfg["replicate"] = *rep;
      if (sub->count("--level")) cfg["level"] = *level;
      if (sub->count("--complement")) cfg["complement"] = *complement;
      if (sub->count("--connectivity")) cfg["connectivity"] = *conn;
      if (sub->count("--mask-out")) cfg["mask_out"] = *mask_out;
      if (sub->count("--labels-out")) cfg["labels_out"] = *labels_out;
      finish(cfg, "sample");
    });
  }

  // ------------------------------------------------------------ estimate
  {
    auto* sub = app.add_subcommand("estimate",
                                   "Monte Carlo estimate of one detector");
    auto* st = new SamplerFlags();
    auto* dt = new DetectorFlags();
    st->attach(sub);
    dt->attach(sub);
    auto* cfgp = new std::string();
    auto* seed = new uint64_t(1);
    auto* workers = new int64_t(0);
    auto* out = new std::string();
    auto* n = new int64_t(1000);
    common(sub, cfgp, seed, workers, out);
    sub->add_option("--n", *n, "number of replicates");
    sub->callback([=, &finish]() {
      json cfg = base_config(*cfgp);
      dt->apply(sub, cfg);
      st->apply(sub, cfg);
      if (sub->count("--n")) cfg["n"] = *n;
      if (sub->count("--seed")) cfg["seed"] = *seed;
      if (sub->count("--workers")) cfg["workers"] = *workers;
      if (sub->count("--out")) cfg["out"] = *out;
      finish(cfg, "estimate");
    });
  }

  // --------------------------------------------------------------- sweep
  {
    auto* sub = app.add_subcommand("sweep",
                                   "estimate across levels (common RNG)");
    auto* st = new SamplerFlags();
    auto* dt = new DetectorFlags();
    st->attach(sub);
    dt->attach(sub);
    auto* cfgp = new std::string();
    auto* seed = new uint64_t(1);
    auto* workers = new int64_t(0);
    auto* out = new std::string();
    auto* n = new int64_t(1000);
    auto* levels = new std::string();
    auto* no_common = new bool(false);
    common(sub, cfgp, seed, workers, out);
    sub->add_option("--n", *n, "replicates per level");
    sub->add_option("--levels", *levels, "comma-separated levels");
    sub->add_flag("--no-common-rng", *no_common,
                  "independent noise per level instead of common RNG");
    sub->callback([=, &finish]() {
      json cfg = base_config(*cfgp);
      dt->apply(sub, cfg);
      st->apply(sub, cfg);
      if (sub->count("--levels")) cfg["levels"] = split_doubles(*levels, "--levels");
      if (sub->count("--no-common-rng")) cfg["common_rng"] = !*no_common;
      if (sub->count("--n")) cfg["n"] = *n;
      if (sub->count("--seed")) cfg["seed"] = *seed;
      if (sub->count("--workers")) cfg["workers"] = *workers;
      if (sub->count("--out")) cfg["out"] = *out;
      finish(cfg, "sweep");
    });
  }

  // -------------------------------------------------------------- bisect
  {
    auto* sub = app.add_subcommand("bisect",
                                   "bisection on the level for a target "
                                   "probability");
    auto* st = new SamplerFlags();
    auto* dt = new DetectorFlags();
    st->attach(sub);
    dt->attach(sub);
    auto* cfgp = new std::string();
    auto* seed = new uint64_t(1);
    auto* workers = new int64_t(0);
    auto* out = new std::string();
    auto* n = new int64_t(1000);
    auto* n_cap = new int64_t(1 << 20);
    auto* target = new double(0.5);
    auto* tol = new double(0.02);
    auto* bracket = new std::string();
    common(sub, cfgp, seed, workers, out);
    sub->add_option("--n", *n, "initial replicates per probe");
    sub->add_option("--n-cap", *n_cap, "adaptive replicate cap");
    sub->add_option("--target", *target, "target probability (default 0.5)");
    sub->add_option("--tol", *tol, "level tolerance (default 0.02)");
    sub->add_option("--bracket", *bracket, "starting bracket lo,hi");
    sub->callback([=, &finish]() {
      json cfg = base_config(*cfgp);
      dt->apply(sub, cfg);
      st->apply(sub, cfg);
      if (sub->count("--bracket")) {
        const auto v = split_doubles(*bracket, "--bracket");
        if (v.size() != 2) die("--bracket: expected lo,hi");
        cfg["bracket"] = v;
      }
      if (sub->count("--target")) cfg["target"] = *target;
      if (sub->count("--tol")) cfg["tol"] = *tol;
      if (sub->count("--n")) cfg["n"] = *n;
      if (sub->count("--n-cap")) cfg["n_cap"] = *n_cap;
      if (sub->count("--seed")) cfg["seed"] = *seed;
      if (sub->count("--workers")) cfg["workers"] = *workers;
      if (sub->count("--out")) cfg["out"] = *out;
      finish(cfg, "bisect");
    });
  }

  // ------------------------------------------------------------ validate
  {
    auto* sub = app.add_subcommand(
        "validate", "built-in validation suites with pass/fail gates");
    auto* suite = new std::string();
    sub->add_option("suite", *suite,
                    "covariance|duality|fkg|truncation|sprinkling|kacrice");
    auto* cfgp = new std::string();
    auto* seed = new uint64_t(1);
    auto* workers = new int64_t(0);
    auto* out = new std::string();
    auto* n = new int64_t(0);
    auto* h = new double(0.25);
    auto* r = new double(8);
    auto* R = new double(0);
    auto* t = new double(0.05);
    auto* box_radius = new double(8);
    common(sub, cfgp, seed, workers, out);
    sub->add_option("--n", *n, "replicates (suite-specific default)");
    sub->add_option("--h", *h, "grid mesh");
    sub->add_option("--r", *r, "truncation radius (covariance suite)");
    sub->add_option("--R", *R, "scale (duality/fkg suites)");
    sub->add_option("--t", *t, "sprinkling offset");
    sub->add_option("--box-radius", *box_radius, "box radius (truncation)");
    sub->callback([=, &finish]() {
      json cfg = base_config(*cfgp);
      if (sub->count("suite")) cfg["suite"] = *suite;
      if (sub->count("--n")) cfg["n"] = *n;
      if (sub->count("--h")) cfg["h"] = *h;
      if (sub->count("--r")) cfg["r"] = *r;
      if (sub->count("--R")) cfg["R"] = *R;
      if (sub->count("--t")) cfg["t"] = *t;
      if (sub->count("--box-radius")) cfg["box_radius"] = *box_radius;
      if (sub->count("--seed")) cfg["seed"] = *seed;
      if (sub->count("--workers")) cfg["workers"] = *workers;
      if (sub->count("--out")) cfg["out"] = *out;
      finish(cfg, "validate");
    });
  }

  // -------------------------------------------------------------- renorm
  {
    auto* sub = app.add_subcommand(
        "renorm", "renormalization recursion: exact verify / lattice simulate");
    sub->require_subcommand(1);
    auto* lambda = new int64_t(0);
    auto* rho = new int64_t(0);
    auto* sigma = new int64_t(0);
    auto* d = new int64_t(2);
    auto scheme = [=](CLI::App* s) {
      s->add_option("--lambda", *lambda, "scale ratio lambda");
      s->add_option("--rho", *rho, "coarse-graining rho");
      s->add_option("--sigma", *sigma, "separation sigma");
      s->add_option("--d", *d, "dimension");
    };
    auto scheme_apply = [=](const CLI::App* s, json& cfg) {
      if (s->count("--lambda")) cfg["lambda"] = *lambda;
      if (s->count("--rho")) cfg["rho"] = *rho;
      if (s->count("--sigma")) cfg["sigma"] = *sigma;
      if (s->count("--d")) cfg["d"] = *d;
    };

    {
      auto* v = sub->add_subcommand("verify",
                                    "exact interval-arithmetic recursion check");
      scheme(v);
      auto* cfgp = new std::string();
      auto* out = new std::string();
      auto* q0 = new std::string();
      auto* hmode = new std::string();
      auto* R = new double(0);
      auto* gamma = new double(0);
      auto* beta = new double(0);
      auto* nmax = new int64_t(20);
      common(v, cfgp, nullptr, nullptr, out);
      v->add_option("--q0", *q0, "initial failure bound: number or 'qbar'");
      v->add_option("--hmode", *hmode, "sprinkling bound mode: cap|eps");
      v->add_option("--R", *R, "base scale for eps mode");
      v->add_option("--gamma", *gamma, "truncation exponent (eps report)");
      v->add_option("--beta", *beta, "decay exponent (eps report)");
      v->add_option("--nmax", *nmax, "number of recursion steps");
      v->callback([=, &finish]() {
        json cfg = base_config(*cfgp);
        scheme_apply(v, cfg);
        cfg["sub"] = "verify";
        if (v->count("--q0")) {
          if (*q0 == "qbar") {
            cfg["q0"] = "qbar";
          } else {
            try {
              cfg["q0"] = std::stod(*q0);
            } catch (...) {
              die("--q0: expected a number or 'qbar'");
            }
          }
        }
        if (v->count("--hmode")) cfg["hmode"] = *hmode;
        if (v->count("--R")) cfg["R"] = *R;
        if (v->count("--gamma")) cfg["gamma"] = *gamma;
        if (v->count("--beta")) cfg["beta"] = *beta;
        if (v->count("--nmax")) cfg["nmax"] = *nmax;
        if (v->count("--out")) cfg["out"] = *out;
        finish(cfg, "renorm");
      });
    }

    {
      auto* s = sub->add_subcommand(
          "simulate", "synthetic black-vertex lattices + geometry check");
      scheme(s);
      auto* cfgp = new std::string();
      auto* out = new std::string();
      auto* seed = new uint64_t(1);
      auto* n = new int64_t(1);
      auto* trials = new int64_t(50);
      auto* pairs = new int64_t(5);
      auto* p_g0 = new double(0.9999992);
      auto* p_h = new std::string();
      common(s, cfgp, seed, nullptr, out);
      s->add_option("--n", *n, "cascade depth (default 1)");
      s->add_option("--trials", *trials, "number of random lattices");
      s->add_option("--pairs", *pairs, "random (S1,S2) pairs per lattice");
      s->add_option("--p-g0", *p_g0, "site-level success probability");
      s->add_option("--p-h", *p_h, "scale success probabilities, comma list");
      s->callback([=, &finish]() {
        json cfg = base_config(*cfgp);
        scheme_apply(s, cfg);
        cfg["sub"] = "simulate";
        if (s->count("--n")) cfg["n"] = *n;
        if (s->count("--trials")) cfg["trials"] = *trials;
        if (s->count("--pairs")) cfg["pairs"] = *pairs;
        if (s->count("--p-g0")) cfg["p_g0"] = *p_g0;
        if (s->count("--p-h")) cfg["p_h"] = split_doubles(*p_h, "--p-h");
        if (s->count("--seed")) cfg["seed"] = *seed;
        if (s->count("--out")) cfg["out"] = *out;
        finish(cfg, "renorm");
      });
    }
  }

  // -------------------------------------------------------------- resume
  {
    auto* sub = app.add_subcommand("resume", "finish an interrupted run");
    auto* dir = new std::string();
    sub->add_option("run_dir", *dir, "run directory with config.json")
        ->required();
    sub->callback([=, &finish]() {
      json cfg;
      cfg["run_dir"] = *dir;
      finish(cfg, "resume");
    });
  }

  CLI11_PARSE(app, argc, argv);
  return exit_code;
}
