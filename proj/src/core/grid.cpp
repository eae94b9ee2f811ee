#include "grid.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>

namespace gfp {

json Box::to_json() const {
  json jlo = json::array(), jhi = json::array();
  for (int k = 0; k < dim; ++k) {
    jlo.push_back(lo[k]);
    jhi.push_back(hi[k]);
  }
  return json{{"lo", jlo}, {"hi", jhi}};
}

Box Box::from_json(const json& j) {
  require_config(j.contains("lo") && j.contains("hi"), "box: needs lo and hi arrays");
  const auto& jlo = j.at("lo");
  const auto& jhi = j.at("hi");
  require_config(jlo.is_array() && jhi.is_array() && jlo.size() == jhi.size(),
                 "box: lo/hi must be arrays of equal length");
  require_config(jlo.size() == 2 || jlo.size() == 3, "box: dim must be 2 or 3");
  Box b;
  b.dim = (int)jlo.size();
  for (int k = 0; k < b.dim; ++k) {
    b.lo[k] = jlo[k].get<double>();
    b.hi[k] = jhi[k].get<double>();
    require_config(b.hi[k] >= b.lo[k], "box: hi < lo on axis " + std::to_string(k));
  }
  return b;
}

GridGeometry GridGeometry::make(int dim, const Box& box, double h, double pad) {
  require_config(dim == 2 || dim == 3, "grid: dim must be 2 or 3");
  require_config(box.dim == dim, "grid: box dim mismatch");
  require_config(h > 0, "grid: h must be positive");
  require_config(pad >= 0, "grid: pad must be nonnegative");
  GridGeometry g;
  g.dim = dim;
  g.h = h;
  g.pad = pad;
  for (int k = 0; k < dim; ++k) {
    g.lo[k] = box.lo[k];
    g.n[k] = (int64_t)std::llround((box.hi[k] - box.lo[k]) / h) + 1;
    if (g.n[k] < 1) g.n[k] = 1;
    g.hi[k] = g.lo[k] + (double)(g.n[k] - 1) * h;  // snapped extent
  }
  return g;
}

int64_t GridGeometry::index_of(int axis, double x) const {
  int64_t i = (int64_t)std::llround((x - lo[axis]) / h);
  if (i < 0) i = 0;
  if (i > n[axis] - 1) i = n[axis] - 1;
  return i;
}

double GridGeometry::diameter() const {
  double s = 0;
  for (int k = 0; k < dim; ++k) s += (hi[k] - lo[k]) * (hi[k] - lo[k]);
  return std::sqrt(s);
}

json GridGeometry::to_json() const {
  json jlo = json::array(), jhi = json::array(), jn = json::array();
  for (int k = 0; k < dim; ++k) {
    jlo.push_back(lo[k]);
    jhi.push_back(hi[k]);
    jn.push_back(n[k]);
  }
  return json{{"dim", dim}, {"lo", jlo}, {"hi", jhi}, {"h", h}, {"pad", pad}, {"n", jn}};
}

GridGeometry GridGeometry::from_json(const json& j) {
  Box b = Box::from_json(j);
  GridGeometry g = make((int)j.at("dim").get<int>(), b, j.at("h").get<double>(),
                        j.value("pad", 0.0));
  if (j.contains("n")) {
    for (int k = 0; k < g.dim; ++k)
      require_config(g.n[k] == j["n"][k].get<int64_t>(),
                     "grid: stored node count inconsistent with extents");
  }
  return g;
}

IndexBox index_box(const GridGeometry& g, const Box& box) {
  require_config(box.dim == g.dim, "index_box: box dim mismatch");
  IndexBox ib;
  for (int k = 0; k < g.dim; ++k) {
    require_config(box.lo[k] >= g.lo[k] - g.h / 2 && box.hi[k] <= g.hi[k] + g.h / 2,
                   "index_box: box exceeds grid extents on axis " + std::to_string(k));
    ib.lo[k] = g.index_of(k, box.lo[k]);
    ib.hi[k] = g.index_of(k, box.hi[k]);
  }
  return ib;
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail_resource("cannot open for write: " + tmp);
    out.write(bytes.data(), (std::streamsize)bytes.size());
    if (!out) fail_resource("short write: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail_resource("rename failed for " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_config("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

namespace {

json fgrid_header(const GridGeometry& g, uint64_t seed, const json& kernel,
                  const json& level, const std::string& dtype) {
  json jlo = json::array(), jhi = json::array();
  for (int k = 0; k < g.dim; ++k) {
    jlo.push_back(g.lo[k]);
    jhi.push_back(g.hi[k]);
  }
  json h{{"dim", g.dim}, {"lo", jlo},     {"hi", jhi},      {"h", g.h},
         {"pad", g.pad}, {"seed", seed},  {"kernel", kernel}, {"level", level}};
  if (dtype != "float64") h["dtype"] = dtype;
  return h;
}

struct ParsedHeader {
  GridGeometry g;
  uint64_t seed = 0;
  json kernel;
  json level;
  std::string dtype = "float64";
};

ParsedHeader parse_fgrid(const std::string& bytes, size_t* payload_at) {
  const size_t nl = bytes.find('\n');
  require_config(nl != std::string::npos, "fgrid: missing header line");
  json h;
  try {
    h = json::parse(bytes.substr(0, nl));
  } catch (const std::exception& e) {
    fail_config(std::string("fgrid: bad header json: ") + e.what());
  }
  ParsedHeader out;
  Box b = Box::from_json(h);
  out.g = GridGeometry::make(h.at("dim").get<int>(), b, h.at("h").get<double>(),
                             h.value("pad", 0.0));
  out.seed = h.value("seed", (uint64_t)0);
  out.kernel = h.value("kernel", json());
  out.level = h.value("level", json());
  out.dtype = h.value("dtype", std::string("float64"));
  *payload_at = nl + 1;
  return out;
}

}  // namespace

void save_fgrid(const std::string& path, const FieldSample& f, const json& level) {
  json kernel = f.provenance.contains("kernel") ? f.provenance["kernel"] : json();
  std::string out = fgrid_header(f.grid, f.seed, kernel, level, "float64").dump();
  out.push_back('\n');
  const size_t nb = f.values.size() * sizeof(double);
  const size_t at = out.size();
  out.resize(at + nb);
  std::memcpy(out.data() + at, f.values.data(), nb);
  atomic_write_file(path, out);
}

FieldSample load_fgrid(const std::string& path) {
  const std::string bytes = read_file(path);
  size_t at = 0;
  ParsedHeader h = parse_fgrid(bytes, &at);
  require_config(h.dtype == "float64", "fgrid: expected float64 payload");
  FieldSample f;
  f.grid = h.g;
  f.seed = h.seed;
  if (!h.kernel.is_null()) f.provenance["kernel"] = h.kernel;
  const int64_t nn = f.grid.num_nodes();
  require_config(bytes.size() - at == (size_t)nn * sizeof(double),
                 "fgrid: payload size mismatch");
  f.values.resize(nn);
  std::memcpy(f.values.data(), bytes.data() + at, (size_t)nn * sizeof(double));
  return f;
}

void save_labels_fgrid(const std::string& path, const GridGeometry& g,
                       const std::vector<int32_t>& labels, const json& extra) {
  json level = extra.contains("level") ? extra["level"] : json();
  json kernel = extra.contains("kernel") ? extra["kernel"] : json();
  uint64_t seed = extra.value("seed", (uint64_t)0);
  std::string out = fgrid_header(g, seed, kernel, level, "int32").dump();
  out.push_back('\n');
  const size_t nb = labels.size() * sizeof(int32_t);
  const size_t at = out.size();
  out.resize(at + nb);
  std::memcpy(out.data() + at, labels.data(), nb);
  atomic_write_file(path, out);
}

std::vector<int32_t> load_labels_fgrid(const std::string& path, GridGeometry* g_out) {
  const std::string bytes = read_file(path);
  size_t at = 0;
  ParsedHeader h = parse_fgrid(bytes, &at);
  require_config(h.dtype == "int32", "fgrid: expected int32 payload");
  const int64_t nn = h.g.num_nodes();
  require_config(bytes.size() - at == (size_t)nn * sizeof(int32_t),
                 "fgrid: payload size mismatch");
  std::vector<int32_t> labels(nn);
  std::memcpy(labels.data(), bytes.data() + at, (size_t)nn * sizeof(int32_t));
  if (g_out) *g_out = h.g;
  return labels;
}

}  // namespace gfp
