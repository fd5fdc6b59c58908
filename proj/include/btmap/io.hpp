#pragma once

// File formats: replicate matrices (CSV or raw float64 with a JSON sidecar),
// location tables, the BTM1 map container, the BTMDPM1 chain container and
// JSON run configuration. Byte layouts are documented in FORMATS.md.

#include "btmap/common.hpp"
#include "btmap/dpm.hpp"
#include "btmap/map_fit.hpp"
#include "btmap/ordering.hpp"
#include "btmap/standardize.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace btmap::io {

using nlohmann::json;

// ---------------------------------------------------------------- text tables

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace detail

/// Numeric CSV, one row per line. A first line that does not parse as
/// numbers is taken as a header and skipped.
inline Matrix read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::data, "cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> vals(cells.size());
    bool numeric = true;
    for (std::size_t k = 0; k < cells.size(); ++k) numeric = numeric && detail::parse_double(cells[k], vals[k]);
    if (!numeric) {
      require(rows.empty() && width == 0, ErrorKind::data,
              path + ":" + std::to_string(lineno) + ": non-numeric value");
      width = cells.size();  // header
      continue;
    }
    if (width == 0) width = vals.size();
    require(vals.size() == width, ErrorKind::data,
            path + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) + " columns, found " +
                std::to_string(vals.size()));
    for (std::size_t k = 0; k < vals.size(); ++k)
      require(std::isfinite(vals[k]), ErrorKind::data,
              path + ":" + std::to_string(lineno) + ": non-finite value in column " + std::to_string(k));
    rows.push_back(std::move(vals));
  }
  require(!rows.empty(), ErrorKind::data, path + ": no data rows");
  Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) M(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return M;
}

inline void write_csv(const std::string& path, const Matrix& M, const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::data, "cannot write " + path);
  out.precision(17);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  if (!header.empty()) out << "\n";
  for (Index r = 0; r < M.rows(); ++r) {
    for (Index c = 0; c < M.cols(); ++c) out << (c ? "," : "") << M(r, c);
    out << "\n";
  }
}

// ---------------------------------------------------------- binary matrices

inline std::string sidecar_path(const std::string& path) { return path + ".json"; }

/// Raw little-endian float64, row-major, with a JSON sidecar {"n": rows, "N": cols}.
inline void write_binary(const std::string& path, const Matrix& M) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::data, "cannot write " + path);
  for (Index r = 0; r < M.rows(); ++r)
    for (Index c = 0; c < M.cols(); ++c) {
      const double v = M(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  std::ofstream side(sidecar_path(path));
  side << json{{"n", M.rows()}, {"N", M.cols()}}.dump() << "\n";
}

inline Matrix read_binary(const std::string& path) {
  std::ifstream side(sidecar_path(path));
  require(side.good(), ErrorKind::data, "missing sidecar " + sidecar_path(path));
  json meta;
  try {
    side >> meta;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, sidecar_path(path) + ": " + e.what());
  }
  require(meta.contains("n") && meta.contains("N"), ErrorKind::data, sidecar_path(path) + ": needs n and N");
  const auto n = meta["n"].get<Index>(), N = meta["N"].get<Index>();
  require(n > 0 && N > 0, ErrorKind::data, sidecar_path(path) + ": n and N must be positive");
  const auto bytes = std::filesystem::file_size(path);
  require(bytes == static_cast<std::uintmax_t>(n * N) * sizeof(double), ErrorKind::data,
          path + ": size " + std::to_string(bytes) + " does not match n*N*8");
  std::ifstream in(path, std::ios::binary);
  Matrix M(n, N);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < N; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      require(std::isfinite(v), ErrorKind::data,
              path + ": non-finite value at row " + std::to_string(r) + ", column " + std::to_string(c));
      M(r, c) = v;
    }
  return M;
}

inline bool is_binary_path(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".bin" || ext == ".f64";
}

inline Matrix read_matrix(const std::string& path) {
  return is_binary_path(path) ? read_binary(path) : read_csv(path);
}

inline void write_matrix(const std::string& path, const Matrix& M) {
  if (is_binary_path(path)) write_binary(path, M);
  else write_csv(path, M);
}

// ------------------------------------------------------------------ ingest

/// Locations table: x,y[,z] for euclidean, lon,lat in degrees for chordal,
/// or a square N x N distance matrix for precomputed.
inline Locations read_locations(const std::string& path, Metric metric) {
  const Matrix M = read_matrix(path);
  switch (metric) {
    case Metric::euclidean: return Locations::euclidean(M);
    case Metric::chordal: return Locations::chordal(M);
    case Metric::precomputed: return Locations::precomputed(M);
  }
  fail(ErrorKind::usage, "unknown metric");
}

struct IngestOptions {
  bool log_transform = false;
  bool standardize = true;
};

struct ReplicateMatrix {
  Matrix values;  // n x N after the optional log, before standardization
  std::string source;
  bool log_transform = false;
  Standardization standardization;

  Matrix standardized() const { return standardization.apply_rows(values); }
};

inline ReplicateMatrix ingest(const std::string& path, const IngestOptions& opt = {}) {
  ReplicateMatrix r;
  r.source = path;
  r.log_transform = opt.log_transform;
  r.values = read_matrix(path);
  require(r.values.rows() >= 2, ErrorKind::data, path + ": need at least 2 replicates");
  if (opt.log_transform) {
    for (Index i = 0; i < r.values.rows(); ++i)
      for (Index j = 0; j < r.values.cols(); ++j) {
        require(r.values(i, j) > 0.0, ErrorKind::data,
                path + ": non-positive value at row " + std::to_string(i) + ", column " + std::to_string(j) +
                    " under log transform");
        r.values(i, j) = std::log(r.values(i, j));
      }
  }
  r.standardization = opt.standardize ? Standardization::estimate(r.values)
                                      : Standardization::identity(r.values.cols());
  return r;
}

// --------------------------------------------------------------- containers

struct NamedArray {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  std::vector<double> data;  // row-major
};

inline NamedArray named(std::string name, const Matrix& M) {
  NamedArray a{std::move(name), M.rows(), M.cols(), {}};
  a.data.reserve(static_cast<std::size_t>(M.size()));
  for (Index r = 0; r < M.rows(); ++r)
    for (Index c = 0; c < M.cols(); ++c) a.data.push_back(M(r, c));
  return a;
}

inline NamedArray named(std::string name, const std::vector<double>& v) {
  return {std::move(name), 1, static_cast<Index>(v.size()), v};
}

inline Matrix as_matrix(const NamedArray& a) {
  Matrix M(a.rows, a.cols);
  for (Index r = 0; r < a.rows; ++r)
    for (Index c = 0; c < a.cols; ++c) M(r, c) = a.data[static_cast<std::size_t>(r * a.cols + c)];
  return M;
}

/// magic '\n' | uint64 header length | JSON header | float64 arrays.
inline void write_container(const std::string& path, const std::string& magic, json header,
                            const std::vector<NamedArray>& arrays) {
  json list = json::array();
  for (const auto& a : arrays) list.push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}});
  header["arrays"] = list;
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::data, "cannot write " + path);
  out << magic << '\n';
  const std::uint64_t len = h.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& a : arrays)
    out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  require(out.good(), ErrorKind::data, "write failed for " + path);
}

struct Container {
  json header;
  std::vector<NamedArray> arrays;

  const NamedArray& get(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    fail(ErrorKind::data, "container lacks array '" + name + "'");
  }
};

/// Reads a container whose magic is `prefix` followed by a version number
/// no greater than `version`.
inline Container read_container(const std::string& path, const std::string& prefix, int version) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::data, "cannot open " + path);
  std::string magic;
  char ch;
  while (magic.size() < 32 && in.get(ch) && ch != '\n') magic.push_back(ch);
  require(in.good() && magic.size() > prefix.size() && magic.compare(0, prefix.size(), prefix) == 0, ErrorKind::data,
          path + ": bad magic, expected " + prefix + std::to_string(version));
  const std::string digits = magic.substr(prefix.size());
  require(digits.find_first_not_of("0123456789") == std::string::npos, ErrorKind::data, path + ": bad magic '" + magic + "'");
  const int found = std::stoi(digits);
  require(found <= version, ErrorKind::data,
          path + ": written by a newer format version (" + magic + "); this build reads up to " + prefix +
              std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  require(in.good() && len < (std::uint64_t{1} << 32), ErrorKind::data, path + ": corrupt header length");
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorKind::data, path + ": truncated header");
  Container c;
  try {
    c.header = json::parse(h);
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path + ": corrupt header: " + e.what());
  }
  require(c.header.contains("arrays") && c.header["arrays"].is_array(), ErrorKind::data, path + ": header lacks array list");
  for (const auto& a : c.header["arrays"]) {
    NamedArray arr;
    arr.name = a.at("name").get<std::string>();
    arr.rows = a.at("rows").get<Index>();
    arr.cols = a.at("cols").get<Index>();
    require(arr.rows >= 0 && arr.cols >= 0, ErrorKind::data, path + ": negative array shape");
    arr.data.resize(static_cast<std::size_t>(arr.rows * arr.cols));
    in.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
    require(static_cast<std::size_t>(in.gcount()) == arr.data.size() * sizeof(double), ErrorKind::data,
            path + ": truncated array '" + arr.name + "'");
    c.arrays.push_back(std::move(arr));
  }
  in.peek();
  require(in.eof(), ErrorKind::data, path + ": trailing bytes after arrays");
  return c;
}

namespace detail {

inline void ordering_arrays(const Ordering& ord, Index m_max, std::vector<NamedArray>& out) {
  const Index N = ord.size();
  std::vector<double> perm(ord.perm.begin(), ord.perm.end());
  out.push_back(named("perm", perm));
  out.push_back(named("ell", ord.ell));
  Matrix nb = Matrix::Constant(N, m_max, -1.0);
  for (Index i = 0; i < N; ++i) {
    const auto& v = ord.neighbors[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < v.size() && static_cast<Index>(k) < m_max; ++k) nb(i, static_cast<Index>(k)) = static_cast<double>(v[k]);
  }
  out.push_back(named("neighbors", nb));
}

inline Index checked_index(double v, Index bound, const std::string& what) {
  require(v >= 0.0 && v < static_cast<double>(bound) && v == std::floor(v), ErrorKind::data, "corrupt " + what + " entry");
  return static_cast<Index>(v);
}

inline Ordering ordering_from(const Container& c, Index N) {
  Ordering ord;
  const auto& perm = c.get("perm");
  const auto& ell = c.get("ell");
  const auto& nb = c.get("neighbors");
  require(perm.data.size() == static_cast<std::size_t>(N) && ell.data.size() == static_cast<std::size_t>(N) && nb.rows == N,
          ErrorKind::data, "ordering arrays do not match N");
  for (Index i = 0; i < N; ++i) {
    ord.perm.push_back(checked_index(perm.data[static_cast<std::size_t>(i)], N, "permutation"));
    ord.ell.push_back(ell.data[static_cast<std::size_t>(i)]);
    std::vector<Index> v;
    for (Index k = 0; k < nb.cols; ++k) {
      const double x = nb.data[static_cast<std::size_t>(i * nb.cols + k)];
      if (x < 0.0) break;
      v.push_back(checked_index(x, std::max<Index>(i, 1), "neighbor"));
    }
    ord.neighbors.push_back(std::move(v));
  }
  return ord;
}

inline void standardization_arrays(const Standardization& s, std::vector<NamedArray>& out) {
  out.push_back(named("mean", Matrix(s.mean.transpose())));
  out.push_back(named("sd", Matrix(s.sd.transpose())));
}

inline Standardization standardization_from(const Container& c, Index N) {
  Standardization s;
  s.mean = as_matrix(c.get("mean")).transpose();
  s.sd = as_matrix(c.get("sd")).transpose();
  require(s.mean.size() == N && s.sd.size() == N, ErrorKind::data, "standardization arrays do not match N");
  return s;
}

}  // namespace detail

inline constexpr int kMapVersion = 1;
inline constexpr int kChainVersion = 1;

/// Saves a fitted map. Rows are refitted from the stored training data on
/// load, which reproduces every array bit for bit.
inline void save_map(const std::string& path, const FittedMap& map) {
  const Hyper& h = map.hyper;
  json header{{"kind", "map"},       {"n", map.n},       {"N", map.N()},
              {"simplified", map.simplified}, {"g", h.g}, {"epsilon", h.epsilon},
              {"m_max", h.m_max},    {"nu", h.nu},       {"linear_only", h.linear_only},
              {"warning", map.warning}};
  std::vector<NamedArray> arrays;
  const auto th = h.theta();
  arrays.push_back(named("theta", std::vector<double>(th.begin(), th.end())));
  detail::standardization_arrays(map.standardization, arrays);
  detail::ordering_arrays(map.ordering, h.m_max, arrays);
  arrays.push_back(named("Y_ord", map.Y_ord));
  Matrix trace(static_cast<Index>(map.trace.size()), 11);
  for (std::size_t r = 0; r < map.trace.size(); ++r) {
    const auto& e = map.trace[r];
    trace.row(static_cast<Index>(r)) << e.restart, e.evals, e.start_loglik, e.loglik, e.converged ? 1.0 : 0.0, e.theta[0],
        e.theta[1], e.theta[2], e.theta[3], e.theta[4], e.theta[5];
  }
  arrays.push_back(named("trace", trace));
  write_container(path, "BTM" + std::to_string(kMapVersion), std::move(header), arrays);
}

inline FittedMap load_map(const std::string& path) {
  const Container c = read_container(path, "BTM", kMapVersion);
  try {
    require(c.header.at("kind") == "map", ErrorKind::data, path + ": not a map container");
    const auto n = c.header.at("n").get<Index>(), N = c.header.at("N").get<Index>();
    Hyper h;
    h.g = c.header.at("g").get<double>();
    h.epsilon = c.header.at("epsilon").get<double>();
    h.m_max = c.header.at("m_max").get<Index>();
    h.nu = c.header.at("nu").get<double>();
    h.linear_only = c.header.at("linear_only").get<bool>();
    const auto& th = c.get("theta").data;
    require(th.size() == 6, ErrorKind::data, path + ": theta must have 6 entries");
    h.set_theta({th[0], th[1], th[2], th[3], th[4], th[5]});
    Matrix Y = as_matrix(c.get("Y_ord"));
    require(Y.rows() == n && Y.cols() == N, ErrorKind::data, path + ": training data shape mismatch");
    FittedMap map = build_map_ordered(std::move(Y), detail::ordering_from(c, N), h, detail::standardization_from(c, N),
                                      c.header.at("simplified").get<bool>());
    map.warning = c.header.at("warning").get<std::string>();
    const Matrix trace = as_matrix(c.get("trace"));
    require(trace.rows() == 0 || trace.cols() == 11, ErrorKind::data, path + ": bad trace shape");
    for (Index r = 0; r < trace.rows(); ++r) {
      TraceEntry e;
      e.restart = static_cast<int>(trace(r, 0));
      e.evals = static_cast<int>(trace(r, 1));
      e.start_loglik = trace(r, 2);
      e.loglik = trace(r, 3);
      e.converged = trace(r, 4) != 0.0;
      for (int k = 0; k < 6; ++k) e.theta[static_cast<std::size_t>(k)] = trace(r, 5 + k);
      map.trace.push_back(e);
    }
    return map;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path + ": corrupt header: " + e.what());
  }
}

inline void save_chain(const std::string& path, const DPMChain& chain) {
  const DPMContext& ctx = chain.context;
  const Index L = static_cast<Index>(chain.states.size()), N = ctx.N(), n = ctx.n();
  json header{{"kind", "dpm"}, {"n", n}, {"N", N}, {"states", L}, {"g", ctx.g},
              {"epsilon", ctx.epsilon}, {"m_max", ctx.m_max}, {"nu", ctx.nu}};
  std::vector<NamedArray> arrays;
  detail::standardization_arrays(ctx.standardization, arrays);
  detail::ordering_arrays(ctx.ordering, ctx.m_max, arrays);
  arrays.push_back(named("Y_ord", ctx.Y_ord));
  Matrix theta(L, 10), iter(L, 1), eps(L * N, n), labels(L * N, n), clusters(L * N, 1), fresh(L * N, 2);
  std::vector<double> mu, d2;
  for (Index l = 0; l < L; ++l) {
    const auto& st = chain.states[static_cast<std::size_t>(l)];
    for (int k = 0; k < 10; ++k) theta(l, k) = st.theta[static_cast<std::size_t>(k)];
    iter(l, 0) = static_cast<double>(st.iteration);
    for (Index i = 0; i < N; ++i) {
      const auto& s = st.rows[static_cast<std::size_t>(i)];
      const Index r = l * N + i;
      eps.row(r) = s.eps.transpose();
      for (Index j = 0; j < n; ++j) labels(r, j) = s.labels[static_cast<std::size_t>(j)];
      clusters(r, 0) = static_cast<double>(s.clusters());
      fresh(r, 0) = s.fresh_mu;
      fresh(r, 1) = s.fresh_d2;
      mu.insert(mu.end(), s.mu.begin(), s.mu.end());
      d2.insert(d2.end(), s.d2.begin(), s.d2.end());
    }
  }
  arrays.push_back(named("theta", theta));
  arrays.push_back(named("iteration", iter));
  arrays.push_back(named("eps", eps));
  arrays.push_back(named("labels", labels));
  arrays.push_back(named("clusters", clusters));
  arrays.push_back(named("mu", mu));
  arrays.push_back(named("d2", d2));
  arrays.push_back(named("fresh", fresh));
  arrays.push_back(named("acceptance", std::vector<double>(chain.acceptance.begin(), chain.acceptance.end())));
  arrays.push_back(named("final_scale", std::vector<double>(chain.final_scale.begin(), chain.final_scale.end())));
  write_container(path, "BTMDPM" + std::to_string(kChainVersion), std::move(header), arrays);
}

inline DPMChain load_chain(const std::string& path) {
  const Container c = read_container(path, "BTMDPM", kChainVersion);
  try {
    require(c.header.at("kind") == "dpm", ErrorKind::data, path + ": not a DPM container");
    const auto n = c.header.at("n").get<Index>(), N = c.header.at("N").get<Index>(), L = c.header.at("states").get<Index>();
    DPMChain chain;
    DPMContext& ctx = chain.context;
    ctx.g = c.header.at("g").get<double>();
    ctx.epsilon = c.header.at("epsilon").get<double>();
    ctx.m_max = c.header.at("m_max").get<Index>();
    ctx.nu = c.header.at("nu").get<double>();
    ctx.ordering = detail::ordering_from(c, N);
    ctx.standardization = detail::standardization_from(c, N);
    ctx.Y_ord = as_matrix(c.get("Y_ord"));
    require(ctx.Y_ord.rows() == n && ctx.Y_ord.cols() == N, ErrorKind::data, path + ": training data shape mismatch");
    const Matrix theta = as_matrix(c.get("theta")), iter = as_matrix(c.get("iteration")), eps = as_matrix(c.get("eps")),
                 labels = as_matrix(c.get("labels")), clusters = as_matrix(c.get("clusters")),
                 fresh = as_matrix(c.get("fresh"));
    const auto& mu = c.get("mu").data;
    const auto& d2 = c.get("d2").data;
    require(theta.rows() == L && theta.cols() == 10 && eps.rows() == L * N && eps.cols() == n && labels.rows() == L * N &&
                clusters.rows() == L * N && fresh.rows() == L * N && mu.size() == d2.size(),
            ErrorKind::data, path + ": chain array shapes inconsistent");
    std::size_t offset = 0;
    for (Index l = 0; l < L; ++l) {
      DPMState st;
      for (int k = 0; k < 10; ++k) st.theta[static_cast<std::size_t>(k)] = theta(l, k);
      st.iteration = static_cast<Index>(iter(l, 0));
      st.rows.resize(static_cast<std::size_t>(N));
      for (Index i = 0; i < N; ++i) {
        auto& s = st.rows[static_cast<std::size_t>(i)];
        const Index r = l * N + i;
        const auto K = detail::checked_index(clusters(r, 0) - 1.0, n, "cluster count") + 1;
        require(offset + static_cast<std::size_t>(K) <= mu.size(), ErrorKind::data, path + ": truncated cluster parameters");
        s.eps = eps.row(r).transpose();
        s.labels.resize(static_cast<std::size_t>(n));
        for (Index j = 0; j < n; ++j) s.labels[static_cast<std::size_t>(j)] = static_cast<int>(detail::checked_index(labels(r, j), K, "label"));
        s.mu.assign(mu.begin() + static_cast<std::ptrdiff_t>(offset), mu.begin() + static_cast<std::ptrdiff_t>(offset + K));
        s.d2.assign(d2.begin() + static_cast<std::ptrdiff_t>(offset), d2.begin() + static_cast<std::ptrdiff_t>(offset + K));
        offset += static_cast<std::size_t>(K);
        s.fresh_mu = fresh(r, 0);
        s.fresh_d2 = fresh(r, 1);
      }
      chain.states.push_back(std::move(st));
    }
    require(offset == mu.size(), ErrorKind::data, path + ": unused cluster parameters");
    const auto& acc = c.get("acceptance").data;
    const auto& sc = c.get("final_scale").data;
    require(acc.size() == 3 && sc.size() == 3, ErrorKind::data, path + ": bad sampler statistics");
    for (int b = 0; b < 3; ++b) chain.acceptance[static_cast<std::size_t>(b)] = acc[static_cast<std::size_t>(b)], chain.final_scale[static_cast<std::size_t>(b)] = sc[static_cast<std::size_t>(b)];
    return chain;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path + ": corrupt header: " + e.what());
  }
}

// ------------------------------------------------------------------ config

namespace detail {

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, std::string("config key '") + key + "': " + e.what());
  }
}

inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> known) {
  require(j.is_object(), ErrorKind::usage, "config section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* q : known) ok = ok || k == q;
    require(ok, ErrorKind::usage, "unknown config key '" + section + "." + k + "'");
  }
}

}  // namespace detail

/// Run configuration read from a JSON file with optional sections "fit",
/// "dpm" and "eval". Keys absent from the file keep their defaults.
struct RunConfig {
  FitConfig fit;
  DPMConfig dpm;
  double samp_tap_ridge = 1e-6;
  double correlation_range = 0.0;  // 0: order by location distance
};

inline RunConfig parse_config(const json& j) {
  RunConfig rc;
  detail::check_keys(j, "", {"fit", "dpm", "eval"});
  if (j.contains("fit")) {
    const json& f = j["fit"];
    detail::check_keys(f, "fit", {"g", "epsilon", "m_max", "nu", "linear_only", "simplified", "standardize", "restarts",
                                  "ftol", "max_evals", "initial_step", "restart_spread", "start", "optimize",
                                  "first_point", "correlation_range", "theta"});
    auto& c = rc.fit;
    detail::take(f, "g", c.hyper.g);
    detail::take(f, "epsilon", c.hyper.epsilon);
    detail::take(f, "m_max", c.hyper.m_max);
    detail::take(f, "nu", c.hyper.nu);
    detail::take(f, "linear_only", c.hyper.linear_only);
    detail::take(f, "simplified", c.simplified);
    detail::take(f, "standardize", c.standardize);
    detail::take(f, "restarts", c.restarts);
    detail::take(f, "ftol", c.optimizer.ftol);
    detail::take(f, "max_evals", c.optimizer.max_evals);
    detail::take(f, "initial_step", c.optimizer.initial_step);
    detail::take(f, "restart_spread", c.restart_spread);
    detail::take(f, "optimize", c.optimize);
    if (f.contains("start")) {
      std::array<double, 6> s{};
      detail::take(f, "start", s);
      c.start = s;
    }
    if (f.contains("theta")) {
      std::array<double, 6> s{};
      detail::take(f, "theta", s);
      c.hyper.set_theta(s);
    }
    if (f.contains("first_point")) {
      Index p = 0;
      detail::take(f, "first_point", p);
      c.first_point = p;
    }
    if (f.contains("correlation_range")) {
      double r = 0.0;
      detail::take(f, "correlation_range", r);
      c.correlation_range = r;
    }
  }
  if (j.contains("dpm")) {
    const json& d = j["dpm"];
    detail::check_keys(d, "dpm", {"iterations", "burn_in", "thin", "theta0", "g", "epsilon", "m_max", "nu", "standardize",
                                  "proposal_scale", "adapt", "target_accept", "update_block", "collapse_gp_block",
                                  "theta_bound"});
    auto& c = rc.dpm;
    detail::take(d, "iterations", c.iterations);
    detail::take(d, "burn_in", c.burn_in);
    detail::take(d, "thin", c.thin);
    detail::take(d, "theta0", c.theta0);
    detail::take(d, "g", c.g);
    detail::take(d, "epsilon", c.epsilon);
    detail::take(d, "m_max", c.m_max);
    detail::take(d, "nu", c.nu);
    detail::take(d, "standardize", c.standardize);
    detail::take(d, "proposal_scale", c.proposal_scale);
    detail::take(d, "adapt", c.adapt);
    detail::take(d, "target_accept", c.target_accept);
    detail::take(d, "update_block", c.update_block);
    detail::take(d, "collapse_gp_block", c.collapse_gp_block);
    detail::take(d, "theta_bound", c.theta_bound);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    detail::check_keys(e, "eval", {"samp_tap_ridge"});
    detail::take(e, "samp_tap_ridge", rc.samp_tap_ridge);
  }
  return rc;
}

inline RunConfig read_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::usage, "cannot open config " + path);
  try {
    return parse_config(json::parse(in));
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, path + ": " + e.what());
  }
}

}  // namespace btmap::io
