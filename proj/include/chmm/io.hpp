#pragma once

// File formats: comma-separated labeled matrices ("NA" for missing), JSON
// model archives and simulation configs, call files. All writes go through a
// temporary file and a rename.

#include "chmm/error.hpp"
#include "chmm/model.hpp"
#include "chmm/pipeline.hpp"
#include "chmm/simulation.hpp"
#include "chmm/table.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace chmm {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw InputError("write failed for '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw InputError("cannot move output into place at '" + path.string() + "'");
  }
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw InvariantError("sha256: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 0xf];
  }
  return out;
}

inline std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Labeled matrices

struct LabeledMatrix {
  std::string corner = "id";
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  Matrix values;  // NaN = NA
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(start, nl - start));
    if (!line.empty()) out.push_back(line);
    start = nl + 1;
  }
  return out;
}

inline double parse_cell(std::string_view cell, const std::string& where) {
  if (cell == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = cell.data();
  if (!cell.empty() && cell.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty())
    throw InputError("unparseable value '" + std::string(cell) + "' at " + where);
  if (!std::isfinite(v)) throw InputError("non-finite value '" + std::string(cell) + "' at " + where);
  return v;
}

}  // namespace detail

/// Header row: corner label then column ids. Each following row: an id, then values.
inline LabeledMatrix parse_labeled_matrix(std::string_view text, const std::string& source = "input") {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw InputError(source + ": empty file");
  LabeledMatrix m;
  const auto head = detail::split_commas(lines[0]);
  if (head.size() < 2) throw InputError(source + ": header needs at least one column id");
  m.corner = std::string(head[0]);
  for (std::size_t k = 1; k < head.size(); ++k) m.col_ids.emplace_back(head[k]);
  const auto n_rows = static_cast<Eigen::Index>(lines.size() - 1);
  const auto n_cols = static_cast<Eigen::Index>(m.col_ids.size());
  m.values.resize(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto cells = detail::split_commas(lines[static_cast<std::size_t>(r) + 1]);
    if (static_cast<Eigen::Index>(cells.size()) != n_cols + 1)
      throw InputError(source + ": row " + std::to_string(r + 1) + " has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(n_cols + 1));
    m.row_ids.emplace_back(cells[0]);
    for (Eigen::Index c = 0; c < n_cols; ++c)
      m.values(r, c) = detail::parse_cell(cells[static_cast<std::size_t>(c) + 1],
                                          source + " row " + std::to_string(r + 1) + " column " + std::to_string(c + 1));
  }
  return m;
}

inline LabeledMatrix read_labeled_matrix(const std::filesystem::path& path) {
  return parse_labeled_matrix(read_file(path), path.string());
}

inline std::string format_labeled_matrix(const LabeledMatrix& m) {
  std::string out = m.corner;
  for (const auto& c : m.col_ids) out += ',' + c;
  out += '\n';
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    out += m.row_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) out += ',' + format_double(m.values(r, c));
    out += '\n';
  }
  return out;
}

inline void write_labeled_matrix(const std::filesystem::path& path, const LabeledMatrix& m) {
  write_file_atomic(path, format_labeled_matrix(m));
}

inline void write_table(const std::filesystem::path& path, const Table& t) { write_file_atomic(path, t.to_csv()); }

namespace detail {

inline void check_unique(const std::vector<std::string>& ids, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw InputError(what + ": duplicated identifier '" + id + "'");
}

}  // namespace detail

/// Rows = individuals, columns = loci. At least one individual and two loci.
inline LabeledMatrix read_signal(const std::filesystem::path& path) {
  LabeledMatrix m = read_labeled_matrix(path);
  if (m.values.rows() < 1) throw InputError(path.string() + ": signal needs at least one individual");
  if (m.values.cols() < 2) throw InputError(path.string() + ": signal needs at least two loci");
  detail::check_unique(m.row_ids, path.string());
  return m;
}

struct KinshipLoad {
  SimilarityMatrix similarity;  // aligned to the requested ids, symmetrized, negatives clamped to 0
  Matrix raw;                   // aligned, symmetrized, before clamping
  double max_asymmetry = 0.0;
  std::size_t n_clamped = 0;    // off-diagonal entries set to 0
};

/// Symmetrizes as (S + S^T)/2, then selects and orders rows/columns by `ids`.
/// Identifiers not in `ids` are ignored; every id must be present.
inline KinshipLoad align_kinship(const LabeledMatrix& m, const std::vector<std::string>& ids,
                                 const std::string& source = "kinship") {
  if (m.values.rows() != m.values.cols()) throw InputError(source + ": kinship matrix is not square");
  if (m.row_ids != m.col_ids) throw InputError(source + ": row and column identifiers differ");
  detail::check_unique(m.row_ids, source);
  if (!m.values.allFinite()) throw InputError(source + ": kinship contains missing or non-finite values");
  std::map<std::string, Eigen::Index> index;
  for (std::size_t k = 0; k < m.row_ids.size(); ++k) index[m.row_ids[k]] = static_cast<Eigen::Index>(k);
  std::vector<Eigen::Index> pick;
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw InputError(source + ": no kinship entry for individual '" + id + "'");
    pick.push_back(it->second);
  }
  KinshipLoad out;
  const auto n = static_cast<Eigen::Index>(ids.size());
  out.raw.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      const double sab = m.values(pick[static_cast<std::size_t>(a)], pick[static_cast<std::size_t>(b)]);
      const double sba = m.values(pick[static_cast<std::size_t>(b)], pick[static_cast<std::size_t>(a)]);
      out.max_asymmetry = std::max(out.max_asymmetry, std::abs(sab - sba));
      out.raw(a, b) = 0.5 * (sab + sba);
    }
  out.similarity.s = out.raw;
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      if (a != b && out.similarity.s(a, b) < 0.0) {
        out.similarity.s(a, b) = 0.0;
        ++out.n_clamped;
      }
  out.similarity.validate();
  return out;
}

inline KinshipLoad read_kinship(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  return align_kinship(read_labeled_matrix(path), ids, path.string());
}

// ---------------------------------------------------------------------------
// Domain transforms

/// X_it = log2(observed_it / expected_t).
inline Matrix compute_lrr(const Matrix& observed, const Vector& expected) {
  if (observed.cols() != expected.size()) throw InputError("compute_lrr: observed and expected lengths differ");
  for (Eigen::Index t = 0; t < expected.size(); ++t)
    if (!(expected(t) > 0.0) || !std::isfinite(expected(t)))
      throw InputError("compute_lrr: nonpositive expected intensity at locus " + std::to_string(t + 1));
  Matrix out(observed.rows(), observed.cols());
  for (Eigen::Index i = 0; i < observed.rows(); ++i)
    for (Eigen::Index t = 0; t < observed.cols(); ++t) {
      const double v = observed(i, t);
      if (std::isnan(v)) {
        out(i, t) = v;
        continue;
      }
      if (!(v > 0.0) || !std::isfinite(v))
        throw InputError("compute_lrr: nonpositive intensity at row " + std::to_string(i + 1) + ", locus " +
                         std::to_string(t + 1));
      out(i, t) = std::log2(v / expected(t));
    }
  return out;
}

struct SnpKinship {
  Matrix raw;                   // s_ij(alpha), may be negative
  SimilarityMatrix similarity;  // negatives clamped to 0 off the diagonal
  std::size_t n_dropped = 0;    // monomorphic columns removed (alpha != 0 only)
};

/// s_ij(alpha) = (1/L) sum_t (Z_it - 2p_t)(Z_jt - 2p_t) / [2p_t(1-p_t)]^alpha with
/// p_t = column mean / 2.
inline SnpKinship kinship_from_snp(const Matrix& z, int alpha) {
  if (z.rows() < 1 || z.cols() < 1) throw InputError("kinship_from_snp: need at least one individual and one marker");
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const double v = z.data()[k];
    if (v != 0.0 && v != 1.0 && v != 2.0) throw InputError("kinship_from_snp: allele counts must be 0, 1 or 2");
  }
  SnpKinship out;
  out.raw = Matrix::Zero(z.rows(), z.rows());
  std::size_t used = 0;
  for (Eigen::Index t = 0; t < z.cols(); ++t) {
    const double p = z.col(t).mean() / 2.0;
    const bool monomorphic = p == 0.0 || p == 1.0;
    if (alpha != 0 && monomorphic) {
      ++out.n_dropped;
      continue;
    }
    const double scale = alpha == 0 ? 1.0 : std::pow(2.0 * p * (1.0 - p), -static_cast<double>(alpha));
    const Vector c = z.col(t).array() - 2.0 * p;
    out.raw.noalias() += scale * c * c.transpose();
    ++used;
  }
  if (used == 0) throw InputError("kinship_from_snp: every marker is monomorphic");
  out.raw /= static_cast<double>(used);
  out.similarity.s = out.raw;
  for (Eigen::Index a = 0; a < z.rows(); ++a)
    for (Eigen::Index b = 0; b < z.rows(); ++b)
      if (a != b && out.similarity.s(a, b) < 0.0) out.similarity.s(a, b) = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// State labels and call files

/// Q = 3 with the middle state normal: deletion / normal / amplification.
/// Otherwise del_k below the normal state and amp_k above it, k counted
/// outward from the normal state.
inline std::vector<std::string> state_labels(const EmissionParams& emission) {
  const std::size_t q = emission.n_states();
  const std::size_t normal = normal_state(emission);
  if (q == 3 && normal == 1) return {"deletion", "normal", "amplification"};
  std::vector<std::string> out(q);
  for (std::size_t r = 0; r < q; ++r) {
    if (r == normal) out[r] = "normal";
    else if (r < normal) out[r] = "del_" + std::to_string(normal - r);
    else out[r] = "amp_" + std::to_string(r - normal);
  }
  return out;
}

struct CallBlock {
  std::vector<std::string> individuals;
  std::vector<std::string> labels;
  Decoded decoded;
};

/// One row per (individual, locus): identifiers, called label, then the
/// posterior weight of each state. Blocks may use different parameters, so
/// tau columns are named by state index.
inline Table calls_table(const std::vector<std::string>& loci, const std::vector<CallBlock>& blocks) {
  std::size_t q = 0;
  for (const auto& b : blocks) q = std::max(q, b.labels.size());
  Table t;
  t.header = {"individual", "locus", "call", "state"};
  for (std::size_t r = 0; r < q; ++r) t.header.push_back("tau_" + std::to_string(r));
  for (const auto& b : blocks)
    for (std::size_t i = 0; i < b.individuals.size(); ++i)
      for (std::size_t l = 0; l < loci.size(); ++l) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto tt = static_cast<Eigen::Index>(l);
        const int s = b.decoded.states(ii, tt);
        std::vector<std::string> row = {b.individuals[i], loci[l], b.labels[static_cast<std::size_t>(s)],
                                        std::to_string(s)};
        for (std::size_t r = 0; r < q; ++r)
          row.push_back(r < b.labels.size() ? format_double(b.decoded.tau[i](tt, static_cast<Eigen::Index>(r))) : "NA");
        t.add(std::move(row));
      }
  return t;
}

// ---------------------------------------------------------------------------
// Groups

struct Group {
  std::string name;
  std::vector<std::string> individuals;  // in signal order
};

/// Two columns with a header line: individual,group. Every signal individual
/// must be listed exactly once; groups keep first-appearance order.
inline std::vector<Group> parse_groups(std::string_view text, const std::vector<std::string>& signal_ids,
                                       const std::string& source = "groups") {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw InputError(source + ": empty file");
  std::map<std::string, std::string> assignment;
  std::vector<std::string> order;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto cells = detail::split_commas(lines[k]);
    if (cells.size() != 2 || cells[0].empty() || cells[1].empty())
      throw InputError(source + ": line " + std::to_string(k + 1) + " must be 'individual,group'");
    const std::string id(cells[0]);
    const std::string g(cells[1]);
    if (!assignment.emplace(id, g).second) throw InputError(source + ": individual '" + id + "' assigned twice");
    if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
  }
  const std::set<std::string> known(signal_ids.begin(), signal_ids.end());
  for (const auto& [id, g] : assignment)
    if (!known.count(id)) throw InputError(source + ": individual '" + id + "' is not in the signal file");
  std::vector<Group> out;
  for (const auto& g : order) out.push_back({g, {}});
  for (const auto& id : signal_ids) {
    const auto it = assignment.find(id);
    if (it == assignment.end()) throw InputError(source + ": individual '" + id + "' has no group");
    const auto pos = std::find(order.begin(), order.end(), it->second) - order.begin();
    out[static_cast<std::size_t>(pos)].individuals.push_back(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model archive

struct ArchiveGroup {
  std::string name;
  std::vector<std::string> individuals;
  FittedModel fit;
};

struct ModelArchive {
  std::string version = kVersion;
  std::string signal_sha256;
  std::string kinship_sha256;
  std::vector<std::string> loci;
  FitOptions options;
  std::vector<ArchiveGroup> groups;
};

namespace detail {

using nlohmann::json;

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

inline json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
  return a;
}

inline Vector vector_from_json(const json& a) {
  if (!a.is_array()) throw InputError("archive: expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) v(static_cast<Eigen::Index>(k)) = a[k].get<double>();
  return v;
}

inline Matrix matrix_from_json(const json& a, Eigen::Index cols) {
  if (!a.is_array()) throw InputError("archive: expected an array of rows");
  Matrix m(static_cast<Eigen::Index>(a.size()), cols);
  for (std::size_t r = 0; r < a.size(); ++r) {
    const Vector row = vector_from_json(a[r]);
    if (row.size() != cols) throw InputError("archive: ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

inline json params_to_json(const ModelParams& p) {
  return json{{"n_individuals", p.dims.n_individuals},
              {"n_loci", p.dims.n_loci},
              {"n_states", p.dims.n_states},
              {"emission", {{"mode", to_string(p.emission.mode)}, {"means", to_json(p.emission.means)},
                            {"std_devs", to_json(p.emission.std_devs)}}},
              {"initial", to_json(p.chain.initial)},
              {"transition", to_json(p.chain.transition)},
              {"log_omega", p.coupling.log_omega},
              {"similarity", to_json(p.similarity.s)}};
}

inline EmissionMode parse_mode(const std::string& s) {
  if (s == to_string(EmissionMode::homoscedastic)) return EmissionMode::homoscedastic;
  if (s == to_string(EmissionMode::heteroscedastic)) return EmissionMode::heteroscedastic;
  throw InputError("unknown emission mode '" + s + "'");
}

inline ModelParams params_from_json(const json& j) {
  ModelParams p;
  p.dims.n_individuals = j.at("n_individuals").get<std::size_t>();
  p.dims.n_loci = j.at("n_loci").get<std::size_t>();
  p.dims.n_states = j.at("n_states").get<std::size_t>();
  const auto q = static_cast<Eigen::Index>(p.dims.n_states);
  p.emission.mode = parse_mode(j.at("emission").at("mode").get<std::string>());
  p.emission.means = vector_from_json(j.at("emission").at("means"));
  p.emission.std_devs = vector_from_json(j.at("emission").at("std_devs"));
  p.chain.initial = vector_from_json(j.at("initial"));
  p.chain.transition = matrix_from_json(j.at("transition"), q);
  p.coupling.log_omega = j.at("log_omega").get<double>();
  p.similarity.s = matrix_from_json(j.at("similarity"), static_cast<Eigen::Index>(p.dims.n_individuals));
  p.validate();
  return p;
}

}  // namespace detail

inline std::string archive_to_string(const ModelArchive& a) {
  using nlohmann::json;
  json groups = json::array();
  for (const auto& g : a.groups)
    groups.push_back({{"name", g.name},
                      {"individuals", g.individuals},
                      {"method", to_string(g.fit.method)},
                      {"params", detail::params_to_json(g.fit.params)},
                      {"trace", g.fit.trace},
                      {"n_iterations", g.fit.n_iterations},
                      {"converged", g.fit.converged}});
  const FitOptions& o = a.options;
  json doc = {{"format", "chmm-model"},
              {"version", a.version},
              {"inputs", {{"signal_sha256", a.signal_sha256}, {"kinship_sha256", a.kinship_sha256}}},
              {"loci", a.loci},
              {"options", {{"method", to_string(o.method)}, {"n_states", o.n_states}, {"log_omega", o.log_omega},
                           {"emission_mode", to_string(o.mode)}, {"max_iter", o.max_iter}, {"tol", o.tol},
                           {"cap", o.cap}, {"ve_sweeps", o.vem.n_ve_sweeps}}},
              {"groups", groups}};
  return doc.dump(2) + "\n";
}

inline ModelArchive archive_from_string(const std::string& text, const std::string& source = "archive") {
  using nlohmann::json;
  ModelArchive a;
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "chmm-model") throw InputError(source + ": not a model archive");
    a.version = doc.at("version").get<std::string>();
    a.signal_sha256 = doc.at("inputs").at("signal_sha256").get<std::string>();
    a.kinship_sha256 = doc.at("inputs").at("kinship_sha256").get<std::string>();
    a.loci = doc.at("loci").get<std::vector<std::string>>();
    const json& o = doc.at("options");
    a.options.method = parse_method(o.at("method").get<std::string>());
    a.options.n_states = o.at("n_states").get<std::size_t>();
    a.options.log_omega = o.at("log_omega").get<double>();
    a.options.mode = detail::parse_mode(o.at("emission_mode").get<std::string>());
    a.options.max_iter = o.at("max_iter").get<int>();
    a.options.tol = o.at("tol").get<double>();
    a.options.cap = o.at("cap").get<std::size_t>();
    a.options.vem.n_ve_sweeps = o.at("ve_sweeps").get<int>();
    for (const json& g : doc.at("groups")) {
      ArchiveGroup ag;
      ag.name = g.at("name").get<std::string>();
      ag.individuals = g.at("individuals").get<std::vector<std::string>>();
      ag.fit.method = parse_method(g.at("method").get<std::string>());
      ag.fit.params = detail::params_from_json(g.at("params"));
      ag.fit.trace = g.at("trace").get<std::vector<double>>();
      ag.fit.n_iterations = g.at("n_iterations").get<int>();
      ag.fit.converged = g.at("converged").get<bool>();
      if (ag.individuals.size() != ag.fit.params.n_individuals())
        throw InputError(source + ": group '" + ag.name + "' individual count does not match its parameters");
      a.groups.push_back(std::move(ag));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source + ": malformed archive (" + e.what() + ")");
  }
  if (a.groups.empty()) throw InputError(source + ": archive has no groups");
  return a;
}

inline void save_archive(const std::filesystem::path& path, const ModelArchive& a) {
  write_file_atomic(path, archive_to_string(a));
}

inline ModelArchive load_archive(const std::filesystem::path& path) {
  return archive_from_string(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Simulation config (same JSON document style as the archive)

/// Keys (all optional): n_individuals, n_loci, scenario, sigma, log_omega,
/// spacing, window_mean, seed. The similarity is set by the caller.
inline SimulationConfig simulation_config_from_string(const std::string& text, const std::string& source = "config") {
  using nlohmann::json;
  SimulationConfig c;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw InputError(source + ": expected a JSON object");
    static const std::set<std::string> known = {"n_individuals", "n_loci", "scenario", "sigma", "log_omega",
                                                "spacing", "window_mean", "seed"};
    for (const auto& [k, v] : doc.items())
      if (!known.count(k)) throw InputError(source + ": unknown key '" + k + "'");
    c.n_individuals = doc.value("n_individuals", c.n_individuals);
    c.n_loci = doc.value("n_loci", c.n_loci);
    if (doc.contains("scenario")) c.scenario = parse_scenario(doc.at("scenario").get<std::string>());
    c.sigma = doc.value("sigma", c.sigma);
    c.log_omega = doc.value("log_omega", c.log_omega);
    c.spacing = doc.value("spacing", c.spacing);
    c.window_mean = doc.value("window_mean", c.window_mean);
    c.seed = doc.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source + ": malformed config (" + e.what() + ")");
  }
  return c;
}

inline std::string simulation_config_to_string(const SimulationConfig& c) {
  nlohmann::json doc = {{"n_individuals", c.n_individuals}, {"n_loci", c.n_loci},
                        {"scenario", to_string(c.scenario)}, {"sigma", c.sigma},
                        {"log_omega", c.log_omega},         {"spacing", c.spacing},
                        {"window_mean", c.window_mean},     {"seed", c.seed}};
  return doc.dump(2) + "\n";
}

}  // namespace chmm
