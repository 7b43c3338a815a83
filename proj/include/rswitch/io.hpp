#pragma once

// File formats. Model, generator and plant files are JSON documents; reports
// are JSON (the structured-text format) or CSV. Reals in CSV are printed with
// 17 significant digits; JSON numbers use the shortest representation that
// parses back to the same double. Either way a write/read cycle is bit-exact.
//
//   model:      {"modes": N, "transition": [N*N reals, row-major],
//                "dwell": [{"kind": "dirac"|"exponential"|"uniform"|"lognormal",
//                           "params": [...]}, ...]}
//   generators: {"dimension": d, "generators": [[d*d reals, row-major], ...]}
//   plant:      {"subsystems": [{"state_dim": d_i, "input_dim": m_i,
//                                "A": [d_i*d_i reals], "B": [d_i*m_i reals]}, ...]}

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "rswitch/cocycle.hpp"
#include "rswitch/error.hpp"
#include "rswitch/linalg.hpp"
#include "rswitch/lyapunov.hpp"
#include "rswitch/pe_analysis.hpp"
#include "rswitch/stabilization.hpp"
#include "rswitch/switching_model.hpp"

namespace rswitch::io {

using Json = nlohmann::json;

/// "%.17g": enough digits to identify every double.
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a temporary sibling file and renames it into place, so
/// readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move output into place at " + path.string());
  }
}

/// FNV-1a, printed as 16 hex digits. Stable across platforms and runs.
inline std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline Json parse_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, what + ": " + e.what());
  }
}

inline const Json& field(const Json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::Parse, what + ": missing field '" + key + "'");
  return j.at(key);
}

inline std::size_t get_size(const Json& j, const char* key, const std::string& what) {
  const Json& v = field(j, key, what);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw Error(ErrorCode::Parse, what + ": field '" + key + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

inline std::vector<double> get_reals(const Json& v, const std::string& what) {
  if (!v.is_array()) throw Error(ErrorCode::Parse, what + ": expected an array of reals");
  std::vector<double> out;
  out.reserve(v.size());
  for (const Json& x : v) {
    if (!x.is_number()) throw Error(ErrorCode::Parse, what + ": non-numeric entry");
    out.push_back(x.get<double>());
  }
  return out;
}

inline Matrix get_matrix(const Json& v, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  const std::vector<double> data = get_reals(v, what);
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::Dimension, what + ": expected " + std::to_string(rows * cols) + " entries, got " +
                                          std::to_string(data.size()));
  }
  return from_row_major(rows, cols, data);
}

inline Json matrix_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", to_row_major(m)}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model files

inline DwellDistribution dwell_from_json(const Json& j) {
  const std::string what = "dwell entry";
  const Json& kind = detail::field(j, "kind", what);
  if (!kind.is_string()) throw Error(ErrorCode::Parse, what + ": 'kind' must be a string");
  const std::vector<double> p = detail::get_reals(detail::field(j, "params", what), what);
  const std::string k = kind.get<std::string>();
  auto need = [&](std::size_t count) {
    if (p.size() != count) {
      throw Error(ErrorCode::BadDwellParameter,
                  k + " takes " + std::to_string(count) + " parameter(s), got " + std::to_string(p.size()));
    }
  };
  if (k == "dirac") { need(1); return DwellDistribution::dirac(p[0]); }
  if (k == "exponential") { need(1); return DwellDistribution::exponential(p[0]); }
  if (k == "uniform") { need(2); return DwellDistribution::uniform(p[0], p[1]); }
  if (k == "lognormal") { need(2); return DwellDistribution::log_normal(p[0], p[1]); }
  throw Error(ErrorCode::BadDwellParameter, "unknown dwell kind '" + k + "'");
}

inline Json dwell_to_json(const DwellDistribution& d) {
  return Json{{"kind", std::string(d.name())}, {"params", d.params()}};
}

inline SwitchingModel model_from_json(const Json& j) {
  const std::string what = "model";
  const std::size_t n = detail::get_size(j, "modes", what);
  const auto ni = static_cast<Eigen::Index>(n);
  Matrix m = detail::get_matrix(detail::field(j, "transition", what), ni, ni, "model transition");
  const Json& dwell = detail::field(j, "dwell", what);
  if (!dwell.is_array()) throw Error(ErrorCode::Parse, "model: 'dwell' must be an array");
  std::vector<DwellDistribution> laws;
  for (const Json& d : dwell) laws.push_back(dwell_from_json(d));
  return validate_model(n, std::move(m), std::move(laws));
}

inline Json model_to_json(const SwitchingModel& model) {
  Json dwell = Json::array();
  for (const auto& d : model.dwell()) dwell.push_back(dwell_to_json(d));
  return Json{{"modes", model.modes()}, {"transition", to_row_major(model.transition())}, {"dwell", dwell}};
}

inline SwitchingModel parse_model(const std::string& text) { return model_from_json(detail::parse_text(text, "model")); }

// ---------------------------------------------------------------------------
// Generator files

inline GeneratorSet generators_from_json(const Json& j) {
  const std::string what = "generators";
  const auto d = static_cast<Eigen::Index>(detail::get_size(j, "dimension", what));
  const Json& list = detail::field(j, "generators", what);
  if (!list.is_array()) throw Error(ErrorCode::Parse, "generators: 'generators' must be an array");
  std::vector<Matrix> gens;
  for (const Json& g : list) gens.push_back(detail::get_matrix(g, d, d, "generator"));
  return GeneratorSet(std::move(gens));
}

inline Json generators_to_json(const GeneratorSet& gen) {
  Json list = Json::array();
  for (const auto& g : gen.matrices()) list.push_back(to_row_major(g));
  return Json{{"dimension", gen.dimension()}, {"generators", list}};
}

inline GeneratorSet parse_generators(const std::string& text) {
  return generators_from_json(detail::parse_text(text, "generators"));
}

// ---------------------------------------------------------------------------
// Plant files

inline std::vector<Subsystem> subsystems_from_json(const Json& j) {
  const Json& list = detail::field(j, "subsystems", "plant");
  if (!list.is_array()) throw Error(ErrorCode::Parse, "plant: 'subsystems' must be an array");
  std::vector<Subsystem> out;
  for (const Json& s : list) {
    const auto d = static_cast<Eigen::Index>(detail::get_size(s, "state_dim", "subsystem"));
    const auto m = static_cast<Eigen::Index>(detail::get_size(s, "input_dim", "subsystem"));
    out.push_back({detail::get_matrix(detail::field(s, "A", "subsystem"), d, d, "subsystem A"),
                   detail::get_matrix(detail::field(s, "B", "subsystem"), d, m, "subsystem B")});
  }
  return out;
}

inline Json subsystems_to_json(const std::vector<Subsystem>& subsystems) {
  Json list = Json::array();
  for (const auto& s : subsystems) {
    list.push_back(Json{{"state_dim", s.state_dim()},
                        {"input_dim", s.input_dim()},
                        {"A", to_row_major(s.a)},
                        {"B", to_row_major(s.b)}});
  }
  return Json{{"subsystems", list}};
}

inline ControlPlant parse_plant(const std::string& text) {
  return build_plant(subsystems_from_json(detail::parse_text(text, "plant")));
}

// ---------------------------------------------------------------------------
// Reports

inline Json spectrum_to_json(const LyapunovSpectrum& s) {
  Json entries = Json::array();
  for (const auto& e : s.entries) {
    entries.push_back(Json{{"exponent", e.exponent},
                           {"continuous_exponent", e.continuous_exponent},
                           {"multiplicity", e.multiplicity}});
  }
  return Json{{"entries", entries},
              {"raw", s.raw},
              {"steps", s.steps},
              {"elapsed_time", s.elapsed_time},
              {"cluster_tolerance", s.cluster_tolerance}};
}

inline Json mc_to_json(const MonteCarloEstimate& mc) {
  return Json{{"mean", mc.mean}, {"half_width", mc.half_width}, {"n", mc.n}, {"trials", mc.trials}};
}

inline Json report_to_json(const LyapunovReport& r) {
  return Json{{"lambda_max_discrete", r.lambda_max_discrete},
              {"lambda_max_continuous", r.lambda_max_continuous},
              {"spectrum", spectrum_to_json(r.spectrum)},
              {"mc_bound", mc_to_json(r.mc_bound)},
              {"trace_residual", r.trace_residual},
              {"mean_dwell_used", r.mean_dwell_used}};
}

inline Json certificate_to_json(const StabilityCertificate& c) {
  return Json{{"verdict", std::string(to_string(c.verdict))},
              {"n", c.n},
              {"trials", c.trials},
              {"mean_log_norm", c.mean_log_norm},
              {"confidence_half_width", c.confidence_half_width}};
}

inline Json stabilization_to_json(const StabilizationResult& r, double lambda_target) {
  Json k = Json::array();
  for (const auto& g : r.gains.k) k.push_back(detail::matrix_json(g));
  Json envelopes = Json::array();
  for (const auto& e : r.gains.envelopes) envelopes.push_back(Json{{"c_emp", e.c_emp}, {"d_used", e.d_used}});
  Json stages = Json::array();
  for (const auto& s : r.stages) {
    stages.push_back(Json{{"gamma", s.gamma},
                          {"mean_lambda_c", s.mean_continuous},
                          {"upper_lambda_c", s.upper_continuous},
                          {"accepted", s.accepted}});
  }
  return Json{{"status", r.achieved ? "achieved" : "budget_exhausted"},
              {"lambda_target", lambda_target},
              {"gamma", r.gains.gamma},
              {"K", k},
              {"envelopes", envelopes},
              {"achieved_lambda", r.achieved_lambda},
              {"certificate", certificate_to_json(r.certificate)},
              {"stages", stages},
              {"report", report_to_json(r.report)}};
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// CSV

inline std::string lyapunov_trials_csv(const MonteCarloEstimate& mc) {
  std::string out = "trial,n,log_norm,lambda_d,lambda_c\n";
  for (std::size_t j = 0; j < mc.log_norms.size(); ++j) {
    out += std::to_string(j) + "," + std::to_string(mc.n) + "," + format_real(mc.log_norms[j]) + "," +
           format_real(mc.lambda_d(j)) + "," + format_real(mc.lambda_c(j)) + "\n";
  }
  return out;
}

struct TrialRow {
  std::size_t trial;
  std::size_t n;
  double log_norm;
  double lambda_d;
  double lambda_c;

  friend bool operator==(const TrialRow&, const TrialRow&) = default;
};

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::vector<TrialRow> parse_lyapunov_trials_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "trial,n,log_norm,lambda_d,lambda_c") {
    throw Error(ErrorCode::Parse, "lyapunov CSV: unexpected header");
  }
  std::vector<TrialRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 5) throw Error(ErrorCode::Parse, "lyapunov CSV: expected 5 columns");
    try {
      rows.push_back({std::stoull(cells[0]), std::stoull(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                      std::stod(cells[4])});
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, "lyapunov CSV: malformed row '" + line + "'");
    }
  }
  return rows;
}

inline std::string spectrum_csv(const LyapunovSpectrum& s) {
  std::string out = "index,exponent,multiplicity\n";
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    out += std::to_string(i) + "," + format_real(s.entries[i].exponent) + "," +
           std::to_string(s.entries[i].multiplicity) + "\n";
  }
  return out;
}

struct PeRow {
  std::size_t path_id;
  PEWindowCheck check;
  double empirical_average;
};

inline std::string pe_csv(const std::vector<PeRow>& rows) {
  std::string out = "path_id,T,mu,pe_pass,first_violation_time,empirical_average\n";
  for (const auto& r : rows) {
    out += std::to_string(r.path_id) + "," + format_real(r.check.window) + "," + format_real(r.check.mu) + "," +
           (r.check.passed() ? "1" : "0") + "," + (r.check.violated_at ? format_real(*r.check.violated_at) : "") +
           "," + format_real(r.empirical_average) + "\n";
  }
  return out;
}

inline std::string certificates_csv(const std::vector<StabilityCertificate>& certs) {
  std::string out = "n,trials,mean_log_norm,half_width,verdict\n";
  for (const auto& c : certs) {
    out += std::to_string(c.n) + "," + std::to_string(c.trials) + "," + format_real(c.mean_log_norm) + "," +
           format_real(c.confidence_half_width) + "," + std::string(to_string(c.verdict)) + "\n";
  }
  return out;
}

inline std::string stages_csv(const std::vector<SweepStage>& stages) {
  std::string out = "gamma,mean_lambda_c,upper_lambda_c,accepted\n";
  for (const auto& s : stages) {
    out += format_real(s.gamma) + "," + format_real(s.mean_continuous) + "," + format_real(s.upper_continuous) +
           "," + (s.accepted ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace rswitch::io
