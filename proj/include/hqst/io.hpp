#pragma once

// File formats. Numbers are written with std::to_chars (shortest round-trip,
// '.' separator, no locale) and read with std::from_chars.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hqst/errors.hpp"
#include "hqst/fock.hpp"
#include "hqst/histogram.hpp"
#include "hqst/linear_estimator.hpp"
#include "hqst/mle.hpp"
#include "hqst/synth.hpp"

namespace hqst {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view text, const std::string& where) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ParseError(where + ": not a finite number: '" + std::string(text) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = line.find(sep, pos);
    out.push_back(line.substr(pos, next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw ParseError("failed writing " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quadrature files: one number per line, '#' comments and blank lines ignored.

inline QuadratureBatch parse_quadratures(std::istream& in, const std::string& name) {
  QuadratureBatch out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    out.push_back(detail::parse_double(text, name + ":" + std::to_string(lineno)));
  }
  return out;
}

inline QuadratureBatch read_quadratures(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_quadratures(in, path.string());
}

inline void write_quadratures(const std::filesystem::path& path, std::span<const double> xs,
                              std::string_view comment = {}) {
  auto out = detail::open_out(path);
  if (!comment.empty()) out << "# " << comment << '\n';
  for (double x : xs) out << format_double(x) << '\n';
  detail::finish(out, path);
}

// ---------------------------------------------------------------------------
// Time traces: "t,x" for a single trace, "trace_id,t,x" for several, plus a
// trigger file "trace_id,t_c".

using TraceSet = std::map<std::string, TimeTrace>;

inline void write_trace_csv(const std::filesystem::path& path, const TimeTrace& trace) {
  auto out = detail::open_out(path);
  out << "t,x\n";
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    out << format_double(trace.time(i)) << ',' << format_double(trace.values[i]) << '\n';
  }
  detail::finish(out, path);
}

inline void write_multi_trace_csv(const std::filesystem::path& path,
                                  const std::vector<std::pair<std::string, TimeTrace>>& traces) {
  auto out = detail::open_out(path);
  out << "trace_id,t,x\n";
  for (const auto& [id, trace] : traces) {
    for (std::size_t i = 0; i < trace.values.size(); ++i) {
      out << id << ',' << format_double(trace.time(i)) << ',' << format_double(trace.values[i])
          << '\n';
    }
  }
  detail::finish(out, path);
}

/// Reads either layout. A single-trace file yields one trace under `default_id`.
/// Sample times must be uniformly spaced within each trace.
inline TraceSet read_traces(const std::filesystem::path& path, const std::string& default_id) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty trace file");
  const auto header = detail::trim(line);
  const bool multi = header == "trace_id,t,x";
  if (!multi && header != "t,x") {
    throw ParseError(path.string() + ": expected header 't,x' or 'trace_id,t,x'");
  }

  std::map<std::string, std::vector<std::pair<double, double>>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto cols = detail::split(text, ',');
    if (cols.size() != (multi ? 3U : 2U)) throw ParseError(where + ": wrong column count");
    const std::string id = multi ? std::string(detail::trim(cols[0])) : default_id;
    rows[id].emplace_back(detail::parse_double(cols[multi ? 1 : 0], where),
                          detail::parse_double(cols[multi ? 2 : 1], where));
  }

  TraceSet out;
  for (auto& [id, samples] : rows) {
    const auto where = path.string() + " trace '" + id + "'";
    if (samples.size() < 2) throw ParseError(where + ": needs at least two samples");
    TimeTrace trace;
    trace.t_start = samples.front().first;
    trace.dt = (samples.back().first - samples.front().first) /
               static_cast<double>(samples.size() - 1);
    if (!(trace.dt > 0.0)) throw ParseError(where + ": times must increase");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (std::abs(samples[i].first - trace.time(i)) > 1e-6 * trace.dt) {
        throw ParseError(where + ": sample times are not uniformly spaced");
      }
      trace.values.push_back(samples[i].second);
    }
    out.emplace(id, std::move(trace));
  }
  return out;
}

struct Trigger {
  std::string trace_id;
  double t_c = 0.0;
};

inline std::vector<Trigger> read_triggers(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "trace_id,t_c") {
    throw ParseError(path.string() + ": expected header 'trace_id,t_c'");
  }
  std::vector<Trigger> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto cols = detail::split(text, ',');
    if (cols.size() != 2) throw ParseError(where + ": wrong column count");
    out.push_back({std::string(detail::trim(cols[0])), detail::parse_double(cols[1], where)});
  }
  return out;
}

inline void write_triggers(const std::filesystem::path& path, const std::vector<Trigger>& triggers) {
  auto out = detail::open_out(path);
  out << "trace_id,t_c\n";
  for (const auto& t : triggers) out << t.trace_id << ',' << format_double(t.t_c) << '\n';
  detail::finish(out, path);
}

// ---------------------------------------------------------------------------
// Density histogram CSV.

inline void write_histogram_csv(const std::filesystem::path& path, const DensityHistogram& hist) {
  auto out = detail::open_out(path);
  out << "# x_min=" << format_double(hist.config.x_min)
      << " x_max=" << format_double(hist.config.x_max)
      << " num_bins=" << hist.config.num_bins << '\n'
      << "# total_count=" << hist.total_count << " dropped_count=" << hist.dropped_count << '\n'
      << "bin_center,density\n";
  const auto centers = bin_centers(hist.config);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    out << format_double(centers[i]) << ',' << format_double(hist.densities[i]) << '\n';
  }
  detail::finish(out, path);
}

// ---------------------------------------------------------------------------
// Structured documents (JSON with a mandatory schema_version).

inline Json to_json(const HistogramConfig& c) {
  return {{"x_min", c.x_min}, {"x_max", c.x_max}, {"num_bins", c.num_bins}};
}

inline Json to_json(const PhotonWeights& w) { return w.vector(); }

namespace detail {

inline void check_schema(const Json& doc, std::string_view kind) {
  if (!doc.is_object() || !doc.contains("schema_version")) {
    throw ParseError("document has no schema_version");
  }
  if (doc.at("schema_version").get<int>() != kSchemaVersion) {
    throw ParseError("unsupported schema_version " + doc.at("schema_version").dump());
  }
  if (doc.value("kind", std::string()) != kind) {
    throw ParseError("expected a '" + std::string(kind) + "' document");
  }
}

// Wraps nlohmann and validation errors so callers see one exception type.
template <class F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw ParseError(what + ": " + e.what());
  } catch (const DomainError& e) {
    throw ParseError(what + ": " + e.what());
  }
}

}  // namespace detail

inline HistogramConfig histogram_config_from_json(const Json& j) {
  HistogramConfig c;
  c.x_min = j.at("x_min").get<double>();
  c.x_max = j.at("x_max").get<double>();
  c.num_bins = j.at("num_bins").get<std::size_t>();
  c.validate();
  return c;
}

inline PhotonWeights photon_weights_from_json(const Json& j) {
  return PhotonWeights(j.get<std::vector<double>>());
}

inline Json to_json(const Dataset& ds) {
  Json instances = Json::array();
  for (const auto& inst : ds.instances) {
    instances.push_back({{"w", to_json(inst.target)}, {"p", inst.density}});
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "dataset"},
          {"seed", ds.seed},
          {"samples_per_instance", ds.samples_per_instance},
          {"histogram_config", to_json(ds.histogram_config)},
          {"instances", std::move(instances)}};
}

inline Dataset dataset_from_json(const Json& doc) {
  return detail::guarded("dataset", [&] {
    detail::check_schema(doc, "dataset");
    Dataset ds;
    ds.seed = doc.at("seed").get<std::uint64_t>();
    ds.samples_per_instance = doc.at("samples_per_instance").get<std::size_t>();
    ds.histogram_config = histogram_config_from_json(doc.at("histogram_config"));
    for (const auto& inst : doc.at("instances")) {
      DatasetInstance di{inst.at("p").get<std::vector<double>>(),
                         photon_weights_from_json(inst.at("w"))};
      if (di.density.size() != ds.histogram_config.num_bins) {
        throw ParseError("dataset instance density length does not match num_bins");
      }
      ds.instances.push_back(std::move(di));
    }
    return ds;
  });
}

inline Json to_json(const LinearModel& m) {
  const auto& t = m.training_meta;
  return {{"schema_version", kSchemaVersion},
          {"kind", "linear_model"},
          {"histogram_config", to_json(m.histogram_config)},
          {"outputs", m.outputs},
          {"inputs", m.inputs()},
          {"weights", m.weights},
          {"bias", m.bias},
          {"training_meta",
           {{"epochs", t.epochs},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"final_train_mse", t.final_train_mse},
            {"final_test_mse", t.final_test_mse},
            {"seed", t.seed}}}};
}

inline LinearModel linear_model_from_json(const Json& doc) {
  return detail::guarded("model", [&] {
    detail::check_schema(doc, "linear_model");
    LinearModel m;
    m.histogram_config = histogram_config_from_json(doc.at("histogram_config"));
    m.outputs = doc.at("outputs").get<std::size_t>();
    if (doc.at("inputs").get<std::size_t>() != m.histogram_config.num_bins) {
      throw ParseError("model input count does not match its histogram configuration");
    }
    m.weights = doc.at("weights").get<std::vector<double>>();
    m.bias = doc.at("bias").get<std::vector<double>>();
    const auto& t = doc.at("training_meta");
    m.training_meta = {t.at("epochs").get<std::size_t>(),
                       t.at("learning_rate").get<double>(),
                       t.at("batch_size").get<std::size_t>(),
                       t.at("final_train_mse").get<double>(),
                       t.at("final_test_mse").get<double>(),
                       t.at("seed").get<std::uint64_t>()};
    try {
      m.validate();
    } catch (const ConfigError& e) {
      throw ParseError(e.what());
    }
    return m;
  });
}

inline Json to_json(const MleResult& r) {
  return {{"schema_version", kSchemaVersion},
          {"kind", "mle_result"},
          {"weights", to_json(r.weights)},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"final_loglik", r.final_loglik()},
          {"loglik_history", r.loglik_history}};
}

inline Json read_json(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& doc, int indent = 2) {
  auto out = detail::open_out(path);
  out << doc.dump(indent) << '\n';
  detail::finish(out, path);
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_json(path, to_json(ds), -1);
}
inline Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(read_json(path));
}
inline void save_model(const std::filesystem::path& path, const LinearModel& m) {
  write_json(path, to_json(m));
}
inline LinearModel load_model(const std::filesystem::path& path) {
  return linear_model_from_json(read_json(path));
}

}  // namespace hqst
