// hqst: command-line front end for histogram-based photon-number tomography.
//
// Exit codes: 0 success, 2 usage or input error, 3 configuration mismatch,
// 4 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hqst/hqst.hpp"

namespace fs = std::filesystem;
using hqst::Json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitNumerical = 4;

const char* const kToolVersion = HQST_VERSION;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Parameters of the invoked subcommand, flag name -> value as given (or default).
Json collect_parameters(const CLI::App& sub) {
  Json params = Json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      params[name] = res.size() == 1 ? Json(res.front()) : Json(res);
    } else if (!opt->get_default_str().empty()) {
      params[name] = opt->get_default_str();
    }
  }
  return params;
}

/// Written next to every output file as <file>.manifest.json.
struct Manifest {
  std::string command;
  Json parameters;
  std::uint64_t seed = 0;
  Json warnings = Json::object();

  void write_for(const fs::path& output) const {
    const Json doc = {{"schema_version", hqst::kSchemaVersion},
                      {"kind", "run_manifest"},
                      {"command", command},
                      {"parameters", parameters},
                      {"seed", seed},
                      {"tool_version", kToolVersion},
                      {"timestamp", utc_timestamp()},
                      {"output", output.filename().string()},
                      {"warnings", warnings}};
    hqst::write_json(fs::path(output.string() + ".manifest.json"), doc);
  }
};

Json g2_json(const std::optional<double>& g2) {
  return g2 ? Json(*g2) : Json("undefined");
}

std::string g2_csv(const std::optional<double>& g2) {
  return g2 ? hqst::format_double(*g2) : "undefined";
}

hqst::HistogramConfig make_config(double range_min, double range_max, std::size_t bins) {
  hqst::HistogramConfig c{range_min, range_max, bins};
  try {
    c.validate();
  } catch (const hqst::DomainError& e) {
    throw UsageError(e.what());
  }
  return c;
}

hqst::QuadratureBatch read_nonempty_quadratures(const fs::path& path) {
  auto batch = hqst::read_quadratures(path);
  if (batch.empty()) throw UsageError(path.string() + ": no quadrature values");
  return batch;
}

/// Weights quoted to a few digits rarely sum to exactly 1; within this slack they are renormalized.
constexpr double kWeightSumSlack = 0.01;

hqst::PhotonWeights parse_weights(const std::string& text, Manifest& manifest) {
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    w.push_back(hqst::detail::parse_double(item, "--weights"));
  }
  double sum = 0.0;
  for (double v : w) sum += v;
  if (std::abs(sum - 1.0) > hqst::kSimplexTolerance && std::abs(sum - 1.0) <= kWeightSumSlack) {
    for (double& v : w) v /= sum;
    manifest.warnings["weights_renormalized_from_sum"] = sum;
    std::cerr << "warning: weights sum to " << sum << "; renormalized\n";
  }
  try {
    return hqst::PhotonWeights(std::move(w));
  } catch (const hqst::DomainError& e) {
    throw UsageError(std::string("--weights: ") + e.what());
  }
}

void emit(const Json& doc, const std::string& out) {
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    hqst::write_json(out, doc);
  }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t instances = 0;
  std::size_t samples = 8000;
  std::size_t bins = 50;
  double range_min = -3.2;
  double range_max = 3.2;
  std::uint64_t seed = 0;
  std::string out;
  std::string emit_dir;
};

int run_synth(const SynthArgs& a, Manifest& manifest) {
  const auto config = make_config(a.range_min, a.range_max, a.bins);
  const auto ds = hqst::make_dataset(a.instances, a.samples, config, a.seed);
  hqst::save_dataset(a.out, ds);
  manifest.seed = a.seed;
  manifest.write_for(a.out);

  if (!a.emit_dir.empty()) {
    fs::create_directories(a.emit_dir);
    const int width = static_cast<int>(std::to_string(a.instances - 1).size());
    for (std::size_t k = 0; k < a.instances; ++k) {
      auto [w, batch] = hqst::synthesize_instance(a.seed, k, a.samples);
      std::ostringstream name;
      name << "instance_" << std::setw(std::max(width, 5)) << std::setfill('0') << k << ".txt";
      std::ostringstream comment;
      comment << "instance " << k << " seed " << a.seed << " w=" << hqst::format_double(w[0])
              << ',' << hqst::format_double(w[1]) << ',' << hqst::format_double(w[2]);
      hqst::write_quadratures(fs::path(a.emit_dir) / name.str(), batch, comment.str());
    }
  }
  std::cerr << "wrote " << ds.size() << " instances to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string train;
  std::string test;
  std::string out;
  std::string loss_csv;
  hqst::TrainConfig config;
};

int run_train(const TrainArgs& a, Manifest& manifest) {
  const auto train_set = hqst::load_dataset(a.train);
  const auto test_set = hqst::load_dataset(a.test);
  const auto result = hqst::train(train_set, test_set, a.config);
  hqst::save_model(a.out, result.model);
  manifest.seed = a.config.seed;
  manifest.write_for(a.out);

  const fs::path loss_path = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
  std::ofstream csv(loss_path, std::ios::binary | std::ios::trunc);
  if (!csv) throw hqst::ParseError("cannot write " + loss_path.string());
  csv << "epoch,train_mse,test_mse\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    csv << e + 1 << ',' << hqst::format_double(result.history[e].train_mse) << ','
        << hqst::format_double(result.history[e].test_mse) << '\n';
  }
  csv.close();
  if (!csv) throw hqst::ParseError("failed writing " + loss_path.string());
  manifest.write_for(loss_path);

  std::cerr << "final train_mse " << result.history.back().train_mse << " test_mse "
            << result.history.back().test_mse << '\n';
  return 0;
}

struct InferArgs {
  std::string model;
  std::string quadratures;
  std::optional<double> efficiency;
  std::string out;
  std::string histogram_out;
  std::optional<std::size_t> bins;
  std::optional<double> range_min;
  std::optional<double> range_max;
};

// Binning flags on infer only assert what the model already fixes.
void check_binning(const InferArgs& a, const hqst::HistogramConfig& model) {
  const bool mismatch = (a.bins && *a.bins != model.num_bins) ||
                        (a.range_min && *a.range_min != model.x_min) ||
                        (a.range_max && *a.range_max != model.x_max);
  if (mismatch) {
    throw hqst::ConfigError("requested binning does not match the model's " + model.describe());
  }
}

int run_infer(const InferArgs& a, Manifest& manifest) {
  using clock = std::chrono::steady_clock;
  const auto model = hqst::load_model(a.model);
  check_binning(a, model.histogram_config);
  const auto t0 = clock::now();
  const auto batch = read_nonempty_quadratures(a.quadratures);
  const double read_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

  const auto result = hqst::infer(model, batch);
  Json report = {{"schema_version", hqst::kSchemaVersion},
                 {"kind", "infer_report"},
                 {"weights", hqst::to_json(result.weights)},
                 {"w00", result.w00},
                 {"g2", g2_json(result.g2)},
                 {"degenerate", result.degenerate},
                 {"total_count", result.total_count},
                 {"dropped_count", result.dropped_count}};

  double correction_ms = 0.0;
  if (a.efficiency) {
    const auto t1 = clock::now();
    const auto corrected = hqst::invert_loss(result.weights, *a.efficiency);
    correction_ms = std::chrono::duration<double, std::milli>(clock::now() - t1).count();
    report["loss_corrected"] = {{"efficiency", *a.efficiency},
                                {"weights", hqst::to_json(corrected.weights)},
                                {"w00", hqst::wigner_origin(corrected.weights)},
                                {"g2", g2_json(hqst::g2_from_weights(corrected.weights))},
                                {"clamped", corrected.clamped}};
    if (corrected.clamped) {
      manifest.warnings["loss_correction_clamped"] = true;
      std::cerr << "warning: loss inversion produced negative weights; clamped\n";
    }
  }
  const double hist_ms = result.histogram_seconds * 1e3;
  const double pred_ms = result.predict_seconds * 1e3;
  report["timings_ms"] = {{"read", read_ms},
                          {"histogram", hist_ms},
                          {"inference", pred_ms},
                          {"loss_correction", correction_ms},
                          {"total", hist_ms + pred_ms + correction_ms}};

  if (!a.histogram_out.empty()) {
    hqst::write_histogram_csv(a.histogram_out, hqst::build_histogram(batch, model.histogram_config));
    manifest.write_for(a.histogram_out);
  }
  emit(report, a.out);
  if (!a.out.empty()) manifest.write_for(a.out);
  return 0;
}

struct MleArgs {
  std::string quadratures;
  hqst::MleConfig config;
  std::string out;
};

int run_mle(const MleArgs& a, Manifest& manifest) {
  const auto batch = read_nonempty_quadratures(a.quadratures);
  const auto result = hqst::mle_em(batch, a.config);
  Json doc = hqst::to_json(result);
  doc["samples"] = batch.size();
  doc["w00"] = hqst::wigner_origin(result.weights);
  doc["g2"] = g2_json(hqst::g2_from_weights(result.weights));
  emit(doc, a.out);
  if (!a.out.empty()) manifest.write_for(a.out);
  return 0;
}

struct CompareArgs {
  std::string model;
  std::vector<std::string> inputs;
  std::string out;
};

int run_compare(const CompareArgs& a, Manifest& manifest) {
  const auto model = hqst::load_model(a.model);
  std::vector<std::pair<std::string, std::string>> labelled;
  for (const auto& spec : a.inputs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw UsageError("--input expects LABEL=PATH, got '" + spec + "'");
    }
    labelled.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
  }

  std::ostringstream csv;
  csv << "label,w0_nn,w1_nn,w2_nn,w0_mle,w1_mle,w2_mle,w00_nn,w00_mle,g2_nn,g2_mle\n";
  Json sizes = Json::object();
  for (const auto& [label, path] : labelled) {
    try {
      const auto batch = read_nonempty_quadratures(path);
      const auto nn = hqst::infer(model, batch);
      const auto mle = hqst::mle_em(batch);
      csv << label;
      for (std::size_t n = 0; n < 3; ++n) csv << ',' << hqst::format_double(nn.weights[n]);
      for (std::size_t n = 0; n < 3; ++n) csv << ',' << hqst::format_double(mle.weights[n]);
      csv << ',' << hqst::format_double(nn.w00) << ','
          << hqst::format_double(hqst::wigner_origin(mle.weights)) << ',' << g2_csv(nn.g2) << ','
          << g2_csv(hqst::g2_from_weights(mle.weights)) << '\n';
      sizes[label] = batch.size();
    } catch (const std::exception& e) {
      std::cerr << "error: input '" << label << "' (" << path << "): " << e.what() << '\n';
      throw;
    }
  }

  std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
  if (!out) throw hqst::ParseError("cannot write " + a.out);
  out << csv.str();
  out.close();
  if (!out) throw hqst::ParseError("failed writing " + a.out);
  manifest.parameters["sample_counts"] = sizes;
  manifest.write_for(a.out);
  return 0;
}

struct WignerArgs {
  std::string weights;
  std::string from_report;
  double range = 3.0;
  double step = 0.1;
  std::string out;
};

int run_wigner(const WignerArgs& a, Manifest& manifest) {
  if (a.weights.empty() == a.from_report.empty()) {
    throw UsageError("give exactly one of --weights or --from-report");
  }
  hqst::PhotonWeights w;
  if (!a.weights.empty()) {
    w = parse_weights(a.weights, manifest);
  } else {
    const auto doc = hqst::read_json(a.from_report);
    if (!doc.contains("weights")) throw UsageError(a.from_report + ": report has no weights");
    try {
      w = hqst::photon_weights_from_json(doc.at("weights"));
    } catch (const std::exception& e) {
      throw UsageError(a.from_report + ": " + e.what());
    }
  }
  const auto axis = hqst::symmetric_axis(a.range, a.step);
  const auto grid = hqst::wigner_grid(w, axis, axis);

  std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
  if (!out) throw hqst::ParseError("cannot write " + a.out);
  out << "x,p,w\n";
  for (std::size_t i = 0; i < grid.x_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.p_axis.size(); ++j) {
      out << hqst::format_double(grid.x_axis[i]) << ',' << hqst::format_double(grid.p_axis[j])
          << ',' << hqst::format_double(grid.at(i, j)) << '\n';
    }
  }
  out.close();
  if (!out) throw hqst::ParseError("failed writing " + a.out);
  manifest.write_for(a.out);
  return 0;
}

struct TraceArgs {
  std::vector<std::string> traces;
  std::string triggers;
  double gamma = 0.0;
  std::optional<double> gamma_rise;
  std::string out;
};

int run_trace_extract(const TraceArgs& a, Manifest& manifest) {
  hqst::TraceSet all;
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    for (auto& [id, trace] : hqst::read_traces(a.traces[i], std::to_string(i))) {
      if (!all.emplace(id, std::move(trace)).second) {
        throw UsageError("trace id '" + id + "' appears in more than one input");
      }
    }
  }
  const auto triggers = hqst::read_triggers(a.triggers);

  std::vector<double> extracted;
  std::size_t skipped = 0;
  for (const auto& trig : triggers) {
    const auto it = all.find(trig.trace_id);
    if (it == all.end()) throw UsageError("trigger refers to unknown trace '" + trig.trace_id + "'");
    hqst::ModeFunction mode{a.gamma, trig.t_c, a.gamma_rise};
    try {
      extracted.push_back(hqst::extract_quadrature(it->second, mode));
    } catch (const hqst::DomainError&) {
      ++skipped;
    }
  }
  hqst::write_quadratures(a.out, extracted);
  manifest.warnings["skipped_triggers"] = skipped;
  manifest.write_for(a.out);
  if (skipped > 0) {
    std::cerr << "warning: skipped " << skipped << " trigger(s) outside the trace window\n";
  }
  return 0;
}

struct FitEtaArgs {
  std::string quadratures;
  std::size_t bins = 50;
  double range_min = -3.2;
  double range_max = 3.2;
  std::string out;
};

int run_fit_eta(const FitEtaArgs& a, Manifest& manifest) {
  const auto config = make_config(a.range_min, a.range_max, a.bins);
  const auto batch = read_nonempty_quadratures(a.quadratures);
  const auto hist = hqst::build_histogram(batch, config);
  const auto fit = hqst::fit_eta(hist);
  const Json doc = {{"schema_version", hqst::kSchemaVersion},
                    {"kind", "eta_fit"},
                    {"eta", fit.eta},
                    {"residual", fit.residual},
                    {"total_count", hist.total_count},
                    {"dropped_count", hist.dropped_count},
                    {"histogram_config", hqst::to_json(config)}};
  emit(doc, a.out);
  if (!a.out.empty()) manifest.write_for(a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Histogram-based photon-number tomography of homodyne quadrature data"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a labelled dataset of density histograms");
  c_synth->add_option("--instances", synth.instances, "Number of instances")
      ->required()
      ->check(CLI::PositiveNumber);
  c_synth->add_option("--samples", synth.samples, "Quadratures per instance")->check(CLI::PositiveNumber);
  c_synth->add_option("--bins", synth.bins, "Histogram bins")->check(CLI::Range(2, 1 << 20));
  c_synth->add_option("--range-min", synth.range_min, "Lower histogram edge");
  c_synth->add_option("--range-max", synth.range_max, "Upper histogram edge");
  c_synth->add_option("--seed", synth.seed, "Master seed");
  c_synth->add_option("--out", synth.out, "Dataset file")->required();
  c_synth->add_option("--emit-quadratures", synth.emit_dir,
                      "Also write each instance's raw quadratures into this directory");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Fit the linear estimator with Adam");
  c_train->add_option("--train", train.train, "Training dataset")->required()->check(CLI::ExistingFile);
  c_train->add_option("--test", train.test, "Test dataset")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", train.out, "Model file")->required();
  c_train->add_option("--loss-csv", train.loss_csv, "Loss history CSV (default <out>.loss.csv)");
  c_train->add_option("--lr", train.config.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  c_train->add_option("--epochs", train.config.epochs, "Epochs")->check(CLI::PositiveNumber);
  c_train->add_option("--batch", train.config.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  c_train->add_option("--seed", train.config.seed, "Shuffle seed");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Estimate photon-number weights from a quadrature file");
  c_infer->add_option("--model", infer.model, "Model file")->required()->check(CLI::ExistingFile);
  c_infer->add_option("--quadratures", infer.quadratures, "Quadrature file")
      ->required()
      ->check(CLI::ExistingFile);
  c_infer->add_option("--efficiency", infer.efficiency, "Detection efficiency to correct for")
      ->check(CLI::Range(0.0, 1.0));
  c_infer->add_option("--out", infer.out, "Report file (default: stdout)");
  c_infer->add_option("--histogram-out", infer.histogram_out, "Also write the density histogram CSV");
  c_infer->add_option("--bins", infer.bins, "Expected histogram bins (must match the model)");
  c_infer->add_option("--range-min", infer.range_min, "Expected lower edge (must match the model)");
  c_infer->add_option("--range-max", infer.range_max, "Expected upper edge (must match the model)");

  MleArgs mle;
  auto* c_mle = app.add_subcommand("mle", "Maximum-likelihood weights by EM");
  c_mle->add_option("--quadratures", mle.quadratures, "Quadrature file")
      ->required()
      ->check(CLI::ExistingFile);
  c_mle->add_option("--nmax", mle.config.n_max, "Highest photon number (2 or 3)")->check(CLI::Range(2, 3));
  c_mle->add_option("--max-iter", mle.config.max_iterations, "Iteration cap")->check(CLI::PositiveNumber);
  c_mle->add_option("--tol", mle.config.tolerance, "Per-sample log-likelihood tolerance")
      ->check(CLI::PositiveNumber);
  c_mle->add_option("--out", mle.out, "Result file (default: stdout)");

  CompareArgs compare;
  auto* c_compare = app.add_subcommand("compare", "Linear estimator vs EM over labelled inputs");
  c_compare->add_option("--model", compare.model, "Model file")->required()->check(CLI::ExistingFile);
  c_compare->add_option("--input", compare.inputs, "LABEL=PATH quadrature file (repeatable)")
      ->required()
      ->expected(1, -1);
  c_compare->add_option("--out", compare.out, "Comparison CSV")->required();

  WignerArgs wigner;
  auto* c_wigner = app.add_subcommand("wigner", "Export the Wigner function on a square grid");
  c_wigner->add_option("--weights", wigner.weights, "w0,w1,w2");
  c_wigner->add_option("--from-report", wigner.from_report, "Take weights from an infer/mle report")
      ->check(CLI::ExistingFile);
  c_wigner->add_option("--range", wigner.range, "Half-width of the grid")->check(CLI::PositiveNumber);
  c_wigner->add_option("--step", wigner.step, "Grid spacing")->check(CLI::PositiveNumber);
  c_wigner->add_option("--out", wigner.out, "Grid CSV")->required();

  TraceArgs trace;
  auto* c_trace = app.add_subcommand("trace-extract", "Extract quadratures from detector traces");
  c_trace->add_option("--traces", trace.traces, "Trace CSV files")
      ->required()
      ->expected(1, -1)
      ->check(CLI::ExistingFile);
  c_trace->add_option("--triggers", trace.triggers, "Trigger CSV (trace_id,t_c)")
      ->required()
      ->check(CLI::ExistingFile);
  c_trace->add_option("--gamma", trace.gamma, "Mode decay rate (Hz)")->required()->check(CLI::PositiveNumber);
  c_trace->add_option("--gamma-rise", trace.gamma_rise, "Rise rate before the trigger (Hz)")
      ->check(CLI::PositiveNumber);
  c_trace->add_option("--out", trace.out, "Quadrature file")->required();

  FitEtaArgs fit;
  auto* c_fit = app.add_subcommand("fit-eta", "Fit the vacuum/single-photon mixture weight");
  c_fit->add_option("--quadratures", fit.quadratures, "Quadrature file")
      ->required()
      ->check(CLI::ExistingFile);
  c_fit->add_option("--bins", fit.bins, "Histogram bins")->check(CLI::Range(2, 1 << 20));
  c_fit->add_option("--range-min", fit.range_min, "Lower histogram edge");
  c_fit->add_option("--range-max", fit.range_max, "Upper histogram edge");
  c_fit->add_option("--out", fit.out, "Report file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Manifest manifest{sub->get_name(), collect_parameters(*sub)};
  try {
    if (sub == c_synth) return run_synth(synth, manifest);
    if (sub == c_train) return run_train(train, manifest);
    if (sub == c_infer) return run_infer(infer, manifest);
    if (sub == c_mle) return run_mle(mle, manifest);
    if (sub == c_compare) return run_compare(compare, manifest);
    if (sub == c_wigner) return run_wigner(wigner, manifest);
    if (sub == c_trace) return run_trace_extract(trace, manifest);
    if (sub == c_fit) return run_fit_eta(fit, manifest);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const hqst::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const hqst::ConfigError& e) {
    std::cerr << "configuration mismatch: " << e.what() << '\n';
    return kExitConfig;
  } catch (const hqst::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const hqst::EstimationError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
