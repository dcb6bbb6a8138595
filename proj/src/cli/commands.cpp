#include "confae/cli/commands.hpp"

#include "confae/cli/svg.hpp"
#include "confae/data.hpp"
#include "confae/errors.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <sstream>

namespace confae::cli {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

std::uint64_t parse_seed(std::string_view text, std::string_view origin) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw UsageError(fmt::format("{}: '{}' is not an unsigned 64-bit integer", origin, text));
  return v;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("CONFAE_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  return parse_seed(s, "CONFAE_SEED");
}

struct LoadedData {
  data::Dataset raw;
  std::string csv;  // bytes the content hash is taken over
};

LoadedData load_data(const ResolvedConfig& cfg) {
  LoadedData d;
  if (cfg.data.path) {
    d.csv = read_file(*cfg.data.path);
    d.raw = data::read_csv(*cfg.data.path);
  } else {
    d.raw = data::swiss_roll(cfg.data.n, cfg.run.seed);
    d.csv = data::to_csv(d.raw);
  }
  return d;
}

std::pair<data::Dataset, data::Dataset> prepared_split(const ResolvedConfig& cfg, const data::Dataset& raw) {
  return data::split(data::standardize(raw), cfg.run.val_fraction, cfg.run.seed);
}

json summary_json(const geo::MeanStd& m) { return {{"mean", m.mean}, {"std", m.stddev}}; }

}  // namespace

// ---------------------------------------------------------------------------

void cmd_generate(const GenerateOptions& opt, std::ostream& log) {
  if (opt.out.empty()) throw UsageError("generate: --out is required");
  const std::uint64_t seed = opt.seed ? *opt.seed : env_seed().value_or(0);
  data::Dataset ds = data::swiss_roll(opt.n, seed);
  if (opt.standardize) ds = data::standardize(ds);
  if (opt.out.has_parent_path()) fs::create_directories(opt.out.parent_path());
  write_file(opt.out, data::to_csv(ds));
  const Vector mean = ds.samples.rowwise().mean();
  const Vector sd = ((ds.samples.colwise() - mean).array().square().rowwise().mean()).sqrt();
  fmt::print(log, "wrote {} samples (seed {}{}) to {}\n", ds.size(), seed, opt.standardize ? ", standardized" : "",
             opt.out.string());
  fmt::print(log, "  mean x={:.6g} y={:.6g} z={:.6g}\n  std  x={:.6g} y={:.6g} z={:.6g}\n", mean(0), mean(1), mean(2), sd(0),
             sd(1), sd(2));
}

// ---------------------------------------------------------------------------

TrainOutcome cmd_train(const TrainOptions& opt, std::ostream& log) {
  json j = json::object();
  std::optional<Checkpoint> resumed;
  std::optional<std::string> config_text;
  if (opt.resume) {
    resumed = load_checkpoint(*opt.resume);
    j = config_to_json(resumed->config);
  } else if (opt.config) {
    config_text = read_file(*opt.config);
    const json file = json::parse(*config_text, nullptr, false);
    if (file.is_discarded()) throw ParseError(fmt::format("{}: not valid JSON", opt.config->string()));
    // a manifest from an earlier run re-executes that run
    j = file.is_object() && file.contains("manifest_version") ? file.at("config") : file;
  }
  for (const std::string& o : opt.overrides) apply_override(j, o);
  if (opt.regularizer) j["regularizer"] = *opt.regularizer;
  if (opt.lambda_geo) j["lambda_geo"] = *opt.lambda_geo;
  if (opt.probes) j["probes"] = *opt.probes;
  if (opt.epochs) j["epochs"] = *opt.epochs;
  if (opt.exact_trace) j["exact_trace"] = true;
  if (opt.detach_codes) j["detach_codes"] = true;
  if (opt.data) j["data"]["path"] = fs::absolute(*opt.data).lexically_normal().string();
  if (opt.n) j["data"]["n"] = *opt.n;
  if (opt.seed) {
    j["seed"] = *opt.seed;
  } else if (!j.contains("seed")) {
    if (const auto s = env_seed()) j["seed"] = *s;
  }

  TrainOutcome outcome;
  outcome.config = resolve_config(j, opt.calibrate_intensity);
  const ResolvedConfig& cfg = outcome.config;
  const train::RunConfig& run = cfg.run;
  if (run.regularizer != reg::Regularizer::None && run.lambda_geo && *run.lambda_geo == 0.0)
    fmt::print(log, "warning: lambda_geo = 0 makes the {} regularizer inert; it is only monitored\n",
               reg::to_string(run.regularizer));

  const LoadedData loaded = load_data(cfg);
  const auto [train_set, val_set] = prepared_split(cfg, loaded.raw);

  if (opt.calibrate_intensity) {
    const train::IntensityProposal p = train::calibrate_intensity(run, train_set);
    fmt::print(log, "initial recon {:.6g}, initial {} {:.6g}\nproposed lambda_geo {:.6g}\n", p.recon,
               reg::to_string(run.regularizer), p.geometric, p.lambda_geo);
    fs::create_directories(opt.out);
    write_json(opt.out / "intensity.json", {{"regularizer", reg::to_string(run.regularizer)},
                                            {"recon", p.recon},
                                            {"geometric", p.geometric},
                                            {"lambda_geo", p.lambda_geo},
                                            {"seed", run.seed}});
    outcome.proposal = p;
    return outcome;
  }

  train::TrainState state = resumed ? resumed->state : train::initial_state(run);
  if (state.encoder.dims() != run.encoder_dims)
    throw ConfigError("resume: encoder_dims differ from the checkpoint's network");
  fs::create_directories(opt.out);
  const fs::path metrics_path = opt.out / "metrics.jsonl";
  if (!resumed) write_file(metrics_path, "");

  const int first = state.epoch + 1;
  auto on_epoch = [&](const train::EpochRecord& r, const train::TrainState& s) {
    const json line{{"epoch", r.epoch}, {"recon", r.recon}, {"geo", r.geometric}, {"total", r.total},
                    {"val_recon", r.val_recon}, {"lr", r.lr}, {"seconds", r.seconds}};
    append_file(metrics_path, line.dump() + "\n");
    if (run.checkpoint_every > 0 && r.epoch % run.checkpoint_every == 0 && r.epoch != run.epochs)
      write_json(opt.out / fmt::format("checkpoint_epoch_{:04d}.json", r.epoch), checkpoint_to_json({cfg, s}));
    if (!opt.quiet && (r.epoch == first || r.epoch % 10 == 0 || r.epoch == run.epochs))
      fmt::print(log, "epoch {:>4}/{}  recon {:.5g}  geo {:.5g}  val_recon {:.5g}  lr {:.3g}  ({:.2f}s)\n", r.epoch,
                 run.epochs, r.recon, r.geometric, r.val_recon, r.lr, r.seconds);
  };
  const train::RunMetrics metrics = train::train(run, train_set, val_set, state, on_epoch);
  outcome.epochs_run = static_cast<int>(metrics.epochs.size());
  if (metrics.epochs.empty()) fmt::print(log, "checkpoint already at epoch {}; nothing to train\n", state.epoch);

  write_json(opt.out / "checkpoint.json", checkpoint_to_json({cfg, state}));

  json inputs;
  inputs["data"] = {{"path", cfg.data.path ? json(*cfg.data.path) : json(nullptr)},
                    {"generated", !cfg.data.path},
                    {"sha1", git_blob_sha1(loaded.csv)}};
  inputs["config"] = opt.config ? json{{"path", fs::absolute(*opt.config).lexically_normal().string()},
                                       {"sha1", git_blob_sha1(*config_text)}}
                                : json(nullptr);
  inputs["resumed_from"] = opt.resume ? json{{"path", fs::absolute(*opt.resume).lexically_normal().string()},
                                             {"sha1", git_blob_sha1(read_file(*opt.resume))}}
                                      : json(nullptr);
  write_json(opt.out / "manifest.json", {{"manifest_version", 1},
                                         {"command", "train"},
                                         {"config", config_to_json(cfg)},
                                         {"seed", run.seed},
                                         {"single_thread", true},
                                         {"inputs", inputs},
                                         {"outputs", {"checkpoint.json", "metrics.jsonl"}},
                                         {"final_epoch", state.epoch}});
  fmt::print(log, "wrote {}\n", (opt.out / "checkpoint.json").string());
  return outcome;
}

// ---------------------------------------------------------------------------

DiagnoseOutcome cmd_diagnose(const DiagnoseOptions& opt, std::ostream& log) {
  if (opt.k < 1) throw UsageError("diagnose: --k must be >= 1");
  DiagnoseOutcome outcome;

  if (opt.oracle == Oracle::Sphere) {
    const fs::path out = opt.out.value_or(".");
    const std::vector<Vector> codes = geo::disc_grid(40, 2.0);
    std::vector<double> c;
    for (const Vector& z : codes) c.push_back(geo::stereographic_factor(z));
    const geo::ConformalField field = geo::ConformalField::from_values(codes, c);
    const geo::LatentGraph graph = geo::build_graph(codes, opt.k, opt.bandwidth);
    const geo::CurvatureField s = geo::scalar_curvature(field, graph);
    std::string csv = "z0,z1,c,c_normalized,S_raw,S_calibrated,S_normalized,interior\n";
    std::vector<double> abs_norm;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      csv += fmt::format("{},{},{},{},{},{},{},{}\n", num(codes[i](0)), num(codes[i](1)), num(c[i]), num(field.normalized[i]),
                         num(s.raw[i]), num(s.calibrated[i]), num(s.normalized[i]), s.interior[i] ? 1 : 0);
      abs_norm.push_back(std::abs(s.normalized[i]));
    }
    outcome.points = codes.size();
    outcome.interior = static_cast<std::size_t>(std::count(s.interior.begin(), s.interior.end(), true));
    outcome.median_calibrated = geo::masked_median(s.calibrated, s.interior);
    outcome.median_abs_normalized = geo::masked_median(abs_norm, s.interior);
    fs::create_directories(out);
    write_file(out / "diagnostics.csv", csv);
    write_json(out / "oracle_summary.json", {{"oracle", "sphere"},
                                             {"expected_curvature", 2.0},
                                             {"median_interior_S_calibrated", *outcome.median_calibrated},
                                             {"relative_error", std::abs(*outcome.median_calibrated - 2.0) / 2.0},
                                             {"interior", outcome.interior},
                                             {"points", outcome.points},
                                             {"k", opt.k},
                                             {"bandwidth", graph.bandwidth},
                                             {"laplacian_scale", s.laplacian_scale}});
    fmt::print(log, "sphere oracle: median interior curvature {:.4f} (analytic 2) over {} of {} nodes\n",
               *outcome.median_calibrated, outcome.interior, outcome.points);
    return outcome;
  }

  if (!opt.checkpoint) throw UsageError("diagnose: --checkpoint is required unless --oracle sphere");
  const Checkpoint ck = load_checkpoint(*opt.checkpoint);
  ResolvedConfig cfg = ck.config;
  if (opt.data) cfg.data.path = fs::absolute(*opt.data).lexically_normal().string();
  const fs::path out = opt.out.value_or(opt.checkpoint->has_parent_path() ? opt.checkpoint->parent_path() : fs::path("."));

  const LoadedData loaded = load_data(cfg);
  const data::Dataset val = prepared_split(cfg, loaded.raw).second;
  const nn::Mlp& enc = ck.state.encoder;
  const nn::Mlp& dec = ck.state.decoder;
  const int m = dec.input_dim();

  std::vector<Vector> codes;
  std::vector<geo::ConditionNumbers> kappa;
  for (const Vector& x : val.sample_list()) {
    codes.push_back(nn::forward(enc, x));
    kappa.push_back(geo::condition_numbers(dec, codes.back()));
  }
  const geo::ConformalField field = geo::conformal_field(dec, codes);
  std::optional<geo::CurvatureField> curv;
  std::optional<geo::LatentGraph> graph;
  if (m == 2) {
    graph = geo::build_graph(codes, opt.k, opt.bandwidth);
    curv = geo::scalar_curvature(field, *graph);
  } else {
    fmt::print(log, "warning: latent dimension {} != 2; curvature columns omitted\n", m);
  }
  const geo::KappaSummary summary = geo::summarize_kappa(kappa);

  std::string csv;
  for (int d = 0; d < m; ++d) csv += fmt::format("z{},", d);
  csv += "c,c_normalized,";
  if (curv) csv += "S_raw,S_calibrated,S_normalized,interior,";
  csv += "kappa_jac,kappa_pbm\n";
  std::vector<double> abs_norm;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (int d = 0; d < m; ++d) csv += num(codes[i](d)) + ",";
    csv += num(field.values[i]) + "," + num(field.normalized[i]) + ",";
    if (curv) {
      csv += fmt::format("{},{},{},{},", num(curv->raw[i]), num(curv->calibrated[i]), num(curv->normalized[i]),
                         curv->interior[i] ? 1 : 0);
      abs_norm.push_back(std::abs(curv->normalized[i]));
    }
    csv += num(kappa[i].jac) + "," + num(kappa[i].pbm) + "\n";
  }

  outcome.points = codes.size();
  outcome.kappa = summary;
  json curvature = nullptr;
  if (curv) {
    outcome.interior = static_cast<std::size_t>(std::count(curv->interior.begin(), curv->interior.end(), true));
    outcome.median_abs_normalized = geo::masked_median(abs_norm, curv->interior);
    outcome.median_calibrated = geo::masked_median(curv->calibrated, curv->interior);
    curvature = {{"interior", outcome.interior},
                 {"median_interior_abs_S_normalized", *outcome.median_abs_normalized},
                 {"median_interior_S_calibrated", *outcome.median_calibrated},
                 {"k", graph->k},
                 {"bandwidth", graph->bandwidth},
                 {"laplacian_scale", curv->laplacian_scale}};
  }
  fs::create_directories(out);
  write_file(out / "diagnostics.csv", csv);
  write_json(out / "kappa_summary.json", {{"regularizer", reg::to_string(cfg.run.regularizer)},
                                          {"lambda_geo", cfg.run.lambda_geo ? json(*cfg.run.lambda_geo) : json(nullptr)},
                                          {"epoch", ck.state.epoch},
                                          {"points", outcome.points},
                                          {"kappa_jac", summary_json(summary.jac)},
                                          {"kappa_pbm", summary_json(summary.pbm)},
                                          {"used", summary.used},
                                          {"excluded", summary.excluded},
                                          {"curvature", curvature}});
  fmt::print(log, "{}: kappa_jac {:.3f} +- {:.3f}, kappa_pbm {:.3f} +- {:.3f} over {} validation points",
             reg::to_string(cfg.run.regularizer), summary.jac.mean, summary.jac.stddev, summary.pbm.mean,
             summary.pbm.stddev, summary.used);
  if (summary.excluded > 0) fmt::print(log, " ({} rank-deficient excluded)", summary.excluded);
  fmt::print(log, "\n");
  if (curv)
    fmt::print(log, "median |S| (normalized) over {} interior points: {:.4f}\n", outcome.interior,
               *outcome.median_abs_normalized);
  return outcome;
}

// ---------------------------------------------------------------------------

namespace {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns.begin());
  }
  std::vector<double> values(std::size_t c) const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
  }
};

double parse_cell(const std::string& cell, const std::string& where) {
  if (cell == "inf") return INFINITY;
  if (cell == "-inf") return -INFINITY;
  if (cell == "nan") return NAN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
    throw ParseError(fmt::format("{}: bad number '{}'", where, cell));
  return v;
}

Table read_table(const fs::path& path) {
  std::istringstream in(read_file(path));
  Table t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ParseError(fmt::format("{}:1: missing header", path.string()));
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = fmt::format("{}:{}", path.string(), lineno);
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(parse_cell(cell, where));
    if (row.size() != t.columns.size())
      throw ParseError(fmt::format("{}: expected {} columns, got {}", where, t.columns.size(), row.size()));
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw ParseError(fmt::format("{}: no data rows", path.string()));
  return t;
}

}  // namespace

std::vector<fs::path> cmd_plot(const PlotOptions& opt, std::ostream& log) {
  const Table t = read_table(opt.diagnostics);
  const fs::path out = opt.out.value_or(opt.diagnostics.has_parent_path() ? opt.diagnostics.parent_path() : fs::path("."));
  fs::create_directories(out);
  std::vector<fs::path> written;

  const auto z0 = t.column("z0");
  const auto z1 = t.column("z1");
  auto scatter = [&](std::string_view field, std::string_view title, const char* file) {
    const auto c = t.column(field);
    if (!c || !z0 || !z1) return;
    std::vector<ScatterPoint> pts;
    for (const auto& r : t.rows) pts.push_back({r[*z0], r[*z1], r[*c]});
    written.push_back(out / file);
    write_file(written.back(), scatter_svg(pts, title, field));
  };
  scatter("c_normalized", "Normalized conformal factor", "conformal_factor.svg");
  scatter("S_normalized", "Normalized scalar curvature", "scalar_curvature.svg");

  std::vector<StripSeries> series;
  for (const char* name : {"kappa_jac", "kappa_pbm"}) {
    if (const auto c = t.column(name)) series.push_back({name, t.values(*c)});
  }
  if (!series.empty()) {
    written.push_back(out / "condition_numbers.svg");
    write_file(written.back(), strip_svg(series, "Condition numbers"));
  }
  if (written.empty()) throw ParseError(fmt::format("{}: no plottable columns", opt.diagnostics.string()));
  for (const fs::path& p : written) fmt::print(log, "wrote {}\n", p.string());
  return written;
}

// ---------------------------------------------------------------------------

CompareOutcome cmd_compare(const CompareOptions& opt, std::ostream& log) {
  if (opt.runs.size() < 2) throw UsageError("compare: need at least two runs");
  struct Run {
    std::string name;
    std::string regularizer;
    json summary;
  };
  std::vector<Run> runs;
  for (const fs::path& p : opt.runs) {
    const fs::path file = fs::is_directory(p) ? p / "kappa_summary.json" : p;
    if (!fs::exists(file)) throw IoError(fmt::format("run '{}': no kappa_summary.json (run diagnose first)", p.string()));
    json s = read_json(file);
    if (!s.contains("regularizer") || !s.contains("kappa_jac") || !s.contains("kappa_pbm"))
      throw ParseError(fmt::format("run '{}': kappa summary lacks regularizer or kappa fields", p.string()));
    const std::string tag = s.at("regularizer").get<std::string>();
    runs.push_back({tag, tag, std::move(s)});
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const bool clash = std::count_if(runs.begin(), runs.end(), [&](const Run& r) { return r.regularizer == runs[i].regularizer; }) > 1;
    if (clash) {
      const fs::path& p = opt.runs[i];
      const fs::path stem = fs::is_directory(p) ? p.filename() : p.parent_path().filename();
      runs[i].name = fmt::format("{} ({})", runs[i].regularizer, stem.empty() ? std::to_string(i) : stem.string());
    }
  }

  auto cell = [](const json& s, const char* key) {
    return fmt::format("{:.2f} ± {:.2f}", s.at(key).at("mean").get<double>(), s.at(key).at("std").get<double>());
  };
  std::size_t width = 16;
  for (const Run& r : runs) width = std::max(width, r.name.size() + 2);
  std::string text = fmt::format("{:<12}", "");
  for (const Run& r : runs) text += fmt::format("{:>{}}", r.name, width);
  text += "\n";
  for (const char* key : {"kappa_jac", "kappa_pbm"}) {
    text += fmt::format("{:<12}", key);
    // fmt pads by code points, so the ± sign lines up
    for (const Run& r : runs) text += fmt::format("{:>{}}", cell(r.summary, key), width);
    text += "\n";
  }

  CompareOutcome outcome;
  const auto glob = std::find_if(runs.begin(), runs.end(), [](const Run& r) { return r.regularizer == "globiso"; });
  bool any = false;
  bool holds = true;
  if (glob != runs.end()) {
    const double ref = glob->summary.at("kappa_pbm").at("mean").get<double>();
    for (const Run& r : runs) {
      if (r.regularizer != "conf" && r.regularizer != "lociso") continue;
      any = true;
      holds = holds && r.summary.at("kappa_pbm").at("mean").get<double>() < ref;
    }
  }
  if (any) outcome.ordering = holds;
  text += fmt::format("expected ordering (kappa_pbm of conf/lociso below globiso): {}\n",
                      outcome.ordering ? (*outcome.ordering ? "holds" : "violated") : "not applicable");

  json table;
  table["runs"] = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const json& s = runs[i].summary;
    table["runs"].push_back({{"name", runs[i].name},
                             {"path", opt.runs[i].string()},
                             {"regularizer", runs[i].regularizer},
                             {"kappa_jac", s.at("kappa_jac")},
                             {"kappa_pbm", s.at("kappa_pbm")},
                             {"used", s.value("used", 0)},
                             {"excluded", s.value("excluded", 0)}});
  }
  table["ordering"] = {{"expected", "kappa_pbm of conf and lociso below globiso"},
                       {"holds", outcome.ordering ? json(*outcome.ordering) : json(nullptr)}};
  outcome.table = table;

  fmt::print(log, "{}", text);
  if (opt.out) {
    fs::create_directories(*opt.out);
    write_file(*opt.out / "comparison.txt", text);
    write_json(*opt.out / "comparison.json", table);
  }
  return outcome;
}

// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conformal autoencoder training and latent-geometry diagnostics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "confae 0.1.0");

  GenerateOptions gen;
  std::string gen_out;
  CLI::App* g = app.add_subcommand("generate", "Sample a Swiss-roll dataset to CSV");
  g->add_option("--n", gen.n, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Random seed (falls back to CONFAE_SEED, then 0)");
  g->add_option("--out", gen_out, "Output CSV path")->required();
  g->add_flag("--standardize", gen.standardize, "Write per-feature standardized coordinates");
  bool dummy_single = false;
  g->add_flag("--single-thread", dummy_single, "Accepted for symmetry; every command runs on one thread");

  TrainOptions tr;
  std::string tr_config, tr_data, tr_out = "run", tr_resume;
  CLI::App* t = app.add_subcommand("train", "Train an autoencoder under a geometric regularizer");
  t->add_option("--config", tr_config, "Run config JSON, or a manifest.json from an earlier run")
      ->check(CLI::ExistingFile);
  t->add_option("--data", tr_data, "Dataset CSV (default: generate data.n points with the run seed)")
      ->check(CLI::ExistingFile);
  t->add_option("--n", tr.n, "Generated sample count");
  t->add_option("--out", tr_out, "Output directory")->capture_default_str();
  t->add_option("--set", tr.overrides, "Override a config key: dotted.key=value (repeatable)");
  t->add_option("--seed", tr.seed, "Run seed (falls back to the config, then CONFAE_SEED)");
  t->add_option("--regularizer", tr.regularizer, "none|globiso|lociso|conf|constconf")
      ->check(CLI::IsMember({"none", "globiso", "lociso", "conf", "constconf"}));
  t->add_option("--lambda-geo", tr.lambda_geo, "Regularizer intensity");
  t->add_option("--probes", tr.probes, "Rademacher probes per point");
  t->add_option("--epochs", tr.epochs, "Total epochs");
  t->add_flag("--exact-trace", tr.exact_trace, "Use the full Jacobian instead of probes");
  t->add_flag("--detach-codes", tr.detach_codes, "Stop geometric gradients at the codes");
  t->add_flag("--calibrate-intensity", tr.calibrate_intensity,
              "Evaluate both loss terms on the initial model, propose lambda_geo and stop");
  t->add_option("--resume", tr_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  t->add_flag("--single-thread", tr.single_thread, "Deterministic single-threaded execution (always on)");
  t->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");

  DiagnoseOptions dg;
  std::string dg_checkpoint, dg_data, dg_out, dg_bandwidth = "auto", dg_oracle = "none";
  CLI::App* d = app.add_subcommand("diagnose", "Conformal factor, curvature and condition numbers on validation codes");
  d->add_option("--checkpoint", dg_checkpoint, "Checkpoint from train")->check(CLI::ExistingFile);
  d->add_option("--data", dg_data, "Dataset CSV override")->check(CLI::ExistingFile);
  d->add_option("--out", dg_out, "Output directory (default: next to the checkpoint)");
  d->add_option("--k", dg.k, "Neighbors in the latent kNN graph")->capture_default_str();
  d->add_option("--bandwidth", dg_bandwidth, "Kernel bandwidth, or auto for the median k-th neighbor distance")
      ->capture_default_str();
  d->add_option("--oracle", dg_oracle, "none|sphere")->check(CLI::IsMember({"none", "sphere"}))->capture_default_str();
  d->add_flag("--single-thread", dummy_single, "Accepted for symmetry; every command runs on one thread");

  PlotOptions pl;
  std::string pl_in, pl_out;
  CLI::App* p = app.add_subcommand("plot", "Render SVG figures from diagnostics.csv");
  p->add_option("diagnostics", pl_in, "diagnostics.csv")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pl_out, "Output directory (default: next to the CSV)");

  CompareOptions cp;
  std::vector<std::string> cp_runs;
  std::string cp_out;
  CLI::App* c = app.add_subcommand("compare", "Tabulate condition numbers across runs");
  c->add_option("runs", cp_runs, "Run directories or kappa_summary.json files")->required();
  c->add_option("--out", cp_out, "Directory for comparison.txt and comparison.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (g->parsed()) {
      gen.out = gen_out;
      cmd_generate(gen, out);
    } else if (t->parsed()) {
      if (!tr_config.empty()) tr.config = tr_config;
      if (!tr_data.empty()) tr.data = tr_data;
      if (!tr_resume.empty()) tr.resume = tr_resume;
      tr.out = tr_out;
      if (tr.single_thread || dummy_single) tr.single_thread = true;
      cmd_train(tr, out);
    } else if (d->parsed()) {
      if (!dg_checkpoint.empty()) dg.checkpoint = dg_checkpoint;
      if (!dg_data.empty()) dg.data = dg_data;
      if (!dg_out.empty()) dg.out = dg_out;
      if (dg_bandwidth != "auto") {
        double h = 0.0;
        const auto [ptr, ec] = std::from_chars(dg_bandwidth.data(), dg_bandwidth.data() + dg_bandwidth.size(), h);
        if (ec != std::errc() || ptr != dg_bandwidth.data() + dg_bandwidth.size() || !(h > 0.0))
          throw UsageError(fmt::format("--bandwidth: expected a positive number or auto, got '{}'", dg_bandwidth));
        dg.bandwidth = h;
      }
      dg.oracle = dg_oracle == "sphere" ? Oracle::Sphere : Oracle::None;
      cmd_diagnose(dg, out);
    } else if (p->parsed()) {
      pl.diagnostics = pl_in;
      if (!pl_out.empty()) pl.out = pl_out;
      cmd_plot(pl, out);
    } else if (c->parsed()) {
      for (const std::string& r : cp_runs) cp.runs.emplace_back(r);
      if (!cp_out.empty()) cp.out = cp_out;
      cmd_compare(cp, out);
    }
  } catch (const ConfigError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  } catch (const ShapeError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  } catch (const ParseError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace confae::cli
