// reprstruct: command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 I/O error.
// Every failure prints one line "error[<code>]: <detail>" on stderr.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reprstruct/reprstruct.hpp"

namespace fs = std::filesystem;
using namespace reprstruct;

namespace {

/// JSON config files: {"<subcommand>": {"<long flag name>": value, ...}}.
/// Command-line flags override config values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> out;
    walk(j, "", {}, out);
    return out;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void walk(const nlohmann::json& j, const std::string& name, std::vector<std::string> parents,
                   std::vector<CLI::ConfigItem>& out) {
    if (j.is_object()) {
      if (!name.empty()) parents.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) walk(*it, it.key(), parents, out);
      return;
    }
    if (name.empty()) throw CLI::ConversionError("config top level must be an object");
    CLI::ConfigItem item;
    item.name = name;
    item.parents = parents;
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar(v));
    } else {
      item.inputs = {scalar(j)};
    }
    out.push_back(std::move(item));
  }
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_parameter: return 1;
    case ErrorCode::io_error: return 3;
    default: return 2;
  }
}

void print_error(const std::string& slug, const std::string& message) {
  std::string one_line = message;
  for (auto& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error[" << slug << "]: " << one_line << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_error, "cannot open for writing " + path.string());
  out << text;
  if (!out) fail(ErrorCode::io_error, "write failed: " + path.string());
}

std::string fixed(double v, int precision = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

struct MeasureFlags {
  std::vector<std::string> sets{"token"};
  std::size_t bins = kDefaultBins;
  std::size_t min_count = kDefaultMinCount;
  std::string estimator = "miller-madow";
  bool weighted = false;
  std::string baseline;

  void attach(CLI::App* cmd) {
    cmd->add_option("--sets", sets, "Label sets: token, pos, bigram, or a custom label column")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--bins", bins, "Equal-width bins per dimension")->check(CLI::Range(std::size_t{2}, kMaxBins))->capture_default_str();
    cmd->add_option("--min-count", min_count, "Minimum occurrences for a label to enter the average")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--estimator", estimator, "Entropy estimator")
        ->check(CLI::IsMember({"miller-madow", "mle"}))
        ->capture_default_str();
    cmd->add_flag("--weighted", weighted, "Frequency-weighted label average");
    cmd->add_option("--regularity-baseline", baseline, "Also report variation(<set>) - variation(each set)");
  }

  MeasureOptions options() const {
    MeasureOptions o;
    o.corrected = estimator == "miller-madow";
    o.min_count = min_count;
    o.weighted = weighted;
    if (!baseline.empty()) o.regularity_baseline = baseline;
    return o;
  }
};

void print_summary(const MeasureReport& report, std::ostream& os) {
  os << "information " << fixed(report.information) << "  (rows=" << report.rows << ", dims=" << report.dims
     << ", n_bins=" << report.n_bins << ", estimator=" << (report.corrected ? "miller-madow" : "mle")
     << ", min_count=" << report.min_count << ")\n";
  if (report.sets.empty()) return;
  os << std::left << std::setw(14) << "set" << std::setw(12) << "variation" << std::setw(12) << "regularity"
     << std::setw(17) << "disentanglement" << std::setw(9) << "labels" << "excluded\n";
  for (const auto& s : report.sets) {
    os << std::left << std::setw(14) << s.name;
    if (!s.ok()) {
      os << "error: " << *s.error << "\n";
      continue;
    }
    os << std::setw(12) << fixed(s.variation) << std::setw(12) << fixed(s.regularity) << std::setw(17)
       << (s.disentanglement ? fixed(*s.disentanglement) : std::string("undefined")) << std::setw(9)
       << s.per_label.size() << s.excluded.size() << "\n";
  }
}

std::vector<MeasureSeries> load_runs(const std::vector<std::string>& paths) {
  std::vector<MeasureSeries> runs;
  for (const auto& p : paths) {
    for (auto& s : read_series_csv(p)) runs.push_back(std::move(s));
  }
  return runs;
}

int run(int argc, char** argv) {
  CLI::App app{"Information-theoretic structure measures for learned representations"};
  app.name("reprstruct");
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file mirroring the flags, keyed by subcommand");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Measure one representation dump against label sets");
  std::string reps_path, tokens_path, out_path;
  bool no_meta_time = false;
  MeasureFlags analyze_flags;
  analyze_cmd->add_option("--reps", reps_path, "Representation dump (.hrep, .npy or .csv)")->required();
  analyze_cmd->add_option("--tokens", tokens_path, "Tokens JSONL")->required();
  analyze_flags.attach(analyze_cmd);
  analyze_cmd->add_option("--out", out_path, "Write the JSON report here");
  analyze_cmd->add_flag("--no-meta-time", no_meta_time, "Omit the timestamp from the report");

  // series
  auto* series_cmd = app.add_subcommand("series", "Measure every checkpoint of a run manifest");
  std::string manifest_path, series_out;
  bool strict = false;
  MeasureFlags series_flags;
  series_cmd->add_option("--manifest", manifest_path, "Run manifest JSON")->required();
  series_flags.attach(series_cmd);
  series_cmd->add_flag("--strict", strict, "Fail on the first bad checkpoint instead of skipping it");
  series_cmd->add_option("--out", series_out, "Write the series CSV here (default: stdout)");

  // correlate
  auto* correlate_cmd = app.add_subcommand("correlate", "Spearman correlation within a run or across runs");
  std::string series_path, x_key, y_key, run_filter, correlate_out;
  std::vector<std::string> run_paths;
  std::optional<std::int64_t> at_step;
  auto* series_opt = correlate_cmd->add_option("--series", series_path, "Series CSV (within-run, across steps)");
  auto* runs_opt = correlate_cmd->add_option("--runs", run_paths, "Series CSVs, one or more runs each (across runs)");
  correlate_cmd->add_option("--at-step", at_step, "Step to compare runs at (across-run mode)");
  correlate_cmd->add_option("--x", x_key, "Column for x (loss, gen_acc, step or a measure key)")->required();
  correlate_cmd->add_option("--y", y_key, "Column for y")->required();
  correlate_cmd->add_option("--run", run_filter, "Run id to use when the series file holds several runs");
  correlate_cmd->add_option("--out", correlate_out, "Write the result JSON here");
  series_opt->excludes(runs_opt);

  // aggregate
  auto* aggregate_cmd = app.add_subcommand("aggregate", "Mean and 95% CI of a measure across runs at one step");
  std::vector<std::string> agg_paths;
  std::string agg_key, agg_out;
  std::int64_t agg_step = 0;
  aggregate_cmd->add_option("--runs", agg_paths, "Series CSVs")->required();
  aggregate_cmd->add_option("--key", agg_key, "Measure key, e.g. token.regularity")->required();
  aggregate_cmd->add_option("--at-step", agg_step, "Step")->required();
  aggregate_cmd->add_option("--out", agg_out, "Write the result JSON here");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic representation system");
  synth::SynthConfig cfg;
  std::string mode = "monotone", synth_out;
  bool with_oracle = false;
  synth_cmd->add_option("--mode", mode, "monotone | contextual | uniform")
      ->check(CLI::IsMember({"monotone", "contextual", "uniform"}))
      ->capture_default_str();
  synth_cmd->add_option("--labels", cfg.labels, "Number of labels K")->capture_default_str();
  synth_cmd->add_option("--contexts", cfg.contexts, "Contexts per label (contextual)")->capture_default_str();
  synth_cmd->add_option("--dims", cfg.dims, "Dimensions D")->capture_default_str();
  synth_cmd->add_option("--samples", cfg.samples, "Rows M")->capture_default_str();
  synth_cmd->add_option("--noise", cfg.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  synth_cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--bins", cfg.n_bins, "Bin count used for layout checks and expectations")
      ->check(CLI::Range(std::size_t{2}, kMaxBins))
      ->capture_default_str();
  synth_cmd->add_option("--context-scale", cfg.context_scale, "Context separation in [0, 1] (contextual)")
      ->capture_default_str();
  synth_cmd->add_option("--sentence-length", cfg.sentence_length, "Tokens per sentence in the tokens file")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_flag("--with-oracle", with_oracle, "Print brute-force oracle measures for the generated system");

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a representation dump or tokens file");
  std::string inspect_path;
  inspect_cmd->add_option("file", inspect_path, "File to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    print_error("io-error", e.what());
    return 3;
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 1;
  }

  try {
    if (*analyze_cmd) {
      auto batch = load_batch(reps_path);
      auto records = read_tokens(tokens_path);
      validate_alignment(batch, records);
      std::vector<LabelSet> sets;
      for (const auto& name : analyze_flags.sets) sets.push_back(build_label_set(records, name));
      auto spec = fit_bins(batch, analyze_flags.bins);
      auto report = analyze(batch, spec, sets, analyze_flags.options());
      if (!out_path.empty()) {
        ReportMeta meta;
        meta.include_time = !no_meta_time;
        meta.spec = spec;
        write_text(out_path, to_json(report, meta).dump(2) + "\n");
      }
      print_summary(report, std::cout);
      int code = 0;
      for (const auto& s : report.sets) {
        if (!s.ok()) {
          auto ec = s.error_code.value_or(ErrorCode::invalid_data);
          print_error(std::string(error_slug(ec)), "set '" + s.name + "': " + *s.error);
          code = std::max(code, 2);
        }
      }
      return code;
    }

    if (*series_cmd) {
      auto manifest = read_manifest(manifest_path);
      SeriesOptions opts;
      opts.sets = series_flags.sets;
      opts.n_bins = series_flags.bins;
      opts.measure = series_flags.options();
      opts.strict = strict;
      auto result = compute_series(manifest, opts);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      std::string csv = series_to_csv(result.series);
      if (series_out.empty()) {
        std::cout << csv;
      } else {
        write_text(series_out, csv);
        std::cout << "wrote " << result.series.points.size() << " rows to " << series_out << "\n";
      }
      return 0;
    }

    if (*correlate_cmd) {
      CorrelationResult r;
      if (!series_path.empty()) {
        if (at_step) fail(ErrorCode::invalid_parameter, "--at-step applies to --runs");
        auto runs = read_series_csv(series_path);
        const MeasureSeries* chosen = nullptr;
        if (!run_filter.empty()) {
          for (const auto& s : runs) {
            if (s.run_id == run_filter) chosen = &s;
          }
          if (!chosen) fail(ErrorCode::invalid_data, "run '" + run_filter + "' not in " + series_path);
        } else if (runs.size() == 1) {
          chosen = &runs.front();
        } else {
          fail(ErrorCode::invalid_parameter, series_path + " holds " + std::to_string(runs.size()) + " runs; pick one with --run");
        }
        r = correlate_within_run(*chosen, x_key, y_key);
      } else if (!run_paths.empty()) {
        if (!at_step) fail(ErrorCode::invalid_parameter, "--runs needs --at-step");
        r = correlate_across_runs(load_runs(run_paths), y_key, x_key, *at_step);
      } else {
        fail(ErrorCode::invalid_parameter, "give --series or --runs");
      }
      auto j = to_json(r);
      j["x"] = x_key;
      j["y"] = y_key;
      if (at_step) j["step"] = *at_step;
      if (!correlate_out.empty()) write_text(correlate_out, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*aggregate_cmd) {
      auto r = aggregate_runs(load_runs(agg_paths), agg_key, agg_step);
      auto j = to_json(r);
      if (!agg_out.empty()) write_text(agg_out, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*synth_cmd) {
      cfg.mode = *synth::parse_mode(mode);
      auto sys = synth::generate(cfg);
      fs::path dir(synth_out);
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) fail(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
      write_reps(sys.batch, dir / "reps.hrep");
      write_tokens(synth::to_records(sys, cfg.sentence_length), dir / "tokens.jsonl");
      std::cout << "wrote " << (dir / "reps.hrep").string() << " (rows=" << sys.batch.rows()
                << ", dims=" << sys.batch.dims() << ")\n";
      std::cout << "wrote " << (dir / "tokens.jsonl").string() << " (sets: token"
                << (sys.context ? ", bigram, context" : ", bigram") << ")\n";
      if (cfg.mode == synth::Mode::monotone && cfg.noise_sigma == 0.0 && cfg.labels <= cfg.n_bins) {
        for (bool corrected : {false, true}) {
          auto f = synth::monotone_closed_form(cfg, cfg.n_bins, corrected);
          std::cout << "expected token measures (n_bins=" << cfg.n_bins << ", " << (corrected ? "miller-madow" : "mle")
                    << ", min_count<=" << cfg.samples / cfg.labels << "): information=" << fixed(f.information, 12)
                    << " variation=" << fixed(f.variation, 12) << " regularity=" << fixed(f.regularity, 12)
                    << " disentanglement="
                    << (f.disentanglement ? fixed(*f.disentanglement, 12) : std::string("undefined")) << "\n";
        }
      }
      if (with_oracle) {
        if (sys.batch.rows() > synth::kOracleMaxRows) {
          std::cout << "oracle skipped: rows > " << synth::kOracleMaxRows << "\n";
        } else {
          std::vector<LabelSet> sets{sys.tokens};
          if (sys.context) sets.push_back(*sys.context);
          MeasureOptions o;
          o.min_count = 1;
          auto spec = fit_bins(sys.batch, cfg.n_bins);
          auto oracle = synth::oracle_measures(sys.batch, spec, sets, o);
          std::cout << "oracle (n_bins=" << cfg.n_bins << ", miller-madow, min_count=1):\n";
          print_summary(oracle, std::cout);
        }
      }
      return 0;
    }

    if (*inspect_cmd) {
      fs::path p(inspect_path);
      if (!fs::exists(p)) fail(ErrorCode::io_error, "cannot open " + p.string());
      std::string head;
      {
        std::ifstream in(p, std::ios::binary);
        if (!in) fail(ErrorCode::io_error, "cannot open " + p.string());
        head.resize(6);
        in.read(head.data(), 6);
        head.resize(static_cast<std::size_t>(in.gcount()));
      }
      auto ext = p.extension().string();
      bool is_tokens = ext == ".jsonl" || (!head.empty() && head[0] == '{');
      if (is_tokens) {
        auto records = read_tokens(p);
        bool has_pos = !records.empty() && std::all_of(records.begin(), records.end(), [](const auto& r) { return r.pos.has_value(); });
        std::cout << "sentences=" << records.size() << ", tokens=" << total_tokens(records)
                  << ", pos=" << (has_pos ? "present" : "absent") << "\n";
        return 0;
      }
      auto batch = load_batch(p);
      auto spec = fit_bins(batch, 2);
      std::cout << "rows=" << batch.rows() << ", dims=" << batch.dims() << ", degenerate_dims=[";
      auto degenerate = spec.degenerate_dims();
      for (std::size_t i = 0; i < degenerate.size(); ++i) std::cout << (i ? "," : "") << degenerate[i];
      std::cout << "]\n";
      for (std::size_t d = 0; d < batch.dims(); ++d) {
        std::cout << "dim " << d << ": min=" << format_double(spec.lo[d]) << " max=" << format_double(spec.hi[d])
                  << (spec.degenerate(d) ? " degenerate" : "") << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    print_error(std::string(e.slug()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
