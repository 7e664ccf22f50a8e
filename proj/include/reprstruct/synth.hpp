#pragma once

// Synthetic representation systems with known structure, and a brute-force
// recomputation of every measure used to cross-check the main estimator.
//
// Random streams come from std::mt19937_64 seeded with the config seed and
// std::normal_distribution / std::uniform_real_distribution; they are
// reproducible within one standard library build, not across builds.
// Generated values are rounded to binary32 so a system survives an HREP
// round trip unchanged.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reprstruct/batch.hpp"
#include "reprstruct/error.hpp"
#include "reprstruct/estimator.hpp"
#include "reprstruct/ingestion.hpp"
#include "reprstruct/labelsets.hpp"
#include "reprstruct/measures.hpp"

namespace reprstruct::synth {

enum class Mode { monotone, contextual, uniform };

inline std::optional<Mode> parse_mode(const std::string& s) {
  if (s == "monotone") return Mode::monotone;
  if (s == "contextual") return Mode::contextual;
  if (s == "uniform") return Mode::uniform;
  return std::nullopt;
}

struct SynthConfig {
  Mode mode = Mode::monotone;
  std::size_t labels = 10;    // K
  std::size_t contexts = 2;   // C, contextual only
  std::size_t dims = 8;       // D
  std::size_t samples = 1000; // M
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_bins = kDefaultBins;  // bin budget the contextual layout must fit
  double context_scale = 1.0;         // 0 collapses contexts, 1 fully separates them
  std::size_t sentence_length = 10;   // rows per sentence when writing tokens
};

inline void validate(const SynthConfig& c) {
  auto bad = [](const std::string& m) { fail(ErrorCode::invalid_parameter, m); };
  if (c.labels < 1) bad("labels must be >= 1");
  if (c.dims < 1) bad("dims must be >= 1");
  if (c.samples < c.labels) bad("samples must be >= labels");
  if (!(c.noise_sigma >= 0.0) || !std::isfinite(c.noise_sigma)) bad("noise must be a finite value >= 0");
  if (c.sentence_length < 1) bad("sentence length must be >= 1");
  if (c.mode == Mode::contextual) {
    if (c.contexts < 2) bad("contextual mode needs contexts >= 2");
    if (c.dims < 2) bad("contextual mode needs dims >= 2");
    if (c.samples < c.labels * c.contexts) bad("contextual mode needs samples >= labels * contexts");
    if (c.labels * c.contexts > c.n_bins) {
      bad("labels * contexts = " + std::to_string(c.labels * c.contexts) + " cannot occupy distinct bins with " +
          std::to_string(c.n_bins) + " bins");
    }
    if (!(c.context_scale >= 0.0) || !std::isfinite(c.context_scale)) bad("context scale must be >= 0");
  }
}

struct SyntheticSystem {
  RepresentationBatch batch;
  LabelSet tokens;
  std::optional<LabelSet> context;
};

namespace detail {

inline double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

inline std::string token_name(std::size_t k) { return "t" + std::to_string(k); }

inline double level(std::size_t k, std::size_t labels) {
  return labels == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(labels - 1);
}

}  // namespace detail

/// Label k (assigned round-robin) sits at the constant vector k/(K-1) plus
/// iid gaussian noise.
inline SyntheticSystem gen_monotone(const SynthConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> noise(0.0, c.noise_sigma > 0.0 ? c.noise_sigma : 1.0);
  std::vector<double> values(c.samples * c.dims);
  LabelSetBuilder tokens("token", LabelKind::token);
  for (std::size_t i = 0; i < c.samples; ++i) {
    std::size_t k = i % c.labels;
    double base = detail::level(k, c.labels);
    for (std::size_t d = 0; d < c.dims; ++d) {
      double v = base + (c.noise_sigma > 0.0 ? noise(rng) : 0.0);
      values[i * c.dims + d] = detail::to_float(v);
    }
    tokens.add(detail::token_name(k));
  }
  return {RepresentationBatch(c.samples, c.dims, std::move(values)), std::move(tokens).finish(), std::nullopt};
}

/// Rows cycle through (token k, context c) pairs. Every coordinate carries
/// the token level k/(K-1); the first half of the coordinates is further
/// offset by c * s * context_scale, with s = 1/((K-1) C) so that at full
/// scale all K*C combinations are equally spaced and land in distinct bins.
inline SyntheticSystem gen_contextual(const SynthConfig& c) {
  if (c.mode != Mode::contextual) {
    SynthConfig copy = c;
    copy.mode = Mode::contextual;
    validate(copy);
  } else {
    validate(c);
  }
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> noise(0.0, c.noise_sigma > 0.0 ? c.noise_sigma : 1.0);
  const std::size_t half = c.dims / 2;
  const double s = 1.0 / (static_cast<double>(std::max<std::size_t>(c.labels - 1, 1)) * static_cast<double>(c.contexts));
  std::vector<double> values(c.samples * c.dims);
  LabelSetBuilder tokens("token", LabelKind::token);
  LabelSetBuilder context("context", LabelKind::custom);
  for (std::size_t i = 0; i < c.samples; ++i) {
    std::size_t j = i % (c.labels * c.contexts);
    std::size_t k = j / c.contexts;
    std::size_t ctx = j % c.contexts;
    double base = detail::level(k, c.labels);
    double offset = static_cast<double>(ctx) * s * c.context_scale;
    for (std::size_t d = 0; d < c.dims; ++d) {
      double v = base + (d < half ? offset : 0.0);
      if (c.noise_sigma > 0.0) v += noise(rng);
      values[i * c.dims + d] = detail::to_float(v);
    }
    tokens.add(detail::token_name(k));
    context.add(detail::token_name(k) + "@c" + std::to_string(ctx));
  }
  return {RepresentationBatch(c.samples, c.dims, std::move(values)), std::move(tokens).finish(),
          std::move(context).finish()};
}

/// iid uniform [0,1) coordinates; labels iid uniform over K.
inline SyntheticSystem gen_uniform(const SynthConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, c.labels - 1);
  std::vector<double> values(c.samples * c.dims);
  std::vector<std::uint32_t> ids(c.samples);
  for (std::size_t i = 0; i < c.samples; ++i) {
    for (std::size_t d = 0; d < c.dims; ++d) {
      // Rounding to float can reach 1.0; keep the half-open range.
      double v = detail::to_float(unit(rng));
      values[i * c.dims + d] = v < 1.0 ? v : detail::to_float(std::nextafter(1.0f, 0.0f));
    }
    ids[i] = static_cast<std::uint32_t>(label(rng));
  }
  LabelSetBuilder tokens("token", LabelKind::token);
  for (auto id : ids) tokens.add(detail::token_name(id));
  return {RepresentationBatch(c.samples, c.dims, std::move(values)), std::move(tokens).finish(), std::nullopt};
}

inline SyntheticSystem generate(const SynthConfig& c) {
  switch (c.mode) {
    case Mode::monotone: return gen_monotone(c);
    case Mode::contextual: return gen_contextual(c);
    case Mode::uniform: return gen_uniform(c);
  }
  return gen_monotone(c);
}

/// Splits the rows into sentences of `sentence_length` tokens (the last may be
/// shorter). The context set, when present, becomes the "context" label column.
inline std::vector<SentenceRecord> to_records(const SyntheticSystem& sys, std::size_t sentence_length) {
  if (sentence_length < 1) fail(ErrorCode::invalid_parameter, "sentence length must be >= 1");
  std::vector<SentenceRecord> records;
  const std::size_t m = sys.tokens.rows();
  for (std::size_t start = 0, id = 0; start < m; start += sentence_length, ++id) {
    SentenceRecord rec;
    rec.sentence_id = static_cast<std::int64_t>(id);
    std::size_t end = std::min(m, start + sentence_length);
    for (std::size_t r = start; r < end; ++r) {
      rec.tokens.push_back(sys.tokens.vocab[sys.tokens.row_labels[r]]);
      if (sys.context) rec.labels["context"].push_back(sys.context->vocab[sys.context->row_labels[r]]);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

/// One fabricated checkpoint of a synthetic training run.
struct RunCheckpoint {
  std::int64_t step = 0;
  SynthConfig config;
  double loss = 0.0;
  std::optional<double> gen_acc;
};

/// A contextual run in two phases. Early checkpoints keep contexts collapsed
/// (scale 0) while noise shrinks geometrically from `noise_start` to
/// `noise_end`, so token clusters sharpen. Late checkpoints hold the noise at
/// `noise_end` and raise the context scale linearly to 1, splitting each token
/// cluster into context sub-clusters: token regularity rises then falls while
/// context regularity keeps rising. Losses decrease as 1/step-index.
inline std::vector<RunCheckpoint> two_phase_trajectory(SynthConfig base, std::size_t early, std::size_t late,
                                                       double noise_start, double noise_end,
                                                       std::int64_t step_stride = 1000) {
  if (early < 2 || late < 1) fail(ErrorCode::invalid_parameter, "trajectory needs >= 2 early and >= 1 late checkpoints");
  if (!(noise_start >= noise_end) || !(noise_end > 0.0)) {
    fail(ErrorCode::invalid_parameter, "trajectory noise must shrink from noise_start to a positive noise_end");
  }
  base.mode = Mode::contextual;
  std::vector<RunCheckpoint> out;
  auto push = [&](double noise, double scale) {
    RunCheckpoint cp;
    cp.step = step_stride * static_cast<std::int64_t>(out.size() + 1);
    cp.config = base;
    cp.config.noise_sigma = noise;
    cp.config.context_scale = scale;
    cp.loss = 1.0 / static_cast<double>(out.size() + 1);
    out.push_back(cp);
  };
  for (std::size_t i = 0; i < early; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(early - 1);
    push(noise_start * std::pow(noise_end / noise_start, t), 0.0);
  }
  for (std::size_t i = 1; i <= late; ++i) push(noise_end, static_cast<double>(i) / static_cast<double>(late));
  for (const auto& cp : out) validate(cp.config);
  return out;
}

/// Writes each checkpoint's batch as <dir>/step<N>.hrep, the shared tokens as
/// <dir>/tokens.jsonl and a manifest <dir>/manifest.json with relative paths.
/// All checkpoints must produce the same token sequence.
inline RunManifest write_run(const fs::path& dir, const std::string& run_id, std::int64_t seed,
                             const std::vector<RunCheckpoint>& checkpoints) {
  if (checkpoints.empty()) fail(ErrorCode::invalid_parameter, "run has no checkpoints");
  fs::create_directories(dir);
  RunManifest m;
  m.run_id = run_id;
  m.seed = seed;
  m.tokens_path = "tokens.jsonl";
  std::optional<std::vector<SentenceRecord>> records;
  for (const auto& cp : checkpoints) {
    auto sys = generate(cp.config);
    auto recs = to_records(sys, cp.config.sentence_length);
    if (!records) {
      records = recs;
      write_tokens(recs, dir / m.tokens_path);
    } else if (recs != *records) {
      fail(ErrorCode::invalid_parameter, "checkpoint at step " + std::to_string(cp.step) + " changes the token sequence");
    }
    std::string name = "step" + std::to_string(cp.step) + ".hrep";
    write_reps(sys.batch, dir / name);
    m.checkpoints.push_back({cp.step, name, cp.loss, cp.gen_acc});
  }
  write_manifest(m, dir / "manifest.json");
  return read_manifest(dir / "manifest.json");
}

struct ClosedForm {
  double information = 0.0;
  double variation = 0.0;
  double regularity = 0.0;
  std::optional<double> disentanglement;
};

/// Exact measures of a noiseless monotone system whose K levels fall in
/// distinct bins (K <= n_bins): each dimension holds the label distribution,
/// every label sits in one bin, and label supports are disjoint.
inline ClosedForm monotone_closed_form(const SynthConfig& c, std::size_t n_bins, bool corrected) {
  validate(c);
  if (c.noise_sigma != 0.0 || c.labels > n_bins) {
    fail(ErrorCode::invalid_parameter, "closed form needs noise 0 and labels <= bins");
  }
  // Round-robin counts, in bin (= label) order.
  double h = 0.0;
  for (std::size_t k = 0; k < c.labels; ++k) {
    std::size_t count = c.samples / c.labels + (k < c.samples % c.labels ? 1 : 0);
    double p = static_cast<double>(count) / static_cast<double>(c.samples);
    h -= p * std::log2(p);
  }
  if (corrected && c.labels > 1) {
    h += static_cast<double>(c.labels - 1) / (2.0 * static_cast<double>(c.samples) * std::numbers::ln2);
  }
  ClosedForm f;
  f.information = h / std::log2(static_cast<double>(n_bins));
  f.variation = 0.0;
  f.regularity = f.information;
  if (c.labels >= 2) f.disentanglement = 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Brute-force oracle. Shares only type definitions with the main estimator:
// bin ids are recomputed per value, histograms are built by sorting bin ids
// and counting runs, and every conditional and complement distribution is
// rebuilt from scratch.

inline constexpr std::size_t kOracleMaxRows = 4096;

namespace oracle {

inline std::size_t bin_of(double x, double lo, double hi, std::size_t n) {
  if (!(hi > lo)) return 0;
  double w = (hi - lo) / static_cast<double>(n);
  double t = (x - lo) / w;
  if (!(t >= 0.0)) return 0;
  if (t >= static_cast<double>(n)) return n - 1;
  std::size_t b = static_cast<std::size_t>(t);
  return b < n ? b : n - 1;
}

struct Run {
  std::size_t bin;
  std::size_t count;
};

inline std::vector<Run> sorted_runs(std::vector<std::size_t> ids) {
  std::sort(ids.begin(), ids.end());
  std::vector<Run> runs;
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j < ids.size() && ids[j] == ids[i]) ++j;
    runs.push_back({ids[i], j - i});
    i = j;
  }
  return runs;
}

inline double entropy_bits(const std::vector<Run>& runs, std::size_t total, bool corrected) {
  double h = 0.0;
  for (const auto& r : runs) {
    double p = static_cast<double>(r.count) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  if (corrected && runs.size() > 1) {
    h += static_cast<double>(runs.size() - 1) / (2.0 * static_cast<double>(total) * std::numbers::ln2);
  }
  return h;
}

inline std::vector<std::size_t> column_bins(const RepresentationBatch& batch, const BinningSpec& spec, std::size_t d,
                                            const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(bin_of(batch(r, d), spec.lo[d], spec.hi[d], spec.n_bins));
  return out;
}

inline double js_divergence(const std::vector<Run>& label, std::size_t m1, const std::vector<Run>& rest, std::size_t m2) {
  double sp = 0.0;
  double sq = 0.0;
  std::size_t overlap = 0;
  for (const auto& a : label) {
    std::size_t b = 0;
    auto it = std::lower_bound(rest.begin(), rest.end(), a.bin, [](const Run& r, std::size_t bin) { return r.bin < bin; });
    if (it != rest.end() && it->bin == a.bin) b = it->count;
    double p = static_cast<double>(a.count) / static_cast<double>(m1);
    double q = m2 > 0 ? static_cast<double>(b) / static_cast<double>(m2) : 0.0;
    sp += static_cast<double>(a.count) * std::log2((2.0 * p) / (p + q));
    if (b > 0) sq += static_cast<double>(b) * std::log2((2.0 * q) / (p + q));
    overlap += b;
  }
  double rest_mass = static_cast<double>(m2 - overlap);
  double js = 0.5 * (sp / static_cast<double>(m1)) + 0.5 * ((sq + rest_mass) / static_cast<double>(m2));
  return std::clamp(js, 0.0, 1.0);
}

inline double average(const std::vector<double>& v, const std::vector<std::size_t>& w, bool weighted) {
  double sum = 0.0;
  if (!weighted) {
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += static_cast<double>(w[i]) * v[i];
    total += static_cast<double>(w[i]);
  }
  return sum / total;
}

}  // namespace oracle

inline MeasureReport oracle_measures(const RepresentationBatch& batch, const BinningSpec& spec,
                                     const std::vector<LabelSet>& sets, const MeasureOptions& options = {}) {
  if (batch.rows() > kOracleMaxRows) {
    fail(ErrorCode::invalid_parameter, "oracle is limited to " + std::to_string(kOracleMaxRows) + " rows");
  }
  if (batch.dims() != spec.dims()) fail(ErrorCode::shape_error, "oracle: dims mismatch");
  const std::size_t m = batch.rows();
  const std::size_t dims = batch.dims();
  const double log_n = std::log2(static_cast<double>(spec.n_bins));

  std::vector<std::size_t> all_rows(m);
  for (std::size_t r = 0; r < m; ++r) all_rows[r] = r;

  MeasureReport report;
  report.n_bins = spec.n_bins;
  report.corrected = options.corrected;
  report.min_count = options.min_count;
  report.weighted = options.weighted;
  report.regularity_baseline = options.regularity_baseline;
  report.rows = m;
  report.dims = dims;

  double sum = 0.0;
  for (std::size_t d = 0; d < dims; ++d) {
    sum += oracle::entropy_bits(oracle::sorted_runs(oracle::column_bins(batch, spec, d, all_rows)), m, options.corrected);
  }
  const double info = (sum / static_cast<double>(dims)) / log_n;
  report.information = info;

  for (const auto& set : sets) {
    SetReport s;
    s.name = set.name;
    s.vocab_size = set.vocab.size();
    if (set.row_labels.size() != m) {
      s.error = "label rows differ from batch rows";
      s.error_code = ErrorCode::alignment_error;
      report.sets.push_back(std::move(s));
      continue;
    }
    std::vector<std::size_t> occurrences(set.vocab.size(), 0);
    for (auto id : set.row_labels) ++occurrences[id];
    std::vector<std::uint32_t> kept;
    for (std::uint32_t id = 0; id < occurrences.size(); ++id) {
      if (occurrences[id] >= options.min_count) {
        kept.push_back(id);
      } else {
        s.excluded.push_back({id, set.vocab[id], occurrences[id]});
      }
    }
    if (kept.empty()) {
      s.error = "no label passes min_count";
      s.error_code = ErrorCode::empty_labelset;
      report.sets.push_back(std::move(s));
      continue;
    }
    const bool with_jsd = kept.size() >= 2;
    std::vector<double> variations, dis;
    std::vector<std::size_t> weights;
    for (auto id : kept) {
      std::vector<std::size_t> in_rows, out_rows;
      for (std::size_t r = 0; r < m; ++r) (set.row_labels[r] == id ? in_rows : out_rows).push_back(r);
      double h_sum = 0.0;
      double js_sum = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        auto label_runs = oracle::sorted_runs(oracle::column_bins(batch, spec, d, in_rows));
        h_sum += oracle::entropy_bits(label_runs, in_rows.size(), options.corrected);
        if (with_jsd) {
          auto rest_runs = oracle::sorted_runs(oracle::column_bins(batch, spec, d, out_rows));
          js_sum += oracle::js_divergence(label_runs, in_rows.size(), rest_runs, out_rows.size());
        }
      }
      LabelMeasures lm;
      lm.id = id;
      lm.label = set.vocab[id];
      lm.count = in_rows.size();
      lm.variation = (h_sum / static_cast<double>(dims)) / log_n;
      lm.regularity = info - lm.variation;
      if (with_jsd) lm.disentanglement = js_sum / static_cast<double>(dims);
      variations.push_back(lm.variation);
      dis.push_back(js_sum / static_cast<double>(dims));
      weights.push_back(lm.count);
      s.per_label.push_back(std::move(lm));
    }
    s.variation = oracle::average(variations, weights, options.weighted);
    s.regularity = info - s.variation;
    if (with_jsd) {
      s.disentanglement = oracle::average(dis, weights, options.weighted);
    } else {
      s.disentanglement_error = "fewer than 2 labels";
    }
    report.sets.push_back(std::move(s));
  }

  if (options.regularity_baseline) {
    const SetReport* base = report.find(*options.regularity_baseline);
    if (base && base->ok()) {
      double bv = base->variation;
      for (auto& s : report.sets) {
        if (s.ok() && s.name != *options.regularity_baseline) s.regularity_vs_baseline = bv - s.variation;
      }
    }
  }
  return report;
}

}  // namespace reprstruct::synth
