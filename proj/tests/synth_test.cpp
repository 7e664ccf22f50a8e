#include "reprstruct/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "test_support.hpp"

namespace reprstruct {
namespace {

using synth::Mode;
using synth::SynthConfig;

SynthConfig config(Mode mode, std::size_t k, std::size_t m, std::size_t d, double noise = 0.0, std::uint64_t seed = 0) {
  SynthConfig c;
  c.mode = mode;
  c.labels = k;
  c.samples = m;
  c.dims = d;
  c.noise_sigma = noise;
  c.seed = seed;
  return c;
}

MeasureOptions mle() {
  MeasureOptions o;
  o.corrected = false;
  return o;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::invalid_data;
}

TEST(Monotone, RoundRobinLevels) {
  auto sys = synth::generate(config(Mode::monotone, 4, 10, 2));
  EXPECT_EQ(sys.tokens.vocab, (std::vector<std::string>{"t0", "t1", "t2", "t3"}));
  EXPECT_EQ(sys.tokens.counts, (std::vector<std::size_t>{3, 3, 2, 2}));
  EXPECT_EQ(sys.batch(5, 1), static_cast<double>(static_cast<float>(1.0 / 3.0)));
  EXPECT_EQ(sys.batch(3, 0), 1.0);
}

TEST(Monotone, FiftyLabelsClosedForm) {
  auto c = config(Mode::monotone, 50, 5000, 16);
  auto sys = synth::generate(c);
  auto report = analyze(sys.batch, fit_bins(sys.batch, 100), {sys.tokens}, mle());
  const auto& s = report.sets[0];
  EXPECT_EQ(s.variation, 0.0);
  EXPECT_EQ(s.disentanglement, 1.0);
  EXPECT_EQ(s.regularity, report.information);
  EXPECT_NEAR(report.information, std::log2(50.0) / std::log2(100.0), 1e-12);
  auto closed = synth::monotone_closed_form(c, 100, false);
  EXPECT_NEAR(closed.information, report.information, 1e-12);
}

TEST(Monotone, TwoLabelsTwoBins) {
  auto sys = synth::generate(config(Mode::monotone, 2, 100, 3));
  EXPECT_EQ(information(sys.batch, fit_bins(sys.batch, 2), false), 1.0);
}

TEST(Monotone, SingleLabelIsOneHot) {
  auto sys = synth::generate(config(Mode::monotone, 1, 20, 3));
  EXPECT_EQ(information(sys.batch, fit_bins(sys.batch, 100)), 0.0);
}

TEST(Monotone, CorrectedClosedFormMatchesAnalyze) {
  for (std::size_t k : {2u, 5u, 7u, 50u}) {
    auto c = config(Mode::monotone, k, 1003, 4);
    auto sys = synth::generate(c);
    auto report = analyze(sys.batch, fit_bins(sys.batch, 100), {sys.tokens});
    auto closed = synth::monotone_closed_form(c, 100, true);
    EXPECT_NEAR(report.information, closed.information, 1e-12) << k;
    EXPECT_EQ(report.sets[0].variation, closed.variation);
    EXPECT_EQ(report.sets[0].disentanglement, closed.disentanglement);
  }
}

TEST(Contextual, NoiselessStructure) {
  SynthConfig c = config(Mode::contextual, 10, 3000, 8);
  c.contexts = 3;
  auto sys = synth::generate(c);
  ASSERT_TRUE(sys.context);
  EXPECT_EQ(sys.context->size(), 30u);
  EXPECT_EQ(sys.context->vocab[4], "t1@c1");
  auto report = analyze(sys.batch, fit_bins(sys.batch, 100), {sys.tokens, *sys.context}, mle());
  const auto* tok = report.find("token");
  const auto* ctx = report.find("context");
  EXPECT_EQ(ctx->variation, 0.0);
  EXPECT_GT(tok->variation, 0.0);
  EXPECT_LT(tok->regularity, ctx->regularity);

  // Offset coordinates separate all 30 combinations (JSD 1). On the other
  // half, combination (k,c) shares its bin with the C-1 other contexts of
  // token k, which hold q0 = 200/2900 of the complement mass.
  double q0 = 200.0 / 2900.0;
  double shared = 0.5 * std::log2(2.0 / (1.0 + q0)) + 0.5 * (q0 * std::log2(2.0 * q0 / (1.0 + q0)) + (1.0 - q0));
  EXPECT_NEAR(*ctx->disentanglement, 0.5 * 1.0 + 0.5 * shared, 1e-12);
  // Token rows span C bins on offset coordinates and one bin elsewhere.
  EXPECT_NEAR(tok->variation, 0.5 * std::log2(3.0) / std::log2(100.0), 1e-12);
}

TEST(Contextual, ConfigValidation) {
  SynthConfig c = config(Mode::contextual, 10, 3000, 8);
  c.contexts = 1;
  EXPECT_EQ(code_of([&] { synth::generate(c); }), ErrorCode::invalid_parameter);
  c.contexts = 11;  // 110 combinations, 100 bins
  EXPECT_EQ(code_of([&] { synth::generate(c); }), ErrorCode::invalid_parameter);
  c.contexts = 3;
  c.dims = 1;
  EXPECT_EQ(code_of([&] { synth::generate(c); }), ErrorCode::invalid_parameter);
}

TEST(Config, Validation) {
  EXPECT_EQ(code_of([] { synth::generate(config(Mode::monotone, 0, 10, 2)); }), ErrorCode::invalid_parameter);
  EXPECT_EQ(code_of([] { synth::generate(config(Mode::monotone, 20, 10, 2)); }), ErrorCode::invalid_parameter);
  EXPECT_EQ(code_of([] { synth::generate(config(Mode::uniform, 2, 10, 0)); }), ErrorCode::invalid_parameter);
  EXPECT_EQ(code_of([] { synth::generate(config(Mode::monotone, 2, 10, 2, -1.0)); }), ErrorCode::invalid_parameter);
  EXPECT_FALSE(synth::parse_mode("spiral"));
  EXPECT_EQ(synth::parse_mode("uniform"), Mode::uniform);
}

TEST(Uniform, LargeBatchIsNearlyMaximal) {
  auto sys = synth::generate(config(Mode::uniform, 10, 100000, 8, 0.0, 3));
  for (double v : sys.batch.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
  EXPECT_NEAR(information(sys.batch, fit_bins(sys.batch, 100)), 1.0, 0.01);
}

TEST(Uniform, ShuffleNull) {
  auto sys = synth::generate(config(Mode::uniform, 10, 10000, 8, 0.0, 5));
  auto report = analyze(sys.batch, fit_bins(sys.batch, 100), {sys.tokens});
  EXPECT_LE(std::abs(report.sets[0].regularity), 0.02);
  EXPECT_LE(*report.sets[0].disentanglement, 0.05);
}

TEST(Determinism, SameConfigSameBits) {
  for (Mode mode : {Mode::monotone, Mode::contextual, Mode::uniform}) {
    auto c = config(mode, 5, 500, 6, 0.1, 42);
    auto a = synth::generate(c);
    auto b = synth::generate(c);
    ASSERT_EQ(a.batch.values().size(), b.batch.values().size());
    EXPECT_EQ(std::memcmp(a.batch.values().data(), b.batch.values().data(), a.batch.values().size() * sizeof(double)), 0);
    EXPECT_EQ(a.tokens.row_labels, b.tokens.row_labels);
    c.seed = 43;
    EXPECT_NE(synth::generate(c).batch, a.batch);
  }
}

TEST(Oracle, TinyRandomInstance) {
  auto b = testing::random_batch(32, 3, 1);
  std::vector<std::uint32_t> ids(32);
  for (std::size_t i = 0; i < 32; ++i) ids[i] = static_cast<std::uint32_t>((i * 7) % 4);
  auto set = label_set_from_ids("token", ids);
  auto spec = fit_bins(b, 4);
  for (bool corrected : {false, true}) {
    MeasureOptions o;
    o.corrected = corrected;
    o.min_count = 1;
    auto x = analyze(b, spec, {set}, o);
    auto y = synth::oracle_measures(b, spec, {set}, o);
    EXPECT_EQ(x.information, y.information);
    EXPECT_EQ(x.sets[0].variation, y.sets[0].variation);
    EXPECT_EQ(x.sets[0].disentanglement, y.sets[0].disentanglement);
  }
}

TEST(Oracle, MonotoneClosedForm) {
  auto c = config(Mode::monotone, 5, 100, 3);
  auto sys = synth::generate(c);
  auto r = synth::oracle_measures(sys.batch, fit_bins(sys.batch, 100), {sys.tokens}, mle());
  auto closed = synth::monotone_closed_form(c, 100, false);
  EXPECT_NEAR(r.information, closed.information, 1e-12);
  EXPECT_EQ(r.sets[0].variation, 0.0);
  EXPECT_EQ(r.sets[0].disentanglement, 1.0);
}

TEST(Oracle, EmptySetList) {
  auto b = testing::random_batch(40, 2, 6);
  auto spec = fit_bins(b, 8);
  auto r = synth::oracle_measures(b, spec, {});
  EXPECT_TRUE(r.sets.empty());
  EXPECT_EQ(r.information, analyze(b, spec, {}).information);
}

TEST(Oracle, SizeGuard) {
  auto b = testing::random_batch(synth::kOracleMaxRows + 1, 1, 2);
  EXPECT_EQ(code_of([&] { synth::oracle_measures(b, fit_bins(b, 4), {}); }), ErrorCode::invalid_parameter);
}

TEST(Oracle, LawOnGeneratedInstances) {
  std::uint64_t seed = 0;
  for (Mode mode : {Mode::monotone, Mode::contextual, Mode::uniform}) {
    for (double noise : {0.0, 0.01, 0.3}) {
      auto c = config(mode, 6, 600 + 17 * seed, 5, noise, seed);
      c.contexts = 2;
      auto sys = synth::generate(c);
      std::vector<LabelSet> sets{sys.tokens};
      if (sys.context) sets.push_back(*sys.context);
      auto records = synth::to_records(sys, 7);
      sets.push_back(derive_bigram_labels(records));
      for (bool corrected : {false, true}) {
        MeasureOptions o;
        o.corrected = corrected;
        auto spec = fit_bins(sys.batch, 20 + seed);
        auto x = analyze(sys.batch, spec, sets, o);
        auto y = synth::oracle_measures(sys.batch, spec, sets, o);
        EXPECT_EQ(x.information, y.information);
        for (std::size_t i = 0; i < sets.size(); ++i) {
          EXPECT_EQ(x.sets[i].ok(), y.sets[i].ok());
          EXPECT_EQ(x.sets[i].variation, y.sets[i].variation);
          EXPECT_EQ(x.sets[i].disentanglement, y.sets[i].disentanglement);
          EXPECT_EQ(x.sets[i].per_label.size(), y.sets[i].per_label.size());
        }
      }
      ++seed;
    }
  }
}

TEST(Properties, MonotoneLaw) {
  for (std::size_t k : {2u, 3u, 10u, 33u, 100u}) {
    auto sys = synth::generate(config(Mode::monotone, k, 20 * k, 3));
    for (bool corrected : {false, true}) {
      MeasureOptions o;
      o.corrected = corrected;
      auto r = analyze(sys.batch, fit_bins(sys.batch, 100), {sys.tokens}, o);
      EXPECT_EQ(r.sets[0].variation, 0.0) << k;
      EXPECT_EQ(r.sets[0].disentanglement, 1.0) << k;
      EXPECT_EQ(r.sets[0].regularity, r.information);
    }
  }
}

TEST(Properties, NoiseMonotonicity) {
  double prev_var = -1.0;
  double prev_dis = 2.0;
  for (double noise : {0.0, 0.05, 0.2}) {
    auto sys = synth::generate(config(Mode::monotone, 10, 10000, 8, noise, 9));
    auto r = analyze(sys.batch, fit_bins(sys.batch, 100), {sys.tokens});
    EXPECT_GE(r.sets[0].variation, prev_var) << noise;
    EXPECT_LE(*r.sets[0].disentanglement, prev_dis) << noise;
    prev_var = r.sets[0].variation;
    prev_dis = *r.sets[0].disentanglement;
  }
}

TEST(Records, SentencesCarryTokensAndContext) {
  SynthConfig c = config(Mode::contextual, 3, 25, 2);
  auto sys = synth::generate(c);
  auto records = synth::to_records(sys, 10);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[2].tokens.size(), 5u);
  EXPECT_EQ(total_tokens(records), 25u);
  auto rebuilt = build_label_set(records, "context");
  EXPECT_EQ(rebuilt.row_labels, sys.context->row_labels);
  EXPECT_EQ(build_token_labels(records).row_labels, sys.tokens.row_labels);
}

TEST(Trajectory, ShapeAndValidation) {
  SynthConfig c = config(Mode::contextual, 4, 400, 4);
  auto traj = synth::two_phase_trajectory(c, 3, 2, 0.1, 0.025);
  ASSERT_EQ(traj.size(), 5u);
  EXPECT_EQ(traj[0].config.noise_sigma, 0.1);
  EXPECT_NEAR(traj[1].config.noise_sigma, 0.05, 1e-15);
  EXPECT_EQ(traj[2].config.context_scale, 0.0);
  EXPECT_EQ(traj[3].config.context_scale, 0.5);
  EXPECT_EQ(traj[4].config.context_scale, 1.0);
  EXPECT_EQ(traj[4].step, 5000);
  EXPECT_GT(traj[0].loss, traj[4].loss);
  EXPECT_EQ(code_of([&] { synth::two_phase_trajectory(c, 1, 1, 0.1, 0.01); }), ErrorCode::invalid_parameter);
  EXPECT_EQ(code_of([&] { synth::two_phase_trajectory(c, 2, 1, 0.01, 0.1); }), ErrorCode::invalid_parameter);
}

TEST(Trajectory, WriteRunProducesReadableManifest) {
  testing::TempDir dir;
  SynthConfig c = config(Mode::contextual, 4, 400, 4);
  auto m = synth::write_run(dir.path(), "run7", 7, synth::two_phase_trajectory(c, 2, 1, 0.1, 0.05));
  EXPECT_EQ(m.run_id, "run7");
  ASSERT_EQ(m.checkpoints.size(), 3u);
  EXPECT_EQ(read_reps(m.checkpoints[2].reps_path).rows(), 400u);
  EXPECT_EQ(total_tokens(read_tokens(m.tokens_path)), 400u);

  std::vector<synth::RunCheckpoint> mixed(2);
  mixed[0].step = 1;
  mixed[0].config = c;
  mixed[1].step = 2;
  mixed[1].config = c;
  mixed[1].config.labels = 5;
  EXPECT_EQ(code_of([&] { synth::write_run(dir / "bad", "x", 0, mixed); }), ErrorCode::invalid_parameter);
}

}  // namespace
}  // namespace reprstruct
