#include <gtest/gtest.h>

#include <atomic>

#include "test_support.hpp"
#include "voxpipe/audio_io.hpp"
#include "voxpipe/engine.hpp"
#include "voxpipe/error.hpp"
#include "voxpipe/features.hpp"
#include "voxpipe/models.hpp"
#include "voxpipe/synth.hpp"

using namespace voxpipe;
using namespace voxpipe::engine;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::atomic<int> g_probe_calls{0};

// Reports the sample count of each file; fails on names containing "bad".
class Probe final : public RowComponent {
 public:
  static ComponentDescriptor describe() {
    return {"probe", Stage::kFeature, Purity::kPerRow, {}, {"probe_samples (feature)"}, "test probe"};
  }
  explicit Probe(const json&) : RowComponent(describe()) {}
  std::vector<ColumnSpec> produced_columns() const override { return {{"probe_samples", ColumnCategory::kFeature}}; }
  std::vector<std::vector<Cell>> process(const RowView& row, const RunContext&) const override {
    ++g_probe_calls;
    if (row.path.find("bad") != std::string::npos) throw DegenerateDataError("refusing " + row.path);
    return {{Cell(double(audio::read_wav(row.path).samples.size()))}};
  }
};

Registry test_registry() {
  Registry r;
  register_builtins(r);
  r.register_component(Probe::describe(), [](const json& s) { return std::make_unique<Probe>(s); });
  return r;
}

PipelineConfig config_for(const fs::path& input, const std::vector<std::string>& names, const fs::path& output) {
  json j;
  j["pipeline"] = json::array({{{"name", "payload_init"}, {"settings", {{"input_dir", input.string()}}}}});
  for (const auto& n : names) j["pipeline"].push_back({{"name", n}});
  j["output"] = output.string();
  return parse_config(j.dump());
}

void write_clips(const fs::path& dir, int n, std::uint64_t seed) {
  synth::generate_corpus(synth::default_corpus(n, seed), dir);
  fs::remove(dir / std::string(synth::kManifestName));
}

std::string csv_without_timing(const Payload& p) {
  return to_csv(select_columns(p, {ColumnGroup::kPaths, ColumnGroup::kFeatures, ColumnGroup::kInference,
                                   ColumnGroup::kPlain}));
}

const ComponentReport& report_of(const RunReport& r, const std::string& name) {
  for (const auto& c : r.components) {
    if (c.name == name) return c;
  }
  throw std::runtime_error("no report for " + name);
}

}  // namespace

TEST(Registry, DuplicateIsConflict) {
  Registry r;
  register_builtins(r);
  EXPECT_THROW(register_builtins(r), ConflictError);
  EXPECT_THROW(r.register_component(Probe::describe(), nullptr), ParameterError);
}

TEST(Registry, ListIsSortedAndHasBuiltins) {
  const auto list = default_registry().list();
  EXPECT_GE(list.size(), 8u);
  for (std::size_t i = 1; i < list.size(); ++i) EXPECT_LT(list[i - 1]->name, list[i]->name);
  for (const char* n : {"payload_init", "wav_normalizer", "energy_vad", "classic_features", "model_infer", "cluster"}) {
    EXPECT_TRUE(default_registry().contains(n)) << n;
  }
  EXPECT_THROW(default_registry().descriptor("nope"), ConfigError);
}

TEST(Registry, SettingsAreCheckedAndDefaulted) {
  const auto& d = default_registry().descriptor("wav_normalizer");
  const json s = resolve_settings(d, json::object());
  EXPECT_EQ(s["sample_rate"], 16000);
  EXPECT_EQ(s["encoding"], "pcm16");
  EXPECT_THROW(resolve_settings(d, {{"sample_rate", "fast"}}), ConfigError);
  EXPECT_THROW(resolve_settings(d, {{"colour", 1}}), ConfigError);
  try {
    resolve_settings(default_registry().descriptor("model_infer"), json::object());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model_infer"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'model'"), std::string::npos);
  }
}

TEST(Config, ParseAndRoundTrip) {
  const auto c = parse_config(R"({"pipeline": [{"name": "payload_init", "settings": {"input_dir": "x"}},
                                               {"name": "classic_features"}],
                                  "workers": 4, "seed": 9, "resume": true, "output": "out/p"})");
  ASSERT_EQ(c.pipeline.size(), 2u);
  EXPECT_EQ(c.workers, 4);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_TRUE(c.resume);
  EXPECT_EQ(c.output->string(), "out/p");
  const auto again = parse_config(config_to_json(c).dump());
  EXPECT_EQ(config_to_json(again), config_to_json(c));

  EXPECT_THROW(parse_config("[]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pipeline": [], "threads": 2})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pipeline": [{"name": "x"}], "workers": 0})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pipeline": [{"settings": {}}]})"), ConfigError);
}

TEST(Build, WorkedExampleIsValid) {
  test::TempDir d;
  write_clips(d / "in", 4, 3);
  // tiny model over the canonical features
  const auto labels = features::FeatureSpec::canonical().labels();
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, static_cast<Eigen::Index>(labels.size()));
  const auto data = models::Dataset::classification(x, std::vector<std::string>{"f", "m", "f", "m", "f", "m"}, labels);
  models::save_model(models::train(models::ModelKind::kLogistic, data, models::Hyperparams{}), d / "gender.json");

  auto cfg = config_for(d / "in", {"wav_normalizer", "energy_vad", "classic_features"}, d / "out");
  cfg.pipeline.push_back({"model_infer", {{"model", (d / "gender.json").string()}}});
  const Pipeline p = build_pipeline(cfg);
  EXPECT_EQ(p.steps().size(), 5u);
  EXPECT_EQ(p.path_sequence(), (std::vector<std::string>{"file_mapper_path", "wav_converter_path", "energy_vad_path"}));
  bool has_gender = false;
  for (const auto& c : p.schema()) {
    if (c.name == "gender_clf") has_gender = c.category == ColumnCategory::kInference;
  }
  EXPECT_TRUE(has_gender);
  for (std::size_t i = 1; i < p.steps().size(); ++i) {
    EXPECT_EQ(p.steps()[i].produces.back().name, timing_column(p.steps()[i].component->name()));
  }
}

TEST(Build, MissingFeatureColumnsNamed) {
  test::TempDir d;
  const auto labels = features::FeatureSpec::canonical().labels();
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, static_cast<Eigen::Index>(labels.size()));
  models::save_model(models::train(models::ModelKind::kLogistic,
                                   models::Dataset::classification(x, std::vector<std::string>{"a", "b", "a", "b"}, labels), {}),
                     d / "g.json");
  auto cfg = config_for(d.path(), {}, d / "out");
  cfg.pipeline.push_back({"model_infer", {{"model", (d / "g.json").string()}}});
  cfg.pipeline.push_back({"classic_features", json::object()});
  try {
    build_pipeline(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("model_infer"), std::string::npos) << msg;
    EXPECT_NE(msg.find("mfcc_mean_0"), std::string::npos) << msg;
  }
}

TEST(Build, Rejections) {
  test::TempDir d;
  EXPECT_THROW(build_pipeline(config_for(d.path(), {"no_such_thing"}, d / "o")), ConfigError);
  // stage order: preprocess after feature
  EXPECT_THROW(build_pipeline(config_for(d.path(), {"classic_features", "wav_normalizer"}, d / "o")), ConfigError);
  // duplicate produced columns
  EXPECT_THROW(build_pipeline(config_for(d.path(), {"classic_features", "classic_features"}, d / "o")), ConfigError);
  // must start with the initializer
  PipelineConfig c;
  c.pipeline.push_back({"classic_features", json::object()});
  EXPECT_THROW(build_pipeline(c), ConfigError);
  // audio-writing component without an output location
  auto no_out = config_for(d.path(), {"wav_normalizer"}, d / "o");
  no_out.output.reset();
  EXPECT_THROW(build_pipeline(no_out), ConfigError);
  EXPECT_THROW(build_pipeline(PipelineConfig{}), ConfigError);
}

TEST(Run, EmptyInputDir) {
  test::TempDir d;
  fs::create_directories(d / "in");
  const auto r = run_config(config_for(d / "in", {"wav_normalizer", "energy_vad", "classic_features"}, d / "out"));
  EXPECT_EQ(r.payload.row_count(), 0u);
  EXPECT_EQ(r.report.total_processed(), 0u);
  EXPECT_FALSE(fs::exists(d / "out_audio"));
  EXPECT_TRUE(fs::exists(d / "out.csv"));
}

TEST(Run, WorkerCountDoesNotChangeOutput) {
  test::TempDir d;
  write_clips(d / "in", 12, 5);
  auto cfg = config_for(d / "in", {"wav_normalizer", "energy_vad", "classic_features"}, d / "out");
  cfg.workers = 1;
  const auto one = run_config(cfg);
  const std::string first = csv_without_timing(one.payload);
  const std::string meta1 = test::read_text(d / "out.meta.json");
  fs::remove_all(d / "out_audio");
  fs::remove(d / "out.csv");
  cfg.workers = 8;
  const auto eight = run_config(cfg);
  EXPECT_EQ(csv_without_timing(eight.payload), first);
  EXPECT_EQ(test::read_text(d / "out.meta.json"), meta1);
  EXPECT_EQ(csv_without_timing(load(d / "out.csv", d / "out.meta.json")), first);
  EXPECT_EQ(one.payload.row_count(), 12u);
}

TEST(Run, ResumeOfCompletePayloadDoesNothing) {
  test::TempDir d;
  write_clips(d / "in", 4, 6);
  auto cfg = config_for(d / "in", {"wav_normalizer", "energy_vad", "classic_features"}, d / "out");
  run_config(cfg);
  const std::string csv = test::read_text(d / "out.csv");
  const std::string meta = test::read_text(d / "out.meta.json");
  cfg.resume = true;
  const auto again = run_config(cfg);
  EXPECT_EQ(again.report.total_processed(), 0u);
  for (const auto& c : again.report.components) EXPECT_EQ(c.processed, 0u) << c.name;
  EXPECT_EQ(test::read_text(d / "out.csv"), csv);
  EXPECT_EQ(test::read_text(d / "out.meta.json"), meta);
}

TEST(Run, ResumeTouchesOnlyNewFiles) {
  test::TempDir d;
  write_clips(d / "all", 3, 8);
  fs::create_directories(d / "in");
  fs::copy_file(d / "all/clip_0000.wav", d / "in/clip_0000.wav");
  auto cfg = config_for(d / "in", {"wav_normalizer", "classic_features"}, d / "out");
  const auto first = run_config(cfg);
  ASSERT_EQ(first.payload.row_count(), 1u);
  const Cell old_timing = first.payload.cell(0, timing_column("classic_features"));

  fs::copy_file(d / "all/clip_0001.wav", d / "in/clip_0001.wav");
  fs::copy_file(d / "all/clip_0002.wav", d / "in/clip_0002.wav");
  cfg.resume = true;
  const auto second = run_config(cfg);
  EXPECT_EQ(report_of(second.report, "payload_init").processed, 2u);
  EXPECT_EQ(report_of(second.report, "wav_normalizer").processed, 2u);
  EXPECT_EQ(report_of(second.report, "classic_features").processed, 2u);
  EXPECT_EQ(report_of(second.report, "classic_features").skipped, 1u);
  ASSERT_EQ(second.payload.row_count(), 3u);
  EXPECT_EQ(second.payload.row(0), first.payload.row(0));
  EXPECT_EQ(second.payload.cell(0, timing_column("classic_features")), old_timing);
  // originals plus normalized copies; the initializer marks nothing
  EXPECT_EQ(second.payload.metadata().processed_paths.size(), 6u);
}

TEST(Run, ResumeSchemaDrift) {
  test::TempDir d;
  write_clips(d / "in", 2, 2);
  run_config(config_for(d / "in", {"classic_features"}, d / "out"));
  auto cfg = config_for(d / "in", {"wav_normalizer", "classic_features"}, d / "out");
  cfg.resume = true;
  EXPECT_THROW(run_config(cfg), ConfigError);
}

TEST(Run, FailingRowsAreMarkedAndSkipped) {
  test::TempDir d;
  write_clips(d / "in", 3, 4);
  test::write_text(d / "in/bad.wav", "not audio");
  const Registry reg = test_registry();
  g_probe_calls = 0;
  const auto r = run_config(config_for(d / "in", {"wav_normalizer", "probe"}, d / "out"), reg);
  ASSERT_EQ(r.payload.row_count(), 4u);
  const auto& p = r.payload;
  const std::size_t bad = 0;  // "bad.wav" sorts first
  EXPECT_NE(to_display(p.cell(bad, kErrorColumn)).find("wav_normalizer"), std::string::npos);
  EXPECT_TRUE(is_missing(p.cell(bad, "probe_samples")));
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_TRUE(is_missing(p.cell(i, kErrorColumn)));
    EXPECT_NE(as_number(p.cell(i, "probe_samples")), nullptr);
  }
  EXPECT_EQ(report_of(r.report, "wav_normalizer").failed, 1u);
  EXPECT_EQ(report_of(r.report, "probe").skipped, 1u);
  EXPECT_EQ(g_probe_calls.load(), 3);
}

TEST(Run, ProbeFailureIsFailSoft) {
  test::TempDir d;
  write_clips(d / "in", 2, 4);
  fs::copy_file(d / "in/clip_0000.wav", d / "in/bad_copy.wav");
  const auto r = run_config(config_for(d / "in", {"probe"}, d / "out"), test_registry());
  EXPECT_EQ(report_of(r.report, "probe").failed, 1u);
  EXPECT_EQ(report_of(r.report, "probe").processed, 2u);
  EXPECT_NE(to_display(r.payload.cell(0, kErrorColumn)).find("refusing"), std::string::npos);
}

TEST(Run, TimingColumnsAreRegistered) {
  test::TempDir d;
  write_clips(d / "in", 2, 1);
  const auto r = run_config(config_for(d / "in", {"classic_features"}, d / "out"));
  const auto& t = r.payload.metadata().timing_columns;
  EXPECT_TRUE(t.count("payload_init_elapsed_s") || t.count(timing_column("classic_features")));
  EXPECT_EQ(r.payload.category_of(timing_column("classic_features")), ColumnCategory::kTiming);
  for (std::size_t i = 0; i < r.payload.row_count(); ++i) {
    EXPECT_GE(*as_number(r.payload.cell(i, timing_column("classic_features"))), 0.0);
  }
}

// Two voiced stretches in one file; the VAD splits it into two rows that
// inherit the parent's cells, then features and the gender model fill in.
TEST(Run, WorkedExampleTwoSpeakers) {
  test::TempDir d;
  const auto low = synth::synthesize_clip(synth::preset("low"), 110, 1.0, 16000, 0.3, 1);
  const auto high = synth::synthesize_clip(synth::preset("high"), 220, 1.0, 16000, 0.3, 2);
  fs::create_directories(d / "in");
  audio::write_wav(test::concat({low.noisy, test::silence(0.5), high.noisy}), d / "in/dialogue.wav");

  write_clips(d / "train", 16, 12);
  auto tcfg = config_for(d / "train", {"classic_features"}, d / "train_out");
  const auto tr = run_config(tcfg);
  const auto labels = features::FeatureSpec::canonical().labels();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(tr.payload.row_count()), static_cast<Eigen::Index>(labels.size()));
  std::vector<std::string> y;
  for (std::size_t i = 0; i < tr.payload.row_count(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *as_number(tr.payload.cell(i, labels[j]));
    }
    y.push_back(i % 2 ? "female" : "male");  // clip i has class i mod 2: low, high
  }
  models::save_model(models::train(models::ModelKind::kLogistic, models::Dataset::classification(x, y, labels),
                                   models::default_hyperparams(models::ModelKind::kLogistic)),
                     d / "gender.json");

  auto cfg = config_for(d / "in", {"wav_normalizer", "energy_vad", "classic_features"}, d / "out");
  cfg.pipeline.push_back({"model_infer", {{"model", (d / "gender.json").string()}}});
  const auto r = run_config(cfg);
  const auto& p = r.payload;
  ASSERT_EQ(p.row_count(), 2u);
  EXPECT_EQ(report_of(r.report, "energy_vad").rows_out, 2u);
  EXPECT_EQ(p.metadata().paths_column, "energy_vad_path");
  EXPECT_EQ(p.metadata().feature_columns.size(), 31u);
  EXPECT_EQ(p.cell(0, "file_mapper_path"), p.cell(1, "file_mapper_path"));
  EXPECT_EQ(p.cell(0, "wav_converter_path"), p.cell(1, "wav_converter_path"));
  EXPECT_NE(p.cell(0, "energy_vad_path"), p.cell(1, "energy_vad_path"));
  EXPECT_LT(*as_number(p.cell(0, "vad_start_s")), *as_number(p.cell(1, "vad_start_s")));
  EXPECT_EQ(p.category_of("gender_clf"), ColumnCategory::kInference);
  EXPECT_EQ(to_display(p.cell(0, "gender_clf")), "male");
  EXPECT_EQ(to_display(p.cell(1, "gender_clf")), "female");
  EXPECT_NEAR(*as_number(p.cell(0, "f0_mean")), 110, 5);
  EXPECT_NEAR(*as_number(p.cell(1, "f0_mean")), 220, 5);
}

TEST(Run, ClusterAndFilter) {
  test::TempDir d;
  write_clips(d / "in", 8, 21);
  auto cfg = config_for(d / "in", {"classic_features"}, d / "out");
  cfg.pipeline.push_back({"cluster", {{"method", "agglomerative"}, {"n_clusters", 2}, {"columns", {"f0_mean"}}}});
  cfg.pipeline.push_back({"row_filter", {{"where", "f0_mean > 150"}}});
  const auto r = run_config(cfg);
  ASSERT_EQ(r.payload.row_count(), 4u);
  const std::string c0 = to_display(r.payload.cell(0, "speaker_cluster"));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_GT(*as_number(r.payload.cell(i, "f0_mean")), 150);
    EXPECT_EQ(to_display(r.payload.cell(i, "speaker_cluster")), c0);
  }
}

TEST(Run, ColumnImportJoinsLabels) {
  test::TempDir d;
  synth::generate_corpus(synth::default_corpus(4, 2), d / "in");
  auto cfg = config_for(d / "in", {}, d / "out");
  cfg.pipeline.push_back({"column_import", {{"file", (d / "in/manifest.csv").string()}, {"columns", {"label", "target"}}}});
  const auto r = run_config(cfg);
  ASSERT_EQ(r.payload.row_count(), 4u);
  EXPECT_EQ(to_display(r.payload.cell(0, "label")), "low");
  EXPECT_EQ(to_display(r.payload.cell(1, "label")), "high");
  EXPECT_NE(as_number(r.payload.cell(2, "target")), nullptr);
}
