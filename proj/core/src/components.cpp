#include <algorithm>
#include <iostream>
#include <map>
#include <set>

#include "voxpipe/audio_io.hpp"
#include "voxpipe/clustering.hpp"
#include "voxpipe/csv.hpp"
#include "voxpipe/engine.hpp"
#include "voxpipe/error.hpp"
#include "voxpipe/features.hpp"
#include "voxpipe/models.hpp"
#include "voxpipe/vad.hpp"

namespace voxpipe::engine {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

SettingSpec setting(std::string key, SettingType type, json def, std::string help) {
  return SettingSpec{std::move(key), type, std::move(def), std::move(help)};
}

// Settings accessors: resolve_settings has already checked presence and types.
std::string str(const json& s, const char* key) { return s.at(key).get<std::string>(); }
double num(const json& s, const char* key) { return s.at(key).get<double>(); }
long long integer(const json& s, const char* key) { return s.at(key).get<long long>(); }

audio::AudioBuffer read_mono(const std::string& path) { return audio::downmix(audio::read_wav(path)); }

audio::WavEncoding parse_encoding(const std::string& text) {
  if (text == "pcm16") return audio::WavEncoding::kPcm16;
  if (text == "float32") return audio::WavEncoding::kFloat32;
  throw ConfigError("unknown encoding '" + text + "' (have: pcm16, float32)");
}

std::vector<SettingSpec> vad_settings() {
  return {
      setting("mode", SettingType::kString, "adaptive_with_floor", "adaptive_only or adaptive_with_floor"),
      setting("floor_dbfs", SettingType::kNumber, -40.0, "absolute threshold floor"),
      setting("margin_db", SettingType::kNumber, 6.0, "margin over the 5th-percentile energy"),
      setting("min_segment_s", SettingType::kNumber, 0.25, "drop shorter segments"),
      setting("merge_gap_s", SettingType::kNumber, 0.10, "merge segments separated by less"),
      setting("hangover_frames", SettingType::kInteger, 5, "quiet frames tolerated inside a segment"),
      setting("frame_s", SettingType::kNumber, 0.025, "analysis frame"),
      setting("hop_s", SettingType::kNumber, 0.010, "analysis hop"),
      setting("encoding", SettingType::kString, "pcm16", "segment files: pcm16 or float32"),
  };
}

vad::VadParams vad_params(const json& s) {
  vad::VadParams p;
  const auto mode = str(s, "mode");
  if (mode == "adaptive_only") {
    p.mode = vad::ThresholdMode::kAdaptiveOnly;
  } else if (mode == "adaptive_with_floor") {
    p.mode = vad::ThresholdMode::kAdaptiveWithFloor;
  } else {
    throw ConfigError("unknown VAD mode '" + mode + "'");
  }
  p.floor_dbfs = num(s, "floor_dbfs");
  p.margin_db = num(s, "margin_db");
  p.min_segment_s = num(s, "min_segment_s");
  p.merge_gap_s = num(s, "merge_gap_s");
  p.hangover_frames = static_cast<int>(integer(s, "hangover_frames"));
  p.frame_s = num(s, "frame_s");
  p.hop_s = num(s, "hop_s");
  try {
    p.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return p;
}

std::vector<Cell> segment_row(const fs::path& file, const audio::VoiceSegment& seg) {
  return {Cell(file.string()), Cell(seg.start_s), Cell(seg.end_s), Cell(seg.length_s())};
}

std::vector<ColumnSpec> segment_columns(const std::string& paths_column) {
  return {{paths_column, ColumnCategory::kPlain},
          {"vad_start_s", ColumnCategory::kPlain},
          {"vad_end_s", ColumnCategory::kPlain},
          {"vad_duration_s", ColumnCategory::kPlain}};
}

// ---------------------------------------------------------------- payload_init

class PayloadInit final : public InitComponent {
 public:
  static ComponentDescriptor describe() {
    return {"payload_init",
            Stage::kInit,
            Purity::kWholePayload,
            {setting("input_dir", SettingType::kString, "", "directory to scan (not recursive)"),
             setting("pattern", SettingType::kString, "*.wav", "file name glob")},
            {std::string(kInitPathsColumn) + " (plain, paths)"},
            "one row per matching file; later runs add only new files"};
  }
  explicit PayloadInit(const json& s) : InitComponent(describe()), dir_(str(s, "input_dir")), pattern_(str(s, "pattern")) {
    if (dir_.empty()) throw ConfigError("component 'payload_init': setting 'input_dir' is required");
  }
  std::size_t populate(Payload& payload) const override {
    const Payload found = init_from_dir(dir_, pattern_);
    const std::size_t col = payload.column_index(kInitPathsColumn);
    std::set<std::string> present;
    for (const auto& row : payload.rows()) {
      if (const auto* s = as_text(row[col])) present.insert(*s);
    }
    const auto& processed = payload.metadata().processed_paths;
    std::size_t added = 0;
    for (const auto& row : found.rows()) {
      const std::string& path = std::get<std::string>(row[0]);
      if (present.count(path) || processed.count(path)) continue;
      std::vector<Cell> fresh(payload.column_count());
      fresh[col] = Cell(path);
      payload.append_row(std::move(fresh));
      ++added;
    }
    return added;
  }

 private:
  std::string dir_;
  std::string pattern_;
};

// ---------------------------------------------------------------- wav_normalizer

class WavNormalizer final : public RowComponent {
 public:
  static constexpr const char* kColumn = "wav_converter_path";
  static ComponentDescriptor describe() {
    return {"wav_normalizer",
            Stage::kPreprocess,
            Purity::kPerRow,
            {setting("sample_rate", SettingType::kInteger, 16000, "target rate"),
             setting("encoding", SettingType::kString, "pcm16", "pcm16 or float32")},
            {std::string(kColumn) + " (plain, paths)"},
            "mono, resampled copy of each file as <stem>.wav"};
  }
  explicit WavNormalizer(const json& s) : RowComponent(describe()) {
    preset_.sample_rate = static_cast<int>(integer(s, "sample_rate"));
    if (preset_.sample_rate < 1000) throw ConfigError("component 'wav_normalizer': sample_rate too low");
    preset_.encoding = parse_encoding(str(s, "encoding"));
  }
  std::vector<ColumnSpec> produced_columns() const override { return {{kColumn, ColumnCategory::kPlain}}; }
  std::optional<std::string> output_paths_column() const override { return kColumn; }
  bool writes_audio() const override { return true; }
  std::vector<std::vector<Cell>> process(const RowView& row, const RunContext& ctx) const override {
    const auto out = audio::normalize(audio::read_wav(row.path), preset_);
    const fs::path target = ctx.work_dir / (fs::path(row.path).stem().string() + ".wav");
    audio::write_wav(out, target, preset_.encoding);
    return {{Cell(target.string())}};
  }

 private:
  audio::NormalizePreset preset_;
};

// ---------------------------------------------------------------- energy_vad

class EnergyVad final : public RowComponent {
 public:
  static constexpr const char* kColumn = "energy_vad_path";
  static ComponentDescriptor describe() {
    return {"energy_vad",
            Stage::kPreprocess,
            Purity::kPerRow,
            vad_settings(),
            {std::string(kColumn) + " (plain, paths)", "vad_start_s, vad_end_s, vad_duration_s (plain)"},
            "one row per voiced segment, cut to <stem>_<k>.wav"};
  }
  explicit EnergyVad(const json& s)
      : RowComponent(describe()), params_(vad_params(s)), encoding_(parse_encoding(str(s, "encoding"))) {}
  std::vector<ColumnSpec> produced_columns() const override { return segment_columns(kColumn); }
  std::optional<std::string> output_paths_column() const override { return kColumn; }
  bool writes_audio() const override { return true; }
  bool expands() const override { return true; }
  std::vector<std::vector<Cell>> process(const RowView& row, const RunContext& ctx) const override {
    const auto buffer = read_mono(row.path);
    const auto segments = vad::detect_segments(buffer, params_);
    if (segments.empty()) throw DegenerateDataError("no voiced segment found");
    const std::string stem = fs::path(row.path).stem().string();
    std::vector<std::vector<Cell>> out;
    for (std::size_t k = 0; k < segments.size(); ++k) {
      const fs::path target = ctx.work_dir / (stem + "_" + std::to_string(k) + ".wav");
      audio::write_wav(audio::cut_segment(buffer, segments[k]), target, encoding_);
      out.push_back(segment_row(target, segments[k]));
    }
    return out;
  }

 private:
  vad::VadParams params_;
  audio::WavEncoding encoding_;
};

// ---------------------------------------------------------------- first_segment_vad

class FirstSegmentVad final : public RowComponent {
 public:
  static constexpr const char* kColumn = "first_segment_path";
  static ComponentDescriptor describe() {
    auto settings = vad_settings();
    settings.push_back(setting("min_s", SettingType::kNumber, 0.5, "shortest acceptable segment"));
    return {"first_segment_vad",
            Stage::kPreprocess,
            Purity::kPerRow,
            std::move(settings),
            {std::string(kColumn) + " (plain, paths)", "vad_start_s, vad_end_s, vad_duration_s (plain)"},
            "earliest voiced segment of at least min_s, cut to <stem>_first.wav"};
  }
  explicit FirstSegmentVad(const json& s)
      : RowComponent(describe()), params_(vad_params(s)), encoding_(parse_encoding(str(s, "encoding"))),
        min_s_(num(s, "min_s")) {
    if (!(min_s_ >= 0)) throw ConfigError("component 'first_segment_vad': min_s must be nonnegative");
  }
  std::vector<ColumnSpec> produced_columns() const override { return segment_columns(kColumn); }
  std::optional<std::string> output_paths_column() const override { return kColumn; }
  bool writes_audio() const override { return true; }
  std::vector<std::vector<Cell>> process(const RowView& row, const RunContext& ctx) const override {
    const auto buffer = read_mono(row.path);
    const auto seg = vad::first_segment(buffer, params_, min_s_);
    if (!seg) throw DegenerateDataError("no voiced segment of at least " + csv::format_double(min_s_) + " s");
    const fs::path target = ctx.work_dir / (fs::path(row.path).stem().string() + "_first.wav");
    audio::write_wav(audio::cut_segment(buffer, *seg), target, encoding_);
    return {segment_row(target, *seg)};
  }

 private:
  vad::VadParams params_;
  audio::WavEncoding encoding_;
  double min_s_;
};

// ---------------------------------------------------------------- feature extractors

class FeatureExtractor final : public RowComponent {
 public:
  static ComponentDescriptor describe_classic() {
    return {"classic_features",
            Stage::kFeature,
            Purity::kPerRow,
            {setting("spec", SettingType::kString, "canonical", "canonical (31 dims) or extended (44 dims)")},
            {"mfcc_mean_0..12, d_mfcc_mean_0..12, zcr_mean, sc_mean, sb_mean, sf_mean, f0_mean (feature)",
             "features_short_clip, features_unvoiced (plain flags)"},
            "clip-level means of frame features"};
  }
  static ComponentDescriptor describe_extras() {
    return {"spectral_extras",
            Stage::kFeature,
            Purity::kPerRow,
            {},
            {"contrast_mean_0..6, tonnetz_mean_0..5 (feature)"},
            "spectral contrast and tonnetz means"};
  }
  static std::unique_ptr<Component> classic(const json& s) {
    const auto which = str(s, "spec");
    features::FeatureSpec spec;
    if (which == "canonical") {
      spec = features::FeatureSpec::canonical();
    } else if (which == "extended") {
      spec = features::FeatureSpec::extended();
    } else {
      throw ConfigError("component 'classic_features': unknown spec '" + which + "'");
    }
    return std::unique_ptr<Component>(new FeatureExtractor(describe_classic(), spec, true));
  }
  static std::unique_ptr<Component> extras(const json&) {
    features::FeatureSpec spec = features::FeatureSpec::canonical();
    spec.include = {features::Feature::kContrast, features::Feature::kTonnetz};
    return std::unique_ptr<Component>(new FeatureExtractor(describe_extras(), spec, false));
  }

  std::vector<ColumnSpec> produced_columns() const override {
    std::vector<ColumnSpec> out;
    for (const auto& l : spec_.labels()) out.push_back({l, ColumnCategory::kFeature});
    if (flags_) {
      out.push_back({"features_short_clip", ColumnCategory::kPlain});
      out.push_back({"features_unvoiced", ColumnCategory::kPlain});
    }
    return out;
  }
  std::vector<std::vector<Cell>> process(const RowView& row, const RunContext&) const override {
    const auto v = features::extract_feature_vector(read_mono(row.path), spec_);
    std::vector<Cell> out;
    out.reserve(v.values.size() + 2);
    for (double x : v.values) out.emplace_back(x);
    if (flags_) {
      out.emplace_back(v.short_clip ? 1.0 : 0.0);
      out.emplace_back(v.unvoiced ? 1.0 : 0.0);
    }
    return {std::move(out)};
  }

 private:
  FeatureExtractor(ComponentDescriptor d, features::FeatureSpec spec, bool flags)
      : RowComponent(std::move(d)), spec_(std::move(spec)), flags_(flags) {}
  features::FeatureSpec spec_;
  bool flags_;
};

// ---------------------------------------------------------------- column_import

class ColumnImport final : public PayloadComponent {
 public:
  static ComponentDescriptor describe() {
    return {"column_import",
            Stage::kFeature,
            Purity::kWholePayload,
            {setting("file", SettingType::kString, json(), "CSV with a header row"),
             setting("key", SettingType::kString, "path", "join column in the file"),
             setting("on", SettingType::kString, std::string(kInitPathsColumn), "join column in the payload"),
             setting("match", SettingType::kString, "basename", "exact, basename or stem"),
             setting("columns", SettingType::kStringList, json::array(), "columns to import; empty means all"),
             setting("category", SettingType::kString, "plain", "plain or feature"),
             setting("prefix", SettingType::kString, "", "prepended to imported column names")},
            {"<prefix><column> per imported column (plain or feature)"},
            "joins columns from an external CSV, e.g. labels or precomputed embeddings"};
  }
  explicit ColumnImport(const json& s)
      : PayloadComponent(describe()), file_(str(s, "file")), key_(str(s, "key")), on_(str(s, "on")),
        match_(str(s, "match")), prefix_(str(s, "prefix")) {
    if (match_ != "exact" && match_ != "basename" && match_ != "stem") {
      throw ConfigError("component 'column_import': unknown match mode '" + match_ + "'");
    }
    const auto cat = str(s, "category");
    if (cat != "plain" && cat != "feature") {
      throw ConfigError("component 'column_import': category must be plain or feature");
    }
    category_ = parse_category(cat);
    std::vector<csv::Record> records;
    try {
      records = csv::read_file(file_);
    } catch (const Error& e) {
      throw ConfigError("component 'column_import': " + std::string(e.what()));
    }
    if (records.empty()) throw ConfigError("component 'column_import': '" + file_ + "' has no header");
    std::vector<std::string> header;
    for (const auto& f : records[0].fields) header.push_back(f.text);
    auto index_of = [&](const std::string& name) -> std::size_t {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) {
        throw ConfigError("component 'column_import': '" + file_ + "' has no column '" + name + "'");
      }
      return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t key_idx = index_of(key_);
    std::vector<std::string> wanted = s.at("columns").get<std::vector<std::string>>();
    if (wanted.empty()) {
      for (const auto& h : header) {
        if (h != key_) wanted.push_back(h);
      }
    }
    std::vector<std::size_t> idx;
    for (const auto& w : wanted) {
      idx.push_back(index_of(w));
      columns_.push_back(prefix_ + w);
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
      const auto& f = records[r].fields;
      if (f.size() != header.size()) {
        throw ConfigError("component 'column_import': '" + file_ + "' line " + std::to_string(records[r].line) +
                          " has " + std::to_string(f.size()) + " fields, header has " + std::to_string(header.size()));
      }
      const std::string key = normalize_key(f[key_idx].text);
      std::vector<Cell> values;
      for (std::size_t c : idx) values.push_back(to_cell(f[c], r));
      if (!table_.emplace(key, std::move(values)).second) {
        throw ConfigError("component 'column_import': key '" + key + "' appears twice in '" + file_ + "'");
      }
    }
  }
  std::vector<std::string> bind(const Schema&) override { return {on_}; }
  std::vector<ColumnSpec> produced_columns() const override {
    std::vector<ColumnSpec> out;
    for (const auto& c : columns_) out.push_back({c, category_});
    return out;
  }
  void apply(Payload& payload, const RunContext&) const override {
    const std::size_t on = payload.column_index(on_);
    std::vector<std::size_t> cols;
    for (const auto& c : columns_) cols.push_back(payload.column_index(c));
    for (std::size_t i = 0; i < payload.row_count(); ++i) {
      const auto* v = as_text(payload.cell(i, on));
      const auto it = v ? table_.find(normalize_key(*v)) : table_.end();
      for (std::size_t c = 0; c < cols.size(); ++c) {
        payload.set_cell(i, cols[c], it == table_.end() ? Cell() : it->second[c]);
      }
    }
  }

 private:
  std::string normalize_key(const std::string& text) const {
    if (match_ == "basename") return fs::path(text).filename().string();
    if (match_ == "stem") return fs::path(text).stem().string();
    return text;
  }
  Cell to_cell(const csv::Field& f, std::size_t record) const {
    if (f.quoted) {
      if (category_ == ColumnCategory::kFeature) {
        throw ConfigError("component 'column_import': feature value '" + f.text + "' in record " +
                          std::to_string(record) + " is not a number");
      }
      return Cell(f.text);
    }
    if (f.text.empty()) return Cell();
    if (auto d = csv::parse_double(f.text)) return Cell(*d);
    if (category_ == ColumnCategory::kFeature) {
      throw ConfigError("component 'column_import': feature value '" + f.text + "' in record " +
                        std::to_string(record) + " is not a number");
    }
    return Cell(f.text);
  }

  std::string file_, key_, on_, match_, prefix_;
  ColumnCategory category_ = ColumnCategory::kPlain;
  std::vector<std::string> columns_;
  std::map<std::string, std::vector<Cell>> table_;
};

// ---------------------------------------------------------------- model_infer

class ModelInfer final : public RowComponent {
 public:
  static ComponentDescriptor describe() {
    return {"model_infer",
            Stage::kInference,
            Purity::kPerRow,
            {setting("model", SettingType::kString, json(), "model file"),
             setting("task", SettingType::kString, "", "task name; defaults to the model file stem"),
             setting("column", SettingType::kString, "", "output column; defaults to <task>_clf or <task>_reg")},
            {"<task>_clf or <task>_reg (inference)"},
            "applies a trained model to each row's feature columns"};
  }
  explicit ModelInfer(const json& s) : RowComponent(describe()), model_(models::load_model(str(s, "model"))) {
    column_ = str(s, "column");
    if (column_.empty()) {
      std::string task = str(s, "task");
      if (task.empty()) task = fs::path(str(s, "model")).stem().string();
      column_ = task + (model_.task() == models::Task::kClassification ? "_clf" : "_reg");
    }
  }
  std::vector<std::string> bind(const Schema&) override { return model_.feature_labels; }
  std::vector<ColumnSpec> produced_columns() const override { return {{column_, ColumnCategory::kInference}}; }
  std::vector<std::vector<Cell>> process(const RowView& row, const RunContext&) const override {
    Eigen::MatrixXd x(1, static_cast<Eigen::Index>(model_.feature_labels.size()));
    for (std::size_t j = 0; j < model_.feature_labels.size(); ++j) {
      const auto* v = as_number(row.get(model_.feature_labels[j]));
      if (!v) throw DegenerateDataError("feature '" + model_.feature_labels[j] + "' is not a number");
      x(0, static_cast<Eigen::Index>(j)) = *v;
    }
    const auto p = models::predict(model_, x, model_.feature_labels);
    if (model_.task() == models::Task::kClassification) return {{Cell(p.labels.at(0))}};
    return {{Cell(p.values.at(0))}};
  }

 private:
  models::TrainedModel model_;
  std::string column_;
};

// ---------------------------------------------------------------- cluster

class ClusterComponent final : public PayloadComponent {
 public:
  static ComponentDescriptor describe() {
    return {"cluster",
            Stage::kInference,
            Purity::kWholePayload,
            {setting("method", SettingType::kString, "disjoint_set", "disjoint_set, agglomerative or gmm"),
             setting("columns", SettingType::kStringList, json::array(), "vector columns; empty means all features"),
             setting("standardize", SettingType::kBool, true, "z-score columns first"),
             setting("threshold", SettingType::kNumber, 0.8, "disjoint_set: cosine similarity to merge"),
             setting("seed_label_column", SettingType::kString, "", "disjoint_set: known labels to inherit"),
             setting("linkage", SettingType::kString, "average", "agglomerative: single, average or complete"),
             setting("metric", SettingType::kString, "cosine", "agglomerative: cosine or euclidean"),
             setting("n_clusters", SettingType::kInteger, 0, "agglomerative: stop at this many clusters"),
             setting("distance_threshold", SettingType::kNumber, -1.0, "agglomerative: stop above this distance"),
             setting("k", SettingType::kInteger, 2, "gmm: components"),
             setting("seed", SettingType::kInteger, -1, "gmm: seed; negative uses the pipeline seed"),
             setting("output", SettingType::kString, "speaker_cluster", "output column")},
            {"speaker_cluster (inference)"},
            "groups rows by their feature vectors"};
  }
  explicit ClusterComponent(const json& s)
      : PayloadComponent(describe()), method_(str(s, "method")), standardize_(s.at("standardize").get<bool>()),
        threshold_(num(s, "threshold")), seed_labels_(str(s, "seed_label_column")), k_(static_cast<int>(integer(s, "k"))),
        seed_(integer(s, "seed")), output_(str(s, "output")) {
    columns_ = s.at("columns").get<std::vector<std::string>>();
    if (method_ == "agglomerative") {
      agg_.linkage = cluster::parse_linkage(str(s, "linkage"));
      agg_.metric = cluster::parse_metric(str(s, "metric"));
      const auto n = integer(s, "n_clusters");
      const double t = num(s, "distance_threshold");
      if (n > 0) agg_.n_clusters = static_cast<int>(n);
      if (t >= 0) agg_.distance_threshold = t;
      if (agg_.n_clusters.has_value() == agg_.distance_threshold.has_value()) {
        throw ConfigError("component 'cluster': agglomerative needs exactly one of n_clusters and distance_threshold");
      }
    } else if (method_ == "disjoint_set") {
      if (!(threshold_ > -1.0 && threshold_ <= 1.0)) throw ConfigError("component 'cluster': threshold outside (-1, 1]");
    } else if (method_ == "gmm") {
      if (k_ < 1) throw ConfigError("component 'cluster': k must be positive");
    } else {
      throw ConfigError("component 'cluster': unknown method '" + method_ + "'");
    }
  }
  std::vector<std::string> bind(const Schema& available) override {
    if (columns_.empty()) {
      for (const auto& c : available) {
        if (c.category == ColumnCategory::kFeature) columns_.push_back(c.name);
      }
      if (columns_.empty()) throw ConfigError("component 'cluster' needs feature columns, none are produced earlier");
    }
    auto required = columns_;
    if (!seed_labels_.empty()) required.push_back(seed_labels_);
    return required;
  }
  std::vector<ColumnSpec> produced_columns() const override { return {{output_, ColumnCategory::kInference}}; }
  void apply(Payload& payload, const RunContext& ctx) const override {
    const std::size_t out = payload.column_index(output_);
    const auto err = payload.find_column(kErrorColumn);
    std::vector<std::size_t> cols;
    for (const auto& c : columns_) cols.push_back(payload.column_index(c));
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < payload.row_count(); ++i) {
      payload.set_cell(i, out, Cell());
      if (err && !is_missing(payload.cell(i, *err))) continue;
      const bool complete = std::all_of(cols.begin(), cols.end(), [&](std::size_t c) {
        return as_number(payload.cell(i, c)) != nullptr;
      });
      if (complete) rows.push_back(i);
    }
    if (rows.empty()) return;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *as_number(payload.cell(rows[r], cols[c]));
      }
    }
    if (standardize_) x = models::Standardizer::fit(x).apply(x);

    std::vector<std::string> labels;
    if (method_ == "disjoint_set") {
      std::vector<std::optional<std::string>> seeds;
      if (!seed_labels_.empty()) {
        const std::size_t sc = payload.column_index(seed_labels_);
        for (std::size_t r : rows) {
          const Cell& c = payload.cell(r, sc);
          seeds.push_back(is_missing(c) ? std::nullopt : std::optional<std::string>(to_display(c)));
        }
      }
      labels = cluster::disjoint_set_cluster(x, threshold_, seeds).labels;
    } else if (method_ == "agglomerative") {
      labels = cluster::agglomerative(x, agg_).labels;
    } else {
      cluster::GmmParams gp;
      gp.k = k_;
      gp.seed = seed_ >= 0 ? static_cast<std::uint64_t>(seed_) : ctx.seed;
      const auto model = cluster::gmm_fit(x, gp);
      for (const auto& w : model.warnings) std::cerr << "warning: cluster: " << w << "\n";
      for (int id : cluster::gmm_assign(model, x).labels) labels.push_back("cluster_" + std::to_string(id));
    }
    for (std::size_t r = 0; r < rows.size(); ++r) payload.set_cell(rows[r], out, Cell(labels[r]));
  }

 private:
  std::string method_;
  bool standardize_;
  double threshold_;
  std::string seed_labels_;
  int k_;
  long long seed_;
  std::string output_;
  std::vector<std::string> columns_;
  cluster::AgglomerativeParams agg_;
};

// ---------------------------------------------------------------- row_filter

class RowFilter final : public PayloadComponent {
 public:
  static ComponentDescriptor describe() {
    return {"row_filter",
            Stage::kInference,
            Purity::kWholePayload,
            {setting("where", SettingType::kString, json(), "predicate, e.g. \"vad_duration_s >= 0.5\"")},
            {},
            "keeps rows satisfying a predicate; missing cells never match"};
  }
  explicit RowFilter(const json& s) : PayloadComponent(describe()) {
    try {
      predicate_ = parse_predicate(str(s, "where"));
    } catch (const Error& e) {
      throw ConfigError("component 'row_filter': " + std::string(e.what()));
    }
  }
  std::vector<std::string> bind(const Schema&) override { return {predicate_.column}; }
  std::vector<ColumnSpec> produced_columns() const override { return {}; }
  void apply(Payload& payload, const RunContext&) const override { payload = filter_rows(std::move(payload), predicate_); }

 private:
  RowPredicate predicate_;
};

template <typename T>
Factory make() {
  return [](const json& s) -> std::unique_ptr<Component> { return std::make_unique<T>(s); };
}

}  // namespace

void register_builtins(Registry& r) {
  r.register_component(PayloadInit::describe(), make<PayloadInit>());
  r.register_component(WavNormalizer::describe(), make<WavNormalizer>());
  r.register_component(EnergyVad::describe(), make<EnergyVad>());
  r.register_component(FirstSegmentVad::describe(), make<FirstSegmentVad>());
  r.register_component(FeatureExtractor::describe_classic(), &FeatureExtractor::classic);
  r.register_component(FeatureExtractor::describe_extras(), &FeatureExtractor::extras);
  r.register_component(ColumnImport::describe(), make<ColumnImport>());
  r.register_component(ModelInfer::describe(), make<ModelInfer>());
  r.register_component(ClusterComponent::describe(), make<ClusterComponent>());
  r.register_component(RowFilter::describe(), make<RowFilter>());
}

}  // namespace voxpipe::engine
