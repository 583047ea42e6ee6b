#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "voxpipe/payload.hpp"

namespace voxpipe::engine {

enum class Stage { kInit, kPreprocess, kFeature, kInference };
enum class Purity { kPerRow, kWholePayload };
enum class SettingType { kString, kNumber, kInteger, kBool, kStringList, kObject };

std::string_view to_string(Stage s);
std::string_view to_string(Purity p);
std::string_view to_string(SettingType t);

struct SettingSpec {
  std::string key;
  SettingType type = SettingType::kString;
  nlohmann::json default_value;  // null means required
  std::string help;
};

struct ComponentDescriptor {
  std::string name;
  Stage stage = Stage::kPreprocess;
  Purity purity = Purity::kPerRow;
  std::vector<SettingSpec> settings;
  std::vector<std::string> produces;  // display patterns, e.g. "mfcc_mean_0..12 (feature)"
  std::string summary;
};

struct ColumnSpec {
  std::string name;
  ColumnCategory category = ColumnCategory::kPlain;
};

// Columns known to exist at some point of a pipeline, in order.
using Schema = std::vector<ColumnSpec>;

struct RunContext {
  std::filesystem::path work_dir;  // this component's private directory
  std::uint64_t seed = 0;
  int workers = 1;
};

class Component {
 public:
  explicit Component(ComponentDescriptor descriptor) : descriptor_(std::move(descriptor)) {}
  virtual ~Component() = default;

  const ComponentDescriptor& descriptor() const { return descriptor_; }
  const std::string& name() const { return descriptor_.name; }

  // Resolves settings against the columns available before this component
  // and returns the columns it reads. Throws ConfigError on a problem.
  virtual std::vector<std::string> bind(const Schema& available) { (void)available; return {}; }
  // Columns added by this component, in order. Valid after bind().
  virtual std::vector<ColumnSpec> produced_columns() const = 0;
  // New paths column, when the component redirects later stages to new files.
  virtual std::optional<std::string> output_paths_column() const { return std::nullopt; }
  // Whether the component writes files under RunContext::work_dir.
  virtual bool writes_audio() const { return false; }

 private:
  ComponentDescriptor descriptor_;
};

struct RowView {
  const Payload& payload;
  std::size_t index;
  std::string path;  // the row's input path

  const Cell& get(std::string_view column) const { return payload.cell(index, column); }
};

// Works on one row at a time without looking at other rows. Returns one
// child per output row, each aligned with produced_columns(); only
// expanding components may return more than one. Throws to fail the row.
class RowComponent : public Component {
 public:
  using Component::Component;
  virtual bool expands() const { return false; }
  virtual std::vector<std::vector<Cell>> process(const RowView& row, const RunContext& ctx) const = 0;
};

// Sees the whole payload. May rewrite its own produced columns and, for
// filters, drop rows. Throwing aborts the pipeline.
class PayloadComponent : public Component {
 public:
  using Component::Component;
  virtual void apply(Payload& payload, const RunContext& ctx) const = 0;
};

// The initializer. Adds one row per input file not already present.
class InitComponent : public Component {
 public:
  using Component::Component;
  std::vector<ColumnSpec> produced_columns() const override {
    return {{std::string(kInitPathsColumn), ColumnCategory::kPlain}};
  }
  // Returns the number of rows added.
  virtual std::size_t populate(Payload& payload) const = 0;
};

using Factory = std::function<std::unique_ptr<Component>(const nlohmann::json& settings)>;

class Registry {
 public:
  void register_component(ComponentDescriptor descriptor, Factory factory);
  bool contains(std::string_view name) const;
  const ComponentDescriptor& descriptor(std::string_view name) const;
  // Sorted by name.
  std::vector<const ComponentDescriptor*> list() const;
  // Checks keys and types, fills defaults, then calls the factory.
  std::unique_ptr<Component> create(std::string_view name, const nlohmann::json& settings) const;

 private:
  struct Entry {
    ComponentDescriptor descriptor;
    Factory factory;
  };
  std::map<std::string, Entry, std::less<>> entries_;
};

// Registry with every built-in component.
const Registry& default_registry();
void register_builtins(Registry& registry);

// Settings merged with defaults; ConfigError names the component and key.
nlohmann::json resolve_settings(const ComponentDescriptor& descriptor, const nlohmann::json& settings);

struct ComponentConfig {
  std::string name;
  nlohmann::json settings = nlohmann::json::object();
};

struct PipelineConfig {
  std::vector<ComponentConfig> pipeline;
  int workers = 1;
  std::uint64_t seed = 0;
  bool resume = false;
  std::optional<std::filesystem::path> output;    // payload base: <output>.csv + <output>.meta.json
  std::optional<std::filesystem::path> work_dir;  // default <output>_audio
};

PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const PipelineConfig& config);

inline constexpr std::string_view kErrorColumn = "component_error";
std::string timing_column(std::string_view component);

struct Step {
  std::unique_ptr<Component> component;
  std::string input_column;  // paths column the component reads
  std::vector<ColumnSpec> produces;  // including its timing column
};

class Pipeline {
 public:
  const PipelineConfig& config() const { return config_; }
  const std::vector<Step>& steps() const { return steps_; }
  // Paths columns in the order the pipeline establishes them.
  const std::vector<std::string>& path_sequence() const { return path_sequence_; }
  // Every column the pipeline produces, with categories.
  const Schema& schema() const { return schema_; }
  std::filesystem::path work_dir_for(const Component& c) const;

 private:
  friend Pipeline build_pipeline(const PipelineConfig&, const Registry&);
  PipelineConfig config_;
  std::vector<Step> steps_;
  std::vector<std::string> path_sequence_;
  Schema schema_;
};

Pipeline build_pipeline(const PipelineConfig& config, const Registry& registry = default_registry());

struct ComponentReport {
  std::string name;
  std::size_t rows_in = 0;
  std::size_t rows_out = 0;
  std::size_t processed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  double elapsed_s = 0.0;
};

struct RunReport {
  std::vector<ComponentReport> components;
  std::size_t total_processed() const;
};

struct RunResult {
  Payload payload;
  RunReport report;
};

// Runs over `existing` when given (resume), else over a fresh payload.
// Rows whose input path was processed before the run are skipped by every
// component; failing rows get kErrorColumn set and are skipped downstream.
RunResult run(const Pipeline& pipeline, std::optional<Payload> existing = std::nullopt);

// Builds, loads <output> when resuming and it exists, runs, and saves when
// an output is configured.
RunResult run_config(const PipelineConfig& config, const Registry& registry = default_registry());

}  // namespace voxpipe::engine
