#include "voxpipe/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "voxpipe/error.hpp"

namespace voxpipe::engine {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kInit: return "init";
    case Stage::kPreprocess: return "preprocess";
    case Stage::kFeature: return "feature";
    case Stage::kInference: return "inference";
  }
  return "init";
}

std::string_view to_string(Purity p) { return p == Purity::kPerRow ? "per-row" : "whole-payload"; }

std::string_view to_string(SettingType t) {
  switch (t) {
    case SettingType::kString: return "string";
    case SettingType::kNumber: return "number";
    case SettingType::kInteger: return "integer";
    case SettingType::kBool: return "bool";
    case SettingType::kStringList: return "string list";
    case SettingType::kObject: return "object";
  }
  return "string";
}

std::string timing_column(std::string_view component) { return std::string(component) + "_elapsed_s"; }

void Registry::register_component(ComponentDescriptor descriptor, Factory factory) {
  std::string name = descriptor.name;
  if (name.empty()) throw ParameterError("component name must not be empty");
  if (!factory) throw ParameterError("component '" + name + "' has no factory");
  if (entries_.count(name)) throw ConflictError("component '" + name + "' is already registered");
  entries_.emplace(std::move(name), Entry{std::move(descriptor), std::move(factory)});
}

bool Registry::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const ComponentDescriptor& Registry::descriptor(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown component '" + std::string(name) + "'");
  return it->second.descriptor;
}

std::vector<const ComponentDescriptor*> Registry::list() const {
  std::vector<const ComponentDescriptor*> out;
  for (const auto& [name, e] : entries_) out.push_back(&e.descriptor);
  return out;
}

namespace {

bool type_matches(SettingType t, const json& v) {
  switch (t) {
    case SettingType::kString: return v.is_string();
    case SettingType::kNumber: return v.is_number();
    case SettingType::kInteger: return v.is_number_integer();
    case SettingType::kBool: return v.is_boolean();
    case SettingType::kStringList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
    case SettingType::kObject: return v.is_object();
  }
  return false;
}

}  // namespace

json resolve_settings(const ComponentDescriptor& d, const json& settings) {
  if (!settings.is_null() && !settings.is_object()) {
    throw ConfigError("component '" + d.name + "': settings must be an object");
  }
  json out = json::object();
  for (const auto& s : d.settings) {
    if (!s.default_value.is_null()) out[s.key] = s.default_value;
  }
  if (settings.is_object()) {
    for (const auto& [key, value] : settings.items()) {
      auto it = std::find_if(d.settings.begin(), d.settings.end(), [&](const SettingSpec& s) { return s.key == key; });
      if (it == d.settings.end()) throw ConfigError("component '" + d.name + "': unknown setting '" + key + "'");
      if (!type_matches(it->type, value)) {
        throw ConfigError("component '" + d.name + "': setting '" + key + "' must be a " +
                          std::string(to_string(it->type)));
      }
      out[key] = value;
    }
  }
  for (const auto& s : d.settings) {
    if (!out.contains(s.key)) throw ConfigError("component '" + d.name + "': setting '" + s.key + "' is required");
  }
  return out;
}

std::unique_ptr<Component> Registry::create(std::string_view name, const json& settings) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown component '" + std::string(name) + "'");
  const json resolved = resolve_settings(it->second.descriptor, settings);
  try {
    return it->second.factory(resolved);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("component '" + std::string(name) + "': " + e.what());
  }
}

const Registry& default_registry() {
  static const Registry registry = [] {
    Registry r;
    register_builtins(r);
    return r;
  }();
  return registry;
}

PipelineConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{"pipeline", "workers", "seed", "resume", "output", "work_dir"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  PipelineConfig c;
  if (!j.contains("pipeline") || !j["pipeline"].is_array()) throw ConfigError("config needs a 'pipeline' list");
  for (const auto& entry : j["pipeline"]) {
    ComponentConfig cc;
    if (entry.is_string()) {
      cc.name = entry.get<std::string>();
    } else if (entry.is_object() && entry.contains("name") && entry["name"].is_string()) {
      for (const auto& [key, value] : entry.items()) {
        if (key != "name" && key != "settings") throw ConfigError("pipeline entry has unknown key '" + key + "'");
      }
      cc.name = entry["name"].get<std::string>();
      if (entry.contains("settings")) {
        if (!entry["settings"].is_object()) throw ConfigError("component '" + cc.name + "': settings must be an object");
        cc.settings = entry["settings"];
      }
    } else {
      throw ConfigError("pipeline entries need a string 'name'");
    }
    c.pipeline.push_back(std::move(cc));
  }
  if (j.contains("workers")) {
    if (!j["workers"].is_number_integer() || j["workers"].get<long long>() < 1) {
      throw ConfigError("'workers' must be a positive integer");
    }
    c.workers = j["workers"].get<int>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("'seed' must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("resume")) {
    if (!j["resume"].is_boolean()) throw ConfigError("'resume' must be a boolean");
    c.resume = j["resume"].get<bool>();
  }
  for (const char* key : {"output", "work_dir"}) {
    if (!j.contains(key) || j[key].is_null()) continue;
    if (!j[key].is_string() || j[key].get<std::string>().empty()) {
      throw ConfigError(std::string("'") + key + "' must be a non-empty string");
    }
    (std::string_view(key) == "output" ? c.output : c.work_dir) = fs::path(j[key].get<std::string>());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["pipeline"] = json::array();
  for (const auto& cc : c.pipeline) j["pipeline"].push_back({{"name", cc.name}, {"settings", cc.settings}});
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  j["resume"] = c.resume;
  if (c.output) j["output"] = c.output->string();
  if (c.work_dir) j["work_dir"] = c.work_dir->string();
  return j;
}

fs::path Pipeline::work_dir_for(const Component& c) const {
  fs::path base;
  if (config_.work_dir) {
    base = *config_.work_dir;
  } else if (config_.output) {
    base = fs::path(config_.output->string() + "_audio");
  }
  return base.empty() ? base : fs::absolute(base) / c.name();
}

Pipeline build_pipeline(const PipelineConfig& config, const Registry& registry) {
  if (config.pipeline.empty()) throw ConfigError("pipeline is empty");
  if (config.workers < 1) throw ConfigError("'workers' must be a positive integer");
  Pipeline p;
  p.config_ = config;
  Schema available;
  auto find = [&](const std::string& name) {
    return std::find_if(available.begin(), available.end(), [&](const ColumnSpec& c) { return c.name == name; });
  };
  std::string current;
  Stage last_stage = Stage::kInit;
  std::string last_name;
  for (std::size_t i = 0; i < config.pipeline.size(); ++i) {
    const auto& cc = config.pipeline[i];
    if (!registry.contains(cc.name)) {
      throw ConfigError("unknown component '" + cc.name + "' at pipeline position " + std::to_string(i));
    }
    auto comp = registry.create(cc.name, cc.settings);
    const bool is_init = dynamic_cast<InitComponent*>(comp.get()) != nullptr;
    if (i == 0 && !is_init) throw ConfigError("pipeline must start with an initializer, found '" + cc.name + "'");
    if (i > 0 && is_init) throw ConfigError("initializer '" + cc.name + "' may only appear first");
    const Stage stage = comp->descriptor().stage;
    if (stage < last_stage) {
      throw ConfigError("component '" + cc.name + "' (stage " + std::string(to_string(stage)) + ") cannot follow '" +
                        last_name + "' (stage " + std::string(to_string(last_stage)) + ")");
    }
    last_stage = stage;
    last_name = cc.name;

    const auto required = comp->bind(available);
    for (const auto& r : required) {
      if (find(r) == available.end()) {
        throw ConfigError("component '" + cc.name + "' needs column '" + r + "', which no earlier component produces");
      }
    }
    Step step;
    step.input_column = current;
    step.produces = comp->produced_columns();
    if (!is_init) step.produces.push_back({timing_column(cc.name), ColumnCategory::kTiming});
    for (const auto& col : step.produces) {
      if (col.name == kErrorColumn) throw ConfigError("component '" + cc.name + "' may not produce '" + col.name + "'");
      if (find(col.name) != available.end()) {
        throw ConfigError("component '" + cc.name + "' produces column '" + col.name +
                          "', which an earlier component already produces");
      }
      available.push_back(col);
    }
    if (is_init) {
      current = std::string(kInitPathsColumn);
      p.path_sequence_.push_back(current);
    }
    if (auto out = comp->output_paths_column()) {
      if (find(*out) == available.end()) {
        throw ConfigError("component '" + cc.name + "' switches to paths column '" + *out + "' it does not produce");
      }
      current = *out;
      p.path_sequence_.push_back(current);
    }
    if (comp->writes_audio() && !config.output && !config.work_dir) {
      throw ConfigError("component '" + cc.name + "' writes audio; set 'output' or 'work_dir'");
    }
    step.component = std::move(comp);
    p.steps_.push_back(std::move(step));
  }
  p.schema_ = std::move(available);
  return p;
}

std::size_t RunReport::total_processed() const {
  std::size_t n = 0;
  for (const auto& c : components) n += c.processed;
  return n;
}

namespace {

void check_resume_schema(const Pipeline& pipeline, const Payload& payload) {
  const auto& history = payload.metadata().path_history;
  const auto& seq = pipeline.path_sequence();
  const bool prefix = history.size() <= seq.size() && std::equal(history.begin(), history.end(), seq.begin());
  if (!prefix) {
    std::string have, want;
    for (const auto& h : history) have += " " + h;
    for (const auto& s : seq) want += " " + s;
    throw ConfigError("saved payload's paths columns [" + have + " ] do not match the pipeline's [" + want + " ]");
  }
  // A step whose columns are already saved must have read the same paths column back then.
  for (const auto& step : pipeline.steps()) {
    if (step.input_column.empty()) continue;
    const bool ran = std::any_of(step.produces.begin(), step.produces.end(),
                                 [&](const ColumnSpec& c) { return payload.has_column(c.name); });
    if (ran && std::find(history.begin(), history.end(), step.input_column) == history.end()) {
      throw ConfigError("component '" + step.component->name() + "' reads '" + step.input_column +
                        "', which the saved payload never had, yet its columns are already saved");
    }
  }
  for (const auto& col : pipeline.schema()) {
    if (!payload.has_column(col.name)) continue;
    if (payload.category_of(col.name) != col.category) {
      throw ConfigError("saved column '" + col.name + "' has category " +
                        std::string(to_string(payload.category_of(col.name))) + ", pipeline expects " +
                        std::string(to_string(col.category)));
    }
  }
  if (payload.has_column(kErrorColumn) && payload.category_of(kErrorColumn) != ColumnCategory::kPlain) {
    throw ConfigError("saved column '" + std::string(kErrorColumn) + "' must be plain");
  }
}

struct RowOutcome {
  std::vector<std::vector<Cell>> children;
  std::string error;
  bool failed = false;
};

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t count = std::min(threads, n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) fn(k);
    });
  }
  for (auto& th : pool) th.join();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::optional<std::string> input_path(const Payload& p, std::size_t row, std::size_t in_col,
                                      std::optional<std::size_t> err_col) {
  if (err_col && !is_missing(p.cell(row, *err_col))) return std::nullopt;
  const auto* s = as_text(p.cell(row, in_col));
  if (!s || s->empty()) return std::nullopt;
  return *s;
}

void run_row_step(const Step& step, const RowComponent& comp, Payload& p, const std::set<std::string>& snapshot,
                  const RunContext& ctx, ComponentReport& rep) {
  const std::size_t in_col = p.column_index(step.input_column);
  const auto err_col = p.find_column(kErrorColumn);
  std::vector<std::size_t> items;
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < p.row_count(); ++i) {
    auto path = input_path(p, i, in_col, err_col);
    if (!path || snapshot.count(*path)) {
      ++rep.skipped;
      continue;
    }
    items.push_back(i);
    paths.push_back(std::move(*path));
  }
  std::vector<std::size_t> cols;
  for (const auto& c : step.produces) cols.push_back(p.ensure_column(c.name, c.category));
  if (items.empty()) return;

  if (comp.writes_audio()) {
    std::error_code ec;
    fs::create_directories(ctx.work_dir, ec);
    if (ec) throw IoError("component '" + comp.name() + "': cannot create '" + ctx.work_dir.string() + "': " + ec.message());
  }
  const std::size_t width = step.produces.size() - 1;  // last is the timing column
  std::vector<RowOutcome> outcomes(items.size());
  const auto start = std::chrono::steady_clock::now();
  parallel_for(items.size(), ctx.workers, [&](std::size_t k) {
    RowOutcome& out = outcomes[k];
    try {
      out.children = comp.process(RowView{p, items[k], paths[k]}, ctx);
      if (out.children.empty()) throw DegenerateDataError("produced no rows");
      if (out.children.size() > 1 && !comp.expands()) throw ShapeError("returned several rows but does not expand");
      for (const auto& child : out.children) {
        if (child.size() != width) throw ShapeError("returned a row of the wrong width");
      }
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = comp.name() + ": " + e.what();
      out.children.clear();
    }
  });
  const double elapsed = seconds_since(start);
  rep.elapsed_s = elapsed;

  const bool any_failed = std::any_of(outcomes.begin(), outcomes.end(), [](const RowOutcome& o) { return o.failed; });
  const std::size_t err_idx = any_failed ? p.ensure_column(kErrorColumn, ColumnCategory::kPlain) : 0;
  std::vector<std::vector<Cell>> rows;
  rows.reserve(p.row_count());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.row_count(); ++i) {
    if (k >= items.size() || items[k] != i) {
      rows.push_back(p.row(i));
      continue;
    }
    RowOutcome& out = outcomes[k++];
    if (out.failed) {
      auto row = p.row(i);
      row[err_idx] = Cell(std::move(out.error));
      row[cols.back()] = Cell(elapsed);
      rows.push_back(std::move(row));
      ++rep.failed;
      continue;
    }
    for (auto& child : out.children) {
      auto row = p.row(i);
      for (std::size_t c = 0; c < width; ++c) row[cols[c]] = std::move(child[c]);
      row[cols.back()] = Cell(elapsed);
      rows.push_back(std::move(row));
    }
    ++rep.processed;
  }
  p.replace_rows(std::move(rows));
  for (auto& path : paths) p.mark_processed(std::move(path));
}

void run_payload_step(const Step& step, const PayloadComponent& comp, Payload& p,
                      const std::set<std::string>& snapshot, const RunContext& ctx, ComponentReport& rep) {
  for (const auto& c : step.produces) p.ensure_column(c.name, c.category);
  auto eligible_paths = [&](const Payload& payload) {
    std::vector<std::string> out;
    const std::size_t in_col = payload.column_index(step.input_column);
    const auto err_col = payload.find_column(kErrorColumn);
    for (std::size_t i = 0; i < payload.row_count(); ++i) {
      if (auto path = input_path(payload, i, in_col, err_col)) out.push_back(std::move(*path));
    }
    return out;
  };
  const auto before = eligible_paths(p);
  const bool pending = std::any_of(before.begin(), before.end(), [&](const std::string& s) { return !snapshot.count(s); });
  if (!pending) {
    rep.skipped = p.row_count();
    return;
  }
  const auto start = std::chrono::steady_clock::now();
  try {
    comp.apply(p, ctx);
  } catch (const Error& e) {
    throw_error(e.kind(), "component '" + comp.name() + "': " + e.what());
  }
  const double elapsed = seconds_since(start);
  rep.elapsed_s = elapsed;
  const std::size_t tcol = p.column_index(step.produces.back().name);
  for (std::size_t i = 0; i < p.row_count(); ++i) p.set_cell(i, tcol, Cell(elapsed));
  auto after = eligible_paths(p);
  rep.processed = after.size();
  for (auto& path : after) p.mark_processed(std::move(path));
}

}  // namespace

RunResult run(const Pipeline& pipeline, std::optional<Payload> existing) {
  Payload payload = existing ? std::move(*existing) : Payload(std::string(kInitPathsColumn), {});
  if (existing) check_resume_schema(pipeline, payload);
  const std::set<std::string> snapshot = payload.metadata().processed_paths;
  RunReport report;
  for (const auto& step : pipeline.steps()) {
    ComponentReport rep;
    rep.name = step.component->name();
    rep.rows_in = payload.row_count();
    RunContext ctx{pipeline.work_dir_for(*step.component), pipeline.config().seed, pipeline.config().workers};
    if (const auto* init = dynamic_cast<const InitComponent*>(step.component.get())) {
      const auto start = std::chrono::steady_clock::now();
      rep.processed = init->populate(payload);
      rep.elapsed_s = seconds_since(start);
    } else if (const auto* rc = dynamic_cast<const RowComponent*>(step.component.get())) {
      run_row_step(step, *rc, payload, snapshot, ctx, rep);
    } else if (const auto* pc = dynamic_cast<const PayloadComponent*>(step.component.get())) {
      run_payload_step(step, *pc, payload, snapshot, ctx, rep);
    } else {
      throw ConfigError("component '" + rep.name + "' has no runnable interface");
    }
    if (auto out = step.component->output_paths_column()) {
      const auto& history = payload.metadata().path_history;
      if (std::find(history.begin(), history.end(), *out) == history.end()) payload.switch_paths_column(*out);
    }
    rep.rows_out = payload.row_count();
    report.components.push_back(std::move(rep));
  }
  return {std::move(payload), std::move(report)};
}

RunResult run_config(const PipelineConfig& config, const Registry& registry) {
  const Pipeline pipeline = build_pipeline(config, registry);
  std::optional<Payload> existing;
  if (config.resume && config.output && fs::exists(table_path_for(*config.output))) {
    existing = load(table_path_for(*config.output), metadata_path_for(*config.output));
  }
  RunResult result = run(pipeline, std::move(existing));
  if (config.output) {
    const fs::path parent = fs::absolute(*config.output).parent_path();
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create '" + parent.string() + "': " + ec.message());
    save(result.payload, table_path_for(*config.output), metadata_path_for(*config.output));
  }
  return result;
}

}  // namespace voxpipe::engine
