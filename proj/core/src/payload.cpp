#include "voxpipe/payload.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "voxpipe/csv.hpp"
#include "voxpipe/error.hpp"

namespace voxpipe {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_display(const Cell& c) {
  if (const auto* d = as_number(c)) return csv::format_double(*d);
  if (const auto* s = as_text(c)) return *s;
  return {};
}

std::string_view to_string(ColumnCategory c) {
  switch (c) {
    case ColumnCategory::kPlain: return "plain";
    case ColumnCategory::kFeature: return "feature";
    case ColumnCategory::kInference: return "inference";
    case ColumnCategory::kTiming: return "timing";
  }
  return "plain";
}

ColumnCategory parse_category(std::string_view text) {
  if (text == "plain") return ColumnCategory::kPlain;
  if (text == "feature" || text == "features") return ColumnCategory::kFeature;
  if (text == "inference") return ColumnCategory::kInference;
  if (text == "timing") return ColumnCategory::kTiming;
  throw ParameterError("unknown column category '" + std::string(text) + "'");
}

Payload::Payload(std::string paths_column, std::vector<std::string> paths) {
  columns_.push_back(paths_column);
  rows_.reserve(paths.size());
  for (auto& p : paths) rows_.push_back({Cell(std::move(p))});
  meta_.paths_column = paths_column;
  meta_.path_history.push_back(std::move(paths_column));
  rebuild_index();
}

void Payload::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (!index_.emplace(columns_[i], i).second) {
      throw ConflictError("duplicate column '" + columns_[i] + "'");
    }
  }
}

void Payload::check_invariants() const {
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (rows_[r].size() != columns_.size()) {
      throw ShapeError("row " + std::to_string(r) + " has " + std::to_string(rows_[r].size()) +
                       " cells, expected " + std::to_string(columns_.size()));
    }
  }
  if (!has_column(meta_.paths_column)) {
    throw SchemaError("paths column '" + meta_.paths_column + "' is not a column");
  }
  if (meta_.path_history.empty() || meta_.path_history.back() != meta_.paths_column) {
    throw SchemaError("path history must end at the paths column");
  }
  std::set<std::string> seen;
  for (const auto& h : meta_.path_history) {
    if (!seen.insert(h).second) throw SchemaError("duplicate path history entry '" + h + "'");
  }
  std::set<std::string> all;
  for (const auto* group : {&meta_.feature_columns, &meta_.inference_columns, &meta_.timing_columns}) {
    for (const auto& name : *group) {
      if (!has_column(name)) throw SchemaError("registered column '" + name + "' does not exist");
      if (!all.insert(name).second) {
        throw ConflictError("column '" + name + "' registered under two categories");
      }
    }
  }
}

std::optional<std::size_t> Payload::find_column(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Payload::column_index(std::string_view name) const {
  auto idx = find_column(name);
  if (!idx) throw SchemaError("no column named '" + std::string(name) + "'");
  return *idx;
}

const Cell& Payload::cell(std::size_t row, std::string_view col) const {
  return rows_.at(row).at(column_index(col));
}

std::vector<Cell> Payload::column_values(std::string_view name) const {
  const std::size_t c = column_index(name);
  std::vector<Cell> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r[c]);
  return out;
}

ColumnCategory Payload::category_of(std::string_view name) const {
  const std::string key(name);
  if (meta_.feature_columns.count(key)) return ColumnCategory::kFeature;
  if (meta_.inference_columns.count(key)) return ColumnCategory::kInference;
  if (meta_.timing_columns.count(key)) return ColumnCategory::kTiming;
  return ColumnCategory::kPlain;
}

namespace {

std::set<std::string>* registry_for(PayloadMetadata& meta, ColumnCategory category) {
  switch (category) {
    case ColumnCategory::kFeature: return &meta.feature_columns;
    case ColumnCategory::kInference: return &meta.inference_columns;
    case ColumnCategory::kTiming: return &meta.timing_columns;
    case ColumnCategory::kPlain: return nullptr;
  }
  return nullptr;
}

}  // namespace

void Payload::append_columns(std::vector<Column> columns, ColumnCategory category) {
  std::set<std::string> incoming;
  for (const auto& c : columns) {
    if (c.values.size() != rows_.size()) {
      throw ShapeError("column '" + c.name + "' has " + std::to_string(c.values.size()) +
                       " values for " + std::to_string(rows_.size()) + " rows");
    }
    if (has_column(c.name) || !incoming.insert(c.name).second) {
      throw ConflictError("column '" + c.name + "' already exists");
    }
  }
  auto* registry = registry_for(meta_, category);
  for (auto& c : columns) {
    for (std::size_t r = 0; r < rows_.size(); ++r) rows_[r].push_back(std::move(c.values[r]));
    index_.emplace(c.name, columns_.size());
    columns_.push_back(c.name);
    if (registry) registry->insert(c.name);
  }
}

std::size_t Payload::ensure_column(std::string_view name, ColumnCategory category) {
  if (auto idx = find_column(name)) {
    if (category_of(name) != category) {
      throw ConflictError("column '" + std::string(name) + "' exists with category " +
                          std::string(to_string(category_of(name))) + ", expected " +
                          std::string(to_string(category)));
    }
    return *idx;
  }
  append_columns({Column{std::string(name), std::vector<Cell>(rows_.size())}}, category);
  return columns_.size() - 1;
}

void Payload::set_cell(std::size_t row, std::size_t col, Cell value) {
  rows_.at(row).at(col) = std::move(value);
}

void Payload::switch_paths_column(std::string_view name) {
  const std::size_t c = column_index(name);
  for (const auto& r : rows_) {
    if (as_number(r[c])) {
      throw TypeError("column '" + std::string(name) + "' holds numbers, not paths");
    }
  }
  if (meta_.paths_column == name) return;
  auto it = std::find(meta_.path_history.begin(), meta_.path_history.end(), name);
  if (it != meta_.path_history.end()) meta_.path_history.erase(it);
  meta_.paths_column = std::string(name);
  meta_.path_history.push_back(meta_.paths_column);
}

void Payload::mark_processed(std::string path) { meta_.processed_paths.insert(std::move(path)); }

void Payload::append_row(std::vector<Cell> row) {
  if (row.size() != columns_.size()) {
    throw ShapeError("row has " + std::to_string(row.size()) + " cells, expected " +
                     std::to_string(columns_.size()));
  }
  rows_.push_back(std::move(row));
}

void Payload::replace_rows(std::vector<std::vector<Cell>> rows) {
  for (const auto& r : rows) {
    if (r.size() != columns_.size()) {
      throw ShapeError("row has " + std::to_string(r.size()) + " cells, expected " +
                       std::to_string(columns_.size()));
    }
  }
  rows_ = std::move(rows);
}

Payload init_from_dir(const fs::path& directory, std::string_view pattern,
                      std::string_view column) {
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) {
    throw IoError("not a readable directory: " + directory.string());
  }
  std::vector<std::string> paths;
  const std::string pat(pattern);
  fs::directory_iterator it(directory, ec);
  if (ec) throw IoError("cannot list " + directory.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_regular_file(ec)) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(pat.c_str(), name.c_str(), 0) == 0) {
      paths.push_back(fs::absolute(entry.path()).lexically_normal().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  return Payload(std::string(column), std::move(paths));
}

Payload add_columns(Payload payload, std::vector<Column> columns, ColumnCategory category) {
  payload.append_columns(std::move(columns), category);
  return payload;
}

Payload set_paths_column(Payload payload, std::string_view column) {
  payload.switch_paths_column(column);
  return payload;
}

std::filesystem::path table_path_for(const fs::path& base) {
  return fs::path(base.string() + ".csv");
}

std::filesystem::path metadata_path_for(const fs::path& base) {
  return fs::path(base.string() + ".meta.json");
}

namespace {

void append_cell(std::string& out, const Cell& c) {
  if (const auto* d = as_number(c)) {
    out += csv::format_double(*d);
  } else if (const auto* s = as_text(c)) {
    csv::append_field(out, *s, /*force_quote=*/true);
  }
}

std::string render(const std::vector<std::string>& columns,
                   const std::vector<std::vector<Cell>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out.push_back(',');
    csv::append_field(out, columns[i]);
  }
  out.push_back('\n');
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out.push_back(',');
      append_cell(out, row[i]);
    }
    out.push_back('\n');
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

json string_set(const std::set<std::string>& s) { return json(std::vector<std::string>(s.begin(), s.end())); }

}  // namespace

std::string to_csv(const Payload& payload) { return render(payload.columns(), payload.rows()); }
std::string to_csv(const Table& table) { return render(table.columns, table.rows); }

void save(const Payload& payload, const fs::path& table_path, const fs::path& metadata_path) {
  const auto& m = payload.metadata();
  json meta = {
      {"paths_column", m.paths_column},
      {"path_history", m.path_history},
      {"processed_paths", string_set(m.processed_paths)},
      {"feature_columns", string_set(m.feature_columns)},
      {"inference_columns", string_set(m.inference_columns)},
      {"timing_columns", string_set(m.timing_columns)},
  };
  write_text(table_path, to_csv(payload));
  write_text(metadata_path, meta.dump(2) + "\n");
}

Payload load(const fs::path& table_path, const fs::path& metadata_path) {
  if (!fs::exists(metadata_path)) {
    throw FormatError("metadata sidecar missing: " + metadata_path.string());
  }
  if (!fs::exists(table_path)) throw FormatError("payload table missing: " + table_path.string());

  json meta;
  {
    std::ifstream in(metadata_path);
    if (!in) throw IoError("cannot open " + metadata_path.string());
    try {
      meta = json::parse(in);
    } catch (const json::parse_error& e) {
      throw FormatError(metadata_path.string() + ": " + e.what());
    }
  }

  Payload p;
  try {
    p.meta_.paths_column = meta.at("paths_column").get<std::string>();
    p.meta_.path_history = meta.at("path_history").get<std::vector<std::string>>();
    for (const char* key : {"processed_paths", "feature_columns", "inference_columns", "timing_columns"}) {
      auto values = meta.at(key).get<std::vector<std::string>>();
      std::set<std::string> s(values.begin(), values.end());
      if (std::string_view(key) == "processed_paths") p.meta_.processed_paths = std::move(s);
      else if (std::string_view(key) == "feature_columns") p.meta_.feature_columns = std::move(s);
      else if (std::string_view(key) == "inference_columns") p.meta_.inference_columns = std::move(s);
      else p.meta_.timing_columns = std::move(s);
    }
  } catch (const json::exception& e) {
    throw FormatError(metadata_path.string() + ": " + e.what());
  }

  const auto records = csv::read_file(table_path);
  if (records.empty()) throw FormatError(table_path.string() + ": missing header row");
  for (const auto& f : records.front().fields) p.columns_.push_back(f.text);
  try {
    p.rebuild_index();
  } catch (const ConflictError& e) {
    throw FormatError(table_path.string() + ": " + e.what());
  }

  const std::size_t width = p.columns_.size();
  p.rows_.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != width) {
      throw FormatError(table_path.string() + ":" + std::to_string(rec.line) + ": expected " +
                        std::to_string(width) + " fields, found " +
                        std::to_string(rec.fields.size()));
    }
    std::vector<Cell> row;
    row.reserve(width);
    for (std::size_t i = 0; i < width; ++i) {
      const auto& f = rec.fields[i];
      if (f.quoted) {
        row.emplace_back(f.text);
      } else if (f.text.empty()) {
        row.emplace_back();
      } else if (auto d = csv::parse_double(f.text)) {
        row.emplace_back(*d);
      } else {
        throw FormatError(table_path.string() + ":" + std::to_string(rec.line) + ": field " +
                          std::to_string(i + 1) + " ('" + p.columns_[i] +
                          "'): unquoted value is not a number: " + f.text);
      }
    }
    p.rows_.push_back(std::move(row));
  }

  try {
    p.check_invariants();
  } catch (const Error& e) {
    throw FormatError(metadata_path.string() + ": inconsistent with table: " + e.what());
  }
  return p;
}

Table select_columns(const Payload& payload, const std::set<ColumnGroup>& groups) {
  const auto& m = payload.metadata();
  const std::set<std::string> history(m.path_history.begin(), m.path_history.end());
  Table t;
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < payload.column_count(); ++i) {
    const std::string& name = payload.columns()[i];
    ColumnGroup g;
    if (history.count(name)) {
      g = ColumnGroup::kPaths;
    } else {
      switch (payload.category_of(name)) {
        case ColumnCategory::kFeature: g = ColumnGroup::kFeatures; break;
        case ColumnCategory::kInference: g = ColumnGroup::kInference; break;
        case ColumnCategory::kTiming: g = ColumnGroup::kTiming; break;
        default: g = ColumnGroup::kPlain; break;
      }
    }
    if (groups.count(g)) {
      picked.push_back(i);
      t.columns.push_back(name);
    }
  }
  t.rows.reserve(payload.row_count());
  for (const auto& row : payload.rows()) {
    std::vector<Cell> out;
    out.reserve(picked.size());
    for (auto i : picked) out.push_back(row[i]);
    t.rows.push_back(std::move(out));
  }
  return t;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Cell parse_operand(std::string_view raw) {
  raw = trim(raw);
  if (raw.size() >= 2 && (raw.front() == '"' || raw.front() == '\'') && raw.back() == raw.front()) {
    return std::string(raw.substr(1, raw.size() - 2));
  }
  if (auto d = csv::parse_double(raw)) return *d;
  return std::string(raw);
}

}  // namespace

RowPredicate parse_predicate(std::string_view text) {
  static const std::pair<std::string_view, Comparator> kOps[] = {
      {"==", Comparator::kEq}, {"!=", Comparator::kNe}, {"<=", Comparator::kLe},
      {">=", Comparator::kGe}, {"<", Comparator::kLt},  {">", Comparator::kGt},
  };
  RowPredicate p;
  const auto in_pos = text.find(" in ");
  if (in_pos != std::string_view::npos) {
    p.column = std::string(trim(text.substr(0, in_pos)));
    p.op = Comparator::kIn;
    std::string_view rest = text.substr(in_pos + 4);
    while (true) {
      const auto comma = rest.find(',');
      p.operands.push_back(parse_operand(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  } else {
    bool found = false;
    for (const auto& [sym, op] : kOps) {
      const auto pos = text.find(sym);
      if (pos == std::string_view::npos) continue;
      p.column = std::string(trim(text.substr(0, pos)));
      p.op = op;
      p.operands.push_back(parse_operand(text.substr(pos + sym.size())));
      found = true;
      break;
    }
    if (!found) throw ParameterError("cannot parse predicate '" + std::string(text) + "'");
  }
  if (p.column.empty()) throw ParameterError("predicate has no column: '" + std::string(text) + "'");
  return p;
}

namespace {

bool same_type(const Cell& a, const Cell& b) { return a.index() == b.index(); }

template <typename T>
bool compare(const T& a, const T& b, Comparator op) {
  switch (op) {
    case Comparator::kEq: return a == b;
    case Comparator::kNe: return a != b;
    case Comparator::kLt: return a < b;
    case Comparator::kLe: return a <= b;
    case Comparator::kGt: return a > b;
    case Comparator::kGe: return a >= b;
    case Comparator::kIn: return a == b;
  }
  return false;
}

bool satisfies(const Cell& cell, const RowPredicate& p) {
  if (is_missing(cell)) return false;
  for (const auto& operand : p.operands) {
    if (!same_type(cell, operand)) {
      throw TypeError("predicate on '" + p.column + "' compares " +
                      (as_number(cell) ? "a number" : "text") + " with " +
                      (as_number(operand) ? "a number" : "text"));
    }
  }
  auto test = [&](const Cell& operand) {
    if (const auto* d = as_number(cell)) return compare(*d, *as_number(operand), p.op);
    return compare(*as_text(cell), *as_text(operand), p.op);
  };
  if (p.op == Comparator::kIn) {
    return std::any_of(p.operands.begin(), p.operands.end(), test);
  }
  return test(p.operands.front());
}

}  // namespace

Payload filter_rows(Payload payload, const RowPredicate& predicate) {
  const std::size_t c = payload.column_index(predicate.column);
  if (predicate.operands.empty() || (predicate.op != Comparator::kIn && predicate.operands.size() != 1)) {
    throw ParameterError("predicate on '" + predicate.column + "' has wrong operand count");
  }
  std::vector<std::vector<Cell>> kept;
  for (const auto& row : payload.rows()) {
    if (satisfies(row[c], predicate)) kept.push_back(row);
  }
  payload.replace_rows(std::move(kept));
  return payload;
}

}  // namespace voxpipe
