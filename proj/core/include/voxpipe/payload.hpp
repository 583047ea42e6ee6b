#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace voxpipe {

// A table cell: missing, a 64-bit float, or text. Integers are stored as
// floats.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& c) { return std::holds_alternative<std::monostate>(c); }
inline const double* as_number(const Cell& c) { return std::get_if<double>(&c); }
inline const std::string* as_text(const Cell& c) { return std::get_if<std::string>(&c); }

// Human-readable rendering; missing renders empty.
std::string to_display(const Cell& c);

enum class ColumnCategory { kPlain, kFeature, kInference, kTiming };

// Selector for select_columns(). kPaths covers every column that has ever
// been the paths column; kPlain covers what is left over.
enum class ColumnGroup { kPaths, kFeatures, kInference, kTiming, kPlain };

std::string_view to_string(ColumnCategory c);
ColumnCategory parse_category(std::string_view text);

struct PayloadMetadata {
  std::string paths_column;
  std::vector<std::string> path_history;
  std::set<std::string> processed_paths;
  std::set<std::string> feature_columns;
  std::set<std::string> inference_columns;
  std::set<std::string> timing_columns;

  bool operator==(const PayloadMetadata&) const = default;
};

struct Column {
  std::string name;
  std::vector<Cell> values;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  bool operator==(const Table&) const = default;
};

// Column written by the initializer.
inline constexpr std::string_view kInitPathsColumn = "file_mapper_path";

// The tabular object handed from component to component. Rows are records
// over one shared column list; the metadata tracks which column currently
// holds the audio paths and how every other column is categorized.
//
// Payload is a plain value: copies are deep and unshared, so a payload can be
// passed across threads freely. The in-place mutators keep every invariant;
// the free functions below return modified copies.
class Payload {
 public:
  Payload(std::string paths_column, std::vector<std::string> paths);

  std::size_t row_count() const { return rows_.size(); }
  std::size_t column_count() const { return columns_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }
  const PayloadMetadata& metadata() const { return meta_; }

  bool has_column(std::string_view name) const { return find_column(name).has_value(); }
  std::optional<std::size_t> find_column(std::string_view name) const;
  // Throws SchemaError when absent.
  std::size_t column_index(std::string_view name) const;

  const std::vector<Cell>& row(std::size_t i) const { return rows_.at(i); }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  const Cell& cell(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }
  const Cell& cell(std::size_t row, std::string_view col) const;
  std::vector<Cell> column_values(std::string_view name) const;

  ColumnCategory category_of(std::string_view name) const;

  void append_columns(std::vector<Column> columns, ColumnCategory category);
  // Adds an all-missing column unless present. An existing column must
  // already carry `category` (ConflictError otherwise). Returns its index.
  std::size_t ensure_column(std::string_view name, ColumnCategory category);
  void set_cell(std::size_t row, std::size_t col, Cell value);
  void switch_paths_column(std::string_view name);
  void mark_processed(std::string path);
  void append_row(std::vector<Cell> row);
  // Replaces the row list wholesale; every row must match the column count.
  void replace_rows(std::vector<std::vector<Cell>> rows);

  bool operator==(const Payload&) const = default;

 private:
  friend Payload load(const std::filesystem::path&, const std::filesystem::path&);
  Payload() = default;
  void rebuild_index();
  void check_invariants() const;

  std::vector<std::string> columns_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<Cell>> rows_;
  PayloadMetadata meta_;
};

// One row per regular file in `directory` whose name matches the glob
// `pattern`, holding its absolute path, in lexicographic order.
Payload init_from_dir(const std::filesystem::path& directory, std::string_view pattern,
                      std::string_view column = kInitPathsColumn);

Payload add_columns(Payload payload, std::vector<Column> columns, ColumnCategory category);
Payload set_paths_column(Payload payload, std::string_view column);

// CSV table plus JSON metadata sidecar. Text cells are always quoted, numbers
// never, and missing cells are empty unquoted fields, so cell types survive
// the round trip.
void save(const Payload& payload, const std::filesystem::path& table_path,
          const std::filesystem::path& metadata_path);
Payload load(const std::filesystem::path& table_path, const std::filesystem::path& metadata_path);

// Conventional file names for an output base: <base>.csv and <base>.meta.json.
std::filesystem::path table_path_for(const std::filesystem::path& base);
std::filesystem::path metadata_path_for(const std::filesystem::path& base);
std::string to_csv(const Payload& payload);
std::string to_csv(const Table& table);

Table select_columns(const Payload& payload, const std::set<ColumnGroup>& groups);

enum class Comparator { kEq, kNe, kLt, kLe, kGt, kGe, kIn };

struct RowPredicate {
  std::string column;
  Comparator op = Comparator::kEq;
  std::vector<Cell> operands;  // exactly one unless op == kIn
};

// "duration >= 1.0", "label == male", "label in calm,neutral".
RowPredicate parse_predicate(std::string_view text);

// Keeps rows satisfying the predicate. Missing cells never satisfy it.
Payload filter_rows(Payload payload, const RowPredicate& predicate);

}  // namespace voxpipe
