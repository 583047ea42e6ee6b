#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace voxpipe::csv {

struct Field {
  std::string text;
  bool quoted = false;

  bool operator==(const Field&) const = default;
};

struct Record {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<Field> fields;
};

// RFC-4180 reader. Accepts LF and CRLF record terminators; a single trailing
// terminator at end of input does not produce an empty record. `source` only
// labels error messages.
std::vector<Record> parse(std::string_view content, std::string_view source = "<csv>");

std::vector<Record> read_file(const std::filesystem::path& path);

// Appends `value`, quoting when forced or when the text needs it.
void append_field(std::string& out, std::string_view value, bool force_quote = false);

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

// Strict parse of the whole string; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);

}  // namespace voxpipe::csv
