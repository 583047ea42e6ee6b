#include "voxpipe/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "voxpipe/error.hpp"

namespace voxpipe::csv {

std::vector<Record> parse(std::string_view content, std::string_view source) {
  std::vector<Record> records;
  std::size_t line = 1;
  std::size_t pos = 0;
  const std::size_t n = content.size();
  if (n == 0) return records;

  Record current{line, {}};
  Field field;
  bool at_field_start = true;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field = Field{};
    at_field_start = true;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current = Record{line, {}};
  };

  while (pos < n) {
    const char c = content[pos];
    if (at_field_start && c == '"') {
      field.quoted = true;
      at_field_start = false;
      ++pos;
      const std::size_t open_line = line;
      bool closed = false;
      while (pos < n) {
        const char q = content[pos];
        if (q == '"') {
          if (pos + 1 < n && content[pos + 1] == '"') {
            field.text.push_back('"');
            pos += 2;
            continue;
          }
          ++pos;
          closed = true;
          break;
        }
        if (q == '\n') ++line;
        field.text.push_back(q);
        ++pos;
      }
      if (!closed) {
        throw FormatError(std::string(source) + ":" + std::to_string(open_line) +
                          ": field " + std::to_string(current.fields.size() + 1) +
                          ": unterminated quoted field");
      }
      if (pos < n && content[pos] != ',' && content[pos] != '\n' && content[pos] != '\r') {
        throw FormatError(std::string(source) + ":" + std::to_string(line) + ": field " +
                          std::to_string(current.fields.size() + 1) +
                          ": unexpected character after closing quote");
      }
      continue;
    }
    at_field_start = false;
    if (c == ',') {
      end_field();
      ++pos;
    } else if (c == '\r' && pos + 1 < n && content[pos + 1] == '\n') {
      ++line;
      pos += 2;
      end_record();
      if (pos == n) return records;
    } else if (c == '\n') {
      ++line;
      ++pos;
      end_record();
      if (pos == n) return records;
    } else {
      if (field.quoted) {
        throw FormatError(std::string(source) + ":" + std::to_string(line) +
                          ": stray character in quoted field");
      }
      if (c == '"') {
        throw FormatError(std::string(source) + ":" + std::to_string(line) + ": field " +
                          std::to_string(current.fields.size() + 1) +
                          ": quote inside unquoted field");
      }
      field.text.push_back(c);
      ++pos;
    }
  }
  end_record();
  return records;
}

std::vector<Record> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return parse(buf.str(), path.string());
}

void append_field(std::string& out, std::string_view value, bool force_quote) {
  const bool needs = force_quote || value.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) {
    out.append(value);
    return;
  }
  out.push_back('"');
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, end);
}

std::optional<double> parse_double(std::string_view text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

}  // namespace voxpipe::csv
