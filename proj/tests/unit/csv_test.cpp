#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "voxpipe/csv.hpp"
#include "voxpipe/error.hpp"

namespace csv = voxpipe::csv;

namespace {

std::vector<std::vector<std::string>> texts(const std::vector<csv::Record>& records) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : records) {
    std::vector<std::string> row;
    for (const auto& f : r.fields) row.push_back(f.text);
    out.push_back(row);
  }
  return out;
}

}  // namespace

TEST(Csv, ParsesQuotedFieldsWithSeparatorsAndNewlines) {
  const auto recs = csv::parse("a,\"b,c\",\"say \"\"hi\"\"\"\r\n1,\"x\ny\",\n");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(texts(recs)[0], (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
  EXPECT_EQ(texts(recs)[1], (std::vector<std::string>{"1", "x\ny", ""}));
  EXPECT_TRUE(recs[0].fields[1].quoted);
  EXPECT_FALSE(recs[0].fields[0].quoted);
  EXPECT_EQ(recs[1].line, 2u);
}

TEST(Csv, TrailingTerminatorDoesNotAddRecord) {
  EXPECT_EQ(csv::parse("a\n").size(), 1u);
  EXPECT_EQ(csv::parse("a").size(), 1u);
  EXPECT_EQ(csv::parse("").size(), 0u);
}

TEST(Csv, UnterminatedQuoteIsFormatError) {
  EXPECT_THROW(csv::parse("a,\"bc\n"), voxpipe::FormatError);
  EXPECT_THROW(csv::parse("a,\"b\"c\n"), voxpipe::FormatError);
}

TEST(Csv, ErrorNamesLine) {
  try {
    csv::parse("ok\nfine\n\"bad", "t.csv");
    FAIL();
  } catch (const voxpipe::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("t.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Csv, MissingFileIsIoError) {
  EXPECT_THROW(csv::read_file("/nonexistent/dir/x.csv"), voxpipe::IoError);
}

TEST(Csv, AppendFieldQuotesOnlyWhenNeeded) {
  std::string s;
  csv::append_field(s, "plain");
  s += ',';
  csv::append_field(s, "a,b");
  s += ',';
  csv::append_field(s, "q\"q");
  s += ',';
  csv::append_field(s, "x", true);
  EXPECT_EQ(s, "plain,\"a,b\",\"q\"\"q\",\"x\"");
}

// Property: every double written and parsed back is bit-identical.
TEST(Csv, DoubleRoundTripIsBitExact) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint64_t> bits;
  int checked = 0;
  for (int i = 0; i < 20000; ++i) {
    const double v = std::bit_cast<double>(bits(rng));
    if (!std::isfinite(v)) continue;
    const auto back = csv::parse_double(csv::format_double(v));
    ASSERT_TRUE(back.has_value()) << csv::format_double(v);
    ASSERT_EQ(std::bit_cast<std::uint64_t>(*back), std::bit_cast<std::uint64_t>(v));
    ++checked;
  }
  EXPECT_GT(checked, 19000);
  EXPECT_EQ(*csv::parse_double(csv::format_double(7.88)), 7.88);
  EXPECT_EQ(csv::format_double(0.1), "0.1");
}

TEST(Csv, ParseDoubleIsStrict) {
  EXPECT_FALSE(csv::parse_double("1.5x").has_value());
  EXPECT_FALSE(csv::parse_double("").has_value());
  EXPECT_FALSE(csv::parse_double(" 1").has_value());
  EXPECT_DOUBLE_EQ(*csv::parse_double("-2.5e3"), -2500.0);
}

// Property: random tables survive a write/parse cycle.
TEST(Csv, RandomTablesRoundTrip) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "ab,\"\n\r x";
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 5);
    const int cols = 1 + static_cast<int>(rng() % 4);
    std::vector<std::vector<std::string>> table(rows, std::vector<std::string>(cols));
    std::string text;
    for (auto& row : table) {
      for (int c = 0; c < cols; ++c) {
        const int len = static_cast<int>(rng() % 6);
        for (int k = 0; k < len; ++k) row[c] += alphabet[rng() % alphabet.size()];
        if (c) text += ',';
        // an all-empty single-column row needs quoting to survive
        csv::append_field(text, row[c], cols == 1 && row[c].empty());
      }
      text += "\r\n";
    }
    ASSERT_EQ(texts(csv::parse(text)), table) << text;
  }
}
