#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "mtp/csv.hpp"

using namespace mtp;

TEST(Csv, ParsesMetadataHeaderAndRows) {
  std::istringstream in("#schema=x/1\na,b,c\n1,2,3\n\n4,\"5,5\",6\n");
  auto t = csv::parse(in);
  ASSERT_EQ(t.metadata.size(), 1u);
  EXPECT_EQ(t.metadata[0], "schema=x/1");
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "5,5");
}

TEST(Csv, RejectsRaggedRows) {
  std::istringstream in("a,b\n1,2,3\n");
  EXPECT_THROW(csv::parse(in), InputError);
}

TEST(Csv, RequireNamesMissingColumn) {
  std::istringstream in("a,b\n1,2\n");
  auto t = csv::parse(in);
  try {
    t.require("pop12plus", "county_year.csv");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("pop12plus"), std::string::npos);
  }
}

TEST(Csv, RoundTripsThroughText) {
  csv::Table t;
  t.metadata = {"m"};
  t.header = {"x", "y"};
  t.rows = {{"1", "quote\"d"}, {"a,b", "2"}};
  std::istringstream in(csv::to_string(t));
  auto back = csv::parse(in);
  EXPECT_EQ(back.metadata, t.metadata);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125}) EXPECT_EQ(csv::parse_double(csv::format_double(v), "v"), v);
}

TEST(Csv, NumberParsingRejectsGarbage) {
  EXPECT_THROW(csv::parse_double("1.5x", "v"), InputError);
  EXPECT_THROW(csv::parse_int("2.0", "v"), InputError);
  EXPECT_EQ(csv::parse_int("-7", "v"), -7);
}

TEST(Csv, AtomicWriteLeavesNoTempFile) {
  auto dir = std::filesystem::temp_directory_path() / "mtp_csv_test";
  std::filesystem::remove_all(dir);
  csv::write_atomic(dir / "f.txt", "hello");
  EXPECT_TRUE(std::filesystem::exists(dir / "f.txt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "f.txt.tmp"));
  std::filesystem::remove_all(dir);
}
