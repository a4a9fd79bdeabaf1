#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "wtpgd/dataset.hpp"

using namespace wtpgd;

namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_dataset(in, "test.txt");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Dataset, ParsesHeaderAndRows) {
  const Dataset d = parse("2 2 2\n0.1,0.2,0\n1,0,1\n");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dim, 2u);
  EXPECT_EQ(d.classes, 2u);
  EXPECT_EQ(d.input(1), Tensor::vector({1.0, 0.0}));
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(d.input(0, Shape{1, 1, 2}).shape(), (Shape{1, 1, 2}));
}

TEST(Dataset, ErrorsNameTheLine) {
  EXPECT_NE(error_of("2 2 2\n0.1,0.2,0\n1.5,0,1\n").find("test.txt:3"), std::string::npos);
  EXPECT_NE(error_of("1 2 2\n0.1,0\n").find("test.txt:2"), std::string::npos);
  EXPECT_NE(error_of("1 2 2\n0.1,0.2,2\n").find("test.txt:2"), std::string::npos);
  EXPECT_NE(error_of("1 2 2\n0.1,x,1\n").find("test.txt:2"), std::string::npos);
  EXPECT_NE(error_of("2 2 2\n0.1,0.2,1\n").find("test.txt"), std::string::npos);
  EXPECT_NE(error_of("two 2 2\n").find("test.txt:1"), std::string::npos);
}

TEST(Dataset, WriteThenReadRoundTrips) {
  Rng rng(3);
  const Dataset d = make_moons(40, 0.05, rng);
  std::stringstream s;
  write_dataset(s, d);
  EXPECT_EQ(parse_dataset(s), d);

  const auto path = std::filesystem::temp_directory_path() / "wtpgd_dataset_roundtrip.txt";
  write_dataset(path, d);
  EXPECT_EQ(read_dataset(path), d);
  std::filesystem::remove(path);
  EXPECT_THROW(read_dataset(path), Error);
}

TEST(Dataset, MoonsStayInTheBox) {
  Rng rng(1);
  const Dataset d = make_moons(200, 0.3, rng);
  EXPECT_EQ(d.size(), 200u);
  for (double v : d.pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Dataset, SplitPartitionsPoints) {
  Rng rng(2);
  const Dataset d = make_moons(100, 0.05, rng);
  Rng split(5);
  auto [train, held] = split_dataset(d, 0.2, split);
  EXPECT_EQ(train.size() + held.size(), d.size());
  EXPECT_EQ(held.size(), 20u);
  Rng bad(5);
  EXPECT_THROW(split_dataset(d, 1.0, bad), Error);
  EXPECT_EQ(d.head(7).size(), 7u);
  EXPECT_EQ(d.select({3}).input(0), d.input(3));
}

TEST(Dataset, BundledDigitsParse) {
  const Dataset test = read_dataset(std::filesystem::path(WTPGD_DATA_DIR) / "digits_test.txt");
  EXPECT_EQ(test.dim, 256u);
  EXPECT_EQ(test.classes, 10u);
  EXPECT_EQ(test.size(), 400u);
}
