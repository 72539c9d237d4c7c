#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "repgraph/rng.hpp"
#include "repgraph/tensor_io.hpp"

using namespace repgraph;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("repgraph_io_" + name); }

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

ErrorCode load_error(const fs::path& p) {
  try {
    (void)load_any_tensor(p);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCode::contract;
}

}  // namespace

TEST(TensorIo, RoundTripIsBitIdentical) {
  Rng rng(9);
  const auto x = rng.uniform_tensor<double>(Shape4{2, 3, 4, 5}, -10, 10);
  const auto p = temp_file("f64.bin");
  save_tensor(x, p);
  EXPECT_TRUE(load_tensor<double>(p).identical(x));

  const auto f = rng.uniform_tensor<float>(Shape4{1, 1, 3, 7}, -1, 1);
  save_tensor(f, p);
  EXPECT_TRUE(load_tensor<float>(p).identical(f));
}

TEST(TensorIo, HeaderLayout) {
  const Tensor4<float> x(Shape4{1, 2, 1, 1}, std::vector<float>{1.0f, -2.0f});
  std::ostringstream os;
  write_tensor(os, x);
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 8u + 32u + 1u + 8u);
  EXPECT_EQ(bytes.substr(0, 8), std::string("RGT4\0\0\0\1", 8));
  EXPECT_EQ(static_cast<unsigned char>(bytes[8 + 8]), 2u);  // c, little-endian low byte
  EXPECT_EQ(static_cast<unsigned char>(bytes[40]), 4u);
}

TEST(TensorIo, EmptyTensorRoundTrips) {
  const auto p = temp_file("empty.bin");
  save_tensor(Tensor4<double>(0, 3, 2, 2), p);
  EXPECT_EQ(load_tensor<double>(p).shape(), (Shape4{0, 3, 2, 2}));
}

TEST(TensorIo, TruncatedPayloadIsLengthMismatch) {
  const auto p = temp_file("trunc.bin");
  save_tensor(Tensor4<double>(1, 2, 3, 4, 1.5), p);
  std::string bytes = read_bytes(p);
  bytes.resize(bytes.size() - 3);
  write_bytes(p, bytes);
  EXPECT_EQ(load_error(p), ErrorCode::length_mismatch);
}

TEST(TensorIo, TrailingBytesAreLengthMismatch) {
  const auto p = temp_file("trail.bin");
  save_tensor(Tensor4<float>(1, 1, 1, 1, 1.0f), p);
  write_bytes(p, read_bytes(p) + "x");
  EXPECT_EQ(load_error(p), ErrorCode::length_mismatch);
}

TEST(TensorIo, NegativeDimensionIsMalformedHeader) {
  const auto p = temp_file("neg.bin");
  save_tensor(Tensor4<float>(1, 1, 1, 1), p);
  std::string bytes = read_bytes(p);
  const std::int64_t minus_two = -2;
  std::memcpy(bytes.data() + 8 + 16, &minus_two, 8);
  write_bytes(p, bytes);
  EXPECT_EQ(load_error(p), ErrorCode::malformed_header);
}

TEST(TensorIo, BadMagicAndTagAreMalformedHeader) {
  const auto p = temp_file("magic.bin");
  save_tensor(Tensor4<float>(1, 1, 1, 1), p);
  std::string bytes = read_bytes(p);
  std::string bad = bytes;
  bad[0] = 'X';
  write_bytes(p, bad);
  EXPECT_EQ(load_error(p), ErrorCode::malformed_header);
  bad = bytes;
  bad[40] = 3;
  write_bytes(p, bad);
  EXPECT_EQ(load_error(p), ErrorCode::malformed_header);
  write_bytes(p, bytes.substr(0, 20));
  EXPECT_EQ(load_error(p), ErrorCode::malformed_header);
}

TEST(TensorIo, MissingFileIsIoFailure) {
  EXPECT_EQ(load_error(temp_file("does_not_exist.bin")), ErrorCode::io_failure);
  try {
    save_tensor(Tensor4<float>(1, 1, 1, 1), fs::path("/nonexistent_dir/x.bin"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io_failure);
  }
}

TEST(TensorIo, TypedLoadRejectsOtherDtype) {
  const auto p = temp_file("dtype.bin");
  save_tensor(Tensor4<float>(1, 1, 1, 2), p);
  try {
    (void)load_tensor<double>(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract);
  }
}
