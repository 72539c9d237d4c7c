#include "repgraph/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <fstream>

#include "repgraph/error.hpp"
#include "repgraph/tensor_io.hpp"

namespace repgraph {
namespace {

constexpr std::array<char, 8> kMagic = {'R', 'G', 'C', 'K', '\0', '\0', '\0', '\1'};
constexpr std::uint64_t kMaxString = 1u << 20;

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw Error(ErrorCode::malformed_header, "checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > kMaxString) throw Error(ErrorCode::malformed_header, "checkpoint string length " + std::to_string(n));
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw Error(ErrorCode::length_mismatch, "checkpoint string truncated");
  }
  return s;
}

}  // namespace

template <Real T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params, const std::string& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put_string(os, metadata);
  put_u64(os, params.size());
  for (const auto& [name, value] : params.entries()) {
    put_string(os, name);
    write_tensor(os, value);
  }
  if (!os) throw Error(ErrorCode::io_failure, "write to " + path.string() + " failed");
}

template <Real T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw Error(ErrorCode::malformed_header, path.string() + " is not a checkpoint");
  }
  Checkpoint<T> ck;
  ck.metadata = get_string(is);
  const std::uint64_t count = get_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is);
    ck.params.add(std::move(name), read_tensor<T>(is));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::length_mismatch, "trailing bytes in " + path.string());
  }
  return ck;
}

template void save_checkpoint<float>(const std::filesystem::path&, const ParamSet<float>&, const std::string&);
template void save_checkpoint<double>(const std::filesystem::path&, const ParamSet<double>&, const std::string&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace repgraph
