#include "repgraph/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace repgraph {
namespace {

constexpr std::array<char, 8> kMagic = {'R', 'G', 'T', '4', '\0', '\0', '\0', '\1'};

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::array<unsigned char, sizeof(U)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(U));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&v, bytes.data(), sizeof(U));
    return v;
  }
}

template <typename U>
void put(std::ostream& os, U v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
bool get(std::istream& is, U& v) {
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) return false;
  v = to_little(v);
  return true;
}

template <Real T>
Tensor4<T> read_payload(std::istream& is, Shape4 shape) {
  Tensor4<T> x(shape);
  auto data = x.data();
  const std::size_t bytes = data.size() * sizeof(T);
  if (bytes > 0 && !is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes))) {
    throw Error(ErrorCode::length_mismatch, "payload truncated: expected " + std::to_string(bytes) +
                                                " bytes for " + shape.str() + ", got " +
                                                std::to_string(is.gcount()));
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : data) v = to_little(v);
  }
  return x;
}

}  // namespace

template <Real T>
void write_tensor(std::ostream& os, const Tensor4<T>& x) {
  os.write(kMagic.data(), kMagic.size());
  for (std::uint64_t d : {x.n(), x.c(), x.h(), x.w()}) put<std::uint64_t>(os, d);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(T)));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(x.data().data()), static_cast<std::streamsize>(x.numel() * sizeof(T)));
  } else {
    for (T v : x.data()) put<T>(os, v);
  }
  if (!os) throw Error(ErrorCode::io_failure, "tensor write failed");
}

AnyTensor read_any_tensor(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size())) throw Error(ErrorCode::malformed_header, "missing magic");
  if (magic != kMagic) throw Error(ErrorCode::malformed_header, "bad magic");
  std::array<std::uint64_t, 4> dims{};
  for (auto& d : dims) {
    if (!get(is, d)) throw Error(ErrorCode::malformed_header, "header truncated");
    // Dimensions are written unsigned; the sign bit set means a negative value upstream.
    if (d > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw Error(ErrorCode::malformed_header, "negative dimension " + std::to_string(static_cast<std::int64_t>(d)));
    }
  }
  std::uint8_t tag = 0;
  if (!get(is, tag)) throw Error(ErrorCode::malformed_header, "missing dtype tag");
  std::uint64_t count = 1;
  for (auto d : dims) {
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d / 8) {
      throw Error(ErrorCode::malformed_header, "dimensions overflow");
    }
    count *= d;
  }
  const Shape4 shape{dims[0], dims[1], dims[2], dims[3]};
  switch (tag) {
    case 4: return read_payload<float>(is, shape);
    case 8: return read_payload<double>(is, shape);
    default: throw Error(ErrorCode::malformed_header, "unknown dtype tag " + std::to_string(tag));
  }
}

template <Real T>
Tensor4<T> read_tensor(std::istream& is) {
  AnyTensor any = read_any_tensor(is);
  if (auto* t = std::get_if<Tensor4<T>>(&any)) return std::move(*t);
  throw Error(ErrorCode::contract, "stored dtype does not match requested f" + std::to_string(8 * sizeof(T)));
}

template <Real T>
void save_tensor(const Tensor4<T>& x, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::io_failure, "cannot open " + path.string() + " for writing");
  write_tensor(os, x);
}

AnyTensor load_any_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  AnyTensor any = read_any_tensor(is);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::length_mismatch, "trailing bytes after payload in " + path.string());
  }
  return any;
}

template <Real T>
Tensor4<T> load_tensor(const std::filesystem::path& path) {
  AnyTensor any = load_any_tensor(path);
  if (auto* t = std::get_if<Tensor4<T>>(&any)) return std::move(*t);
  throw Error(ErrorCode::contract, path.string() + ": stored dtype does not match requested f" +
                                       std::to_string(8 * sizeof(T)));
}

template void write_tensor<float>(std::ostream&, const Tensor4<float>&);
template void write_tensor<double>(std::ostream&, const Tensor4<double>&);
template Tensor4<float> read_tensor<float>(std::istream&);
template Tensor4<double> read_tensor<double>(std::istream&);
template void save_tensor<float>(const Tensor4<float>&, const std::filesystem::path&);
template void save_tensor<double>(const Tensor4<double>&, const std::filesystem::path&);
template Tensor4<float> load_tensor<float>(const std::filesystem::path&);
template Tensor4<double> load_tensor<double>(const std::filesystem::path&);

}  // namespace repgraph
