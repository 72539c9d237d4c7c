#pragma once

#include <filesystem>
#include <iosfwd>
#include <variant>

#include "repgraph/tensor.hpp"

namespace repgraph {

// Binary tensor file: 8-byte magic "RGT4\0\0\0\1", four little-endian u64
// dims (n, c, h, w), one dtype byte (4 = f32, 8 = f64), then raw
// little-endian values.
using AnyTensor = std::variant<Tensor4<float>, Tensor4<double>>;

template <Real T>
void write_tensor(std::ostream& os, const Tensor4<T>& x);
AnyTensor read_any_tensor(std::istream& is);

template <Real T>
void save_tensor(const Tensor4<T>& x, const std::filesystem::path& path);
AnyTensor load_any_tensor(const std::filesystem::path& path);

// Typed loads reject a stored dtype other than T with Error(contract).
template <Real T>
Tensor4<T> load_tensor(const std::filesystem::path& path);
template <Real T>
Tensor4<T> read_tensor(std::istream& is);

}  // namespace repgraph
