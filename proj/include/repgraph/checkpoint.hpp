#pragma once

#include <filesystem>
#include <string>

#include "repgraph/params.hpp"

namespace repgraph {

// Magic "RGCK\0\0\0\1", u64 metadata length + bytes, u64 entry count, then
// per entry a u64 name length, the name and one tensor record.
template <Real T>
struct Checkpoint {
  std::string metadata;  // free text, the trainer stores its config here
  ParamSet<T> params;
};

template <Real T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params, const std::string& metadata);

template <Real T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace repgraph
