#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "repgraph/layer_config.hpp"

namespace repgraph {

enum class Block { nl, srg, brg, grid, group };

const char* to_string(Block b);
Block parse_block(const std::string& s);  // nl, srg, brg, grid, group

struct Geometry {
  std::size_t batch = 1;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t channels = 0;  // C
  std::size_t inner = 0;     // C'
  std::size_t nodes = 9;     // S
  std::size_t grid_size = 1;
  std::size_t groups = 1;
  Fusion fusion = Fusion::sum;
  OffsetSource offset_source = OffsetSource::input;
  bool bottleneck_projections = false;
  Variant variant_for_extended = Variant::simple;  // base layer of the grid/group blocks
};

// Closed-form multiply-accumulate counts of what the forward pass executes,
// one entry per sub-operation. Convention: 1 MAC = 1 FLOP.
struct FlopsReport {
  Block block = Block::nl;
  Geometry geometry;
  std::vector<std::pair<std::string, std::uint64_t>> parts;
  std::uint64_t total = 0;

  static constexpr const char* convention = "1 MAC = 1 FLOP";
  double gflops() const { return static_cast<double>(total) * 1e-9; }
  std::uint64_t part(const std::string& label) const;  // 0 when absent
};

FlopsReport count_flops(Block block, const Geometry& geometry);
FlopsReport count_flops(const std::string& block_label, const Geometry& geometry);

// MACs of the attention core alone: 2 N^2 C' (dense) or 2 N S C' (sparse).
std::uint64_t attention_core_macs(Block block, const Geometry& geometry);

// CSV rows `block,suboperation,macs`, ending with a `total` row.
void write_flops_csv(std::ostream& os, const FlopsReport& report, bool header = true);

}  // namespace repgraph
