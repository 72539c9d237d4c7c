#include "repgraph/flops.hpp"

#include <ostream>

#include "repgraph/error.hpp"

namespace repgraph {
namespace {

using u64 = std::uint64_t;

u64 ceil_div(u64 a, u64 b) { return (a + b - 1) / b; }

void validate(const Geometry& g) {
  if (g.batch == 0 || g.h == 0 || g.w == 0 || g.channels == 0 || g.inner == 0 || g.nodes == 0 || g.grid_size == 0 ||
      g.groups == 0) {
    throw Error(ErrorCode::contract, "flops geometry fields must be positive");
  }
}

void count_repgraph(FlopsReport& r, Variant variant, std::size_t grid_size) {
  const Geometry& g = r.geometry;
  const u64 P = u64(g.batch) * g.h * g.w;
  const u64 cells = u64(g.batch) * ceil_div(g.h, grid_size) * ceil_div(g.w, grid_size);
  const u64 C = g.channels;
  const u64 Cp = g.inner;
  const u64 S = g.nodes;
  const u64 back_in = g.fusion == Fusion::sum ? Cp : Cp + C;
  auto add = [&r](std::string label, u64 macs) { r.parts.emplace_back(std::move(label), macs); };

  bool separate_value_branch = true;
  u64 offset_src = C;
  if (variant == Variant::simple) {
    add("theta_projection", P * C * Cp);
    add("phi_projection", P * C * Cp);
    add("g_projection", P * C * Cp);
    if (g.offset_source == OffsetSource::query) offset_src = Cp;
  } else {
    add("reduce_projection", P * C * Cp);
    add("reduce_batch_norm", P * Cp);
    offset_src = Cp;
    if (g.bottleneck_projections) {
      add("theta_projection", P * Cp * Cp);
      add("phi_projection", P * Cp * Cp);
      add("g_projection", P * Cp * Cp);
    } else {
      separate_value_branch = false;
    }
  }
  if (grid_size > 1) add("grid_pooling", P * offset_src);
  add("offset_regression", cells * offset_src * 2 * S);
  add("sampling_key", 4 * cells * S * Cp);
  if (separate_value_branch) add("sampling_value", 4 * cells * S * Cp);
  add("attention_logits", P * S * Cp);
  add("attention_aggregate", P * S * Cp);
  if (variant == Variant::simple) {
    add("output_projection", P * back_in * C);
  } else {
    add("expand_projection", P * back_in * C);
    add("expand_batch_norm", P * C);
  }
}

}  // namespace

const char* to_string(Block b) {
  switch (b) {
    case Block::nl: return "nl";
    case Block::srg: return "srg";
    case Block::brg: return "brg";
    case Block::grid: return "grid";
    case Block::group: return "group";
  }
  return "?";
}

Block parse_block(const std::string& s) {
  if (s == "nl") return Block::nl;
  if (s == "srg") return Block::srg;
  if (s == "brg") return Block::brg;
  if (s == "grid") return Block::grid;
  if (s == "group") return Block::group;
  throw Error(ErrorCode::config, "unknown block label '" + s + "'");
}

std::uint64_t FlopsReport::part(const std::string& label) const {
  for (const auto& [name, macs] : parts) {
    if (name == label) return macs;
  }
  return 0;
}

FlopsReport count_flops(Block block, const Geometry& geometry) {
  validate(geometry);
  FlopsReport r;
  r.block = block;
  r.geometry = geometry;
  const Geometry& g = geometry;
  switch (block) {
    case Block::nl: {
      const u64 N = u64(g.h) * g.w;
      const u64 P = u64(g.batch) * N;
      const u64 back_in = g.fusion == Fusion::sum ? g.inner : g.inner + g.channels;
      r.parts = {{"theta_projection", P * g.channels * g.inner},
                 {"phi_projection", P * g.channels * g.inner},
                 {"g_projection", P * g.channels * g.inner},
                 {"affinity_logits", u64(g.batch) * N * N * g.inner},
                 {"affinity_aggregate", u64(g.batch) * N * N * g.inner},
                 {"output_projection", P * back_in * g.channels}};
      break;
    }
    case Block::srg: count_repgraph(r, Variant::simple, 1); break;
    case Block::brg: count_repgraph(r, Variant::bottleneck, 1); break;
    case Block::grid: count_repgraph(r, g.variant_for_extended, g.grid_size); break;
    // Channel groups split the same dot products; the count matches the base layer.
    case Block::group:
      if (g.inner % g.groups != 0) {
        throw Error(ErrorCode::contract, "C'=" + std::to_string(g.inner) + " not divisible by G=" + std::to_string(g.groups));
      }
      count_repgraph(r, g.variant_for_extended, 1);
      break;
  }
  for (const auto& part : r.parts) r.total += part.second;
  return r;
}

FlopsReport count_flops(const std::string& block_label, const Geometry& geometry) {
  return count_flops(parse_block(block_label), geometry);
}

std::uint64_t attention_core_macs(Block block, const Geometry& g) {
  const FlopsReport r = count_flops(block, g);
  if (block == Block::nl) return r.part("affinity_logits") + r.part("affinity_aggregate");
  return r.part("attention_logits") + r.part("attention_aggregate");
}

void write_flops_csv(std::ostream& os, const FlopsReport& report, bool header) {
  if (header) os << "block,suboperation,macs\n";
  for (const auto& [label, macs] : report.parts) os << to_string(report.block) << ',' << label << ',' << macs << '\n';
  os << to_string(report.block) << ",total," << report.total << '\n';
}

}  // namespace repgraph
