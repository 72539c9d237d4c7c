#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>

namespace repgraph {

enum class Variant { simple, bottleneck };
enum class Fusion { sum, concat };
enum class InitMode { fresh, pretrained_insert };
// Which tensor feeds the offset regression: the block input (the reduced
// feature inside a bottleneck) or the query projection.
enum class OffsetSource { input, query };

struct LayerConfig {
  Variant variant = Variant::simple;
  std::size_t nodes = 9;        // S, sampled representative nodes per query
  std::size_t channels = 0;     // C
  std::size_t inner = 0;        // C'
  Fusion fusion = Fusion::sum;
  InitMode init_mode = InitMode::fresh;
  OffsetSource offset_source = OffsetSource::input;
  // Bottleneck only: dedicated query/key/value projections at width C'.
  // Off by default: the reduced feature is used as q = k = v.
  bool bottleneck_projections = false;
  std::size_t grid_size = 1;    // g_s; 1 = per-pixel sampling
  std::size_t groups = 1;       // G channel groups
  std::uint64_t seed = 0;

  // Throws Error(config / contract) on inconsistent settings.
  void validate() const;
};

struct GridConfig {
  std::size_t grid_size = 1;
};

struct GroupConfig {
  std::size_t groups = 1;
};

const char* to_string(Variant v);
const char* to_string(Fusion f);
const char* to_string(InitMode m);
const char* to_string(OffsetSource s);

Variant parse_variant(const std::string& s);
Fusion parse_fusion(const std::string& s);
InitMode parse_init_mode(const std::string& s);
OffsetSource parse_offset_source(const std::string& s);

// Flat `key=value` text, one per line, '#' starts a comment. Keys: variant,
// nodes, c, cp, fusion, init_mode, offset_source, bottleneck_proj, gs,
// groups, seed.
LayerConfig parse_layer_config(std::istream& is);

// Same grammar without validation; keys lists what the text set.
struct PartialLayerConfig {
  LayerConfig config;
  std::set<std::string> keys;
};
PartialLayerConfig parse_partial_layer_config(std::istream& is);
LayerConfig parse_layer_config(const std::string& text);
std::string format_layer_config(const LayerConfig& cfg);

}  // namespace repgraph
