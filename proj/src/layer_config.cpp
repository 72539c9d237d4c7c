#include "repgraph/layer_config.hpp"

#include <charconv>
#include <istream>
#include <sstream>

#include "repgraph/error.hpp"

namespace repgraph {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error(ErrorCode::config, "key '" + key + "' expects an unsigned integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw Error(ErrorCode::config, "key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

void LayerConfig::validate() const {
  if (nodes == 0) throw Error(ErrorCode::config, "nodes (S) must be >= 1");
  if (channels == 0 || inner == 0) throw Error(ErrorCode::config, "channel widths c and cp must be positive");
  if (grid_size == 0) throw Error(ErrorCode::config, "gs must be >= 1");
  if (groups == 0) throw Error(ErrorCode::config, "groups must be >= 1");
  if (inner % groups != 0) {
    throw Error(ErrorCode::contract,
                "C'=" + std::to_string(inner) + " is not divisible by G=" + std::to_string(groups));
  }
  if (init_mode == InitMode::pretrained_insert && fusion == Fusion::concat) {
    throw Error(ErrorCode::config, "pretrained_insert needs the residual sum fusion");
  }
}

const char* to_string(Variant v) { return v == Variant::simple ? "simple" : "bottleneck"; }
const char* to_string(Fusion f) { return f == Fusion::sum ? "sum" : "concat"; }
const char* to_string(InitMode m) { return m == InitMode::fresh ? "fresh" : "pretrained_insert"; }
const char* to_string(OffsetSource s) { return s == OffsetSource::input ? "input" : "query"; }

Variant parse_variant(const std::string& s) {
  if (s == "simple" || s == "srg") return Variant::simple;
  if (s == "bottleneck" || s == "brg") return Variant::bottleneck;
  throw Error(ErrorCode::config, "unknown variant '" + s + "'");
}

Fusion parse_fusion(const std::string& s) {
  if (s == "sum") return Fusion::sum;
  if (s == "concat") return Fusion::concat;
  throw Error(ErrorCode::config, "unknown fusion '" + s + "'");
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "fresh") return InitMode::fresh;
  if (s == "pretrained_insert") return InitMode::pretrained_insert;
  throw Error(ErrorCode::config, "unknown init_mode '" + s + "'");
}

OffsetSource parse_offset_source(const std::string& s) {
  if (s == "input") return OffsetSource::input;
  if (s == "query") return OffsetSource::query;
  throw Error(ErrorCode::config, "unknown offset_source '" + s + "'");
}

PartialLayerConfig parse_partial_layer_config(std::istream& is) {
  PartialLayerConfig out;
  LayerConfig& cfg = out.config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::config, "line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    out.keys.insert(key);
    if (key == "variant") cfg.variant = parse_variant(value);
    else if (key == "nodes") cfg.nodes = parse_uint(key, value);
    else if (key == "c") cfg.channels = parse_uint(key, value);
    else if (key == "cp") cfg.inner = parse_uint(key, value);
    else if (key == "fusion") cfg.fusion = parse_fusion(value);
    else if (key == "init_mode") cfg.init_mode = parse_init_mode(value);
    else if (key == "offset_source") cfg.offset_source = parse_offset_source(value);
    else if (key == "bottleneck_proj") cfg.bottleneck_projections = parse_bool(key, value);
    else if (key == "gs") cfg.grid_size = parse_uint(key, value);
    else if (key == "groups") cfg.groups = parse_uint(key, value);
    else if (key == "seed") cfg.seed = parse_uint(key, value);
    else throw Error(ErrorCode::config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return out;
}

LayerConfig parse_layer_config(std::istream& is) {
  LayerConfig cfg = parse_partial_layer_config(is).config;
  cfg.validate();
  return cfg;
}

LayerConfig parse_layer_config(const std::string& text) {
  std::istringstream is(text);
  return parse_layer_config(is);
}

std::string format_layer_config(const LayerConfig& cfg) {
  std::ostringstream os;
  os << "variant=" << to_string(cfg.variant) << "\n"
     << "nodes=" << cfg.nodes << "\n"
     << "c=" << cfg.channels << "\n"
     << "cp=" << cfg.inner << "\n"
     << "fusion=" << to_string(cfg.fusion) << "\n"
     << "init_mode=" << to_string(cfg.init_mode) << "\n"
     << "offset_source=" << to_string(cfg.offset_source) << "\n"
     << "bottleneck_proj=" << (cfg.bottleneck_projections ? 1 : 0) << "\n"
     << "gs=" << cfg.grid_size << "\n"
     << "groups=" << cfg.groups << "\n"
     << "seed=" << cfg.seed << "\n";
  return os.str();
}

}  // namespace repgraph
