#include "apot/cost.hpp"

#include <fstream>
#include <sstream>

#include "apot/errors.hpp"

namespace apot {

namespace {

constexpr int kEdgeLayerBits = 8;

bool is_full_precision(const LayerShape& s) { return s.weight_bits >= 32 || s.act_bits >= 32; }

void check_shape(const LayerShape& s) {
  if (s.c_out <= 0 || s.c_in <= 0 || s.kernel <= 0 || s.stride <= 0 || s.padding < 0 ||
      s.h_in <= 0 || s.w_in <= 0) {
    throw ConfigError("layer '" + s.name + "': dimensions must be positive");
  }
  if (s.h_out() <= 0 || s.w_out() <= 0) {
    throw ConfigError("layer '" + s.name + "': kernel larger than padded input");
  }
  if (s.weight_bits < 2 || s.act_bits < 1) {
    throw ConfigError("layer '" + s.name + "': unsupported bit-widths");
  }
}

}  // namespace

std::uint64_t LayerShape::weight_count() const {
  return static_cast<std::uint64_t>(c_out) * c_in * kernel * kernel;
}

std::uint64_t LayerShape::macs() const {
  return weight_count() * static_cast<std::uint64_t>(h_out()) * static_cast<std::uint64_t>(w_out());
}

std::string to_string(FixopsConvention c) {
  return c == FixopsConvention::Table ? "table" : "shift-add";
}

FixopsConvention parse_fixops_convention(const std::string& name) {
  if (name == "table") return FixopsConvention::Table;
  if (name == "shift-add") return FixopsConvention::ShiftAdd;
  throw ConfigError("unknown FixOPS convention '" + name + "' (expected table or shift-add)");
}

std::vector<LayerShape> parse_layer_table(std::istream& in) {
  std::vector<LayerShape> shapes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    LayerShape s;
    if (!(ls >> s.name)) continue;
    if (!(ls >> s.c_out >> s.c_in >> s.kernel >> s.stride >> s.padding >> s.h_in >> s.w_in)) {
      throw InputError("layer table line " + std::to_string(line_no) +
                       ": expected 'name C_out C_in K stride padding H_in W_in [role]'");
    }
    std::string role;
    if (ls >> role) {
      if (role == "first") {
        s.role = LayerRole::First;
      } else if (role == "last") {
        s.role = LayerRole::Last;
      } else if (role == "mid") {
        s.role = LayerRole::Mid;
      } else {
        throw InputError("layer table line " + std::to_string(line_no) + ": unknown role '" +
                         role + "'");
      }
    }
    std::string extra;
    if (ls >> extra) {
      throw InputError("layer table line " + std::to_string(line_no) + ": trailing field '" +
                       extra + "'");
    }
    check_shape(s);
    shapes.push_back(std::move(s));
  }
  return shapes;
}

std::vector<LayerShape> load_layer_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layer table '" + path + "'");
  return parse_layer_table(in);
}

std::vector<LayerShape> assign_precision(std::vector<LayerShape> shapes, const CostConfig& cfg) {
  const bool quantized = cfg.weight_bits < 32 && cfg.act_bits < 32;
  for (auto& s : shapes) {
    if (quantized && cfg.first_last_8bit && s.role != LayerRole::Mid) {
      s.weight_bits = kEdgeLayerBits;
      s.act_bits = kEdgeLayerBits;
    } else {
      s.weight_bits = cfg.weight_bits;
      s.act_bits = cfg.act_bits;
    }
  }
  return shapes;
}

int terms_per_weight(SchemeKind scheme, int weight_bits, int base_bits) {
  return build_levels(scheme, 1.0, weight_bits, base_bits, true).max_terms();
}

double fixops_for_layer(const LayerShape& shape, const CostConfig& cfg) {
  check_shape(shape);
  const double macs = static_cast<double>(shape.macs());
  if (is_full_precision(shape)) return macs;

  const double l = shape.weight_bits;
  const double m = shape.act_bits;
  const bool edge = shape.role != LayerRole::Mid && cfg.first_last_8bit;
  if (edge || cfg.scheme == SchemeKind::Uniform) return macs * l * m / 64.0;

  if (cfg.convention == FixopsConvention::Table) {
    if (cfg.scheme != SchemeKind::APoT || cfg.base_bits != 2) {
      throw ConfigError("table FixOPS convention is defined for APoT with k=2 only; use "
                        "--fixops-convention shift-add");
    }
    // Validates the (bits, k) pair.
    (void)terms_per_weight(cfg.scheme, shape.weight_bits, cfg.base_bits);
    return macs * 0.75 * l * m / 64.0;
  }
  const int n = terms_per_weight(cfg.scheme, shape.weight_bits, cfg.base_bits);
  return macs * n * m / 64.0;
}

std::uint64_t shift_adds_for_layer(const LayerShape& shape, const CostConfig& cfg) {
  check_shape(shape);
  if (is_full_precision(shape)) return 0;
  const bool edge = shape.role != LayerRole::Mid && cfg.first_last_8bit;
  const SchemeKind scheme = edge ? SchemeKind::Uniform : cfg.scheme;
  const int n = shape.weight_bits == 2 ? 1 : terms_per_weight(scheme, shape.weight_bits, cfg.base_bits);
  return shape.macs() * static_cast<std::uint64_t>(n);
}

std::uint64_t model_size(const std::vector<LayerShape>& shapes) {
  std::uint64_t bytes = 0;
  for (const auto& s : shapes) {
    const std::uint64_t bits = s.weight_count() * static_cast<std::uint64_t>(s.weight_bits >= 32 ? 32 : s.weight_bits);
    bytes += (bits + 7) / 8;
    if (s.weight_bits < 32) bytes += 4;
  }
  return bytes;
}

CostReport cost_report(const std::vector<LayerShape>& shapes, const CostConfig& cfg) {
  const auto resolved = assign_precision(shapes, cfg);
  CostReport report;
  for (const auto& s : resolved) {
    LayerCost c;
    c.name = s.name;
    c.weight_bits = s.weight_bits;
    c.act_bits = s.act_bits;
    c.macs = s.macs();
    c.fixops = fixops_for_layer(s, cfg);
    c.bytes = model_size({s});
    c.shift_adds = shift_adds_for_layer(s, cfg);
    report.total_fixops += c.fixops;
    report.total_macs += c.macs;
    report.model_bytes += c.bytes;
    report.shift_add_count += c.shift_adds;
    report.layers.push_back(std::move(c));
  }
  return report;
}

}  // namespace apot
